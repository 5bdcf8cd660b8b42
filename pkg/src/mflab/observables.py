"""p-particle observables, reduced densities and their expectations.

Kernel matrices act on amplitudes in the orthonormal site basis (``psi_j sqrt(dx)``),
i.e. the quadrature weight ``dx^p`` of the integral kernel is folded in on the
Y side, so every expectation is a plain matrix trace.  Two-particle indices are
flattened row-major: ``(a1, a2) -> a1*M + a2``.

``reduced_density`` is normalised to unit trace; the combinatorial factor
``N(N-1)...(N-p+1)/N^p`` of the lifted operator is applied separately by
``scaling_factor``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fock import FockBasis, FockState
from .lattice import Field, Lattice


@dataclass(frozen=True)
class PKernel:
    p: int
    matrix: np.ndarray
    lattice: Lattice
    hermitian: bool = False
    op_norm: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        n = self.lattice.M**self.p
        if self.p not in (1, 2):
            raise ValueError("only p = 1, 2 kernels are supported")
        if a.shape != (n, n):
            raise ValueError(f"kernel must be {n}x{n}, got {a.shape}")
        if self.hermitian and not np.allclose(a, a.conj().T, atol=1e-12, rtol=0):
            raise ValueError("kernel flagged Hermitian but is not")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "op_norm", float(np.linalg.norm(a, 2)))

    def __add__(self, other: PKernel) -> PKernel:
        return PKernel(self.p, self.matrix + other.matrix, self.lattice, self.hermitian and other.hermitian)

    def __rmul__(self, c) -> PKernel:
        return PKernel(self.p, c * self.matrix, self.lattice, self.hermitian and np.isreal(c))

    def heisenberg(self, t: float, hbar: float) -> np.ndarray:
        """Matrix of ``U0(-t) a U0(t)`` with the lattice free propagator on each particle."""
        lat = self.lattice
        M = lat.M
        F = np.fft.fft(np.eye(M), axis=0)
        U = np.fft.ifft(np.exp(-1j * lat.dispersion(hbar) * t / hbar)[:, None] * F, axis=0)
        if self.p == 2:
            U = np.kron(U, U)
        return U.conj().T @ self.matrix @ U


@dataclass(frozen=True)
class ReducedDensity:
    p: int
    matrix: np.ndarray
    N: int

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def scaling_factor(N: int, p: int) -> float:
    """``N(N-1)...(N-p+1) / N^p``."""
    if p < 1 or p > N:
        raise ValueError(f"need 1 <= p <= N, got p={p}, N={N}")
    out = 1.0
    for i in range(p):
        out *= (N - i) / N
    return out


@lru_cache(maxsize=16)
def _basis(N: int, M: int) -> FockBasis:
    return FockBasis(N, M, cap=10**9)


def _annihilated(s: FockState, lower: FockBasis) -> np.ndarray:
    """Rows ``a_j Psi`` for every site j, as amplitudes in ``lower``."""
    out = np.zeros((s.basis.M, len(lower)), dtype=complex)
    for j in range(s.basis.M):
        src, dst, val = s.basis.annihilation(j, lower)
        out[j, dst] = val * s.amplitudes[src]
    return out


def reduced_density(s: FockState, p: int) -> ReducedDensity:
    """Trace-one p-particle reduced density matrix (p = 1 or 2).

    gamma1[a, b] = <a_b^+ a_a> / N;  gamma2[(a1 a2), (b1 b2)] = <a_b1^+ a_b2^+ a_a2 a_a1> / (N(N-1)),
    both obtained as Gram matrices of annihilated states.
    """
    N, M = s.basis.N, s.basis.M
    if p not in (1, 2):
        raise ValueError("reduced densities are implemented for p = 1, 2 only")
    if p > N:
        raise ValueError(f"p={p} exceeds N={N}")
    norm2 = np.vdot(s.amplitudes, s.amplitudes).real
    one = _annihilated(s, _basis(N - 1, M))
    if p == 1:
        g = one @ one.conj().T / (N * norm2)
    else:
        lower = _basis(N - 1, M)
        lower2 = _basis(N - 2, M)
        two = np.zeros((M, M, len(lower2)), dtype=complex)
        for j in range(M):
            src, dst, val = lower.annihilation(j, lower2)
            # a_j a_i Psi for all i at once
            two[:, j, :][:, dst] = one[:, src] * val
        two = two.reshape(M * M, -1)
        g = two @ two.conj().T / (N * (N - 1) * norm2)
    g = 0.5 * (g + g.conj().T)
    return ReducedDensity(p, g, N)


def projector_density(psi: Field, p: int = 1) -> ReducedDensity:
    """Reduced density of the product state ``psi^{(x)p}``."""
    c = psi.coefficients()
    v = c if p == 1 else np.kron(c, c)
    return ReducedDensity(p, np.outer(v, v.conj()), 0)


def expect_p(s: FockState, a: PKernel) -> complex:
    """``<Psi, A_N^(p) Psi>`` = scaling_factor(N, p) * tr(a gamma^(p))."""
    if a.lattice.M != s.basis.M:
        raise ValueError("kernel and state live on different lattices")
    gamma = reduced_density(s, a.p)
    return scaling_factor(s.basis.N, a.p) * trace_product(a, gamma)


def trace_product(a: PKernel, gamma: ReducedDensity) -> complex:
    if gamma.matrix.shape != a.matrix.shape:
        raise ValueError("dimension mismatch between kernel and density")
    val = complex(np.sum(a.matrix * gamma.matrix.T))
    return val.real if a.hermitian else val


def hartree_expect(psi: Field, a: PKernel) -> complex:
    """``<psi^{(x)p}, a psi^{(x)p}>``."""
    c = psi.coefficients()
    v = c if a.p == 1 else np.kron(c, c)
    val = complex(np.vdot(v, a.matrix @ v))
    return val.real if a.hermitian else val


def trace_distance(g1: ReducedDensity, g2: ReducedDensity) -> float:
    """``(1/2) || g1 - g2 ||_1``."""
    if g1.p != g2.p or g1.matrix.shape != g2.matrix.shape:
        raise ValueError("reduced densities have different shapes")
    d = g1.matrix - g2.matrix
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


# --- observable families -------------------------------------------------


def identity_kernel(lattice: Lattice, p: int = 1) -> PKernel:
    return PKernel(p, np.eye(lattice.M**p), lattice, True)


def position_window(lattice: Lattice, start: float, stop: float) -> PKernel:
    """Projector onto sites with ``start <= x_j < stop`` (periodic)."""
    x = lattice.x
    lo, hi = start % lattice.L, stop % lattice.L
    mask = (x >= lo) & (x < hi) if lo <= hi else (x >= lo) | (x < hi)
    return PKernel(1, np.diag(mask.astype(float)), lattice, True)


def momentum_projector(lattice: Lattice, k_center: float, k_width: float, hbar: float = 1.0) -> PKernel:
    """Smoothed momentum window: Fourier multiplier ``exp(-(k-k0)^2/(2 s^2))``."""
    k = lattice.k
    mult = np.exp(-0.5 * ((k - k_center) / k_width) ** 2)
    F = np.fft.fft(np.eye(lattice.M), axis=0) / np.sqrt(lattice.M)
    return PKernel(1, F.conj().T @ np.diag(mult) @ F, lattice, True)


def coherent_projector(phi: Field) -> PKernel:
    """Rank-one projector ``|phi><phi|``."""
    c = phi.normalized().coefficients()
    return PKernel(1, np.outer(c, c.conj()), phi.lattice, True)


def multiplication_kernel(lattice: Lattice, values: np.ndarray) -> PKernel:
    """Multiplication by a real function of position."""
    return PKernel(1, np.diag(np.asarray(values, dtype=float)), lattice, True)


def product_kernel(b: PKernel, c: PKernel | None = None) -> PKernel:
    """Two-particle kernel ``b (x) c``."""
    c = c or b
    if b.p != 1 or c.p != 1:
        raise ValueError("product kernels are built from one-particle kernels")
    return PKernel(2, np.kron(b.matrix, c.matrix), b.lattice, b.hermitian and c.hermitian)


# --- kernel file format ---------------------------------------------------

_KERNEL_MAGIC = b"MFKERN01"
_KERNEL_HEAD = "<iidB"


def write_kernel(a: PKernel, path) -> None:
    """Header ``(p, M, dx, hermitian)`` then row-major little-endian (re, im) float64 pairs."""
    with open(path, "wb") as fh:
        fh.write(_KERNEL_MAGIC)
        fh.write(struct.pack(_KERNEL_HEAD, a.p, a.lattice.M, a.lattice.dx, int(a.hermitian)))
        fh.write(np.ascontiguousarray(a.matrix, dtype="<c16").tobytes())


def read_kernel(path, lattice: Lattice | None = None) -> PKernel:
    with open(path, "rb") as fh:
        if fh.read(8) != _KERNEL_MAGIC:
            raise ValueError("not a kernel file")
        p, M, dx, herm = struct.unpack(_KERNEL_HEAD, fh.read(struct.calcsize(_KERNEL_HEAD)))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if lattice is None:
        lattice = Lattice(M, dx * M)
    elif lattice.M != M or not np.isclose(lattice.dx, dx):
        raise ValueError("kernel file does not match the lattice")
    n = M**p
    return PKernel(p, data.reshape(n, n).copy(), lattice, bool(herm))
