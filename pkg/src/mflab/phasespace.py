"""Weyl/Wigner/Moyal calculus on the discrete torus phase space.

Grid.  Position ``x_j = j*dx`` and momentum ``xi_m = hbar * 2 pi m / L`` with
``m`` in FFT order (``-M/2 .. M/2-1``); arrays are indexed ``[j, m]``.

Symbols.  A ``Symbol`` stores Fourier coefficients ``c[n, r]`` (FFT order)
of ``tau(x, xi) = sum c[n, r] exp(i (S_n x + Sigma_r xi))`` with
``S_n = n*dS`` and ``Sigma_r = r*dSigma``.  On the grid of a lattice and
``hbar``: ``dS = 2 pi / L`` and ``dSigma = dx / hbar``.

Weyl quantisation of the mode ``(n, r)`` is the translation-covariant
operator ``(T c)_j = exp(2 pi i n (j + r/2) / M) c_{j+r}``; the half-integer
``r/2`` carries the midpoint rule.  Modes on the Nyquist lines
(``n = -M/2, r != 0`` or ``r = -M/2, n != 0``) have no Hermitian partner and
are excluded.  The Wigner function is defined as the dual of this map, which
makes marginals and the symbol/state pairing exact on the grid.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .lattice import Field, Lattice
from .observables import PKernel, ReducedDensity, projector_density


@dataclass(frozen=True)
class PhaseGrid:
    lattice: Lattice
    hbar: float

    @property
    def M(self) -> int:
        return self.lattice.M

    @property
    def dx(self) -> float:
        return self.lattice.dx

    @property
    def dxi(self) -> float:
        return self.hbar * 2 * np.pi / self.lattice.L

    @property
    def x(self) -> np.ndarray:
        return self.lattice.x

    @property
    def xi(self) -> np.ndarray:
        """Momentum grid in FFT order."""
        return self.hbar * self.lattice.k

    @property
    def cell(self) -> float:
        return self.dx * self.dxi

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.xi, indexing="ij")


def _signed(K: int) -> np.ndarray:
    return np.fft.fftfreq(K, d=1.0 / K).astype(int)


@dataclass(frozen=True)
class Symbol:
    coeffs: np.ndarray
    dS: float
    dSigma: float

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    @property
    def S(self) -> np.ndarray:
        return _signed(self.K) * self.dS

    @property
    def Sigma(self) -> np.ndarray:
        return _signed(self.K) * self.dSigma

    @classmethod
    def from_grid(cls, values: np.ndarray, grid: PhaseGrid) -> Symbol:
        values = np.asarray(values)
        if values.shape != (grid.M, grid.M):
            raise ValueError("symbol values must be sampled on the M x M phase grid")
        return cls(np.fft.fft2(values) / grid.M**2, 2 * np.pi / grid.lattice.L, grid.dx / grid.hbar)

    @classmethod
    def from_modes(cls, modes: dict, K: int, dS: float, dSigma: float) -> Symbol:
        c = np.zeros((K, K), dtype=complex)
        for (n, r), val in modes.items():
            c[n % K, r % K] += val
        return cls(c, dS, dSigma)

    @classmethod
    def on_grid_modes(cls, modes: dict, grid: PhaseGrid) -> Symbol:
        return cls.from_modes(modes, grid.M, 2 * np.pi / grid.lattice.L, grid.dx / grid.hbar)

    def matches(self, grid: PhaseGrid) -> bool:
        return (
            self.K == grid.M
            and np.isclose(self.dS, 2 * np.pi / grid.lattice.L)
            and np.isclose(self.dSigma, grid.dx / grid.hbar)
        )

    def to_grid(self, grid: PhaseGrid) -> np.ndarray:
        if not self.matches(grid):
            raise ValueError("symbol and phase grid do not match")
        return np.fft.ifft2(self.coeffs) * grid.M**2

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Pointwise evaluation at arbitrary ``(x, xi)`` (broadcast)."""
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        n, r = np.nonzero(self.coeffs)
        c = self.coeffs[n, r]
        S, Sig = self.S[n], self.Sigma[r]
        out = np.zeros(x.shape, dtype=complex)
        for ci, si, gi in zip(c, S, Sig):
            out += ci * np.exp(1j * (si * x + gi * xi))
        return out

    def is_real(self, atol: float = 1e-12) -> bool:
        c = self.coeffs
        mirrored = np.roll(np.roll(c[::-1, ::-1], 1, axis=0), 1, axis=1)
        return bool(np.allclose(c, mirrored.conj(), atol=atol, rtol=0))

    def __add__(self, other: Symbol) -> Symbol:
        self._check(other)
        return Symbol(self.coeffs + other.coeffs, self.dS, self.dSigma)

    def __sub__(self, other: Symbol) -> Symbol:
        self._check(other)
        return Symbol(self.coeffs - other.coeffs, self.dS, self.dSigma)

    def __rmul__(self, a) -> Symbol:
        return Symbol(a * self.coeffs, self.dS, self.dSigma)

    def _check(self, other: Symbol) -> None:
        if self.K != other.K or not np.isclose(self.dS, other.dS) or not np.isclose(self.dSigma, other.dSigma):
            raise ValueError("symbols live on different dual grids")


def sigma_norm(g: Symbol, sigma: float) -> float:
    """``sum_s |g_hat(s)| exp(sigma |s|)`` with ``|s| = |S| + |Sigma|``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    weight = np.exp(sigma * (np.abs(g.S)[:, None] + np.abs(g.Sigma)[None, :]))
    return float(np.sum(np.abs(g.coeffs) * weight))


def moyal_bracket(g: Symbol, h: Symbol, hbar: float) -> Symbol:
    """Twisted-convolution Moyal bracket.

    Mode pair ``s1 = (S1, Sigma1)``, ``s2`` contributes at ``s1 + s2`` with
    ``(2/hbar) sin(hbar (Sigma1 S2 - S1 Sigma2) / 2) g(s1) h(s2)``; with this
    orientation the bracket is the symbol of ``[G, H] / (i hbar)`` and tends
    to ``dg/dx dh/dxi - dg/dxi dh/dx``.  Products falling outside the dual
    grid raise instead of aliasing.
    """
    g._check(h)
    K = g.K
    P = 2 * K
    sgn = _signed(K)
    pidx = sgn % P
    hp = np.zeros((P, P), dtype=complex)
    hp[np.ix_(pidx, pidx)] = h.coeffs
    Sp = _signed(P) * g.dS
    Gp = _signed(P) * g.dSigma
    out = np.zeros((P, P), dtype=complex)
    for n1, r1 in zip(*np.nonzero(g.coeffs)):
        S1, G1 = sgn[n1] * g.dS, sgn[r1] * g.dSigma
        kern = (2 / hbar) * np.sin(0.5 * hbar * (G1 * Sp[:, None] - S1 * Gp[None, :]))
        out += np.roll(g.coeffs[n1, r1] * kern * hp, (sgn[n1], sgn[r1]), axis=(0, 1))
    inner = out[np.ix_(pidx, pidx)]
    spill = np.abs(out).sum() - np.abs(inner).sum()
    if spill > 1e-13 * max(np.abs(out).sum(), 1e-300):
        raise ValueError("Moyal bracket leaves the dual grid; band-limit the inputs")
    return Symbol(inner, g.dS, g.dSigma)


def poisson_bracket_on_grid(g: Symbol, h: Symbol, n_points: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``dg/dx dh/dxi - dg/dxi dh/dx`` by spectral differentiation on a periodic grid.

    Returns ``(x, xi, values)`` on an ``n_points``-square grid covering one
    period in each variable.
    """
    g._check(h)
    Lx, Lxi = 2 * np.pi / g.dS, 2 * np.pi / g.dSigma
    x = np.arange(n_points) * Lx / n_points
    xi = np.arange(n_points) * Lxi / n_points
    X, XI = np.meshgrid(x, xi, indexing="ij")
    kx = 2 * np.pi * np.fft.fftfreq(n_points, d=Lx / n_points)
    kxi = 2 * np.pi * np.fft.fftfreq(n_points, d=Lxi / n_points)

    def derivs(f):
        vals = f.evaluate(X, XI)
        F = np.fft.fft2(vals)
        return np.fft.ifft2(1j * kx[:, None] * F), np.fft.ifft2(1j * kxi[None, :] * F)

    gx, gxi = derivs(g)
    hx, hxi = derivs(h)
    return X, XI, gx * hxi - gxi * hx


@dataclass(frozen=True)
class M1Check:
    lhs: float
    rhs: float
    ok: bool


def check_m1_bound(w: Symbol, g: Symbol, sigma: float, delta: float, hbar: float = 1.0) -> M1Check:
    """``||{w,g}_M||_{sigma-delta} <= ||w||_sigma ||g||_sigma / (e^2 delta^2)``."""
    if not 0 < delta < sigma:
        raise ValueError("need 0 < delta < sigma")
    lhs = sigma_norm(moyal_bracket(w, g, hbar), sigma - delta)
    rhs = sigma_norm(w, sigma) * sigma_norm(g, sigma) / (np.e**2 * delta**2)
    return M1Check(lhs, rhs, bool(lhs <= rhs * (1 + 1e-12)))


def _nyquist_mask(M: int) -> np.ndarray:
    """True on modes kept by the discrete Weyl calculus (FFT order)."""
    keep = np.ones((M, M), dtype=bool)
    h = M // 2
    keep[h, :] = False
    keep[:, h] = False
    keep[h, 0] = True
    keep[0, h] = True
    return keep


def _mode_phases(M: int) -> np.ndarray:
    """``exp(2 pi i n (j + r/2) / M)`` as an array ``[n, r, j]`` (signed n, r)."""
    s = _signed(M)
    j = np.arange(M)
    return np.exp(2j * np.pi * s[:, None, None] * (j[None, None, :] + 0.5 * s[None, :, None]) / M)


def weyl_quantize(tau: Symbol, hbar: float, lattice: Lattice) -> PKernel:
    """Discrete Weyl operator of a band-limited symbol on the lattice grid."""
    grid = PhaseGrid(lattice, hbar)
    if not tau.matches(grid):
        raise ValueError("symbol is not sampled on this lattice/hbar grid")
    M = lattice.M
    c = tau.coeffs
    dropped = np.abs(c[~_nyquist_mask(M)]).sum()
    if dropped > 1e-12 * max(np.abs(c).sum(), 1e-300):
        raise ValueError("symbol has energy on the Nyquist lines; band-limit it first")
    s = _signed(M)
    ph = _mode_phases(M)
    T = np.zeros((M, M), dtype=complex)
    j = np.arange(M)
    for ri in range(M):
        # row j, column j + r
        T[j, (j + s[ri]) % M] += np.einsum("n,nj->j", c[:, ri], ph[:, ri, :])
    return PKernel(1, T, lattice, hermitian=tau.is_real() and np.allclose(T, T.conj().T, atol=1e-10))


def weyl_symbol(a: PKernel, hbar: float) -> Symbol:
    """Symbol of a one-particle kernel in the complete mode basis (inverse of quantisation)."""
    if a.p != 1:
        raise ValueError("only one-particle kernels have a phase-space symbol here")
    lat = a.lattice
    M = lat.M
    s = _signed(M)
    ph = _mode_phases(M)
    j = np.arange(M)
    c = np.zeros((M, M), dtype=complex)
    for ri in range(M):
        diag = a.matrix[j, (j + s[ri]) % M]
        c[:, ri] = ph[:, ri, :].conj() @ diag / M
    return Symbol(c, 2 * np.pi / lat.L, lat.dx / hbar)


@dataclass(frozen=True)
class WignerGrid:
    values: np.ndarray  # [j, m], m in FFT order
    grid: PhaseGrid

    @property
    def hbar(self) -> float:
        return self.grid.hbar

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell)

    def x_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dxi

    def xi_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.grid.dx


def wigner_from_matrix(gamma: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Wigner function of a density matrix in the orthonormal site basis (complex array)."""
    M = grid.M
    s = _signed(M)
    j = np.arange(M)
    chi = np.zeros((M, M), dtype=complex)
    for ri in range(M):
        d = gamma[(j + s[ri]) % M, j]
        chi[:, ri] = np.exp(1j * np.pi * s * s[ri] / M) * np.fft.ifft(d) * M
    chi[~_nyquist_mask(M)] = 0.0
    return np.fft.fft2(chi) / (2 * np.pi * grid.hbar * M)


def wigner_reduced(gamma: ReducedDensity, hbar: float, lattice: Lattice) -> WignerGrid:
    if gamma.p != 1:
        raise ValueError("only one-particle densities are supported")
    grid = PhaseGrid(lattice, hbar)
    return WignerGrid(wigner_from_matrix(gamma.matrix, grid).real, grid)


def wigner_1p(psi: Field, hbar: float) -> WignerGrid:
    return wigner_reduced(projector_density(psi), hbar, psi.lattice)


def wigner_pairing(tau, W: WignerGrid) -> complex:
    """``sum tau W dx dxi`` for a Symbol (or raw grid array) ``tau``."""
    vals = tau.to_grid(W.grid) if isinstance(tau, Symbol) else np.asarray(tau)
    if vals.shape != W.values.shape:
        raise ValueError("symbol and Wigner grid differ")
    out = complex(np.sum(vals * W.values) * W.grid.cell)
    return out.real if abs(out.imag) < 1e-12 * max(1.0, abs(out)) else out


def free_transport(values: np.ndarray, grid: PhaseGrid, t: float) -> np.ndarray:
    """``f(x - xi t, xi)`` with exact Fourier shifts along x for each momentum row."""
    kx = grid.lattice.k
    F = np.fft.fft(values, axis=0)
    return np.fft.ifft(F * np.exp(-1j * kx[:, None] * grid.xi[None, :] * t), axis=0).real


# --- export ----------------------------------------------------------------

_GRID_MAGIC = b"MFGRID01"
_GRID_HEAD = "<idd"


def write_grid_csv(values: np.ndarray, grid: PhaseGrid, path) -> None:
    """Rows ``x, xi, W`` with xi ascending."""
    order = np.argsort(grid.xi)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "xi", "W"])
        for j, x in enumerate(grid.x):
            for m in order:
                out.writerow([repr(float(x)), repr(float(grid.xi[m])), repr(float(values[j, m]))])


def write_grid_binary(values: np.ndarray, grid: PhaseGrid, path) -> None:
    """Header ``(M, L, hbar)`` then ``M*M`` little-endian float64 in ``[j, m]`` FFT order."""
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack(_GRID_HEAD, grid.M, grid.lattice.L, grid.hbar))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_grid_binary(path) -> tuple[np.ndarray, PhaseGrid]:
    with open(path, "rb") as fh:
        if fh.read(8) != _GRID_MAGIC:
            raise ValueError("not a phase-space grid file")
        M, L, hbar = struct.unpack(_GRID_HEAD, fh.read(struct.calcsize(_GRID_HEAD)))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(M, M).copy()
    return vals, PhaseGrid(Lattice(M, L), hbar)
