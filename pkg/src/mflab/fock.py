"""Exact N-boson dynamics on the lattice in the occupation-number basis.

The Hamiltonian is

    H_N = sum_ab T_ab a_a^+ a_b + (1/2N) sum_ab w(x_a - x_b) (n_a n_b - delta_ab n_a)

with ``T`` the lattice kinetic matrix (see ``Lattice.kinetic``).  Amplitudes
live in the orthonormal occupation basis, ordered reverse-lexicographically so
that ``(N, 0, ..., 0)`` has ordinal 0.  Ranks are computed in closed form
(combinatorial number system), giving O(M) lookup without a hash table.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .errors import CapError, NumericalError
from .lattice import Field, Lattice, PairPotential

BASIS_CAP = 2_000_000
KRYLOV_DIM = 40


def _enumerate(N: int, M: int) -> np.ndarray:
    occ = np.zeros((1, 0), dtype=np.int64)
    remaining = np.array([N], dtype=np.int64)
    for _ in range(M - 1):
        counts = remaining + 1
        total = int(counts.sum())
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        values = np.repeat(remaining, counts) - (np.arange(total) - starts)
        occ = np.column_stack([np.repeat(occ, counts, axis=0), values])
        remaining = np.repeat(remaining, counts) - values
    return np.column_stack([occ, remaining])


class FockBasis:
    """All occupation vectors of N bosons on M sites."""

    def __init__(self, N: int, M: int, cap: int = BASIS_CAP):
        if N < 0 or M < 1:
            raise ValueError("need N >= 0 and M >= 1")
        size = comb(N + M - 1, N)
        if size > cap:
            raise CapError(f"fock basis size {size} exceeds cap {cap} (N={N}, M={M})")
        self.N = N
        self.M = M
        self.occupations = _enumerate(N, M)
        # _skip[i, R, n]: states preceding any state with n_i = n given R particles left at site i
        skip = np.zeros((max(M - 1, 1), N + 1, N + 1), dtype=np.int64)
        for i in range(M - 1):
            s = M - i - 1
            for R in range(N + 1):
                for n in range(R + 1):
                    skip[i, R, n] = sum(comb(R - v + s - 1, s - 1) for v in range(n + 1, R + 1))
        self._skip = skip

    def __len__(self) -> int:
        return self.occupations.shape[0]

    @property
    def size(self) -> int:
        return len(self)

    def rank(self, occ: np.ndarray) -> np.ndarray:
        """Ordinal(s) of occupation vector(s); inverse of ``occupations[i]``."""
        occ = np.atleast_2d(occ)
        R = self.N - np.cumsum(occ, axis=1) + occ
        r = np.zeros(occ.shape[0], dtype=np.int64)
        for i in range(self.M - 1):
            r += self._skip[i, R[:, i], occ[:, i]]
        return r

    def index(self, occ) -> int:
        occ = np.asarray(occ)
        if occ.sum() != self.N or len(occ) != self.M or (occ < 0).any():
            raise KeyError(f"{tuple(occ)} is not in the basis")
        return int(self.rank(occ)[0])

    def annihilation(self, site: int, lower: FockBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sparse action of ``a_site`` into ``lower`` (the N-1 basis): (src, dst, value)."""
        src = np.nonzero(self.occupations[:, site] > 0)[0]
        occ = self.occupations[src].copy()
        vals = np.sqrt(occ[:, site].astype(float))
        occ[:, site] -= 1
        return src, lower.rank(occ), vals


def enumerate_basis(N: int, M: int, cap: int = BASIS_CAP) -> FockBasis:
    if N < 1:
        raise ValueError("N must be >= 1")
    if M < 2:
        raise ValueError("M must be >= 2")
    return FockBasis(N, M, cap)


@dataclass(frozen=True)
class FockState:
    amplitudes: np.ndarray
    basis: FockBasis
    lattice: Lattice
    hbar: float

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amps: np.ndarray) -> FockState:
        return FockState(amps, self.basis, self.lattice, self.hbar)

    def vdot(self, other: FockState) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def embed_product_state(psi: Field, N: int, hbar: float = 1.0, basis: FockBasis | None = None) -> FockState:
    """Occupation amplitudes of ``psi(x_1)...psi(x_N)``.

    amplitude(n) = sqrt(N!/prod n_j!) * prod_j c_j^{n_j},   c_j = psi_j sqrt(dx)
    """
    lat = psi.lattice
    basis = basis or enumerate_basis(N, lat.M)
    c = psi.coefficients()
    occ = basis.occupations
    logfact = np.array([np.log(float(factorial(n))) for n in range(N + 1)])
    pref = np.exp(0.5 * (logfact[N] - logfact[occ].sum(axis=1)))
    # prod_j c_j^{n_j}; zero coefficients with n_j = 0 contribute 1
    powers = np.ones(len(basis), dtype=complex)
    for j in range(lat.M):
        powers *= c[j] ** occ[:, j]
    return FockState(pref * powers, basis, lat, hbar)


class FockHamiltonian:
    """Sparse real-symmetric ``H_N`` on one basis."""

    def __init__(self, basis: FockBasis, lattice: Lattice, hbar: float, w: PairPotential):
        if basis.M != lattice.M:
            raise ValueError("basis and lattice sizes differ")
        self.basis = basis
        self.lattice = lattice
        self.hbar = hbar
        self.w = w
        self.matrix = self._build()

    def _build(self) -> sp.csr_matrix:
        b, N, M = self.basis, self.basis.N, self.basis.M
        occ = b.occupations
        T = self.lattice.kinetic_matrix(self.hbar)
        W = self.w.table()
        diag = occ @ np.diag(T)
        diag = diag + ((occ @ W) * occ).sum(axis=1) / (2 * N) - self.w.samples[0] * N / (2 * N)
        rows, cols, vals = [np.arange(len(b))], [np.arange(len(b))], [diag]
        for a in range(M):
            for c in range(M):
                if a == c or abs(T[a, c]) < 1e-14:
                    continue
                src = np.nonzero(occ[:, c] > 0)[0]
                tgt = occ[src].copy()
                amp = T[a, c] * np.sqrt(tgt[:, c] * (tgt[:, a] + 1.0))
                tgt[:, c] -= 1
                tgt[:, a] += 1
                rows.append(b.rank(tgt))
                cols.append(src)
                vals.append(amp)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(b), len(b)),
        )

    def __matmul__(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def expectation(self, s: FockState) -> float:
        return float(np.vdot(s.amplitudes, self.matrix @ s.amplitudes).real)


_HCACHE: dict = {}


def hamiltonian(basis: FockBasis, lattice: Lattice, hbar: float, w: PairPotential) -> FockHamiltonian:
    key = (id(basis), lattice, float(hbar), w.samples.tobytes())
    h = _HCACHE.get(key)
    if h is None or h.basis is not basis:
        if len(_HCACHE) > 8:
            _HCACHE.clear()
        h = _HCACHE[key] = FockHamiltonian(basis, lattice, hbar, w)
    return h


def apply_h(s: FockState, w: PairPotential) -> FockState:
    h = hamiltonian(s.basis, s.lattice, s.hbar, w)
    return s.with_amplitudes(h @ s.amplitudes)


def _lanczos(matvec, v: np.ndarray, m_max: int):
    beta0 = np.linalg.norm(v)
    V = [v / beta0]
    alpha, beta = [], []
    for j in range(m_max):
        u = matvec(V[j])
        a = np.vdot(V[j], u).real
        u = u - a * V[j] - (beta[-1] * V[j - 1] if j > 0 else 0)
        # full reorthogonalisation keeps the small tridiagonal honest
        for q in V:
            u -= np.vdot(q, u) * q
        alpha.append(a)
        b = np.linalg.norm(u)
        beta.append(b)
        if b < 1e-13 * max(1.0, abs(a)):
            break
        if j + 1 < m_max:
            V.append(u / b)
    return beta0, np.array(V), np.array(alpha), np.array(beta)


def krylov_expm(matvec, v: np.ndarray, t: float, hbar: float, tol: float = 1e-9, m_max: int = KRYLOV_DIM) -> np.ndarray:
    """``exp(-i H t / hbar) v`` for Hermitian ``H`` with adaptive Lanczos substeps."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    remaining = float(t)
    tau = remaining
    out = np.asarray(v, dtype=complex)
    tiny = 1e-14 * max(abs(t), 1.0)
    while abs(remaining) > tiny:
        beta0, V, alpha, beta = _lanczos(matvec, out, m_max)
        m = len(alpha)
        invariant = beta[-1] < 1e-13 * max(1.0, abs(alpha[-1]))
        if m == 1:
            evals, evecs = alpha[:1], np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(alpha, beta[: m - 1])
        tau = np.sign(remaining) * min(abs(tau), abs(remaining))
        while True:
            y = evecs @ (np.exp(-1j * evals * tau / hbar) * evecs[0].conj())
            err = 0.0 if invariant else beta[-1] * abs(y[-1])
            if err <= tol:
                break
            tau *= 0.5
            if abs(tau) < tiny:
                raise NumericalError("Krylov substep underflow")
        out = beta0 * (V[:m].T @ y)
        remaining -= tau
        tau *= 2.0
    return out


def evolve_exact(s: FockState, t: float, w: PairPotential, tol: float = 1e-9) -> FockState:
    """``exp(-i H_N t / hbar)`` applied to ``s``."""
    if t == 0:
        return s
    h = hamiltonian(s.basis, s.lattice, s.hbar, w)
    return s.with_amplitudes(krylov_expm(h.matrix.__matmul__, s.amplitudes, t, s.hbar, tol))


_SNAP_MAGIC = b"MFFOCK01"


def write_snapshot(s: FockState, path, t: float = 0.0) -> None:
    """Binary snapshot: magic, header length, JSON header, then (ordinal, re, im) records."""
    header = json.dumps(
        {"N": s.basis.N, "M": s.basis.M, "L": s.lattice.L, "hbar": s.hbar, "t": t, "kinetic": s.lattice.kinetic}
    ).encode()
    rec = np.empty(len(s.basis), dtype=[("ordinal", "<i8"), ("re", "<f8"), ("im", "<f8")])
    rec["ordinal"] = np.arange(len(s.basis))
    rec["re"] = s.amplitudes.real
    rec["im"] = s.amplitudes.imag
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(rec.tobytes())


def read_snapshot(path) -> tuple[FockState, float]:
    with open(path, "rb") as fh:
        if fh.read(8) != _SNAP_MAGIC:
            raise ValueError("not a fock snapshot")
        (n,) = struct.unpack("<I", fh.read(4))
        head = json.loads(fh.read(n))
        rec = np.frombuffer(fh.read(), dtype=[("ordinal", "<i8"), ("re", "<f8"), ("im", "<f8")])
    lat = Lattice(head["M"], head["L"], head.get("kinetic", "spectral"))
    basis = enumerate_basis(head["N"], head["M"])
    amps = np.zeros(len(basis), dtype=complex)
    amps[rec["ordinal"]] = rec["re"] + 1j * rec["im"]
    return FockState(amps, basis, lat, head["hbar"]), head["t"]
