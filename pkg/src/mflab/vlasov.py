"""Classical side: Vlasov mean-field kinetics and the N-body flow with 1/N coupling.

Phase-space densities live on the ``PhaseGrid`` of the Wigner calculus, with
momentum rows in FFT order (a cyclic rotation of ascending order, so the
momentum axis is periodic with period ``M * dxi``).  The Vlasov solver is
a Strang-split semi-Lagrangian scheme: the x-transport of each momentum row
is an exact Fourier shift and the momentum shear uses local periodic cubic
Lagrange interpolation.  Both keep mass and x-uniform states exactly invariant;
the local stencil also keeps under-resolved filaments from ringing across the
whole momentum box.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .lattice import PairPotential
from .phasespace import PhaseGrid, free_transport

MAX_VLASOV_DT = 0.1


@dataclass(frozen=True)
class PhaseDensity:
    values: np.ndarray  # [j, m]
    grid: PhaseGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M, self.grid.M):
            raise ValueError("density must be sampled on the M x M phase grid")
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell)

    def x_density(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dxi

    def normalized(self) -> PhaseDensity:
        return PhaseDensity(self.values / self.mass(), self.grid)


@dataclass(frozen=True)
class ParticleEnsemble:
    x: np.ndarray
    xi: np.ndarray
    L: float
    t: float = 0.0

    def __post_init__(self):
        x = np.mod(np.asarray(self.x, dtype=float), self.L)
        xi = np.asarray(self.xi, dtype=float)
        if x.shape != xi.shape or x.ndim != 1:
            raise ValueError("positions and momenta must be 1D arrays of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def N(self) -> int:
        return len(self.x)


def _check_grid(w: PairPotential, grid: PhaseGrid) -> None:
    if w.lattice.M != grid.M or not np.isclose(w.lattice.L, grid.lattice.L):
        raise ValueError("potential and phase grid use different lattices")


def veff(f: PhaseDensity, w: PairPotential) -> np.ndarray:
    """Mean-field potential ``w * rho`` with ``rho`` the x-marginal of ``f``."""
    _check_grid(w, f.grid)
    rho = f.x_density()
    return np.fft.ifft(np.fft.fft(w.samples) * np.fft.fft(rho)).real * f.grid.dx


def _spectral_derivative(v: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    k = grid.lattice.k.copy()
    k[grid.M // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(v)).real


def _xi_wavenumbers(grid: PhaseGrid) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(grid.M, d=grid.dxi)


def boundary_mass(f: PhaseDensity, fraction: float = 0.85) -> float:
    """Mass in momentum rows with ``|xi| > fraction * max|xi|``."""
    xi = f.grid.xi
    rows = np.abs(xi) > fraction * np.abs(xi).max()
    return float(np.abs(f.values[:, rows]).sum() * f.grid.cell)


def _cubic_shift_rows(values: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``out[j, m] = f[j, m + shift[j]]`` (shift in cells) by periodic cubic Lagrange interpolation."""
    M = values.shape[1]
    q = np.floor(shift)
    a = (shift - q)[:, None]
    weights = (
        -a * (a - 1) * (a - 2) / 6,
        (a + 1) * (a - 1) * (a - 2) / 2,
        -(a + 1) * a * (a - 2) / 2,
        (a + 1) * a * (a - 1) / 6,
    )
    m = np.arange(M)[None, :] + q.astype(int)[:, None]
    rows = np.arange(values.shape[0])[:, None]
    return sum(wt * values[rows, (m + o) % M] for wt, o in zip(weights, (-1, 0, 1, 2)))


def _clip(values: np.ndarray, mass: float, grid: PhaseGrid) -> np.ndarray:
    v = np.maximum(values, 0.0)
    return v * (mass / (v.sum() * grid.cell))


def vlasov_step(f: PhaseDensity, dt: float, w: PairPotential, clip: bool = True) -> PhaseDensity:
    """Half free-transport in x, force shear in xi from the mid-state, half transport.

    Characteristics ``dx/dt = xi``, ``dxi/dt = -V_eff'(x)``.
    """
    if not 0 < abs(dt) <= MAX_VLASOV_DT:
        raise ValueError(f"need 0 < |dt| <= {MAX_VLASOV_DT}")
    _check_grid(w, f.grid)
    g = f.grid
    mass = f.mass()
    v = free_transport(f.values, g, 0.5 * dt)
    force = _spectral_derivative(veff(PhaseDensity(v, g), w), g)
    v = _cubic_shift_rows(v, force * dt / g.dxi)
    v = free_transport(v, g, 0.5 * dt)
    if clip:
        v = _clip(v, mass, g)
    return PhaseDensity(v, g)


def vlasov_evolve(
    f0: PhaseDensity, t: float, dt: float, w: PairPotential, boundary_tol: float = 1e-12, clip: bool = True
) -> PhaseDensity:
    """Integrate to ``t`` in ``round(t/dt)`` steps, refusing runs that reach the momentum box edge."""
    if t < 0:
        raise ValueError("t must be non-negative")
    f = f0
    for _ in range(int(round(t / dt))):
        f = vlasov_step(f, dt, w, clip)
    b = boundary_mass(f)
    if b > boundary_tol:
        raise NumericalError(f"mass {b:.2e} reached the momentum box boundary; enlarge the grid")
    return f


def vlasov_energy(f: PhaseDensity, w: PairPotential) -> float:
    """``int xi^2/2 f + (1/2) int rho V_eff``."""
    g = f.grid
    kinetic = np.sum(0.5 * g.xi[None, :] ** 2 * f.values) * g.cell
    return float(kinetic + 0.5 * np.sum(f.x_density() * veff(f, w)) * g.dx)


# --- N-body ------------------------------------------------------------------


def _potential_modes(w: PairPotential) -> tuple[np.ndarray, np.ndarray]:
    """Real Fourier coefficients and wavenumbers of the trigonometric interpolant of ``w``."""
    return w.fourier_coefficients().real, w.lattice.k


def _structure_factor(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(x, k)).mean(axis=0)


def nbody_forces(x: np.ndarray, w: PairPotential) -> np.ndarray:
    """``F_i = -(1/N) sum_j w'(x_i - x_j)`` through an O(N M) Fourier sum."""
    c, k = _potential_modes(w)
    kd = k.copy()
    kd[w.lattice.M // 2] = 0.0
    rho = _structure_factor(x, k)
    phase = np.exp(1j * np.outer(x, k))
    return -(phase * (1j * kd * c * rho.conj())[None, :]).sum(axis=1).real


def nbody_energy(e: ParticleEnsemble, w: PairPotential) -> float:
    """Energy per particle: ``(1/N)[sum xi^2/2 + (1/2N) sum_{i != j} w(x_i - x_j)]``."""
    c, k = _potential_modes(w)
    N = e.N
    rho = _structure_factor(e.x, k)
    pair = 0.5 * (np.sum(c * np.abs(rho) ** 2) - w.samples[0] / N)
    return float(0.5 * np.mean(e.xi**2) + pair)


def classical_nbody_evolve(e: ParticleEnsemble, t: float, dt: float, w: PairPotential) -> ParticleEnsemble:
    """Kick-drift-kick leapfrog for ``H = sum xi^2/2 + (1/2N) sum_{i!=j} w(x_i - x_j)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.isclose(w.lattice.L, e.L):
        raise ValueError("ensemble and potential use different periods")
    x, xi = e.x.copy(), e.xi.copy()
    nsteps = int(round(t / dt))
    force = nbody_forces(x, w)
    for _ in range(nsteps):
        xi += 0.5 * dt * force
        x = np.mod(x + dt * xi, e.L)
        force = nbody_forces(x, w)
        xi += 0.5 * dt * force
    return ParticleEnsemble(x, xi, e.L, e.t + nsteps * dt)


def sample_ensemble(f: PhaseDensity, N: int, rng: np.random.Generator) -> ParticleEnsemble:
    """Draw N particles: a cell with probability ``f * cell``, then a uniform point in it."""
    g = f.grid
    p = np.clip(f.values, 0.0, None).ravel()
    p = p / p.sum()
    idx = rng.choice(p.size, size=N, p=p)
    j, m = np.unravel_index(idx, f.values.shape)
    x = g.x[j] + (rng.random(N) - 0.5) * g.dx
    xi = g.xi[m] + (rng.random(N) - 0.5) * g.dxi
    return ParticleEnsemble(x, xi, g.lattice.L)


def empirical_density(e: ParticleEnsemble, grid: PhaseGrid, smoothing: float | None = None) -> PhaseDensity:
    """Empirical measure mollified by a periodic Gaussian of width ``smoothing`` in x and xi.

    The default width is two grid spacings.
    """
    h = max(grid.dx, grid.dxi)
    smoothing = 2 * h if smoothing is None else smoothing
    if smoothing < h * (1 - 1e-12):
        raise ValueError("smoothing must be at least one grid spacing")
    if not np.isclose(e.L, grid.lattice.L):
        raise ValueError("ensemble and grid use different periods")
    kx = grid.lattice.k
    eta = _xi_wavenumbers(grid)
    Ex = np.exp(-1j * np.outer(e.x, kx))
    Exi = np.exp(-1j * np.outer(e.xi, eta))
    F = Ex.T @ Exi / e.N
    F *= np.exp(-0.5 * smoothing**2 * (kx[:, None] ** 2 + eta[None, :] ** 2))
    span = grid.lattice.L * grid.M * grid.dxi
    vals = np.fft.ifft2(F).real * grid.M**2 / span
    return PhaseDensity(_clip(vals, 1.0, grid), grid)


def smooth_density(f: PhaseDensity, smoothing: float) -> PhaseDensity:
    """Convolve ``f`` with the periodic Gaussian used by ``empirical_density``."""
    g = f.grid
    F = np.fft.fft2(f.values)
    F *= np.exp(-0.5 * smoothing**2 * (g.lattice.k[:, None] ** 2 + _xi_wavenumbers(g)[None, :] ** 2))
    return PhaseDensity(np.fft.ifft2(F).real, g)


def distribution_distance(f, g) -> float:
    """Order -1 periodic Sobolev distance ``||(1+|k|^2+|eta|^2)^-1 (f_hat - g_hat)||_2``.

    Accepts ``PhaseDensity`` or ``WignerGrid`` (signed) inputs on the same grid.
    """
    if f.grid != g.grid:
        raise ValueError("densities live on different grids")
    grid = f.grid
    d = np.fft.fft2(np.asarray(f.values) - np.asarray(g.values)) * grid.cell
    kx = grid.lattice.k
    eta = _xi_wavenumbers(grid)
    weight = 1.0 / (1.0 + kx[:, None] ** 2 + eta[None, :] ** 2)
    span = grid.lattice.L * grid.M * grid.dxi
    return float(np.sqrt(np.sum(np.abs(weight * d) ** 2) / span))


def write_ensemble_csv(e: ParticleEnsemble, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["i", "x", "xi"])
        for i, (x, xi) in enumerate(zip(e.x, e.xi)):
            out.writerow([i, repr(float(x)), repr(float(xi))])
