"""Split-step integrator for the Hartree equation

    i hbar d/dt psi = H0 psi + (w * |psi|^2) psi

and its conserved energy functional.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .lattice import Field, PairPotential, convolve_periodic


@dataclass(frozen=True)
class HartreeState:
    psi: Field
    hbar: float
    t: float = 0.0


@dataclass(frozen=True)
class HartreeTrajectory:
    times: np.ndarray
    states: np.ndarray  # (snapshots, M) complex samples
    dt: float
    hbar: float
    lattice: object

    def field(self, i: int = -1) -> Field:
        return Field(self.states[i], self.lattice)

    @property
    def final(self) -> Field:
        return self.field(-1)


def mean_field(psi_values: np.ndarray, w: PairPotential) -> np.ndarray:
    """Self-consistent potential ``w * |psi|^2``."""
    return convolve_periodic(w, np.abs(psi_values) ** 2)


def _strang(values: np.ndarray, dt: float, hbar: float, w: PairPotential, half_kin: np.ndarray) -> np.ndarray:
    v = np.fft.ifft(half_kin * np.fft.fft(values))
    v = v * np.exp(-1j * mean_field(v, w) * dt / hbar)
    return np.fft.ifft(half_kin * np.fft.fft(v))


def hartree_step(s: HartreeState, dt: float, w: PairPotential) -> HartreeState:
    """One Strang step: half kinetic, nonlinear phase, half kinetic.

    Negative ``dt`` steps backwards in time.
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    lat = s.psi.lattice
    half_kin = np.exp(-0.5j * lat.dispersion(s.hbar) * dt / s.hbar)
    return HartreeState(Field(_strang(s.psi.values, dt, s.hbar, w, half_kin), lat), s.hbar, s.t + dt)


def hartree_evolve(
    psi0: Field,
    t: float,
    dt: float,
    hbar: float,
    w: PairPotential,
    snapshot_every: int = 0,
) -> HartreeTrajectory:
    """Integrate to time ``t``; keep every ``snapshot_every``-th step (0 = ends only).

    The step count is ``round(t/dt)`` so the last snapshot lies within ``dt/2`` of ``t``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    lat = psi0.lattice
    nsteps = int(round(t / dt))
    half_kin = np.exp(-0.5j * lat.dispersion(hbar) * dt / hbar)
    times = [0.0]
    states = [psi0.values.copy()]
    v = psi0.values
    for n in range(1, nsteps + 1):
        v = _strang(v, dt, hbar, w, half_kin)
        if (snapshot_every and n % snapshot_every == 0) or n == nsteps:
            times.append(n * dt)
            states.append(v.copy())
    return HartreeTrajectory(np.array(times), np.array(states), dt, hbar, lat)


def kinetic_energy(psi: Field, hbar: float) -> float:
    lat = psi.lattice
    coeffs = lat.forward(psi.values)
    return float(np.sum(lat.dispersion(hbar) * np.abs(coeffs) ** 2) / lat.L)


def interaction_energy(psi: Field, w: PairPotential) -> float:
    rho = psi.density()
    return float(0.5 * np.sum(rho * convolve_periodic(w, rho)) * psi.lattice.dx)


def energy(psi: Field, hbar: float, w: PairPotential) -> float:
    """Hartree energy with a positive kinetic term (the conserved quantity)."""
    return kinetic_energy(psi, hbar) + interaction_energy(psi, w)


def hartree_rhs(psi: Field, hbar: float, w: PairPotential) -> np.ndarray:
    """``d psi / dt`` from the Hartree equation."""
    lat = psi.lattice
    kin = np.fft.ifft(lat.dispersion(hbar) * np.fft.fft(psi.values))
    return (kin + mean_field(psi.values, w) * psi.values) / (1j * hbar)


def write_trajectory_csv(traj: HartreeTrajectory, path, w: PairPotential) -> None:
    """Write ``t, site, re, im, norm, energy`` rows (norm/energy per snapshot)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "site", "re", "im", "norm", "energy"])
        for t, values in zip(traj.times, traj.states):
            f = Field(values, traj.lattice)
            nrm = f.norm()
            e = energy(f, traj.hbar, w)
            for j, z in enumerate(values):
                out.writerow([repr(float(t)), j, repr(float(z.real)), repr(float(z.imag)), repr(nrm), repr(e)])
