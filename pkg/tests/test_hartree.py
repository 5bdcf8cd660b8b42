import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflab.hartree import (
    HartreeState,
    energy,
    hartree_evolve,
    hartree_rhs,
    hartree_step,
    interaction_energy,
    kinetic_energy,
    write_trajectory_csv,
)
from mflab.lattice import (
    Field,
    build_lattice,
    cosine_potential,
    free_propagate,
    gaussian_packet,
    gaussian_potential,
    plane_wave,
    zero_potential,
)

from oracles import random_field, random_potential


@pytest.fixture
def lat64():
    return build_lattice(64, 2 * np.pi)


def test_zero_potential_step_is_free_flow(lat64):
    psi = gaussian_packet(lat64, 2.0, 0.5, 1.0)
    out = hartree_step(HartreeState(psi, 0.8), 0.05, zero_potential(lat64))
    assert np.abs(out.psi.values - free_propagate(psi, 0.05, 0.8).values).max() < 1e-13
    assert out.t == pytest.approx(0.05)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.2))
def test_step_preserves_norm(seed, dt):
    lat = build_lattice(32, 4.0)
    rng = np.random.default_rng(seed)
    psi = random_field(lat, rng)
    out = hartree_step(HartreeState(psi, 1.0), dt, random_potential(lat, rng))
    assert abs(out.psi.norm() - psi.norm()) < 1e-12


def test_step_rejects_zero_dt(lat64):
    with pytest.raises(ValueError):
        hartree_step(HartreeState(plane_wave(lat64, 1), 1.0), 0.0, zero_potential(lat64))


def test_second_order_self_convergence(lat64):
    w = cosine_potential(lat64, 1.0)
    psi = gaussian_packet(lat64, np.pi, 0.5, 1.0)
    ref = hartree_evolve(psi, 0.5, 1e-5, 1.0, w).final.values
    errs = []
    for dt in (0.01, 0.005):
        out = hartree_evolve(psi, 0.5, dt, 1.0, w).final.values
        errs.append(np.sqrt(np.sum(np.abs(out - ref) ** 2) * lat64.dx))
    assert 3.6 < errs[0] / errs[1] < 4.4


def test_evolve_t0_returns_initial(lat64):
    psi = gaussian_packet(lat64, 1.0, 0.5)
    traj = hartree_evolve(psi, 0.0, 1e-3, 1.0, cosine_potential(lat64))
    assert len(traj.times) == 1
    assert np.array_equal(traj.states[0], psi.values)


def test_evolve_plane_wave_phase(lat64):
    psi = plane_wave(lat64, 3)
    out = hartree_evolve(psi, 0.7, 1e-2, 1.0, zero_potential(lat64)).final
    assert np.abs(out.values - np.exp(-1j * 4.5 * 0.7) * psi.values).max() < 1e-12


def test_evolve_rejects_bad_dt(lat64):
    psi = plane_wave(lat64, 0)
    with pytest.raises(ValueError):
        hartree_evolve(psi, 1.0, 0.0, 1.0, zero_potential(lat64))
    with pytest.raises(ValueError):
        hartree_evolve(psi, -1.0, 0.1, 1.0, zero_potential(lat64))


def test_snapshots_increasing_and_normalized(lat64):
    traj = hartree_evolve(gaussian_packet(lat64, 3.0, 0.5, 2.0), 0.1, 1e-3, 1.0, cosine_potential(lat64), 10)
    assert len(traj.times) == 11
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times[-1] == pytest.approx(0.1, abs=5e-4)
    for i in range(len(traj.times)):
        assert abs(traj.field(i).norm() - 1) < 1e-10


def test_mass_conserved_over_many_steps(lat64):
    traj = hartree_evolve(gaussian_packet(lat64, 3.0, 0.4, 1.0), 1.0, 1e-3, 1.0, cosine_potential(lat64, 2.0))
    assert abs(traj.final.norm() - 1) < 1e-10


def test_energy_plane_wave():
    lat = build_lattice(32, 2 * np.pi)
    assert energy(plane_wave(lat, 2), 1.0, zero_potential(lat)) == pytest.approx(2.0, abs=1e-12)


def test_energy_uniform_state_double_sum():
    lat = build_lattice(16, 2.5)
    w = random_potential(lat, np.random.default_rng(4))
    psi = Field(np.full(16, 1 / np.sqrt(lat.L)), lat)
    rho = psi.density()
    direct = 0.5 * sum(rho[a] * w.samples[(a - b) % 16] * rho[b] for a in range(16) for b in range(16)) * lat.dx**2
    assert abs(kinetic_energy(psi, 1.0)) < 1e-14
    assert interaction_energy(psi, w) == pytest.approx(direct, abs=1e-13)
    assert interaction_energy(psi, w) == pytest.approx(w.samples.sum() * lat.dx / (2 * lat.L), abs=1e-13)


def _drift(lat, w, dt):
    psi = gaussian_packet(lat, np.pi, 0.5, 0.0)
    out = hartree_evolve(psi, 1.0, dt, 1.0, w).final
    return abs(energy(out, 1.0, w) - energy(psi, 1.0, w))


def test_energy_drift_attractive(lat64):
    # weakly attractive Gaussian well: the split-step error stays below 1e-8
    w = gaussian_potential(lat64, -0.1, 0.5)
    assert _drift(lat64, w, 1e-3) < 1e-8


def test_energy_drift_second_order(lat64):
    w = cosine_potential(lat64, 1.0)
    ratio = _drift(lat64, w, 4e-3) / _drift(lat64, w, 2e-3)
    assert 3.5 < ratio < 4.5


def test_rhs_is_energy_gradient():
    lat = build_lattice(16, 2 * np.pi)
    rng = np.random.default_rng(5)
    w = cosine_potential(lat, 0.8)
    psi = random_field(lat, rng)
    hbar, h = 0.7, 1e-5
    grad = np.zeros(16, dtype=complex)
    for j in range(16):
        e = np.zeros(16)
        e[j] = h

        def E(v):
            return energy(Field(psi.values + v, lat), hbar, w)

        d_re = (E(e) - E(-e)) / (2 * h)
        d_im = (E(1j * e) - E(-1j * e)) / (2 * h)
        grad[j] = 0.5 * (d_re + 1j * d_im) / lat.dx
    assert np.abs(hartree_rhs(psi, hbar, w) - grad / (1j * hbar)).max() < 1e-6


def test_time_reversibility(lat64):
    w = cosine_potential(lat64, 1.0)
    s0 = HartreeState(gaussian_packet(lat64, 2.0, 0.5, 1.0), 1.0)
    s = s0
    for _ in range(200):
        s = hartree_step(s, 1e-3, w)
    for _ in range(200):
        s = hartree_step(s, -1e-3, w)
    assert np.abs(s.psi.values - s0.psi.values).max() < 1e-9


def test_trajectory_csv(tmp_path, lat64):
    w = cosine_potential(lat64)
    traj = hartree_evolve(gaussian_packet(lat64, 3.0, 0.5), 0.01, 5e-3, 1.0, w, 1)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path, w)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 3 * 64
    last = rows[-1]
    assert float(last["t"]) == pytest.approx(0.01)
    assert float(last["norm"]) == pytest.approx(1.0, abs=1e-12)
    assert float(last["re"]) + 1j * float(last["im"]) == pytest.approx(traj.states[-1, -1])
