import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflab.lattice import (
    Field,
    PairPotential,
    build_lattice,
    constant_potential,
    convolve_periodic,
    cosine_potential,
    free_flow_axis,
    free_propagate,
    gaussian_packet,
    plane_wave,
)

from oracles import oracle_convolution, random_field, random_potential

seeds = st.integers(0, 2**32 - 1)


def test_build_lattice_m8():
    lat = build_lattice(8, 2 * np.pi)
    assert lat.dx == pytest.approx(np.pi / 4, abs=1e-15)
    assert np.allclose(lat.k_sorted, np.arange(-4, 4))
    assert sorted(np.round(lat.k).astype(int)) == list(range(-4, 4))


def test_build_lattice_m4():
    assert build_lattice(4, 1.0).dx == 0.25


@pytest.mark.parametrize("M, L", [(7, 1.0), (2, 1.0), (8, 0.0), (8, -1.0)])
def test_build_lattice_rejects(M, L):
    with pytest.raises(ValueError):
        build_lattice(M, L)


def test_rejects_unknown_kinetic():
    with pytest.raises(ValueError):
        build_lattice(8, 1.0, "fd5")


def test_wavenumbers_symmetric_except_nyquist():
    lat = build_lattice(16, 3.0)
    k = np.sort(lat.k)
    assert k[0] == pytest.approx(-8 * 2 * np.pi / 3.0)
    assert np.allclose(k[1:], -k[1:][::-1])


def test_fd3_dispersion_is_three_point_laplacian():
    lat = build_lattice(8, 2.0, "fd3")
    T = lat.kinetic_matrix(1.0)
    lap = (np.roll(np.eye(8), 1, 0) + np.roll(np.eye(8), -1, 0) - 2 * np.eye(8)) / lat.dx**2
    assert np.abs(T - (-0.5 * lap)).max() < 1e-12


def test_plane_wave_phase():
    lat = build_lattice(16, 2 * np.pi)
    psi = plane_wave(lat, 1)
    out = free_propagate(psi, np.pi, 1.0)
    assert np.abs(out.values - (-1j) * psi.values).max() < 1e-12


def test_free_propagate_t0_identity():
    lat = build_lattice(16, 2.0)
    psi = random_field(lat, np.random.default_rng(1))
    assert np.abs(free_propagate(psi, 0.0, 0.7).values - psi.values).max() < 1e-14


def test_free_propagate_rejects_bad_hbar():
    lat = build_lattice(8, 1.0)
    with pytest.raises(ValueError):
        free_propagate(plane_wave(lat, 0), 1.0, 0.0)


def test_free_gaussian_matches_analytic():
    lat = build_lattice(256, 40.0)
    hbar, s, x0, t = 1.0, 1.0, 15.0, 2.0
    k0 = 2 * np.pi * 5 / lat.L
    out = free_propagate(gaussian_packet(lat, x0, s, k0), t, hbar)
    # spreading free Gaussian, evaluated independently
    alpha = hbar * t / (2 * s**2)
    x = lat.x
    xc = x0 + hbar * k0 * t
    ref = (2 * np.pi * s**2) ** -0.25 / np.sqrt(1 + 1j * alpha) * np.exp(
        -((x - xc) ** 2) / (4 * s**2 * (1 + 1j * alpha)) + 1j * k0 * (x - 0.5 * hbar * k0 * t)
    )
    assert np.abs(out.values - ref).max() < 1e-10
    rho = out.density() * lat.dx
    assert np.sum(rho * x) == pytest.approx(xc, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(-3, 3), st.floats(0.1, 2.0))
def test_free_propagate_unitary_and_group(seed, t, hbar):
    lat = build_lattice(32, 5.0)
    psi = random_field(lat, np.random.default_rng(seed))
    out = free_propagate(psi, t, hbar)
    assert abs(out.norm() - psi.norm()) < 1e-12
    back = free_propagate(out, -t, hbar)
    assert np.abs(back.values - psi.values).max() < 1e-10


def test_free_flow_axis_matches_single_particle():
    lat = build_lattice(8, 2.0)
    rng = np.random.default_rng(3)
    psi = random_field(lat, rng)
    v = np.multiply.outer(psi.values, np.ones(3))
    out = free_flow_axis(v, 0, lat, 0.4, 1.0)
    assert np.abs(out[:, 1] - free_propagate(psi, 0.4, 1.0).values).max() < 1e-13


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_parseval(seed):
    lat = build_lattice(24, 3.7)
    psi = random_field(lat, np.random.default_rng(seed))
    spectral = np.sum(np.abs(lat.forward(psi.values)) ** 2) / lat.L
    assert abs(spectral - psi.norm() ** 2) < 1e-12
    assert np.abs(lat.inverse(lat.forward(psi.values)) - psi.values).max() < 1e-13


def test_field_normalization_and_shape():
    lat = build_lattice(8, 2.0)
    f = Field(np.arange(8.0) + 1, lat).normalized()
    assert abs(f.norm() - 1) < 1e-12
    with pytest.raises(ValueError):
        Field(np.ones(7), lat)


def test_pair_potential_invariants():
    lat = build_lattice(16, 2.0)
    w = random_potential(lat, np.random.default_rng(0))
    assert w.sup_norm == np.max(np.abs(w.samples))
    assert np.abs(np.fft.fft(w.samples).imag).max() < 1e-12
    with pytest.raises(ValueError):
        PairPotential(np.arange(16.0), lat)


def test_potential_derivative_cosine():
    lat = build_lattice(32, 2 * np.pi)
    w = cosine_potential(lat, 1.5)
    assert np.abs(w.derivative() + 1.5 * np.sin(lat.x)).max() < 1e-12


def test_convolve_constant_kernel():
    lat = build_lattice(16, 3.0)
    rho = np.random.default_rng(0).random(16)
    out = convolve_periodic(constant_potential(lat, 2.5), rho)
    assert np.abs(out - 2.5 * rho.sum() * lat.dx).max() < 1e-12
    assert np.isrealobj(out)


def test_convolve_delta_kernel():
    lat = build_lattice(16, 3.0)
    delta = np.zeros(16)
    delta[0] = 1 / lat.dx
    rho = np.random.default_rng(1).random(16)
    assert np.abs(convolve_periodic(PairPotential(delta, lat), rho) - rho).max() < 1e-12


def test_convolve_matches_double_sum():
    assert oracle_convolution(0) < 1e-12
    assert oracle_convolution(7) < 1e-12


def test_convolve_lattice_mismatch():
    lat = build_lattice(16, 3.0)
    with pytest.raises(ValueError):
        convolve_periodic(constant_potential(lat), np.ones(8))
    with pytest.raises(ValueError):
        convolve_periodic(constant_potential(lat), np.ones(16), build_lattice(16, 2.0))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_convolution_linear_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(16, 2.0)
    w = random_potential(lat, rng)
    r1, r2 = rng.random(16), rng.random(16)
    a, b = rng.normal(size=2)
    lhs = convolve_periodic(w, a * r1 + b * r2)
    assert np.abs(lhs - a * convolve_periodic(w, r1) - b * convolve_periodic(w, r2)).max() < 1e-12
    # exchanging kernel and density: (w * rho) = (rho * w) for an even density used as kernel
    even = 0.5 * (r1 + np.roll(r1[::-1], 1))
    sw = PairPotential(even, lat)
    assert np.abs(convolve_periodic(sw, w.samples) - convolve_periodic(w, even)).max() < 1e-12
