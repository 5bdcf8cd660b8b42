from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from mflab.errors import CapError
from mflab.fock import (
    FockState,
    apply_h,
    embed_product_state,
    enumerate_basis,
    evolve_exact,
    hamiltonian,
    krylov_expm,
    read_snapshot,
    write_snapshot,
)
from mflab.lattice import Field, build_lattice, cosine_potential, free_propagate, plane_wave, zero_potential

from oracles import oracle_dense_expm, oracle_dense_hamiltonian, oracle_embedding, random_field, random_hermitian, random_potential

seeds = st.integers(0, 2**32 - 1)


def random_state(basis, lat, rng, hbar=1.0):
    a = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
    return FockState(a / np.linalg.norm(a), basis, lat, hbar)


@pytest.mark.parametrize("N, M, size", [(2, 3, 6), (1, 5, 5), (3, 4, 20)])
def test_basis_sizes(N, M, size):
    assert len(enumerate_basis(N, M)) == size


@pytest.mark.parametrize("N, M", [(3, 4), (4, 6), (5, 3)])
def test_basis_ordering_and_index_bijection(N, M):
    b = enumerate_basis(N, M)
    occ = b.occupations
    assert len(b) == comb(N + M - 1, N)
    assert np.all(occ.sum(axis=1) == N)
    assert len({tuple(r) for r in occ}) == len(b)
    # (N, 0, ..., 0) first, then reverse-lexicographic order
    assert tuple(occ[0]) == (N,) + (0,) * (M - 1)
    keys = [tuple(-v for v in r) for r in occ]
    assert keys == sorted(keys)
    assert np.array_equal(b.rank(occ), np.arange(len(b)))
    assert all(b.index(r) == i for i, r in enumerate(occ))


def test_basis_errors():
    with pytest.raises(CapError):
        enumerate_basis(10, 30, cap=1000)
    with pytest.raises(ValueError):
        enumerate_basis(0, 4)
    with pytest.raises(ValueError):
        enumerate_basis(2, 1)
    with pytest.raises(KeyError):
        enumerate_basis(2, 3).index((1, 0, 0))


def test_embed_site_delta():
    lat = build_lattice(6, 3.0)
    v = np.zeros(6)
    v[0] = 1 / np.sqrt(lat.dx)
    s = embed_product_state(Field(v, lat), 4)
    assert s.amplitudes[0] == pytest.approx(1.0)
    assert np.abs(s.amplitudes[1:]).max() == 0


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 4))
def test_embed_normalized(seed, N):
    lat = build_lattice(6, 2.0)
    s = embed_product_state(random_field(lat, np.random.default_rng(seed)), N)
    assert abs(s.norm() - 1) < 1e-10


def test_embed_two_particle_tensor():
    assert oracle_embedding(0) < 1e-12
    assert oracle_embedding(3) < 1e-12


@pytest.mark.parametrize("kinetic", ["spectral", "fd3"])
def test_one_particle_sector_is_lattice_operator(kinetic):
    lat = build_lattice(6, 2.0, kinetic)
    w = random_potential(lat, np.random.default_rng(0))
    H = hamiltonian(enumerate_basis(1, 6), lat, 0.8, w).matrix.toarray()
    assert np.abs(H - lat.kinetic_matrix(0.8)).max() < 1e-12


def test_plane_wave_eigenstate_fd3():
    lat = build_lattice(6, 3.0, "fd3")
    N, hbar, mode = 3, 0.9, 1
    s = embed_product_state(plane_wave(lat, mode), N, hbar)
    hs = apply_h(s, zero_potential(lat))
    k = 2 * np.pi * mode / lat.L
    lam = N * hbar**2 * (2 / lat.dx**2) * np.sin(k * lat.dx / 2) ** 2
    assert np.abs(hs.amplitudes - lam * s.amplitudes).max() < 1e-12


@pytest.mark.parametrize("kinetic", ["fd3", "spectral"])
def test_matches_dense_hamiltonian(kinetic):
    assert oracle_dense_hamiltonian(0, kinetic) < 1e-12
    assert oracle_dense_hamiltonian(5, kinetic) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_apply_h_hermitian(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(4, 2.0)
    b = enumerate_basis(3, 4)
    w = random_potential(lat, rng)
    phi, chi = random_state(b, lat, rng), random_state(b, lat, rng)
    lhs = phi.vdot(apply_h(chi, w))
    rhs = apply_h(phi, w).vdot(chi)
    assert abs(lhs - rhs) < 1e-10


def test_evolve_t0_identity():
    lat = build_lattice(4, 2.0)
    s = random_state(enumerate_basis(2, 4), lat, np.random.default_rng(0))
    assert np.abs(evolve_exact(s, 0.0, cosine_potential(lat)).amplitudes - s.amplitudes).max() == 0


def test_evolve_matches_dense_expm():
    assert oracle_dense_expm(0) < 1e-8
    assert oracle_dense_expm(1, t=2.3) < 1e-8


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(0.05, 1.5))
def test_free_dynamics_preserves_products(seed, N, t):
    lat = build_lattice(6, 2.0)
    psi = random_field(lat, np.random.default_rng(seed))
    s = evolve_exact(embed_product_state(psi, N), t, zero_potential(lat))
    ref = embed_product_state(free_propagate(psi, t, 1.0), N)
    assert np.abs(s.amplitudes - ref.amplitudes).max() < 1e-8


def test_energy_and_norm_conserved():
    lat = build_lattice(6, 2 * np.pi)
    w = cosine_potential(lat, 2.0)
    s0 = random_state(enumerate_basis(3, 6), lat, np.random.default_rng(2))
    H = hamiltonian(s0.basis, lat, 1.0, w)
    tol = 1e-9
    s = evolve_exact(s0, 3.0, w, tol)
    assert abs(s.norm() - 1) < 1e-9
    assert abs(H.expectation(s) - H.expectation(s0)) < 10 * tol


def test_krylov_expm_dense():
    rng = np.random.default_rng(7)
    A = random_hermitian(30, rng)
    v = rng.normal(size=30) + 0j
    out = krylov_expm(lambda x: A @ x, v, 1.3, 0.5)
    assert np.abs(out - expm(-1j * A * 1.3 / 0.5) @ v).max() < 1e-8


def test_snapshot_roundtrip(tmp_path):
    lat = build_lattice(4, 2.0)
    s = random_state(enumerate_basis(3, 4), lat, np.random.default_rng(0), 0.5)
    write_snapshot(s, tmp_path / "s.bin", 0.25)
    r, t = read_snapshot(tmp_path / "s.bin")
    assert t == 0.25
    assert np.array_equal(r.amplitudes, s.amplitudes)
    assert (r.basis.N, r.basis.M, r.lattice, r.hbar) == (3, 4, lat, 0.5)
