"""Experiment orchestration: parameter sweeps, CSV output and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .. import dyson, hartree, observables, phasespace, vlasov
from ..errors import ConfigError
from ..fock import embed_product_state, enumerate_basis, evolve_exact
from ..lattice import Field, Lattice, PairPotential, build_lattice, constant_potential, cosine_potential, gaussian_packet, gaussian_potential
from .config import ExperimentConfig
from .fitting import fit_power_law


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# --- builders ----------------------------------------------------------------


def make_lattice(cfg: ExperimentConfig) -> Lattice:
    return build_lattice(cfg.M, cfg.L, cfg.kinetic)


def make_potential(cfg: ExperimentConfig, lat: Lattice, sup_norm: float | None = None) -> PairPotential:
    """Potential family from the config; ``sup_norm`` rescales it to that sup norm."""
    if cfg.potential == "cosine":
        w = cosine_potential(lat, cfg.amplitude)
    elif cfg.potential == "gaussian":
        w = gaussian_potential(lat, cfg.amplitude, cfg.potential_width)
    else:
        w = constant_potential(lat, cfg.amplitude)
    if sup_norm is not None:
        if w.sup_norm == 0:
            raise ConfigError("cannot rescale a vanishing potential to a target epsilon")
        w = w.scaled(sup_norm / w.sup_norm)
    return w


def make_state(cfg: ExperimentConfig, lat: Lattice) -> Field:
    return gaussian_packet(lat, cfg.center, cfg.state_width, cfg.k0)


def make_observable(name: str, lat: Lattice, psi0: Field, hbar: float) -> observables.PKernel:
    """Named kernel family; window observables cover the left half of the torus."""
    if name == "position_window":
        return observables.position_window(lat, 0.0, lat.L / 2)
    if name == "momentum_projector":
        return observables.momentum_projector(lat, 2 * np.pi / lat.L, 1.0, hbar)
    if name == "coherent_projector":
        return observables.coherent_projector(psi0)
    if name == "cosine_multiplier":
        return observables.multiplication_kernel(lat, np.cos(2 * np.pi * lat.x / lat.L))
    if name == "pair_window":
        return observables.product_kernel(observables.position_window(lat, 0.0, lat.L / 2))
    raise ConfigError(f"unknown observable family {name!r}")


# --- manifest ----------------------------------------------------------------


@dataclass
class RunManifest:
    config: dict
    version: str
    results: dict
    files: list = field(default_factory=list)
    wall_clock: float = 0.0
    checksums: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_rows(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --- experiment kinds --------------------------------------------------------


def meanfield_gap(cfg: ExperimentConfig):
    """Exact N-body vs Hartree: trace distance of one-particle densities and observable gaps."""
    lat = make_lattice(cfg)
    hbar = cfg.hbar[0]
    bases = {N: enumerate_basis(N, lat.M) for N in cfg.N}  # fail on caps before any work
    w = make_potential(cfg, lat)
    psi0 = make_state(cfg, lat)
    psi_t = hartree.hartree_evolve(psi0, cfg.t, cfg.dt, hbar, w).final
    kernels = {name: make_observable(name, lat, psi0, hbar) for name in cfg.observables}
    header = ["N", "trace_distance"] + [f"dev_{name}" for name in kernels]
    rows = []
    for N in cfg.N:
        s_t = evolve_exact(embed_product_state(psi0, N, hbar, bases[N]), cfg.t, w)
        gamma = observables.reduced_density(s_t, 1)
        row = [N, observables.trace_distance(gamma, observables.projector_density(psi_t))]
        for a in kernels.values():
            if a.p > N:
                row.append(float("nan"))
                continue
            exact = observables.expect_p(s_t, a) / observables.scaling_factor(N, a.p)
            row.append(float(abs(exact - observables.hartree_expect(psi_t, a))))
        rows.append(row)
    results = {"N": list(cfg.N), "trace_distance": [r[1] for r in rows]}
    if len(rows) >= 3:
        fit = fit_power_law([(r[0], r[1]) for r in rows])
        results.update(exponent=fit.exponent, prefactor=fit.prefactor, r2=fit.r2)
    for i, name in enumerate(kernels):
        results[f"dev_{name}"] = [r[2 + i] for r in rows]
        results[f"norm_{name}"] = kernels[name].op_norm
    return header, rows, results


def _dyson_setup(cfg: ExperimentConfig, epsilon: float, hbar: float):
    lat = make_lattice(cfg)
    if cfg.t <= 0:
        raise ConfigError("Dyson experiments need t > 0")
    w = make_potential(cfg, lat, sup_norm=epsilon / cfg.t)
    psi0 = make_state(cfg, lat)
    a = make_observable(cfg.observables[0], lat, psi0, hbar)
    return a, psi0, w


def dyson_truncation(cfg: ExperimentConfig):
    """Residual of the truncated expansion against Hartree, for k = 1..k_opt(epsilon)."""
    hbar = cfg.hbar[0]
    header = ["epsilon", "k", "k_opt", "partial_sum", "hartree", "residual", "remainder_envelope"]
    rows = []
    results = {"epsilon": list(cfg.epsilon), "residual_at_kopt": [], "residuals": {}}
    for eps in cfg.epsilon:
        a, psi0, w = _dyson_setup(cfg, eps, hbar)
        kk = dyson.k_opt(eps)
        res = dyson.dyson_series_expectation(a, psi0, cfg.t, kk, hbar, w, cfg.dt, cfg.method)
        terms = np.array([t if np.isscalar(t) else complex(*t) for t in res.terms])
        series = []
        for k in range(1, kk + 1):
            partial = np.sum(terms[: k + 1])
            resid = float(abs(partial - res.hartree))
            env = dyson.remainder_envelope(k, a.p, a.op_norm, eps, hbar)
            rows.append([eps, k, kk, float(np.real(partial)), res.hartree, resid, env])
            series.append(resid)
        results["residuals"][repr(eps)] = series
        results["residual_at_kopt"].append(series[-1])
    return header, rows, results


def hbar_uniformity(cfg: ExperimentConfig):
    """The k_opt truncation at fixed epsilon for several hbar."""
    eps = cfg.epsilon[0]
    kk = dyson.k_opt(eps)
    header = ["hbar", "epsilon", "k", "sum", "hartree", "residual"]
    rows = []
    for hbar in cfg.hbar:
        a, psi0, w = _dyson_setup(cfg, eps, hbar)
        res = dyson.dyson_series_expectation(a, psi0, cfg.t, kk, hbar, w, cfg.dt, cfg.method)
        rows.append([hbar, eps, kk, res.sum, res.hartree, res.residual_vs_hartree])
    resid = [r[5] for r in rows]
    results = {
        "hbar": list(cfg.hbar),
        "residual": resid,
        "sum": [r[3] for r in rows],
        "max_over_first": max(resid) / resid[0] if resid[0] > 0 else float("inf"),
    }
    return header, rows, results


def wigner_vlasov(cfg: ExperimentConfig):
    """Distance between the Wigner function of the Hartree state and the Vlasov solution from W(psi_0)."""
    lat = make_lattice(cfg)
    w = make_potential(cfg, lat)
    psi0 = make_state(cfg, lat)
    header = ["hbar", "distance", "boundary_mass", "wigner_negativity"]
    rows = []
    for hbar in cfg.hbar:
        W0 = phasespace.wigner_1p(psi0, hbar)
        f0 = vlasov.PhaseDensity(np.maximum(W0.values, 0.0), W0.grid).normalized()
        Wt = phasespace.wigner_1p(hartree.hartree_evolve(psi0, cfg.t, cfg.dt, hbar, w).final, hbar)
        ft = vlasov.vlasov_evolve(f0, cfg.t, cfg.vlasov_dt, w, boundary_tol=1e-8)
        neg = float(-np.minimum(Wt.values, 0).sum() * Wt.grid.cell)
        rows.append([hbar, vlasov.distribution_distance(Wt, ft), vlasov.boundary_mass(ft), neg])
    return header, rows, {"hbar": list(cfg.hbar), "distance": [r[1] for r in rows]}


def initial_phase_density(cfg: ExperimentConfig, grid: phasespace.PhaseGrid) -> vlasov.PhaseDensity:
    """Gaussian in position (periodised) times Gaussian in momentum."""
    X, XI = grid.mesh()
    L = grid.lattice.L
    d = (X - cfg.center + L / 2) % L - L / 2
    vals = np.exp(-0.5 * (d / cfg.state_width) ** 2 - 0.5 * ((XI - cfg.k0) / cfg.momentum_width) ** 2)
    return vlasov.PhaseDensity(vals, grid).normalized()


def classical_meanfield(cfg: ExperimentConfig):
    """Smoothed empirical measure of the N-body flow vs the Vlasov solution, averaged over seeds.

    ``mean_distance`` compares against ``f_t`` itself and so saturates at the mollifier bias;
    ``mean_distance_mollified`` compares against ``f_t`` smoothed by the same kernel.
    """
    lat = make_lattice(cfg)
    w = make_potential(cfg, lat)
    grid = phasespace.PhaseGrid(lat, cfg.grid_hbar)
    f0 = initial_phase_density(cfg, grid)
    ft = vlasov.vlasov_evolve(f0, cfg.t, cfg.vlasov_dt, w, boundary_tol=1e-9)
    smoothing = cfg.smoothing or 2 * max(grid.dx, grid.dxi)
    ft_smooth = vlasov.smooth_density(ft, smoothing)
    header = ["N", "mean_distance", "std_distance", "mean_distance_mollified"]
    rows = []
    for N in cfg.N:
        dist, dist_s = [], []
        for s in range(cfg.seeds):
            rng = np.random.default_rng([cfg.seed, N, s])
            e = vlasov.sample_ensemble(f0, N, rng)
            e = vlasov.classical_nbody_evolve(e, cfg.t, cfg.vlasov_dt, w)
            emp = vlasov.empirical_density(e, grid, smoothing)
            dist.append(vlasov.distribution_distance(emp, ft))
            dist_s.append(vlasov.distribution_distance(emp, ft_smooth))
        rows.append([N, float(np.mean(dist)), float(np.std(dist)), float(np.mean(dist_s))])
    results = {
        "N": list(cfg.N),
        "mean_distance": [r[1] for r in rows],
        "mean_distance_mollified": [r[3] for r in rows],
        "mollifier_bias": vlasov.distribution_distance(ft_smooth, ft),
    }
    return header, rows, results


RUNNERS = {
    "meanfield_gap": meanfield_gap,
    "hbar_uniformity": hbar_uniformity,
    "dyson_truncation": dyson_truncation,
    "wigner_vlasov": wigner_vlasov,
    "classical_meanfield": classical_meanfield,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    """Run one sweep, write ``<kind>.csv`` and ``manifest.json`` into the output directory.

    Parameter points run sequentially, so results do not depend on scheduling.
    """
    cfg.validate()
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    header, rows, results = RUNNERS[cfg.kind](cfg)
    csv_path = out / f"{cfg.kind}.csv"
    _write_rows(csv_path, header, rows)
    manifest = RunManifest(
        config=cfg.echo(),
        version=package_version(),
        results=results,
        files=[csv_path.name],
        wall_clock=time.perf_counter() - start,
        checksums={csv_path.name: _sha256(csv_path)},
    )
    manifest.write(out / "manifest.json")
    return manifest
