"""Command-line entry point ``mflab``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .. import dyson, fock, hartree, observables, phasespace, vlasov
from ..errors import CapError, ConfigError, NumericalError
from .config import ExperimentConfig, load_config
from .experiments import initial_phase_density, make_lattice, make_observable, make_potential, make_state, run_experiment
from .fitting import fit_power_law

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_NUMERICAL = 0, 2, 3, 4


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    for name in ("M", "L", "t", "dt", "amplitude"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "hbar", None) is not None:
        cfg.hbar = [args.hbar]
    cfg.validate()
    return cfg


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_hartree(args) -> dict:
    cfg = _base_config(args)
    lat = make_lattice(cfg)
    w = make_potential(cfg, lat)
    psi0 = make_state(cfg, lat)
    traj = hartree.hartree_evolve(psi0, cfg.t, cfg.dt, cfg.hbar[0], w, args.snapshot_every)
    path = _out(args, "hartree_out") / "trajectory.csv"
    hartree.write_trajectory_csv(traj, path, w)
    return {"file": str(path), "energy_drift": hartree.energy(traj.final, cfg.hbar[0], w) - hartree.energy(psi0, cfg.hbar[0], w)}


def cmd_nbody(args) -> dict:
    cfg = _base_config(args)
    lat = make_lattice(cfg)
    w = make_potential(cfg, lat)
    psi0 = make_state(cfg, lat)
    hbar = cfg.hbar[0]
    s = fock.evolve_exact(fock.embed_product_state(psi0, args.N, hbar), cfg.t, w)
    out = _out(args, "nbody_out")
    fock.write_snapshot(s, out / "state.bin", cfg.t)
    psi_t = hartree.hartree_evolve(psi0, cfg.t, cfg.dt, hbar, w).final
    gap = observables.trace_distance(observables.reduced_density(s, 1), observables.projector_density(psi_t))
    return {"file": str(out / "state.bin"), "basis_size": len(s.basis), "norm": s.norm(), "trace_distance": gap}


def cmd_dyson(args) -> dict:
    cfg = _base_config(args)
    lat = make_lattice(cfg)
    hbar = cfg.hbar[0]
    w = make_potential(cfg, lat, sup_norm=args.epsilon / cfg.t)
    psi0 = make_state(cfg, lat)
    a = make_observable(args.observable, lat, psi0, hbar)
    k = args.k if args.k is not None else dyson.k_opt(args.epsilon)
    res = dyson.dyson_series_expectation(a, psi0, cfg.t, k, hbar, w, cfg.dt, args.method)
    path = _out(args, "dyson_out") / "dyson.json"
    path.write_text(res.to_json() + "\n")
    return {"file": str(path), "k": k, "residual_vs_hartree": res.residual_vs_hartree}


def _random_symbol(rng, K: int, modes: int, dS: float, dSigma: float) -> phasespace.Symbol:
    """Real symbol from a few random modes with |n|, |r| <= 2."""
    picks = {}
    for _ in range(modes):
        n, r = (int(v) for v in rng.integers(-2, 3, size=2))
        c = complex(rng.normal(), rng.normal())
        picks[(n, r)] = picks.get((n, r), 0) + c
        picks[(-n, -r)] = picks.get((-n, -r), 0) + np.conj(c)
    return phasespace.Symbol.from_modes(picks, K, dS, dSigma)


def cmd_moyal(args) -> dict:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    rows = []
    K = 16
    for i in range(args.pairs):
        g = _random_symbol(rng, K, 3, 1.0, 1.0)
        h = _random_symbol(rng, K, 3, 1.0, 1.0)
        chk = phasespace.check_m1_bound(g, h, args.sigma, args.delta, args.hbar)
        rows.append([i, chk.lhs, chk.rhs, int(chk.ok)])
    path = _out(args, "moyal_out") / "m1.csv"
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["pair", "lhs", "rhs", "ok"])
        out.writerows([[r[0], repr(r[1]), repr(r[2]), r[3]] for r in rows])
    return {"file": str(path), "ok": sum(r[3] for r in rows), "pairs": len(rows)}


def cmd_vlasov(args) -> dict:
    cfg = _base_config(args)
    if args.config is None and args.M is None:
        cfg.M = 64  # the momentum box scales with M
    lat = make_lattice(cfg)
    w = make_potential(cfg, lat)
    grid = phasespace.PhaseGrid(lat, cfg.grid_hbar)
    f0 = initial_phase_density(cfg, grid)
    ft = vlasov.vlasov_evolve(f0, cfg.t, cfg.vlasov_dt, w, boundary_tol=1e-9)
    out = _out(args, "vlasov_out")
    phasespace.write_grid_binary(ft.values, grid, out / "density.bin")
    phasespace.write_grid_csv(ft.values, grid, out / "density.csv")
    return {
        "files": [str(out / "density.bin"), str(out / "density.csv")],
        "mass": ft.mass(),
        "energy_drift": vlasov.vlasov_energy(ft, w) - vlasov.vlasov_energy(f0, w),
    }


def cmd_sweep(args) -> dict:
    if not args.config:
        raise ConfigError("sweep needs --config")
    cfg = _base_config(args)
    manifest = run_experiment(cfg, args.out)
    return {"kind": cfg.kind, "files": manifest.files, "results": manifest.results}


def cmd_fit(args) -> dict:
    with open(args.csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        pts = [(float(r[args.x]), float(r[args.y])) for r in rows]
    except KeyError as exc:
        raise ConfigError(f"column {exc} not found in {args.csv}") from None
    return asdict(fit_power_law(pts))


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment config file ([section] key = value)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="BLAS/FFT thread limit")
    common.add_argument("--seed", type=int)
    parser = argparse.ArgumentParser(
        prog="mflab", description="Mean-field and semiclassical limit laboratory", parents=[common]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    def dyn(p):
        p.add_argument("--M", type=int)
        p.add_argument("--L", type=float)
        p.add_argument("--hbar", type=float)
        p.add_argument("--t", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--amplitude", type=float, help="potential amplitude")

    p = sub.add_parser("hartree", help="integrate the Hartree equation, write a trajectory CSV")
    dyn(p)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.set_defaults(func=cmd_hartree)

    p = sub.add_parser("nbody", help="exact N-boson evolution, write a binary snapshot")
    dyn(p)
    p.add_argument("--N", type=int, default=4)
    p.set_defaults(func=cmd_nbody)

    p = sub.add_parser("dyson", help="truncated interaction expansion vs Hartree, JSON record")
    dyn(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--k", type=int)
    p.add_argument("--observable", default="cosine_multiplier")
    p.add_argument("--method", choices=["auto", "tree", "series"], default="auto")
    p.set_defaults(func=cmd_dyson)

    p = sub.add_parser("moyal", help="check the Moyal bracket norm bound on random symbols")
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--hbar", type=float, default=1.0)
    p.set_defaults(func=cmd_moyal)

    p = sub.add_parser("vlasov", help="evolve a Gaussian phase-space density")
    dyn(p)
    p.set_defaults(func=cmd_vlasov)

    p = sub.add_parser("sweep", help="run the experiment described by --config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="power-law fit of two CSV columns")
    p.add_argument("csv")
    p.add_argument("--x", default="N")
    p.add_argument("--y", default="trace_distance")
    p.set_defaults(func=cmd_fit)
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("config", "out", "threads", "seed"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        with _thread_limit(args.threads):
            summary = args.func(args)
    except CapError as exc:
        print(f"cap violation: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
