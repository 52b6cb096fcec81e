"""Command-line entry point: ``dp-riemopt <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .accounting import PrivacyBudget, audit_calibration, calibrate_iterative
from .experiments import (
    ExperimentConfig,
    default_output_dir,
    plot_runs,
    read_runs,
    run_experiment,
    write_results,
)
from .manifolds.base import ConfigurationError, DomainError
from .manifolds.sphere import Sphere
from .manifolds.spd import SPD
from .sampling import MhParams, RngStream, tangent_gaussian_coords, tangent_gaussian_mh_chain

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _add_run_parser(sub, name, experiment):
    p = sub.add_parser(name, help=f"run the {experiment} benchmark and write CSVs")
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig keys")
    p.add_argument("--out", type=Path, help="output directory (default: $DP_RIEMOPT_OUT or ./results)")
    p.add_argument("--plot", type=Path, help="also write an SVG plot to this path")
    p.add_argument("--n-grid", type=int, nargs="+")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, dest="epsilon")
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", choices=["last", "uniform", "average"])
    p.add_argument(
        "--paper-faithful", "--alt-conventions", dest="alt_conventions", action="store_true", default=None,
        help="half-scale Frechet gradient, max|z|^2 Lipschitz constant and MH noise sampling",
    )
    p.add_argument("--timing", action="store_true", default=None, help="record wall-clock times (breaks byte determinism)")
    p.set_defaults(func=_cmd_run, experiment=experiment)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dp-riemopt", description="Differentially private Riemannian optimization")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub, "run-pca", "pca")
    _add_run_parser(sub, "run-frechet", "frechet")

    p = sub.add_parser("calibrate", help="noise variance and audited epsilon for an iterative run")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--L0", type=float, required=True)
    p.add_argument("--b", type=int, help="batch size (default: n)")
    p.add_argument("--c", type=float, default=1.0)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("sample-noise", help="dump tangent Gaussian draws as CSV")
    p.add_argument("--manifold", choices=["sphere", "spd"], required=True)
    p.add_argument("--dim", type=int, required=True, help="ambient length d+1 (sphere) or matrix size r (spd)")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=["exact", "mh"], default="exact")
    p.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_sample_noise)

    p = sub.add_parser("plot", help="SVG plot from a runs CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--title")
    p.set_defaults(func=_cmd_plot)
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        cfg = ExperimentConfig.from_json(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigurationError(f"config is for {cfg.experiment!r}, command expects {args.experiment!r}")
    else:
        cfg = ExperimentConfig.defaults(args.experiment)
    overrides = {}
    for key in ("n_grid", "runs", "seed", "epsilon", "delta", "eta", "workers", "output", "alt_conventions", "timing"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if overrides:
        d = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
        d.update(overrides)
        cfg = ExperimentConfig(**d)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    out = args.out or default_output_dir()
    if not out.is_dir():
        raise ConfigurationError(f"output directory {out} does not exist")
    result = run_experiment(cfg)
    paths = write_results(result, out)
    for s in result.summary():
        print(f"{s['method']:>12s}  n={s['n']:<6d} mean={s['mean']:.6g}  std={s['std']:.6g}")
    warnings = [e for e in result.events if e["kind"] in ("warning", "error")]
    if warnings:
        print(f"{len(warnings)} warning/error rows in {paths['events']}", file=sys.stderr)
    if args.plot:
        plot_runs(result.rows, args.plot, title=cfg.experiment)
    for p in paths.values():
        print(p)
    return 0


def _cmd_calibrate(args) -> int:
    budget = PrivacyBudget(args.eps, args.delta, args.c)
    b = args.b if args.b is not None else args.n
    cal = calibrate_iterative(args.T, args.L0, args.n, b, budget)
    eps_hat = audit_calibration(cal, args.delta)
    rows = [
        ("sigma2", f"{cal.sigma2:.6g}"),
        ("T", str(cal.T)),
        ("floor", f"{cal.floor:.6g}"),
        ("floor_active", str(cal.floor_active)),
        ("audited_epsilon", f"{eps_hat:.6g}"),
    ]
    for k, v in rows:
        print(f"{k:<16s}{v}")
    return 0


def _cmd_sample_noise(args) -> int:
    if args.manifold == "sphere":
        M = Sphere(args.dim)
        w = np.zeros(args.dim)
        w[0] = 1.0
    else:
        M = SPD(args.dim)
        w = np.eye(args.dim)
    rng = RngStream(args.seed, "noise")
    if args.sampler == "exact":
        draws = tangent_gaussian_coords(M, w, args.sigma, rng, args.draws)
    else:
        draws, _ = tangent_gaussian_mh_chain(M, w, args.sigma, rng, MhParams(), n_samples=args.draws)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"c{i}" for i in range(M.dim)])
        for row in draws:
            writer.writerow([repr(float(x)) for x in row])
    finally:
        if args.out:
            fh.close()
    return 0


def _cmd_plot(args) -> int:
    if not args.csv.is_file():
        raise FileNotFoundError(f"CSV file not found: {args.csv}")
    plot_runs(read_runs(args.csv), args.out, title=args.title)
    print(args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, DomainError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
