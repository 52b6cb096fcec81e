"""Synthetic benchmarks: leading eigenvector on the sphere and Frechet mean on SPD.

Each ``(n, run)`` cell derives one seed from the master seed. The dataset and
the optimizer's RNG substreams come from that seed, so every method in a cell
sees the same data and the same initial point. Rows are sorted before they
are written, which keeps the CSV bytes independent of the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .accounting import PrivacyBudget, audit, calibrate_iterative
from .manifolds.base import ConfigurationError, DomainError
from .manifolds.sphere import PcaObjective
from .manifolds.spd import SPD, FrechetObjective
from .optimizer import (
    OptimizerConfig,
    Schedule,
    baseline_dp_frechet_output,
    baseline_dp_pgd_sphere,
    frechet_mean,
    run,
)
from .sampling import MhParams, RngStream, STREAM_IDS, make_streams

logger = logging.getLogger(__name__)

OUTPUT_ENV = "DP_RIEMOPT_OUT"
RUN_COLUMNS = ("experiment", "method", "n", "run", "seed", "excess_risk", "wallclock_ms")
SUMMARY_COLUMNS = ("experiment", "method", "n", "runs", "mean", "std")
EVENT_COLUMNS = ("experiment", "method", "n", "run", "kind", "value", "message")
METHODS = {"pca": ("dp-rgd", "dp-pgd", "non-private"), "frechet": ("dp-rgd", "dp-fm", "non-private")}
DATA_STREAM = len(STREAM_IDS)


def data_rng(seed: int) -> np.random.Generator:
    """Generator for dataset synthesis, independent of the four optimizer streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(DATA_STREAM,))))


def cell_seed(master: int, n: int, run_index: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=(int(n), int(run_index)))
    return int(ss.generate_state(1, np.uint32)[0])


def _orthonormal_columns(rows, cols, rng):
    Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    return Q * np.sign(np.diag(R))


def generate_pca_data(n: int, d_plus_1: int, nu: float, rng):
    """Rows ``z_i`` of ``Z = U Sigma V`` with a prescribed spectrum.

    ``Sigma = diag(1, 1-1.1nu, 1-1.2nu, 1-1.3nu, 1-1.4nu, |x_k|/(d+1), ...)``
    with ``x_k`` standard normal; ``U`` (n x (d+1)) and ``V`` are random with
    orthonormal columns, so the singular values of ``Z`` are those of ``Sigma``.

    Returns
    -------
    Z : ndarray of shape (n, d_plus_1)
    spectrum : ndarray
        Diagonal of ``Sigma`` in construction order.
    """
    if d_plus_1 < 6:
        raise DomainError("need d+1 >= 6 for the five leading spectrum entries")
    if n < d_plus_1:
        raise DomainError(f"need n >= d+1 = {d_plus_1} for column-orthonormal U")
    lead = np.array([1.0, 1 - 1.1 * nu, 1 - 1.2 * nu, 1 - 1.3 * nu, 1 - 1.4 * nu])
    tail = np.abs(rng.standard_normal(d_plus_1 - 5)) / d_plus_1
    spectrum = np.concatenate([lead, tail])
    U = _orthonormal_columns(n, d_plus_1, rng)
    V = _orthonormal_columns(d_plus_1, d_plus_1, rng)
    return (U * spectrum) @ V, spectrum


@dataclass
class WishartDraw:
    samples: np.ndarray
    attempts: int

    @property
    def acceptance(self) -> float:
        return len(self.samples) / self.attempts


def generate_wishart_spd(n: int, r: int, diameter: float, rng, max_attempts: int = 1_000_000) -> WishartDraw:
    """Draws of ``G G^T / r`` kept when ``dist(X, I) <= diameter / 2``.

    Every pair of kept samples is then within ``diameter`` of each other.
    """
    if r < 2:
        raise DomainError("need r >= 2")
    if not diameter > 0:
        raise DomainError("diameter must be positive")
    out = []
    attempts = 0
    block = max(64, 4 * n)
    while len(out) < n:
        G = rng.standard_normal((block, r, r))
        X = G @ np.swapaxes(G, -1, -2) / r
        X = 0.5 * (X + np.swapaxes(X, -1, -2))
        lam = np.linalg.eigvalsh(X)
        for k in range(block):
            attempts += 1
            if lam[k, 0] >= 1e-10 and np.sqrt(np.sum(np.log(lam[k]) ** 2)) <= diameter / 2:
                out.append(X[k])
                if len(out) == n:
                    break
            if attempts >= max_attempts and len(out) < 1e-4 * attempts:
                raise DomainError(
                    f"Wishart acceptance rate {len(out) / attempts:.2e} over {attempts} draws; use a larger diameter"
                )
    return WishartDraw(np.array(out), attempts)


def solve_reference(objective, tol: float = 1e-14, max_iter: int = 100_000):
    """Global minimiser of the benchmark objective.

    PCA uses the top eigenvector of the covariance, with its first nonzero
    coordinate made positive; the Frechet mean uses RGD with stepsize 1/2.
    """
    if isinstance(objective, PcaObjective):
        vals, vecs = np.linalg.eigh(objective.covariance)
        w = vecs[:, -1]
        nz = np.flatnonzero(np.abs(w) > 1e-15)
        if nz.size and w[nz[0]] < 0:
            w = -w
        return w / np.linalg.norm(w)
    if isinstance(objective, FrechetObjective):
        return frechet_mean(objective.samples, tol=tol, max_iter=max_iter)
    raise ConfigurationError(f"no reference solver for {type(objective).__name__}")


def excess_risk(objective, w_priv, w_star) -> float:
    return objective.loss(w_priv) - objective.loss(w_star)


def pca_iterations(n: int, budget: PrivacyBudget, d_plus_1: int, L0: float) -> int:
    """``round(log(n^2 eps^2 / ((d+1) L0^2 log(1/delta))))``, at least 1."""
    arg = n**2 * budget.epsilon**2 / (d_plus_1 * L0**2 * math.log(1.0 / budget.delta))
    return max(1, int(round(math.log(arg))))


@dataclass
class ExperimentConfig:
    """Settings of one benchmark; JSON keys match the field names.

    ``T_rule`` applies to the Frechet benchmark: ``"n"`` runs ``T = n``
    iterations and ``"n2"`` runs ``T = n^2``.
    """

    experiment: str = "pca"
    n_grid: list = field(default_factory=lambda: [1000, 2000, 5000, 10000, 20000])
    runs: int = 20
    epsilon: float = 0.1
    delta: float = 1e-3
    c: float = 1.0
    d_plus_1: int = 50
    nu: float = 1e-3
    r: int = 2
    diameter: float = 1.0
    methods: Optional[list] = None
    eta: float = 0.2
    seed: int = 0
    output: str = "last"
    T_rule: str = "n"
    alt_conventions: bool = False
    mh_burn_in: int = 500
    mh_thinning: int = 10
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.experiment not in METHODS:
            raise ConfigurationError(f"experiment must be one of {tuple(METHODS)}")
        if self.methods is None:
            self.methods = list(METHODS[self.experiment])
        bad = set(self.methods) - set(METHODS[self.experiment])
        if bad:
            raise ConfigurationError(f"unknown methods for {self.experiment}: {sorted(bad)}")
        grid = [int(n) for n in self.n_grid]
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("n_grid must be nonempty and strictly increasing")
        self.n_grid = grid
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.output not in ("last", "uniform", "average"):
            raise ConfigurationError("output must be 'last', 'uniform' or 'average'")
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        if self.T_rule not in ("n", "n2"):
            raise ConfigurationError("T_rule must be 'n' or 'n2'")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        self.budget  # validates epsilon, delta, c

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta, self.c)

    @classmethod
    def defaults(cls, experiment: str) -> "ExperimentConfig":
        if experiment == "frechet":
            return cls(experiment="frechet", n_grid=[10, 20, 50, 100, 200], eta=0.01)
        return cls(experiment=experiment)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        base = asdict(cls.defaults(d.get("experiment", "pca")))
        base.update(d)
        if "methods" not in d:
            base["methods"] = None
        return cls(**base)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    events: list

    def summary(self) -> list:
        return summarize(self.rows)


def summarize(rows) -> list:
    groups = {}
    for r in rows:
        x = r["excess_risk"]
        if isinstance(x, float) and math.isfinite(x):
            groups.setdefault((r["experiment"], r["method"], r["n"]), []).append(x)
    out = []
    for (exp, method, n), xs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        a = np.array(xs)
        out.append(dict(experiment=exp, method=method, n=n, runs=len(xs), mean=float(a.mean()), std=float(a.std())))
    return out


def _pca_cell(cfg: ExperimentConfig, n: int, run_index: int, seed: int):
    Z, _ = generate_pca_data(n, cfg.d_plus_1, cfg.nu, data_rng(seed))
    obj = PcaObjective(Z)
    w_star = solve_reference(obj)
    L0 = obj.lipschitz(alt_conventions=cfg.alt_conventions)
    T = pca_iterations(n, cfg.budget, cfg.d_plus_1, L0)
    cal = calibrate_iterative(T, L0, n, n, cfg.budget)
    ocfg = OptimizerConfig(
        T=T, batch_size=n, calibration=cal, schedule=Schedule("constant", cfg.eta),
        output=cfg.output, seed=seed, keep_iterates=False,
        noise_sampler="mh" if cfg.alt_conventions else "exact",
        mh_params=MhParams(burn_in=cfg.mh_burn_in, thinning=cfg.mh_thinning),
    )
    results, events = [], []
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "dp-rgd":
            traj = run(obj, ocfg)
            w = traj.w_priv
        elif method == "dp-pgd":
            traj = baseline_dp_pgd_sphere(obj, ocfg)
            w = traj.w_priv
        else:
            traj, w = None, w_star
        ms = (time.perf_counter() - t0) * 1e3
        results.append((method, excess_risk(obj, w, w_star), ms))
        if traj is not None:
            events.extend(_privacy_events(cfg, method, traj, cal))
    return results, events


def _privacy_events(cfg, method, traj, cal):
    eps_hat = audit(traj.ledger, cfg.delta)
    ev = [("audited_epsilon", eps_hat, f"T={cal.T} sigma2={cal.sigma2:.6g} L0={cal.L0:.6g}")]
    if eps_hat > cfg.epsilon * 1.01:
        ev.append(("warning", eps_hat, f"audited epsilon {eps_hat:.4g} exceeds the configured {cfg.epsilon:.4g}"))
    if cal.floor_active:
        ev.append(("floor_active", cal.sigma2, "noise variance set by the 4 L0^2 / b^2 floor"))
    for step, r in traj.warnings:
        ev.append(("bound_warning", r, f"iterate {step} left the monitored ball"))
    return [(method,) + e for e in ev]


def _frechet_cell(cfg: ExperimentConfig, n: int, run_index: int, seed: int):
    drng = data_rng(seed)
    draw = generate_wishart_spd(n, cfg.r, cfg.diameter, drng)
    obj = FrechetObjective(draw.samples, diameter=cfg.diameter, alt_conventions=cfg.alt_conventions, check_diameter=False)
    w_star = solve_reference(obj)
    L0 = obj.lipschitz()
    T = n if cfg.T_rule == "n" else n * n
    cal = calibrate_iterative(T, L0, n, n, cfg.budget)
    mh = MhParams(burn_in=cfg.mh_burn_in, thinning=cfg.mh_thinning)
    ocfg = OptimizerConfig(
        T=T, batch_size=n, calibration=cal, schedule=Schedule("constant", cfg.eta),
        output=cfg.output, seed=seed, keep_iterates=False,
        noise_sampler="mh" if cfg.alt_conventions else "exact", mh_params=mh,
    )
    results = []
    events = [("data", "wishart_acceptance", draw.acceptance, f"{draw.attempts} draws")]
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "dp-rgd":
            traj = run(obj, ocfg)
            w = traj.w_priv
            events.extend(_privacy_events(cfg, method, traj, cal))
        elif method == "dp-fm":
            w, _ = baseline_dp_frechet_output(
                obj.samples, cfg.budget, cfg.diameter, RngStream(seed, "output-select"), mh, mean=w_star
            )
            events.append((method, "pure_epsilon", cfg.epsilon, "Laplace output perturbation"))
        else:
            w = w_star
        ms = (time.perf_counter() - t0) * 1e3
        results.append((method, excess_risk(obj, w, w_star), ms))
    return results, events


def _run_cell(args):
    cfg, n, run_index = args
    seed = cell_seed(cfg.seed, n, run_index)
    cell = _pca_cell if cfg.experiment == "pca" else _frechet_cell
    try:
        results, events = cell(cfg, n, run_index, seed)
    except Exception as exc:  # one failed cell must not stop the sweep
        results = [(m, math.nan, 0.0) for m in cfg.methods]
        events = [(m, "error", math.nan, f"{type(exc).__name__}: {exc}") for m in cfg.methods]
    rows = [
        dict(experiment=cfg.experiment, method=m, n=n, run=run_index, seed=seed,
             excess_risk=float(x), wallclock_ms=float(ms) if cfg.timing else 0.0)
        for m, x, ms in results
    ]
    evs = [
        dict(experiment=cfg.experiment, method=m, n=n, run=run_index, kind=k, value=float(v), message=msg)
        for m, k, v, msg in events
    ]
    return rows, evs


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    tasks = [(cfg, n, k) for n in cfg.n_grid for k in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(_run_cell, tasks))
    else:
        outs = [_run_cell(t) for t in tasks]
    rows = [r for rs, _ in outs for r in rs]
    events = [e for _, es in outs for e in es]
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (order[r["method"]], r["n"], r["run"]))
    events.sort(key=lambda e: (e["n"], e["run"], e["method"], e["kind"]))
    return ExperimentResult(cfg, rows, events)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def write_results(result: ExperimentResult, out_dir) -> dict:
    """Write the run, summary and event CSVs; returns their paths."""
    out = Path(out_dir)
    if not out.is_dir():
        raise ConfigurationError(f"output directory {out} does not exist")
    exp = result.config.experiment
    paths = {
        "runs": out / f"{exp}_runs.csv",
        "summary": out / f"{exp}_summary.csv",
        "events": out / f"{exp}_events.csv",
    }
    paths["runs"].write_text(_csv_text(result.rows, RUN_COLUMNS))
    paths["summary"].write_text(_csv_text(result.summary(), SUMMARY_COLUMNS))
    paths["events"].write_text(_csv_text(result.events, EVENT_COLUMNS))
    return paths


def read_runs(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["n"] = int(r["n"])
        r["run"] = int(r["run"])
        r["seed"] = int(r["seed"])
        r["excess_risk"] = float(r["excess_risk"])
        r["wallclock_ms"] = float(r["wallclock_ms"])
    return rows


def plot_runs(rows, path, title: Optional[str] = None) -> Path:
    """Static SVG of mean excess risk against n with +-1 std error bars, log-y."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "dp-riemopt"
    summary = summarize(rows)
    fig, ax = plt.subplots(figsize=(5, 4))
    for method in sorted({s["method"] for s in summary}):
        pts = [s for s in summary if s["method"] == method and s["mean"] > 0]
        if not pts:
            continue
        ns = [s["n"] for s in pts]
        means = np.array([s["mean"] for s in pts])
        stds = np.array([s["std"] for s in pts])
        # keep the lower bar positive on a log axis
        lower = np.minimum(stds, means * (1 - 1e-3))
        ax.errorbar(ns, means, yerr=np.vstack([lower, stds]), marker="o", capsize=3, label=method)
    ax.set_yscale("log")
    ax.set_xlabel("sample size n")
    ax.set_ylabel("excess risk")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
