import csv
import io
import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dp_riemopt import experiments as ex
from dp_riemopt.experiments import (
    ExperimentConfig,
    cell_seed,
    data_rng,
    excess_risk,
    generate_pca_data,
    generate_wishart_spd,
    pca_iterations,
    read_runs,
    run_experiment,
    solve_reference,
    summarize,
    write_results,
)
from dp_riemopt.accounting import PrivacyBudget
from dp_riemopt.manifolds import ConfigurationError, DomainError, FrechetObjective, PcaObjective

from oracles import spd_dist_ref


class TestPcaData:
    def test_spectrum(self):
        nu = 1e-3
        Z, spec = generate_pca_data(200, 20, nu, np.random.default_rng(0))
        sv = np.linalg.svd(Z, compute_uv=False)
        np.testing.assert_allclose(sv, np.sort(spec)[::-1], atol=1e-10)
        np.testing.assert_allclose(spec[:5], [1, 1 - 1.1 * nu, 1 - 1.2 * nu, 1 - 1.3 * nu, 1 - 1.4 * nu])
        assert sv[0] - sv[1] == pytest.approx(1.1 * nu, abs=1e-10)
        assert np.all(spec[5:] >= 0) and np.all(spec[5:] < 1 - 1.4 * nu)

    def test_seeded(self):
        a, _ = generate_pca_data(60, 10, 1e-3, data_rng(5))
        b, _ = generate_pca_data(60, 10, 1e-3, data_rng(5))
        c, _ = generate_pca_data(60, 10, 1e-3, data_rng(6))
        assert a.tobytes() == b.tobytes() and a.tobytes() != c.tobytes()

    def test_errors(self):
        with pytest.raises(DomainError):
            generate_pca_data(10, 20, 1e-3, np.random.default_rng(0))
        with pytest.raises(DomainError):
            generate_pca_data(10, 5, 1e-3, np.random.default_rng(0))

    def test_iteration_count(self):
        b = PrivacyBudget(0.1, 1e-3)
        arg = 1000**2 * 0.01 / (50 * 4.0 * math.log(1000))
        assert pca_iterations(1000, b, 50, 2.0) == round(math.log(arg))
        assert pca_iterations(10, b, 50, 2.0) == 1


class TestWishart:
    @settings(max_examples=10)
    @given(st.integers(0, 2**32 - 1))
    def test_radius_and_diameter(self, seed):
        draw = generate_wishart_spd(8, 2, 1.0, np.random.default_rng(seed))
        X = draw.samples
        assert X.shape == (8, 2, 2)
        for A in X:
            assert spd_dist_ref(np.eye(2), A) <= 0.5 + 1e-12
        for i in range(8):
            for j in range(i):
                assert spd_dist_ref(X[i], X[j]) <= 1.0 + 1e-9
        assert 0 < draw.acceptance <= 1

    def test_errors(self):
        with pytest.raises(DomainError):
            generate_wishart_spd(2, 1, 1.0, np.random.default_rng(0))
        with pytest.raises(DomainError):
            generate_wishart_spd(2, 2, 1e-6, np.random.default_rng(0), max_attempts=1000)


class TestReference:
    def test_pca_axis(self):
        Z = np.diag([2.0, 1.0, 1.0])
        obj = PcaObjective(Z)
        np.testing.assert_allclose(solve_reference(obj), [1.0, 0.0, 0.0], atol=1e-14)
        assert excess_risk(obj, np.array([0.0, 1.0, 0.0]), solve_reference(obj)) == pytest.approx(1.0)

    def test_pca_sign(self):
        obj = PcaObjective(np.diag([-3.0, 1.0]))
        assert solve_reference(obj)[0] > 0

    def test_frechet_commuting(self):
        a, b, c, d = 2.0, 3.0, 5.0, 0.5
        obj = FrechetObjective(np.stack([np.diag([a, b]), np.diag([c, d])]))
        np.testing.assert_allclose(solve_reference(obj), np.diag([math.sqrt(a * c), math.sqrt(b * d)]), rtol=1e-12)

    def test_frechet_single(self):
        X = np.array([[2.0, 0.3], [0.3, 1.0]])
        W = solve_reference(FrechetObjective(X[None]))
        assert spd_dist_ref(W, X) <= 1e-12

    def test_excess_risk_of_optimum(self):
        Z, _ = generate_pca_data(100, 10, 1e-3, data_rng(0))
        obj = PcaObjective(Z)
        assert abs(excess_risk(obj, solve_reference(obj), solve_reference(obj))) == 0.0

    def test_unknown_objective(self):
        with pytest.raises(ConfigurationError):
            solve_reference(object())


class TestSeeds:
    def test_cell_seed(self):
        assert cell_seed(0, 10, 0) == cell_seed(0, 10, 0)
        seeds = {cell_seed(0, n, k) for n in (10, 20) for k in range(5)}
        assert len(seeds) == 10
        assert cell_seed(1, 10, 0) != cell_seed(0, 10, 0)


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig.defaults("frechet")
        assert c.n_grid == [10, 20, 50, 100, 200] and c.methods == ["dp-rgd", "dp-fm", "non-private"]
        p = ExperimentConfig.defaults("pca")
        assert (p.epsilon, p.delta, p.d_plus_1, p.nu, p.eta, p.runs) == (0.1, 1e-3, 50, 1e-3, 0.2, 20)

    @pytest.mark.parametrize(
        "kw",
        [dict(experiment="svm"), dict(n_grid=[]), dict(n_grid=[20, 10]), dict(runs=0), dict(epsilon=0.0),
         dict(delta=1.0), dict(methods=["dp-fm"]), dict(output="median"), dict(T_rule="n3"), dict(workers=0),
         dict(eta=0.0)],
    )
    def test_invalid(self, kw):
        with pytest.raises((ConfigurationError, DomainError)):
            ExperimentConfig(**kw)

    def test_json_roundtrip(self, tmp_path):
        c = ExperimentConfig(experiment="frechet", n_grid=[10, 20], runs=3, seed=4)
        p = tmp_path / "c.json"
        p.write_text(c.to_json())
        assert ExperimentConfig.from_json(p) == c

    def test_json_errors(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_json(p)
        p.write_text(json.dumps({"experiment": "pca", "bogus": 1}))
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_json(p)
        p.write_text("[1, 2]")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_json(p)

    def test_partial_json_gets_experiment_defaults(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "frechet", "runs": 2}))
        c = ExperimentConfig.from_json(p)
        assert c.n_grid == [10, 20, 50, 100, 200] and c.runs == 2


def small_frechet(**kw):
    base = dict(experiment="frechet", n_grid=[5, 8], runs=3, seed=2, eta=0.01)
    base.update(kw)
    return ExperimentConfig(**base)


def small_pca(**kw):
    base = dict(experiment="pca", n_grid=[60, 120], runs=2, d_plus_1=10, seed=2)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_rows_and_nonprivate(self):
        res = run_experiment(small_frechet())
        assert len(res.rows) == 3 * 2 * 3
        for r in res.rows:
            assert math.isfinite(r["excess_risk"])
            if r["method"] == "non-private":
                assert r["excess_risk"] == 0.0
            else:
                assert r["excess_risk"] >= -1e-10
        kinds = {e["kind"] for e in res.events}
        assert {"audited_epsilon", "wishart_acceptance", "pure_epsilon"} <= kinds

    def test_pca_rows(self):
        res = run_experiment(small_pca())
        assert [r["method"] for r in res.rows[:4]] == ["dp-rgd"] * 4
        assert all(r["excess_risk"] >= -1e-12 for r in res.rows)

    def test_common_random_numbers(self):
        res = run_experiment(small_pca(methods=["dp-rgd"]))
        res2 = run_experiment(small_pca(methods=["dp-pgd", "dp-rgd"]))
        a = [r["excess_risk"] for r in res.rows]
        b = [r["excess_risk"] for r in res2.rows if r["method"] == "dp-rgd"]
        assert a == b

    def test_summary_recomputed(self, tmp_path):
        res = run_experiment(small_frechet())
        paths = write_results(res, tmp_path)
        rows = read_runs(paths["runs"])
        with open(paths["summary"], newline="") as f:
            summ = list(csv.DictReader(f))
        for s in summ:
            xs = np.array([r["excess_risk"] for r in rows if r["method"] == s["method"] and r["n"] == int(s["n"])])
            assert int(s["runs"]) == len(xs)
            assert float(s["mean"]) == pytest.approx(xs.mean(), rel=1e-12, abs=1e-300)
            assert float(s["std"]) == pytest.approx(xs.std(), rel=1e-12, abs=1e-300)

    def test_worker_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        write_results(run_experiment(small_frechet(workers=1)), a)
        write_results(run_experiment(small_frechet(workers=2)), b)
        for name in ("frechet_runs.csv", "frechet_summary.csv", "frechet_events.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_failed_cell_becomes_error_row(self, monkeypatch):
        def boom(*args, **kw):
            raise DomainError("synthetic failure")

        monkeypatch.setattr(ex, "generate_wishart_spd", boom)
        res = run_experiment(small_frechet(n_grid=[5], runs=1))
        assert all(math.isnan(r["excess_risk"]) for r in res.rows)
        assert [e["kind"] for e in res.events] == ["error"] * 3
        assert "synthetic failure" in res.events[0]["message"]
        assert summarize(res.rows) == []

    def test_missing_output_dir(self, tmp_path):
        res = run_experiment(small_frechet(n_grid=[5], runs=1))
        with pytest.raises(ConfigurationError):
            write_results(res, tmp_path / "absent")

    def test_csv_floats_roundtrip(self, tmp_path):
        res = run_experiment(small_frechet(n_grid=[5], runs=2))
        rows = read_runs(write_results(res, tmp_path)["runs"])
        assert [r["excess_risk"] for r in rows] == [r["excess_risk"] for r in res.rows]

    def test_timing_flag(self):
        off = run_experiment(small_frechet(n_grid=[5], runs=1))
        assert all(r["wallclock_ms"] == 0.0 for r in off.rows)
        on = run_experiment(small_frechet(n_grid=[5], runs=1, timing=True))
        assert any(r["wallclock_ms"] > 0 for r in on.rows)

    def test_privacy_warning_rows(self):
        # the calibrated noise at c = 1 audits above the target epsilon at these settings
        res = run_experiment(small_pca(n_grid=[60], runs=1, methods=["dp-rgd"]))
        eps = [e["value"] for e in res.events if e["kind"] == "audited_epsilon"]
        warn = [e for e in res.events if e["kind"] == "warning"]
        assert len(eps) == 1 and (eps[0] > 0.101) == bool(warn)

    def test_plot(self, tmp_path):
        res = run_experiment(small_frechet(n_grid=[5, 8], runs=2))
        p = ex.plot_runs(res.rows, tmp_path / "f.svg", title="t")
        text = p.read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text
        p2 = ex.plot_runs(res.rows, tmp_path / "g.svg", title="t")
        assert p.read_bytes() == p2.read_bytes()

    @pytest.mark.slow
    def test_pca_large_cell_runtime(self):
        cfg = ExperimentConfig(experiment="pca", n_grid=[5000], runs=1)
        t0 = time.perf_counter()
        res = run_experiment(cfg)
        assert time.perf_counter() - t0 < 60
        assert all(math.isfinite(r["excess_risk"]) for r in res.rows)

    def test_default_output_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv(ex.OUTPUT_ENV, str(tmp_path))
        assert ex.default_output_dir() == tmp_path
        monkeypatch.delenv(ex.OUTPUT_ENV)
        assert str(ex.default_output_dir()) == "results"
