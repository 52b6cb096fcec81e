import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dp_riemopt.accounting import NoiseCalibration, PrivacyBudget, audit, calibrate_iterative
from dp_riemopt.manifolds import SPD, ConfigurationError, DomainError, DomainProfile, FrechetObjective, PcaObjective, Sphere
from dp_riemopt.optimizer import (
    OptimizerConfig,
    Schedule,
    baseline_dp_frechet_output,
    baseline_dp_pgd_sphere,
    dp_step,
    frechet_mean,
    frechet_output_sensitivity,
    noisy_gradient,
    rgd,
    run,
    schedule_stepsize,
    schedule_T,
    subsample,
)
from dp_riemopt.sampling import make_streams

from oracles import random_spd, spd_dist_ref


def cal(sigma2, T=5, L0=1.0, n=10, b=10):
    return NoiseCalibration(sigma2=sigma2, T=T, L0=L0, n=n, b=b)


def pca_problem(n=40, m=6, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, m)) * np.linspace(2, 0.5, m)
    return PcaObjective(Z - Z.mean(axis=0))


def frechet_problem(n=8, seed=0):
    rng = np.random.default_rng(seed)
    return FrechetObjective(np.stack([random_spd(rng, 2, 0.3) for _ in range(n)]))


class TestSubsample:
    def test_full(self):
        np.testing.assert_array_equal(subsample(5, 5, np.random.default_rng(0)), np.arange(5))

    def test_uniform_single(self):
        rng = np.random.default_rng(0)
        hits = sum(int(subsample(2, 1, rng)[0]) for _ in range(10**4))
        assert abs(hits / 10**4 - 0.5) <= 0.02

    @given(st.integers(1, 200), st.data())
    def test_distinct(self, n, data):
        b = data.draw(st.integers(1, n))
        idx = subsample(n, b, np.random.default_rng(data.draw(st.integers(0, 2**32 - 1))))
        assert len(idx) == b == len(set(idx.tolist()))
        assert idx.min() >= 0 and idx.max() < n

    def test_too_large(self):
        with pytest.raises(DomainError):
            subsample(3, 4, 0)


class TestSchedules:
    def test_strongly_convex(self):
        p = DomainProfile(beta=2.0)
        assert schedule_stepsize(Schedule("strongly_convex"), 0, p, cal(1.0), 3) == 0.5
        assert schedule_stepsize(Schedule("strongly_convex"), 3, p, cal(1.0), 3) == 0.125

    def test_nonconvex(self):
        p = DomainProfile(L1=4.0)
        for t in (0, 7, 100):
            assert schedule_stepsize(Schedule("nonconvex"), t, p, cal(1.0), 3) == 0.25

    def test_gconvex(self):
        p = DomainProfile(diameter=1.0, kappa_min=0.0, c_l=1.0, L0=1.0)
        assert schedule_stepsize(Schedule("gconvex"), 0, p, cal(0.0, T=1), 3) == 1.0

    def test_gconvex_formula(self):
        p = DomainProfile(diameter=2.0, kappa_min=-1.0, c_l=0.5, L0=3.0)
        varsigma = 2.0 / math.tanh(2.0)
        expect = 2.0 / math.sqrt((9.0 + 4 * 0.7 / 0.5) * varsigma * 11)
        assert schedule_stepsize(Schedule("gconvex"), 0, p, cal(0.7, T=11), 4) == pytest.approx(expect, rel=1e-14)

    def test_pl(self):
        p = DomainProfile(L1=2.0, tau=4.0)
        assert schedule_stepsize(Schedule("pl"), 0, p, cal(1.0), 3) == pytest.approx(0.99 * 0.25)

    def test_constant(self):
        assert schedule_stepsize(Schedule("constant", 0.3), 9, None, cal(1.0), 3) == 0.3
        with pytest.raises(ConfigurationError):
            Schedule("constant")
        with pytest.raises(ConfigurationError):
            Schedule("adam")

    @pytest.mark.parametrize(
        "kind,profile",
        [("strongly_convex", DomainProfile()), ("pl", DomainProfile(L1=1.0)), ("nonconvex", DomainProfile()),
         ("gconvex", DomainProfile()), ("gconvex", None)],
    )
    def test_missing_fields(self, kind, profile):
        with pytest.raises(ConfigurationError):
            schedule_stepsize(Schedule(kind), 0, profile, cal(1.0), 3)

    def test_missing_fields_fail_before_first_step(self):
        obj = pca_problem()
        streams = make_streams(0)
        before = streams["noise"].state
        cfg = OptimizerConfig(T=3, batch_size=obj.n, calibration=cal(1.0, n=obj.n, b=obj.n),
                              schedule=Schedule("strongly_convex"), profile=DomainProfile())
        with pytest.raises(ConfigurationError):
            run(obj, cfg, streams)
        assert streams["noise"].state == before

    def test_T_rules(self):
        b = PrivacyBudget(1.0, math.exp(-1))
        p = DomainProfile(L1=1.0, c_l=1.0, L0=1.0)
        assert schedule_T(Schedule("gconvex"), p, b, 50, 3) == 2500
        assert schedule_T(Schedule("strongly_convex"), p, b, 50, 3) == 2500
        assert schedule_T(Schedule("nonconvex"), p, b, 100, 4) == 50
        assert schedule_T(Schedule("pl"), p, PrivacyBudget(0.01, 0.5), 2, 10) == 1
        # log(100^2 * 1 * 1 / (4 * 1 * 1)) = log(2500) -> 8
        assert schedule_T(Schedule("pl"), p, b, 100, 4) == round(math.log(2500))
        with pytest.raises(ConfigurationError):
            schedule_T(Schedule("constant", 0.1), p, b, 10, 3)


class TestStep:
    def test_zero_noise_matches_rgd_step(self):
        obj = pca_problem()
        w0 = Sphere(6).random_point(np.random.default_rng(1))
        w1 = dp_step(obj, w0, 0.1, obj.n, 0.0, make_streams(0))
        assert w1.tobytes() == rgd(obj, w0, 0.1, 1)[1].tobytes()

    def test_frechet_single_sample_lands(self):
        rng = np.random.default_rng(2)
        X = random_spd(rng, 3)
        obj = FrechetObjective(X[None])
        W1 = dp_step(obj, random_spd(rng, 3), 0.5, 1, 0.0, make_streams(0))
        assert spd_dist_ref(W1, X) <= 1e-8

    @pytest.mark.parametrize("which", ["sphere", "spd"])
    def test_unbiased(self, which):
        obj = pca_problem(n=12) if which == "sphere" else frechet_problem(n=12)
        M = obj.manifold
        w = M.random_point(np.random.default_rng(3)) if which == "sphere" else np.diag([1.3, 0.8])
        streams = make_streams(4)
        reps = 10**4
        Z = np.array([M.vec(w, noisy_gradient(obj, w, 3, 0.25, streams)[0]) for _ in range(reps)])
        full = M.vec(w, obj.rgrad(w))
        se = Z.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(Z.mean(axis=0) - full) <= 4 * se)


class TestRun:
    def make(self, obj, **kw):
        base = dict(T=6, batch_size=obj.n, calibration=cal(0.01, T=6, n=obj.n, b=obj.n),
                    schedule=Schedule("constant", 0.05), seed=3)
        base.update(kw)
        return OptimizerConfig(**base)

    def test_T1_last(self):
        obj = pca_problem()
        tr = run(obj, self.make(obj, T=1))
        assert len(tr.iterates) == 2
        np.testing.assert_array_equal(tr.w_priv, tr.iterates[1])

    def test_average_of_constant_trajectory(self):
        X = np.diag([2.0, 0.5])
        obj = FrechetObjective(X[None])
        cfg = self.make(obj, calibration=cal(0.0, T=6, n=1, b=1), init=X.copy(), output="average")
        tr = run(obj, cfg)
        # the batched gradient at X is zero only up to roundoff
        np.testing.assert_allclose(tr.w_priv, X, rtol=1e-14, atol=1e-15)

    def test_average_recursion(self):
        obj = frechet_problem()
        tr = run(obj, self.make(obj, output="average", average_weight=2.0, T=7))
        M = obj.manifold
        bar = tr.iterates[1]
        for t in range(1, 6):
            bar = M.exp(bar, min(1.0, 2.0 / (t + 1)) * M.log(bar, tr.iterates[t + 1]))
        np.testing.assert_allclose(tr.w_priv, bar, rtol=1e-12, atol=1e-14)

    def test_uniform_choice(self):
        obj = pca_problem()
        tr = run(obj, self.make(obj, output="uniform", T=9))
        assert 0 <= tr.priv_index <= 8
        np.testing.assert_array_equal(tr.w_priv, tr.iterates[tr.priv_index])

    def test_uniform_covers_range(self):
        obj = pca_problem()
        picks = {run(obj, self.make(obj, output="uniform", T=3, seed=s)).priv_index for s in range(60)}
        assert picks == {0, 1, 2}

    def test_determinism(self):
        obj = frechet_problem()
        a = run(obj, self.make(obj, batch_size=3))
        b = run(obj, self.make(obj, batch_size=3))
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.iterates, b.iterates))

    @pytest.mark.parametrize("which", ["sphere", "spd"])
    def test_output_strategy_independence(self, which):
        obj = pca_problem() if which == "sphere" else frechet_problem()
        runs = [run(obj, self.make(obj, batch_size=4, output=o)) for o in ("last", "uniform", "average")]
        for other in runs[1:]:
            assert all(x.tobytes() == y.tobytes() for x, y in zip(runs[0].iterates, other.iterates))

    @pytest.mark.parametrize("which", ["sphere", "spd"])
    def test_zero_noise_reduction(self, which):
        obj = pca_problem() if which == "sphere" else frechet_problem()
        tr = run(obj, self.make(obj, calibration=cal(0.0, T=6, n=obj.n, b=obj.n)))
        ref = rgd(obj, tr.iterates[0], 0.05, 6)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(tr.iterates, ref))

    def test_ledger_plumbing(self):
        obj = frechet_problem(n=40)
        c = calibrate_iterative(12, obj.lipschitz() if obj.diameter else 1.0, 40, 40, PrivacyBudget(1.0, 1e-3))
        tr = run(obj, self.make(obj, T=12, calibration=c))
        assert len(tr.ledger) == 12
        (entry,) = tr.ledger.counts
        assert (entry.b, entry.n, entry.sigma2, entry.L0) == (40, 40, c.sigma2, c.L0)
        assert math.isfinite(audit(tr.ledger, 1e-3))

    @settings(max_examples=15)
    @given(st.integers(0, 2**32 - 1))
    def test_iterates_valid(self, seed):
        for obj in (pca_problem(), frechet_problem()):
            tr = run(obj, self.make(obj, batch_size=3, seed=seed, calibration=cal(0.5, T=6, n=obj.n, b=3)))
            for w in tr.iterates:
                obj.manifold.check_point(w)

    def test_bound_monitor(self):
        obj = frechet_problem()
        tr = run(obj, self.make(obj, calibration=cal(4.0, T=6, n=obj.n, b=obj.n), bound_radius=1e-3))
        assert tr.warnings and all(r > 1e-3 for _, r in tr.warnings)

    def test_mh_noise_sampler(self):
        obj = frechet_problem()
        tr = run(obj, self.make(obj, noise_sampler="mh"))
        assert len(tr.iterates) == 7

    def test_config_errors(self):
        obj = pca_problem()
        for kw in (dict(batch_size=obj.n + 1), dict(output="median"), dict(T=0), dict(noise_sampler="gibbs")):
            with pytest.raises(ConfigurationError):
                run(obj, self.make(obj, **kw))

    def test_initialisation(self):
        obj = frechet_problem()
        np.testing.assert_array_equal(run(obj, self.make(obj)).iterates[0], np.eye(2))
        first = run(obj, self.make(obj, init="first-sample")).iterates[0]
        np.testing.assert_array_equal(first, obj.samples[0])
        s = pca_problem()
        a, b = run(s, self.make(s, seed=1)).iterates[0], run(s, self.make(s, seed=2)).iterates[0]
        assert abs(np.linalg.norm(a) - 1) < 1e-12 and not np.array_equal(a, b)


class TestBaselines:
    def cfg(self, obj, sigma2, eta=0.05, T=20):
        return OptimizerConfig(T=T, batch_size=obj.n, calibration=cal(sigma2, T=T, n=obj.n, b=obj.n),
                               schedule=Schedule("constant", eta), seed=1)

    def test_pgd_stationary(self):
        obj = PcaObjective(np.zeros((3, 4)))
        tr = baseline_dp_pgd_sphere(obj, self.cfg(obj, 0.0))
        for w in tr.iterates:
            np.testing.assert_array_equal(w, tr.iterates[0])

    def test_pgd_noiseless_descent(self):
        obj = pca_problem()
        tr = baseline_dp_pgd_sphere(obj, self.cfg(obj, 0.0, eta=0.02, T=50))
        losses = [obj.loss(w) for w in tr.iterates]
        assert all(b <= a + 1e-14 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_ambient_vs_tangent_noise(self):
        obj = pca_problem(m=6)
        s2 = 0.04
        pgd = baseline_dp_pgd_sphere(obj, self.cfg(obj, s2, T=5000))
        rgd_run = run(obj, OptimizerConfig(T=5000, batch_size=obj.n, calibration=cal(s2, T=5000, n=obj.n, b=obj.n),
                                          schedule=Schedule("constant", 0.05), seed=1, keep_iterates=False))
        assert np.mean(np.square(pgd.noise_norms)) == pytest.approx(6 * s2, rel=0.05)
        assert np.mean(np.square(rgd_run.noise_norms)) == pytest.approx(5 * s2, rel=0.05)

    def test_pgd_requires_sphere(self):
        obj = frechet_problem()
        with pytest.raises(ConfigurationError):
            baseline_dp_pgd_sphere(obj, self.cfg(obj, 0.0))

    def test_output_perturbation_scale(self):
        assert frechet_output_sensitivity(2, 1.0) / 0.1 == pytest.approx(10.0)

    def test_output_perturbation_concentrates(self):
        rng = np.random.default_rng(0)
        X = random_spd(rng, 2, 0.3)
        W, mean = baseline_dp_frechet_output(X[None], PrivacyBudget(1e8, 1e-3), 1.0, np.random.default_rng(1))
        assert spd_dist_ref(mean, X) <= 1e-10
        assert spd_dist_ref(W, X) <= 1e-6

    def test_large_n_approaches_mean(self):
        obj = frechet_problem(n=400)
        W, mean = baseline_dp_frechet_output(obj.samples, PrivacyBudget(10.0, 1e-3), 1.0, np.random.default_rng(1))
        assert SPD(2).dist(W, mean) < 0.05

    def test_reference_nonconvergence(self):
        obj = frechet_problem()
        with pytest.raises(DomainError):
            frechet_mean(obj.samples, max_iter=1)

    def test_reference_commuting(self):
        a, b, c, d = 2.0, 3.0, 5.0, 0.5
        W = frechet_mean(np.stack([np.diag([a, b]), np.diag([c, d])]))
        np.testing.assert_allclose(W, np.diag([math.sqrt(a * c), math.sqrt(b * d)]), rtol=1e-12)
