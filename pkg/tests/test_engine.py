"""Engine-level unit tests: weights, schedules, resampling, summaries.

Hand-checkable values are computed in closed form next to each assertion;
the Monte-Carlo checks use fixed seeds and 3-sigma tolerances.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp, softmax

from pdclone.conjugate import GaussianMeanTarget
from pdclone.engine import (
    ParticleSystem,
    PdcResult,
    ScheduleConfig,
    ScheduleError,
    ess,
    init_particles,
    next_phi,
    pdc_run,
    rcess,
    resample_multinomial,
    reweight,
    summarize,
    weighted_mean_cov,
)
from pdclone.kernels import KernelConfig, MhKernel


def make_ps(loglik, logprior=None, logref=None, phi=0.0):
    loglik = np.asarray(loglik, dtype=np.float64)
    m = loglik.size
    ps = ParticleSystem(
        particles=np.zeros((m, 1)),
        logw=np.zeros(m),
        W=np.full(m, 1.0 / m),
        phi=phi,
        loglik=loglik,
        logprior=np.zeros(m) if logprior is None else np.asarray(logprior, float),
        logref=np.zeros(m) if logref is None else np.asarray(logref, float),
    )
    return ps


class TestEss:
    def test_uniform_weights(self):
        assert ess(np.full(500, 1.0 / 500)) == pytest.approx(500.0)

    def test_degenerate(self):
        W = np.zeros(20)
        W[3] = 1.0
        assert ess(W) == pytest.approx(1.0)

    def test_hand_value(self):
        # 1 / (0.25 + 0.0625 + 0.0625) = 8/3
        assert ess([0.5, 0.25, 0.25]) == pytest.approx(8.0 / 3.0)

    @given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=50))
    @settings(max_examples=50, deadline=None)
    def test_bounds(self, raw):
        W = np.asarray(raw) / np.sum(raw)
        e = ess(W)
        assert 1.0 <= e <= len(W) + 1e-9


class TestRcess:
    def test_hand_value(self):
        # W = (1/2, 1/2), incremental weights (1, 3):
        # (0.5*1 + 0.5*3)^2 / (0.5*1 + 0.5*9) = 4 / 5 = 0.8
        got = rcess([0.5, 0.5], np.log([1.0, 3.0]))
        assert got == pytest.approx(0.8, rel=1e-12)

    def test_constant_weights_give_one(self):
        got = rcess(np.full(7, 1.0 / 7), np.full(7, -3.21))
        assert got == pytest.approx(1.0, rel=1e-12)

    def test_invariant_to_common_shift(self):
        rng = np.random.default_rng(0)
        W = rng.dirichlet(np.ones(30))
        inc = rng.normal(size=30)
        assert rcess(W, inc) == pytest.approx(rcess(W, inc + 123.4), rel=1e-9)

    def test_all_zero_weights_raise(self):
        with pytest.raises(ScheduleError):
            rcess([0.5, 0.5], [-np.inf, -np.inf])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_range(self, seed):
        rng = np.random.default_rng(seed)
        W = rng.dirichlet(np.ones(20))
        inc = rng.normal(scale=3.0, size=20)
        v = rcess(W, inc)
        assert 0.0 < v <= 1.0 + 1e-12

    def test_overflow_safe(self):
        v = rcess([0.5, 0.5], [1000.0, -1000.0])
        assert np.isfinite(v)
        assert v == pytest.approx(0.5, rel=1e-9)


class TestNextPhi:
    def test_flat_weights_jump_to_one(self):
        ps = make_ps(np.full(10, -5.0))
        assert next_phi(ps, 3, ScheduleConfig()) == 1.0

    def test_bisection_hits_threshold(self):
        rng = np.random.default_rng(1)
        ps = make_ps(rng.normal(-100.0, 30.0, size=200))
        sched = ScheduleConfig()
        phi1 = next_phi(ps, 1, sched)
        assert 0.0 < phi1 < 1.0
        base = ps.base_logweight(1)
        assert rcess(ps.W, phi1 * base) == pytest.approx(
            sched.eps_rcess, abs=1e-6
        )

    def test_strictly_increasing(self):
        rng = np.random.default_rng(2)
        ps = make_ps(rng.normal(-100.0, 30.0, size=200))
        sched = ScheduleConfig()
        phi = 0.0
        for _ in range(5):
            nxt = next_phi(ps, 1, sched)
            assert nxt > phi
            reweight(ps, nxt, 1)
            ps.phi = nxt
            phi = nxt

    def test_finished_schedule_rejected(self):
        ps = make_ps(np.zeros(5), phi=1.0)
        with pytest.raises(ValueError):
            next_phi(ps, 1, ScheduleConfig())


class TestReweight:
    def test_softmax_hand_value(self):
        # loglik (-2, -4), k=1, flat prior/ref, phi 0 -> 1:
        # W = softmax([-2, -4]) = (0.8808, 0.1192)
        ps = make_ps([-2.0, -4.0])
        logz = reweight(ps, 1.0, 1)
        expect = softmax([-2.0, -4.0])
        np.testing.assert_allclose(ps.W, expect, rtol=1e-12)
        assert expect[0] == pytest.approx(0.8808, abs=5e-5)
        assert logz == pytest.approx(
            logsumexp([-2.0, -4.0]) - np.log(2.0), rel=1e-12
        )

    def test_cloning_scales_exponent(self):
        ps = make_ps([-2.0, -4.0])
        reweight(ps, 1.0, 5)
        np.testing.assert_allclose(ps.W, softmax([-10.0, -20.0]), rtol=1e-12)

    def test_zero_step_rejected(self):
        ps = make_ps([-2.0, -4.0], phi=0.5)
        with pytest.raises(ValueError):
            reweight(ps, 0.5, 1)
        with pytest.raises(ValueError):
            reweight(ps, 0.4, 1)

    def test_all_dead_particles_raise(self):
        ps = make_ps([-np.inf, -np.inf])
        with pytest.raises(ScheduleError):
            reweight(ps, 1.0, 1)

    def test_overflow_safe(self):
        ps = make_ps([800.0, -800.0])
        reweight(ps, 1.0, 2)
        assert np.all(np.isfinite(ps.W))
        np.testing.assert_allclose(ps.W, [1.0, 0.0], atol=1e-300)

    def test_weights_normalized(self):
        rng = np.random.default_rng(3)
        ps = make_ps(rng.normal(-50, 10, size=100))
        reweight(ps, 0.3, 4)
        assert np.sum(ps.W) == pytest.approx(1.0, rel=1e-12)
        assert np.all(ps.W >= 0)


class TestResampling:
    def test_unbiased_frequencies(self):
        # 10^4 multinomial draws; occupancy of each ancestor within 3
        # binomial standard deviations of m * W_i.
        m = 10_000
        rng = np.random.default_rng(7)
        base = np.array([0.2, 0.3, 0.5])
        ps = ParticleSystem(
            particles=np.arange(m, dtype=np.float64)[:, None],
            logw=np.zeros(m),
            W=np.repeat(
                base / [m // 3, m // 3, m - 2 * (m // 3)],
                [m // 3, m // 3, m - 2 * (m // 3)],
            ),
            loglik=np.zeros(m),
            logprior=np.zeros(m),
            logref=np.zeros(m),
        )
        group = np.repeat([0, 1, 2], [m // 3, m // 3, m - 2 * (m // 3)])
        idx = resample_multinomial(ps, rng)
        counts = np.bincount(group[idx], minlength=3)
        for j in range(3):
            sd = np.sqrt(m * base[j] * (1 - base[j]))
            assert abs(counts[j] - m * base[j]) < 3 * sd

    def test_resets_to_uniform(self):
        rng = np.random.default_rng(8)
        ps = make_ps(rng.normal(size=50))
        reweight(ps, 1.0, 1)
        resample_multinomial(ps, rng)
        assert ess(ps.W) / ps.m == pytest.approx(1.0)
        np.testing.assert_allclose(ps.logw, 0.0)

    def test_caches_permuted_consistently(self):
        rng = np.random.default_rng(9)
        m = 40
        ps = ParticleSystem(
            particles=np.arange(m, dtype=np.float64)[:, None],
            logw=np.zeros(m),
            W=rng.dirichlet(np.ones(m)),
            loglik=np.arange(m, dtype=np.float64) * 10,
            logprior=np.arange(m, dtype=np.float64) * 100,
            logref=np.arange(m, dtype=np.float64) * 1000,
            aux={"rss": np.arange(m, dtype=np.float64)[:, None] * 7},
        )
        idx = resample_multinomial(ps, rng)
        np.testing.assert_array_equal(ps.particles[:, 0], idx)
        np.testing.assert_array_equal(ps.loglik, idx * 10)
        np.testing.assert_array_equal(ps.logref, idx * 1000)
        np.testing.assert_array_equal(ps.aux["rss"][:, 0], idx * 7)


class TestSummaries:
    def test_weighted_mean_cov_hand_value(self):
        mean, cov = weighted_mean_cov([[0.0], [2.0]], [0.5, 0.5])
        assert mean[0] == pytest.approx(1.0)
        assert cov[0, 0] == pytest.approx(1.0)

    def test_k_rescaling(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(500, 2))
        W = np.full(500, 1 / 500)
        s1 = summarize(x, W, k=1)
        s4 = summarize(x, W, k=4)
        np.testing.assert_allclose(s4.cov_rescaled, 4.0 * s1.cov_rescaled / 1.0)
        np.testing.assert_allclose(s4.se, 2.0 * s1.se)
        np.testing.assert_allclose(s4.theta_hat, s1.theta_hat)

    def test_degenerate_flag(self):
        x = np.ones((30, 2))
        s = summarize(x, np.full(30, 1 / 30), k=1)
        assert s.degenerate
        x[0, 0] = 2.0
        assert not summarize(x, np.full(30, 1 / 30), k=1).degenerate

    def test_wald_interval(self):
        s = summarize(
            np.array([[0.0], [2.0]]), np.array([0.5, 0.5]), k=1
        )
        assert s.ci_lower[0] == pytest.approx(1.0 - 1.96)
        assert s.ci_upper[0] == pytest.approx(1.0 + 1.96)


class TestScheduleConfigValidation:
    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
    def test_eps_rcess(self, bad):
        with pytest.raises(ValueError):
            ScheduleConfig(eps_rcess=bad)

    def test_zeta(self):
        with pytest.raises(ValueError):
            ScheduleConfig(zeta=0.0)


class TestDriverLoop:
    def target(self):
        rng = np.random.default_rng(123)
        y = rng.normal(1.5, 1.0, size=40)
        return GaussianMeanTarget(y, sigma2=1.0, mu0=0.0, tau0_sq=25.0)

    def run(self, seed=0, k=4):
        return pdc_run(
            self.target(), k=k, m=300, kernel=MhKernel(KernelConfig()),
            rng=np.random.default_rng(seed),
        )

    def test_schedule_reaches_one(self):
        res = self.run()
        assert isinstance(res, PdcResult)
        assert res.ps.phi == 1.0
        phis = res.trace[:, 1]
        assert np.all(np.diff(phis) > 0)
        assert phis[-1] == 1.0
        assert res.n_steps == res.trace.shape[0]

    def test_trace_finite(self):
        res = self.run()
        assert np.all(np.isfinite(res.trace))
        ress = res.trace[:, 2]
        assert np.all((0 < ress) & (ress <= 1))

    def test_bit_reproducible(self):
        a, b = self.run(seed=42), self.run(seed=42)
        np.testing.assert_array_equal(a.ps.particles, b.ps.particles)
        np.testing.assert_array_equal(a.trace, b.trace)

    def test_seed_changes_draw(self):
        a, b = self.run(seed=1), self.run(seed=2)
        assert not np.array_equal(a.ps.particles, b.ps.particles)

    def test_input_validation(self):
        t = self.target()
        with pytest.raises(ValueError):
            pdc_run(t, k=0, m=100, kernel=MhKernel())
        with pytest.raises(ValueError):
            pdc_run(t, k=1, m=1, kernel=MhKernel())

    def test_max_r_guard(self):
        with pytest.raises(ScheduleError):
            pdc_run(
                self.target(), k=16, m=300, kernel=MhKernel(),
                sched=ScheduleConfig(max_R=2),
                rng=np.random.default_rng(0),
            )

    def test_init_particles_from_reference(self):
        t = self.target()
        ps = init_particles(t, 5000, np.random.default_rng(5))
        assert ps.particles.shape == (5000, 1)
        # reference is the N(0, 25) prior
        assert np.mean(ps.particles) == pytest.approx(0.0, abs=0.25)
        assert np.std(ps.particles) == pytest.approx(5.0, rel=0.05)
