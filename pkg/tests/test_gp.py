import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqdesign.gp import (
    GPSurrogate,
    bo_optimize,
    expected_improvement,
    gp_fit,
    matern52,
    nll_and_grad,
)
from seqdesign.models import ContinuousDomain, DiscreteDomain


class TestMatern52:
    def test_r_zero_gives_signal_var(self):
        assert matern52(1.3, 1.3, lengthscale=0.5, signal_var=2.7) == pytest.approx(2.7)

    def test_symmetry(self):
        a = matern52(0.2, 1.9, lengthscale=0.7, signal_var=1.5)
        b = matern52(1.9, 0.2, lengthscale=0.7, signal_var=1.5)
        assert a == pytest.approx(b)

    def test_value_at_one_lengthscale(self):
        # Closed form at r = l, s^2 = 1: (1 + sqrt5 + 5/3) exp(-sqrt5).
        u = math.sqrt(5.0)
        expected = (1.0 + u + u**2 / 3.0) * math.exp(-u)
        assert expected == pytest.approx(0.52399, abs=1e-5)
        assert matern52(0.0, 1.0, lengthscale=1.0) == pytest.approx(expected, rel=1e-12)

    def test_monotone_decreasing_in_distance(self):
        rs = np.linspace(0, 5, 50)
        vals = matern52(rs, 0.0, lengthscale=1.0)
        assert np.all(np.diff(vals) < 0)

    def test_rejects_nonpositive_lengthscale(self):
        with pytest.raises(ValueError):
            matern52(0.0, 1.0, lengthscale=0.0)


class TestNllGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(0, 1, 5))
        y = rng.normal(0, 1, 5)
        params = rng.uniform(-1, 1, 3)
        _, grad = nll_and_grad(params, x, y)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fp, _ = nll_and_grad(params + e, x, y)
            fm, _ = nll_and_grad(params - e, x, y)
            fd = (fp - fm) / (2 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


class TestGpFit:
    def test_interpolates_low_noise_data(self):
        x = np.linspace(0, 2, 8)
        y = 0.3 * x + 1.0
        gp = gp_fit(x, y, 0.0, 2.0, rng=np.random.default_rng(0))
        mean, _ = gp.predict(x)
        np.testing.assert_allclose(mean, y, atol=1e-3)

    def test_reverts_to_prior_far_from_data(self):
        x = np.array([0.0, 0.05, 0.1])
        y = np.array([1.0, 1.2, 0.9])
        gp = GPSurrogate(
            x=(x - 0.0) / 10.0,
            y=(y - y.mean()) / y.std(),
            lengthscale=0.02,
            signal_var=1.0,
            noise_var=0.01,
            y_mean=float(y.mean()),
            y_std=float(y.std()),
            x_lo=0.0,
            x_span=10.0,
        )
        mean, var = gp.predict([9.5])
        assert mean[0] == pytest.approx(y.mean(), abs=1e-6)
        assert var[0] == pytest.approx(1.0 * y.std() ** 2, rel=1e-6)

    def test_single_point_posterior_closed_form(self):
        # One training pair (x0, y0) with fixed hyperparameters: the
        # posterior at x is k(x,x0)/(s2+n2) * y0 with matching variance.
        x0, y0 = 0.3, 0.8
        ell, s2, n2 = 0.5, 1.3, 0.04
        gp = GPSurrogate(
            x=np.array([x0]),
            y=np.array([y0]),
            lengthscale=ell,
            signal_var=s2,
            noise_var=n2,
            y_mean=0.0,
            y_std=1.0,
            x_lo=0.0,
            x_span=1.0,
        )
        xt = 0.7
        k = matern52(xt, x0, ell, s2)
        mean, var = gp.predict([xt])
        assert mean[0] == pytest.approx(k * y0 / (s2 + n2), rel=1e-10)
        assert var[0] == pytest.approx(s2 - k**2 / (s2 + n2), rel=1e-10)

    def test_predictive_variance_small_at_training_points(self):
        rng = np.random.default_rng(1)
        x = np.linspace(0, 1, 10)
        y = np.sin(3 * x) + rng.normal(0, 0.01, 10)
        gp = gp_fit(x, y, 0.0, 1.0, rng=rng)
        _, var = gp.predict(x)
        assert np.all(var <= gp.noise_var * gp.y_std**2 + 1e-8 + 1e-6)

    def test_needs_two_distinct_inputs(self):
        with pytest.raises(ValueError):
            gp_fit(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.0, 2.0)


class TestExpectedImprovement:
    def test_zero_std_no_improvement(self):
        assert expected_improvement(0.5, 0.0, 1.0) == 0.0
        assert expected_improvement(1.0, 0.0, 1.0) == 0.0

    def test_zero_std_positive_improvement(self):
        assert expected_improvement(1.5, 0.0, 1.0) == pytest.approx(0.5)

    def test_mean_equals_best(self):
        sigma = 0.37
        assert expected_improvement(1.0, sigma, 1.0) == pytest.approx(
            sigma / math.sqrt(2 * math.pi), rel=1e-6
        )
        assert expected_improvement(1.0, 1.0, 1.0) == pytest.approx(0.39894, abs=1e-5)

    @given(
        st.floats(-100, 100),
        st.floats(0, 100),
        st.floats(-100, 100),
    )
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, mean, std, best):
        assert expected_improvement(mean, std, best) >= 0.0

    def test_rejects_negative_std(self):
        with pytest.raises(ValueError):
            expected_improvement(0.0, -1.0, 0.0)


class TestBoOptimize:
    def test_finds_concave_optimum(self):
        domain = ContinuousDomain(0.0, 2 * math.pi)
        res = bo_optimize(
            lambda d: -((d - 1.5) ** 2), domain, budget=15, rng=np.random.default_rng(0)
        )
        assert abs(res.d_star - 1.5) < 0.1

    def test_discrete_result_in_design_set(self):
        domain = DiscreteDomain(values=tuple(range(1, 21)))
        res = bo_optimize(
            lambda d: -((d - 13) ** 2) + np.random.default_rng(int(d)).normal(0, 0.1),
            domain,
            budget=12,
            rng=np.random.default_rng(1),
        )
        assert res.d_star in domain.values
        assert abs(res.d_star - 13) <= 2

    def test_no_duplicate_evaluations(self):
        domain = ContinuousDomain(0.0, 1.0)
        res = bo_optimize(
            lambda d: math.sin(7 * d), domain, budget=20, rng=np.random.default_rng(2)
        )
        ds = np.sort(res.designs)
        assert np.all(np.diff(ds) > 1e-6)

    def test_trace_reproducible(self):
        domain = ContinuousDomain(0.0, 4.0)

        def noisy(d):
            return -((d - 2.0) ** 2) + np.random.default_rng(int(d * 1e6) % 2**31).normal()

        a = bo_optimize(noisy, domain, budget=12, rng=np.random.default_rng(3))
        b = bo_optimize(noisy, domain, budget=12, rng=np.random.default_rng(3))
        assert a.trace == b.trace
        assert a.d_star == b.d_star

    def test_budget_must_cover_init(self):
        with pytest.raises(ValueError):
            bo_optimize(lambda d: 0.0, ContinuousDomain(0.0, 1.0), budget=3, rng=np.random.default_rng(0))

    def test_failing_utility_retries_then_skips(self):
        calls = {"n": 0}

        def flaky(d):
            calls["n"] += 1
            if abs(d - 0.75) < 1e-9 and calls["n"] % 2 == 1:
                raise RuntimeError("boom")
            return -((d - 0.4) ** 2)

        res = bo_optimize(flaky, ContinuousDomain(0.0, 1.0), budget=8, rng=np.random.default_rng(4))
        assert np.isfinite(res.values).all()
        assert abs(res.d_star - 0.4) < 0.2
