import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slowdown.errors import DegenerateSeriesError, PreconditionError
from slowdown.preprocess import (
    PriceSeries,
    ResidualSeries,
    SmootherConfig,
    detrend,
    gaussian_smooth,
    kernel_weights,
    log_transform,
    summary_stats,
)

from .conftest import synthetic_prices

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def days(n, start="2020-01-01"):
    return np.arange(np.datetime64(start), np.datetime64(start) + n)


def brute_smooth(x, bandwidth, radius):
    """Direct double loop over the truncated Gaussian, renormalized per position."""
    n = len(x)
    out = np.empty(n)
    for i in range(n):
        num = den = 0.0
        for j in range(max(0, i - radius), min(n, i + radius + 1)):
            w = math.exp(-((i - j) ** 2) / (2.0 * bandwidth**2))
            num += w * x[j]
            den += w
        out[i] = num / den
    return out


class TestLogTransform:
    def test_zero_maps_to_zero(self):
        assert log_transform([0.0]) == [0.0]

    def test_e_minus_one_maps_to_one(self):
        assert log_transform([math.e - 1])[0] == pytest.approx(1.0, abs=1e-15)

    def test_monotone(self):
        z = np.sort(np.random.default_rng(0).exponential(100, 500))
        assert np.all(np.diff(log_transform(z)) >= 0)

    @pytest.mark.parametrize("bad", [-1.0, np.nan, np.inf])
    def test_rejects_bad_price_naming_index(self, bad):
        with pytest.raises(PreconditionError, match="index 2"):
            log_transform([1.0, 2.0, bad, 3.0])

    def test_accepts_price_series(self):
        s = PriceSeries("X", days(3), [0.0, 1.0, 3.0])
        np.testing.assert_allclose(log_transform(s), np.log([1, 2, 4]))


class TestPriceSeries:
    def test_rejects_gap(self):
        d = days(5)
        with pytest.raises(PreconditionError, match="exactly one day"):
            PriceSeries("X", np.delete(d, 2), [1.0] * 4)

    def test_rejects_negative(self):
        with pytest.raises(PreconditionError, match="index 1"):
            PriceSeries("X", days(3), [1.0, -2.0, 1.0])

    def test_zero_prices_allowed(self):
        assert len(PriceSeries("X", days(3), [0.0, 0.0, 1.0])) == 3

    def test_between(self):
        s = PriceSeries("X", days(10), np.arange(10.0))
        sub = s.between("2020-01-03", "2020-01-05")
        assert list(sub.prices) == [2.0, 3.0, 4.0]


class TestGaussianSmooth:
    def test_default_radius(self):
        cfg = SmootherConfig()
        assert cfg.radius == 90
        assert cfg.kernel().size == 181

    @pytest.mark.parametrize("bw,trunc", [(0.0, 3.0), (-1.0, 3.0), (5.0, 0.5)])
    def test_invalid_config(self, bw, trunc):
        with pytest.raises(PreconditionError):
            SmootherConfig(bw, trunc)

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            gaussian_smooth([])

    def test_constant(self):
        np.testing.assert_allclose(gaussian_smooth(np.full(300, 7.25)), 7.25, rtol=0, atol=1e-13)

    def test_linear_ramp_interior(self):
        cfg = SmootherConfig(30.0)
        x = 0.37 * np.arange(500) - 4.0
        trend = gaussian_smooth(x, cfg)
        r = cfg.radius
        np.testing.assert_allclose(trend[r:-r], x[r:-r], rtol=0, atol=1e-10)
        # the renormalized boundary is biased toward the interior
        assert trend[0] > x[0]

    def test_impulse_matches_direct_convolution(self):
        cfg = SmootherConfig(7.0, 3.0)
        x = np.zeros(201)
        x[100] = 1.0
        k = np.arange(-cfg.radius, cfg.radius + 1)
        g = np.exp(-(k**2) / (2 * 7.0**2))
        expected = np.zeros(201)
        expected[100 - cfg.radius : 100 + cfg.radius + 1] = g / g.sum()
        np.testing.assert_allclose(gaussian_smooth(x, cfg), expected, rtol=0, atol=1e-15)

    def test_matches_brute_force_including_boundaries(self):
        x = np.random.default_rng(3).standard_normal(150).cumsum()
        np.testing.assert_allclose(gaussian_smooth(x, SmootherConfig(9.0, 2.5)),
                                   brute_smooth(x, 9.0, 22), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("n", [2, 50, 400])
    def test_weights_sum_to_one(self, n):
        cfg = SmootherConfig(30.0)
        for i in {0, 1, n // 2, n - 1}:
            w = kernel_weights(n, i, cfg)
            assert abs(w.sum() - 1.0) < 1e-12
            # applying the weights is the smoother
        x = np.random.default_rng(n).standard_normal(n)
        direct = np.array([kernel_weights(n, i, cfg) @ x for i in range(n)])
        np.testing.assert_allclose(gaussian_smooth(x, cfg), direct, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, st.integers(2, 120), elements=finite),
           st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3), finite)
    def test_affine_equivariance(self, x, a, b):
        cfg = SmootherConfig(5.0)
        lhs = gaussian_smooth(a * x + b, cfg)
        rhs = a * gaussian_smooth(x, cfg) + b
        scale = 1.0 + np.max(np.abs(a * x)) + abs(b)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


class TestDetrend:
    def test_constant_series_is_degenerate(self):
        s = PriceSeries("C", days(300), np.full(300, 42.0))
        with pytest.raises(DegenerateSeriesError, match="degenerate"):
            detrend(s)

    def test_too_short(self):
        s = PriceSeries("S", days(100), np.arange(100.0))
        with pytest.raises(PreconditionError):
            detrend(s)

    def test_reconstruction_and_moments(self):
        s = synthetic_prices(seed=4)
        res = detrend(s)
        np.testing.assert_allclose(res.values + res.trend, log_transform(s), rtol=0, atol=1e-12)
        assert len(res) == len(s)
        assert res.mean == pytest.approx(np.mean(res.values), rel=1e-12, abs=1e-15)
        assert res.std == pytest.approx(np.std(res.values, ddof=1), rel=1e-12)
        assert abs(res.mean) < 0.1 * res.std

    def test_huge_bandwidth_centers_input(self):
        # kernel is nearly flat over the support, so the trend tends to the sample mean
        x = 2.0 + 0.1 * np.random.default_rng(11).standard_normal(400)
        trend = gaussian_smooth(x, SmootherConfig(1e5, 1.0))
        np.testing.assert_allclose(trend, x.mean(), rtol=0, atol=1e-6)


class TestSummaryStats:
    def test_hand_example(self):
        mean, std = summary_stats([1, 2, 3, 4, 5])
        assert mean == 3.0
        assert std == pytest.approx(math.sqrt(2.5), rel=1e-15)

    def test_all_equal(self):
        assert summary_stats([2.0, 2.0, 2.0]) == (2.0, 0.0)

    def test_too_short(self):
        with pytest.raises(PreconditionError):
            summary_stats([1.0])

    def test_residual_series_rejects_zero_std(self):
        with pytest.raises(DegenerateSeriesError):
            ResidualSeries.from_values("Z", days(3), [0.0, 0.0, 0.0])
