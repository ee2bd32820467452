import itertools

import numpy as np
import pytest

from parcelcast import baselines, datastore, evaluation
from parcelcast.baselines import HoltWintersState
from parcelcast.datastore import EventLog, IntervalSpec
from parcelcast.errors import ColdStartError, ConfigError, DataError, EvaluationError

from conftest import make_parcel


def classical_hw(y, m, alpha, beta, gamma, level, trend, seasonals):
    """Array form with explicit s[t - m] indexing; returns final level, trend and full seasonal array."""
    s = list(seasonals)  # s[k] for k = 0..m-1 precede the first observation
    for t, obs in enumerate(y):
        s_old = s[t]
        new_level = alpha * (obs - s_old) + (1 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1 - beta) * trend
        level = new_level
        s.append(gamma * (obs - level) + (1 - gamma) * s_old)
    return level, trend, s


class TestInit:
    def test_constant(self):
        st = baselines.hw_init(np.full(8, 3.5), 4)
        assert (st.level, st.trend, st.seasonals) == (3.5, 0.0, (0.0,) * 4)

    def test_pure_seasonal(self):
        pattern = np.array([1.0, 4.0, 2.0, 5.0])
        st = baselines.hw_init(np.tile(pattern, 2), 4)
        assert st.trend == 0.0
        np.testing.assert_allclose(st.seasonals, pattern - 3.0, rtol=0, atol=1e-15)

    def test_arithmetic(self, rng):
        y = rng.uniform(0, 30, 20)
        st = baselines.hw_init(y, 6)
        m1 = sum(y[:6]) / 6
        m2 = sum(y[6:12]) / 6
        assert st.level == pytest.approx(m1, abs=1e-12)
        assert st.trend == pytest.approx((m2 - m1) / 6, abs=1e-12)
        for k in range(6):
            assert st.seasonals[k] == pytest.approx(((y[k] - m1) + (y[6 + k] - m2)) / 2, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(DataError):
            baselines.hw_init(np.ones(7), 4)

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            HoltWintersState(1.0, 0.0, (0.0,), alpha=1.5)


class TestStep:
    def test_two_hand_steps(self):
        st = HoltWintersState(10.0, 1.0, (2.0, -1.0, 0.0, -1.0), 0.5, 0.1, 0.2)
        # y=14: level .5*12 + .5*11 = 11.5; trend .1*1.5 + .9*1 = 1.05; season .2*2.5 + .8*2 = 2.1
        st = baselines.hw_step(st, 14.0)
        assert abs(st.level - 11.5) < 1e-12 and abs(st.trend - 1.05) < 1e-12
        np.testing.assert_allclose(st.seasonals, (-1.0, 0.0, -1.0, 2.1), rtol=0, atol=1e-12)
        # y=11: level .5*12 + .5*12.55 = 12.275; trend .1*.775 + .9*1.05 = 1.0225; season .2*(-1.275) - .8 = -1.055
        st = baselines.hw_step(st, 11.0)
        assert abs(st.level - 12.275) < 1e-12 and abs(st.trend - 1.0225) < 1e-12
        np.testing.assert_allclose(st.seasonals, (0.0, -1.0, 2.1, -1.055), rtol=0, atol=1e-12)

    def test_ses_collapse(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            alpha = rng.uniform()
            y = rng.uniform(0, 50, 40)
            st = HoltWintersState(float(y[0]), 0.0, (0.0,) * 5, alpha, 0.0, 0.0)
            level = float(y[0])
            for v in y:
                st = baselines.hw_step(st, float(v))
                level = alpha * v + (1 - alpha) * level
                assert abs(st.level - level) <= 1e-12 * max(1.0, abs(level))
            assert st.trend == 0.0 and st.seasonals == (0.0,) * 5

    def test_zero_params_rotate(self):
        st = HoltWintersState(5.0, 0.5, (1.0, 2.0, 3.0), 0.0, 0.0, 0.0)
        nxt = baselines.hw_step(st, 100.0)
        assert nxt.level == 5.5 and nxt.trend == 0.5
        assert nxt.seasonals == (2.0, 3.0, 1.0)

    def test_matches_classical(self, rng):
        y = rng.uniform(0, 20, 37)
        st0 = baselines.hw_init(rng.uniform(0, 20, 14), 7, 0.35, 0.2, 0.65)
        st = st0
        for v in y:
            st = baselines.hw_step(st, float(v))
        level, trend, s = classical_hw(y, 7, 0.35, 0.2, 0.65, st0.level, st0.trend, st0.seasonals)
        assert st.level == pytest.approx(level, abs=1e-12)
        assert st.trend == pytest.approx(trend, abs=1e-12)
        n = len(y)
        for h in (1, 3, 7, 8, 96):
            # classical h-step: seasonal of the latest matching phase
            want = level + h * trend + s[n + (h - 1) % 7]
            assert baselines.hw_forecast(st, h, clamp=False) == pytest.approx(want, abs=1e-12)


class TestForecast:
    def test_flat(self):
        st = HoltWintersState(7.0, 0.0, (0.0,) * 4)
        assert [baselines.hw_forecast(st, h) for h in (1, 2, 9)] == [7.0, 7.0, 7.0]

    def test_trend(self):
        assert baselines.hw_forecast(HoltWintersState(10.0, 1.0, (0.0,) * 4), 5) == 15.0

    def test_clamp(self):
        st = HoltWintersState(1.0, -1.0, (0.0,))
        assert baselines.hw_forecast(st, 3) == 0.0
        assert baselines.hw_forecast(st, 3, clamp=False) == -2.0
        with pytest.raises(ValueError):
            baselines.hw_forecast(st, 0)

    def test_affine_in_h(self):
        st = HoltWintersState(4.0, 0.3, (1.0, -2.0, 0.5))
        f = [baselines.hw_forecast(st, h, clamp=False) for h in range(1, 13)]
        np.testing.assert_allclose(np.diff(f[::3]), 0.9, rtol=0, atol=1e-12)


class TestFit:
    def test_grid_oracle(self, rng):
        m = 4
        y = np.tile([5.0, 9.0, 3.0, 7.0], 10) + rng.normal(scale=1.0, size=40) + 0.05 * np.arange(40)
        grid, trend_grid = (0.1, 0.5, 0.9), (0.0, 0.3)
        got = baselines.fit_holt_winters(y, m, 24, 40, grid=grid, trend_grid=trend_grid)
        init = baselines.hw_init(y, m)
        best, best_err = None, np.inf
        for a, b, g in itertools.product(grid, trend_grid, grid):
            st, err = init.with_params(a, b, g), 0.0
            for k, v in enumerate(y):
                if k >= 24:
                    err += abs(v - baselines.hw_forecast(st, 1, clamp=False))
                st = baselines.hw_step(st, float(v))
            if err < best_err:
                best, best_err = (a, b, g), err
        assert (got.alpha, got.beta, got.gamma) == best
        assert (got.level, got.trend, got.seasonals) == (init.level, init.trend, init.seasonals)

    def test_bad_range(self):
        with pytest.raises(DataError):
            baselines.fit_holt_winters(np.ones(20), 4, 4, 20)

    def test_walk_forward(self, rng):
        y = rng.uniform(0, 10, 30)
        st0 = baselines.hw_init(y, 5, 0.3, 0.1, 0.2)
        out = baselines.hw_walk_forward(st0, y, [10, 10, 17, 30], 6)
        for row, origin in zip(out, [10, 10, 17, 30]):
            st = st0
            for v in y[:origin]:
                st = baselines.hw_step(st, float(v))
            np.testing.assert_array_equal(row, baselines.hw_forecast_vector(st, 6))
        with pytest.raises(DataError):
            baselines.hw_walk_forward(st0, y, [10, 5], 2)


class TestNaive:
    def test_shifted_bins(self, small_log):
        for t_o in (1440, 2 * 1440 + 15 * 37, 4 * 1440 - 15):
            spec = IntervalSpec(15, 95, t_o)
            prev = datastore.bin_arrivals(small_log, "G1", spec.at(t_o - 1440)).counts
            np.testing.assert_array_equal(baselines.naive_forecast(small_log, "G1", spec), prev)

    def test_cold_start(self, small_log):
        with pytest.raises(ColdStartError):
            baselines.naive_forecast(small_log, "G1", IntervalSpec(15, 95, 1425))

    def test_identical_days(self):
        records = [make_parcel(f"P{d}{k}", d * 1440 + 60 * k, ("A", "G"), [10, 20])
                   for d in range(3) for k in range(10)]
        log = EventLog(records, end=3 * 1440)
        spec = IntervalSpec(15, 95, 1440)
        naive = baselines.naive_forecast(log, "G", spec)
        actual = datastore.bin_arrivals(log, "G", spec).counts
        np.testing.assert_array_equal(naive, actual)
        recs = evaluation.Records.from_matrix("naive", [1440], naive[None], actual[None])
        with pytest.raises(EvaluationError):
            evaluation.mase(recs, recs)
