import numpy as np
import pytest

from shiftguard import _kernels
from shiftguard.cusum import (
    CusumChart,
    CusumConfig,
    CusumState,
    _first_passage_table,
    cusum_calibrate_limit,
    cusum_restart_init,
    cusum_update,
    simulate_cusum_runs,
    slack_grid_setting_2,
    slack_setting_1,
)
from shiftguard.exceptions import DetectorSignalled, NoBracket, NonFiniteInput
from shiftguard.numerics import RandomSource

from oracles import cusum_two_sided_arl, cusum_two_sided_limit


def straight_cusum(gen, s, hc, mu, burnin, max_steps):
    """Plain-Python two-sided CUSUM run, drawing from ``gen`` one normal per step."""
    cp = cm = 0.0
    n_p = n_m = 0
    for _ in range(burnin):
        x = gen.standard_normal()
        cp, cm = max(0.0, cp + x - s), max(0.0, cm - x - s)
        n_p = n_p + 1 if cp > 0 else 0
        n_m = n_m + 1 if cm > 0 else 0
        if max(cp, cm) >= hc:
            cp = cm = 0.0
            n_p = n_m = 0
    for t in range(1, max_steps + 1):
        m = mu[min(t, len(mu)) - 1] if len(mu) else 0.0
        x = gen.standard_normal() + m
        cp, cm = max(0.0, cp + x - s), max(0.0, cm - x - s)
        n_p = n_p + 1 if cp > 0 else 0
        n_m = n_m + 1 if cm > 0 else 0
        if cp >= hc and cp >= cm:
            return t, t - n_p + 1
        if cm >= hc:
            return t, t - n_m + 1
    return max_steps, 0


def test_update_by_hand():
    cfg = CusumConfig(0.5, 2.0)
    st = CusumState()
    st, sig = cusum_update(st, 1.0, cfg)
    assert (st.c_plus, st.c_minus, st.n_plus, st.n_minus) == (0.5, 0.0, 1, 0)
    st, sig = cusum_update(st, 1.2, cfg)
    assert st.c_plus == pytest.approx(1.2)
    assert sig is None
    st, sig = cusum_update(st, 1.5, cfg)
    assert sig.signal_time == 3
    assert sig.change_point == 1
    assert np.isnan(sig.tau_estimate)
    st, sig = cusum_update(CusumState(), -3.0, cfg)
    assert sig.statistic == pytest.approx(2.5)
    with pytest.raises(NonFiniteInput):
        cusum_update(CusumState(), float("inf"), cfg)


def test_chart_freezes_after_signal():
    chart = CusumChart(CusumConfig(0.0, 1.0), sigma_a=2.0)
    assert chart.update(1.0) is None
    assert chart.update(1.2) is not None
    with pytest.raises(DetectorSignalled):
        chart.update(0.0)
    chart.reset()
    assert chart.statistic == 0.0 and chart.time == 2


def test_kernel_matches_straight_line_implementation():
    mu = np.array([1.5, 0.7, 0.7])
    for r in range(40):
        for burnin in (0, 50):
            k = _kernels.cusum_run(RandomSource(6, r).generator, 0.4, 3.0, mu, burnin, 10**5)
            t, cp = straight_cusum(RandomSource(6, r).generator, 0.4, 3.0, mu, burnin, 10**5)
            assert (k[1], k[2]) == (t, cp)


def test_simulate_runs_use_stream_per_repetition():
    cfg = CusumConfig(0.5, 3.0)
    steps, status, cpe = simulate_cusum_runs(cfg, 30, RandomSource(2))
    for r in range(30):
        t, cp = straight_cusum(RandomSource(2, r).generator, 0.5, 3.0, [], 50, 10**5)
        assert (steps[r], cpe[r]) == (t, cp)
    assert np.all(status == _kernels.SIGNAL)


def test_threads_identical():
    cfg = CusumConfig(0.3, 4.0)
    a = simulate_cusum_runs(cfg, 600, RandomSource(5), threads=1)
    b = simulate_cusum_runs(cfg, 600, RandomSource(5), threads=8)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_restart_init_distribution():
    # 10^5 kernel initializations against a vectorized re-simulation on other streams
    cfg = CusumConfig(0.5, 4.77)
    n = 100_000
    kern = np.array([cusum_restart_init(cfg, RandomSource(1, r)).c_plus for r in range(n)])
    rng = np.random.default_rng(12345)
    cp = np.zeros(n)
    cm = np.zeros(n)
    for _ in range(50):
        x = rng.standard_normal(n)
        cp = np.maximum(0.0, cp + x - 0.5)
        cm = np.maximum(0.0, cm - x - 0.5)
        hit = np.maximum(cp, cm) >= 4.77
        cp[hit] = 0.0
        cm[hit] = 0.0
    assert kern.mean() == pytest.approx(cp.mean(), rel=0.02)
    assert np.all(kern < 4.77)


def test_first_passage_matches_direct_runs():
    hs = np.array([1.0, 2.5, 4.0])
    table = _first_passage_table(0.5, hs, 200, RandomSource(3), 10**5, 1)
    for j, h in enumerate(hs):
        steps, _, _ = simulate_cusum_runs(CusumConfig(0.5, h), 200, RandomSource(3),
                                          zero_state=True)
        assert np.array_equal(table[:, j], steps)


def test_oracle_limit_is_classical_design_point():
    assert cusum_two_sided_limit(0.5) == pytest.approx(4.77, abs=0.01)
    assert cusum_two_sided_arl(0.0, 5.0) < cusum_two_sided_arl(0.5, 5.0)


def test_calibrated_limit_agrees_with_integral_equation():
    h, summary = cusum_calibrate_limit(0.5, 370.4, RandomSource(1), N=6000)
    assert summary.covers(cusum_two_sided_arl(0.5, h))
    assert abs(h - cusum_two_sided_limit(0.5)) < 0.1


def test_calibration_monotone_in_slack():
    h1, _ = cusum_calibrate_limit(0.25, 200.0, RandomSource(2), N=1500)
    h2, _ = cusum_calibrate_limit(0.75, 200.0, RandomSource(2), N=1500)
    assert h1 > h2


def test_unreachable_target():
    with pytest.raises(NoBracket):
        cusum_calibrate_limit(3.0, 370.4, RandomSource(0), N=300)
    h, s = cusum_calibrate_limit(3.0, 370.4, RandomSource(0), N=300, clip=True)
    assert h == 0.1 and s.mean > 370.4
    with pytest.raises(NoBracket):
        cusum_calibrate_limit(0.0, 10**6, RandomSource(0), N=50, hi=2.0)


def test_slack_settings():
    assert slack_setting_1(2.0, 0.5) == pytest.approx(0.5)
    g = slack_grid_setting_2(0.5, 8, scale=2.0)
    assert len(g) == 8
    assert g[0] == pytest.approx(0.05) and g[-1] == pytest.approx(1.5)
    # setting 1 sits inside the setting-2 range
    assert g[0] < slack_setting_1(2.0, 0.5) < g[-1]
