import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from shiftguard.arma import (
    ArmaModel,
    ShiftSpec,
    ar_representation,
    eta_weights,
    model_eta,
    one_step_errors,
    shift_profile,
    simulate_errors,
)
from shiftguard.exceptions import (
    InsufficientHistory,
    ModelError,
    NonInvertible,
    NonStationary,
    TruncationWarning,
)
from shiftguard.numerics import RandomSource


def test_stationarity_and_invertibility_checks():
    with pytest.raises(NonStationary):
        ArmaModel.ar1(1.2)
    with pytest.raises(NonStationary):
        ArmaModel.ar1(1.0)
    with pytest.raises(NonStationary):
        ArmaModel(ar=(0.6, 0.5))  # root inside the unit circle
    with pytest.raises(NonInvertible):
        ArmaModel(ma=(1.0,))
    with pytest.raises(ModelError):
        ArmaModel(sigma_a=0.0)
    ArmaModel(ar=(0.4, 0.4), ma=(0.8,))


def test_ar1_pi_is_phi():
    pi = ar_representation(ArmaModel.ar1(0.5))
    assert pi.p_star == 1
    assert pi.pi.tolist() == [0.5]


def test_arma11_long_division():
    # (1 - 0.5B) / (1 + 0.3B) done by hand: 1 - 0.8B + 0.24B^2 - 0.072B^3 ...
    pi = ar_representation(ArmaModel(ar=(0.5,), ma=(0.3,)))
    assert pi.pi[:3] == pytest.approx([0.8, -0.24, 0.072], abs=1e-15)
    j = np.arange(1, pi.p_star + 1)
    assert pi.pi == pytest.approx((-0.3) ** (j - 1) * 0.8, rel=1e-12, abs=1e-18)
    assert abs(pi.pi[-1]) >= 1e-8 > abs(0.8 * 0.3 ** pi.p_star)
    assert not pi.truncated


@pytest.mark.parametrize("ar,ma", [((0.5,), (0.3,)), ((0.4, 0.4), (0.8,)),
                                   ((-0.7,), (0.5, 0.2)), ((), (0.6,))])
def test_pi_theta_roundtrip(ar, ma):
    model = ArmaModel(ar=ar, ma=ma)
    pi = ar_representation(model)
    recovered = np.convolve(np.r_[1.0, -pi.pi], model.ma_poly)
    target = np.zeros_like(recovered)
    target[:len(model.ar_poly)] = model.ar_poly
    # coefficients beyond p* only carry the dropped tail
    assert np.max(np.abs(recovered[:pi.p_star + 1] - target[:pi.p_star + 1])) < 1e-8


def test_arma21_alternating_decaying_tail():
    pi = ar_representation(ArmaModel(ar=(0.4, 0.4), ma=(0.8,)))
    tail = pi.pi[2:12]
    assert np.all(np.sign(tail[1:]) == -np.sign(tail[:-1]))
    assert np.all(np.abs(tail[1:]) < np.abs(tail[:-1]))


def test_truncation_warning_at_cap():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pi = ar_representation(ArmaModel(ma=(0.99,)), max_order=50)
    assert pi.truncated
    assert any(issubclass(w.category, TruncationWarning) for w in caught)


def test_eta_ar1_and_white_noise():
    eta = eta_weights(ar_representation(ArmaModel.ar1(0.3)), 6)
    assert eta.values(6) == pytest.approx([1, 0.7, 0.7, 0.7, 0.7, 0.7])
    assert eta.values(20)[-1] == pytest.approx(0.7)
    assert eta.eta1 == pytest.approx(0.7)
    wn = eta_weights(ar_representation(ArmaModel()), 5)
    assert wn.values(5).tolist() == [1.0] * 5


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=0, max_size=8), st.integers(1, 20))
def test_eta_cauchy_identity(pi, length):
    eta = eta_weights(np.array(pi), length)
    e = eta.values(max(length, len(pi) + 3))
    assert e[0] == 1.0
    for j in range(1, len(e)):
        expected = -pi[j - 1] if j <= len(pi) else 0.0
        assert e[j] - e[j - 1] == pytest.approx(expected, abs=1e-12)


def test_eta_arma21_damped_oscillation():
    eta = model_eta(ArmaModel(ar=(0.4, 0.4), ma=(0.8,)), 40).values(40)
    d = np.diff(eta[1:15] - eta[-1])
    assert np.sum(np.sign(eta[1:10] - eta[-1])[1:] != np.sign(eta[1:10] - eta[-1])[:-1]) >= 4
    assert abs(eta[-1]) < 0.25
    assert np.all(np.abs(d[1:]) <= np.abs(d[:-1]) + 1e-15)


def test_one_step_errors_direct():
    e = one_step_errors([0.5], [0.0, 1.0])
    assert e.tolist() == [1.0]
    wn = one_step_errors([], [3.0, 4.0], mean=1.0)
    assert wn.tolist() == [2.0, 3.0]
    with pytest.raises(InsufficientHistory):
        one_step_errors([0.5, 0.1], [1.0, 2.0])


def test_one_step_errors_recover_innovations():
    model = ArmaModel.ar1(0.5, sigma_a=1.0, mean=2.0)
    x = model.simulate(100_000, RandomSource(1))
    e = one_step_errors(ar_representation(model), x, mean=model.mean)
    assert np.var(e) == pytest.approx(1.0, rel=0.03)
    n = len(e)
    for lag in range(1, 6):
        r = np.corrcoef(e[:-lag], e[lag:])[0, 1]
        assert abs(r) < 4 / np.sqrt(n)


def test_one_step_errors_arma_whiten():
    model = ArmaModel(ar=(0.4, 0.4), ma=(0.8,), sigma_a=2.0)
    x = model.simulate(50_000, RandomSource(2), burn=2000)
    e = one_step_errors(ar_representation(model), x)
    n = len(e)
    assert np.var(e) == pytest.approx(4.0, rel=0.03)
    for lag in range(1, 6):
        assert abs(np.corrcoef(e[:-lag], e[lag:])[0, 1]) < 4 / np.sqrt(n)


def test_shift_spec_from_delta():
    s = ShiftSpec.from_delta(1.0, 0.5)
    assert s.tau == pytest.approx(1 / np.sqrt(0.75))
    assert s.tau == pytest.approx(1.1547, abs=1e-4)


def test_shift_profile_ar1():
    eta = model_eta(ArmaModel.ar1(0.5), 3)
    shift = ShiftSpec.from_delta(1.0, 0.5, t_star=1)
    mu = shift_profile(eta, shift, 5)
    tau = 1 / np.sqrt(0.75)
    assert mu == pytest.approx([tau, 0.5 * tau, 0.5 * tau, 0.5 * tau, 0.5 * tau])
    late = shift_profile(eta, ShiftSpec(t_star=3, tau=2.0), 5)
    assert late == pytest.approx([0, 0, 2.0, 1.0, 1.0])


def test_simulate_errors_zero_shift_is_white_noise():
    eta = model_eta(ArmaModel.ar1(0.7), 3)
    e = simulate_errors(eta, ShiftSpec(tau=0.0), 20_000, RandomSource(4))
    assert abs(e.mean()) < 4 / np.sqrt(len(e))
    assert np.var(e) == pytest.approx(1.0, rel=0.04)


def test_simulate_errors_mean_at_change_point():
    eta = model_eta(ArmaModel.ar1(0.5), 3)
    shift = ShiftSpec.from_delta(1.0, 0.5, t_star=1)
    draws = np.array([simulate_errors(eta, shift, 3, RandomSource(9, r))
                      for r in range(10_000)])
    se = 1 / np.sqrt(len(draws))
    assert abs(draws[:, 0].mean() - shift.tau) < 4 * se
    assert abs(draws[:, 2].mean() - 0.5 * shift.tau) < 4 * se


def test_simulated_errors_match_filtered_process_in_distribution():
    model = ArmaModel.ar1(0.6)
    eta = model_eta(model, 3)
    direct = simulate_errors(eta, ShiftSpec(tau=0.0), 10_000, RandomSource(5))
    x = model.simulate(10_001, RandomSource(6))
    filtered = one_step_errors(ar_representation(model), x)
    assert stats.ks_2samp(direct, filtered).pvalue > 0.01
