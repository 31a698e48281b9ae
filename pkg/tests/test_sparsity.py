import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepselective.errors import NumericalError, ParameterError
from deepselective.sparsity import error_signal, make_pid, update_tau


def straight_line_taus(tau0, k_p, k_i, k_d, errors, tau_min=-math.inf, tau_max=math.inf):
    """Independent evaluation of the recurrence; returns (raw, clamped) lists."""
    tau = tau0
    integral = 0.0
    prev = 0.0
    raw_out, clamped_out = [], []
    for e in errors:
        integral += e
        raw = tau + k_p * e + k_i * integral + k_d * (e - prev)
        tau = min(max(raw, tau_min), tau_max)
        prev = e
        raw_out.append(raw)
        clamped_out.append(tau)
    return raw_out, clamped_out


def test_zero_gains_leave_tau_unchanged():
    state = make_pid(tau0=1.7, k_p=0.0, k_i=0.0, k_d=0.0)
    for e in (0.5, -3.0, 100.0):
        state = update_tau(state, e)
    assert state.tau == 1.7


def test_hand_evaluated_two_steps():
    state = make_pid(tau0=1.0, k_p=0.1, k_i=0.01, k_d=0.05)
    state = update_tau(state, 0.5)
    assert state.tau == pytest.approx(1.08, abs=1e-12)
    state = update_tau(state, 0.3)
    assert state.tau == pytest.approx(1.108, abs=1e-12)


def test_integral_only_closed_form():
    # constant error e with only k_i: tau_t = tau0 + k_i * e * t(t+1)/2
    k_i, e, tau0 = 0.002, 0.4, 1.0
    state = make_pid(tau0=tau0, k_p=0.0, k_i=k_i, k_d=0.0, tau_max=100.0)
    for t in range(1, 21):
        state = update_tau(state, e)
        expected = tau0 + k_i * e * t * (t + 1) / 2
        assert state.tau == pytest.approx(expected, abs=1e-12)


def test_prev_error_tracks_last_input():
    state = make_pid()
    for e in (0.3, -0.2, 0.9):
        state = update_tau(state, e)
        assert state.prev_error == e


def test_integral_is_running_sum():
    state = make_pid()
    errors = [0.1, 0.2, -0.4, 0.05]
    for e in errors:
        state = update_tau(state, e)
    assert state.error_integral == pytest.approx(sum(errors), abs=1e-15)


def test_tau_stays_clamped():
    state = make_pid(tau0=1.0, k_p=1.0, k_i=0.5, k_d=0.0, tau_min=0.1, tau_max=5.0)
    for _ in range(100):
        state = update_tau(state, 10.0)
        assert 0.1 <= state.tau <= 5.0
    for _ in range(100):
        state = update_tau(state, -10.0)
        assert 0.1 <= state.tau <= 5.0


def test_raw_history_records_preclamp_values():
    state = make_pid(tau0=1.0, k_p=1.0, k_i=0.0, k_d=0.0, tau_min=0.1, tau_max=2.0)
    state = update_tau(state, 5.0)  # raw 6.0, clamped 2.0
    assert state.raw_history[-1] == pytest.approx(6.0, abs=1e-15)
    assert state.tau == 2.0


def test_nonfinite_error_rejected():
    state = make_pid()
    with pytest.raises(NumericalError):
        update_tau(state, float("nan"))
    with pytest.raises(NumericalError):
        update_tau(state, float("inf"))


def test_bad_bounds_rejected():
    with pytest.raises(ParameterError):
        make_pid(tau0=-1.0)
    with pytest.raises(ParameterError):
        make_pid(tau_min=0.5, tau_max=0.2)


def test_error_signal_sums_components():
    assert error_signal(0.0, 0.0) == 0.0
    assert error_signal(0.4, 0.1) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(NumericalError):
        error_signal(float("nan"), 0.0)


def test_history_shape():
    state = make_pid()
    state = update_tau(state, 0.25)
    state = update_tau(state, 0.5)
    assert len(state.history) == 2
    step, err, tau = state.history[-1]
    assert step == 2 and err == 0.5 and tau == state.tau


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=50),
    st.floats(min_value=0.0, max_value=0.5),
    st.floats(min_value=0.0, max_value=0.05),
    st.floats(min_value=0.0, max_value=0.2),
)
def test_recurrence_matches_straight_line_evaluation(errors, k_p, k_i, k_d):
    state = make_pid(tau0=1.0, k_p=k_p, k_i=k_i, k_d=k_d, tau_min=1e-6, tau_max=1e6)
    for e in errors:
        state = update_tau(state, e)
    raw, clamped = straight_line_taus(1.0, k_p, k_i, k_d, errors, tau_min=1e-6, tau_max=1e6)
    np.testing.assert_allclose(state.raw_history, raw, rtol=0, atol=1e-12)
    np.testing.assert_allclose([h[2] for h in state.history], clamped, rtol=0, atol=1e-12)
