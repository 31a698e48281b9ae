"""PID feedback control of the selection temperature.

tau_{t+1} = tau_t + k_p e_t + k_i * sum(e_0..e_t) + k_d (e_t - e_{t-1}),
then clamped to [tau_min, tau_max]. The error signal is the sum of the
prediction and alignment losses observed over the last epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import NumericalError, ParameterError


@dataclass(frozen=True)
class PidState:
    """Controller state; `update_tau` returns a new instance."""

    tau: float
    k_p: float = 0.05
    k_i: float = 0.001
    k_d: float = 0.01
    tau_min: float = 0.1
    tau_max: float = 5.0
    error_integral: float = 0.0
    prev_error: float = 0.0
    step: int = 0
    history: tuple = field(default_factory=tuple)  # (step, e_t, tau after clamp)
    raw_history: tuple = field(default_factory=tuple)  # tau before clamping


def make_pid(
    tau0: float = 1.0,
    k_p: float = 0.05,
    k_i: float = 0.001,
    k_d: float = 0.01,
    tau_min: float = 0.1,
    tau_max: float = 5.0,
) -> PidState:
    if tau0 <= 0.0:
        raise ParameterError(f"initial temperature must be positive, got {tau0}")
    if tau_min <= 0.0 or tau_max < tau_min:
        raise ParameterError(f"bad temperature bounds [{tau_min}, {tau_max}]")
    return PidState(tau=tau0, k_p=k_p, k_i=k_i, k_d=k_d, tau_min=tau_min, tau_max=tau_max)


def update_tau(state: PidState, e_t: float) -> PidState:
    """One controller step; the running integral includes the current error."""
    e_t = float(e_t)
    if not math.isfinite(e_t):
        raise NumericalError(f"error signal must be finite, got {e_t}")
    integral = state.error_integral + e_t
    raw = (
        state.tau
        + state.k_p * e_t
        + state.k_i * integral
        + state.k_d * (e_t - state.prev_error)
    )
    tau = min(max(raw, state.tau_min), state.tau_max)
    step = state.step + 1
    return replace(
        state,
        tau=tau,
        error_integral=integral,
        prev_error=e_t,
        step=step,
        history=state.history + ((step, e_t, tau),),
        raw_history=state.raw_history + (raw,),
    )


def error_signal(pred_loss: float, align_loss: float) -> float:
    pred_loss, align_loss = float(pred_loss), float(align_loss)
    if not (math.isfinite(pred_loss) and math.isfinite(align_loss)):
        raise NumericalError(
            f"loss terms must be finite, got ({pred_loss}, {align_loss})"
        )
    return pred_loss + align_loss
