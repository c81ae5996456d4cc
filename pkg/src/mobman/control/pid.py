"""PID primitive as a pure state transition."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    i_clamp: float = math.inf
    out_clamp: float = math.inf

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("gains must be >= 0")
        if not (self.i_clamp > 0 and self.out_clamp > 0):
            raise ValueError("clamps must be > 0")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


def _clamp(x: float, bound: float) -> float:
    return max(-bound, min(bound, x))


def pid_step(gains: PidGains, state: PidState, error: float, dt: float) -> tuple[float, PidState]:
    """One controller update; derivative is suppressed on the first call."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    integral = _clamp(state.integral + error * dt, gains.i_clamp)
    deriv = (error - state.prev_error) / dt if state.initialized else 0.0
    out = gains.kp * error + gains.ki * integral + gains.kd * deriv
    return _clamp(out, gains.out_clamp), PidState(integral, error, True)


MOVE_FORWARD_GAINS = PidGains(kp=1.5, ki=0.0, kd=0.1, out_clamp=0.5)
