"""Predefined continuous components: first-order lag, PI controller, limiter.

All updates are single explicit-Euler steps at a fixed dt and are pure:
the input state is never modified.  The simulator and the generated C code
both implement exactly these arithmetic sequences, operation for operation,
so their outputs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Pt1State:
    """First-order lag  T*dy/dt + y = K*u.

    y is the output, K the static gain, T the time constant in seconds
    (T > 0, enforced at model validation).
    """
    y: float = 0.0
    K: float = 1.0
    T: float = 1.0


def pt1_step(s: Pt1State, u: float, dt: float) -> Pt1State:
    """One explicit Euler step: y <- y + (dt/T) * (K*u - y).

    Stability of the explicit scheme requires dt < 2*T; validation warns
    above dt = T.
    """
    y = s.y + (dt / s.T) * (s.K * u - s.y)
    return Pt1State(y=y, K=s.K, T=s.T)


@dataclass(frozen=True)
class PiState:
    """PI controller state: integral accumulator i (error-seconds).

    Output law: u = clamp(Kp*e + Ki*i, lo, hi), with i <- i + e*dt.
    Anti-windup is conditional integration: when the unclamped output
    saturates and the current error would push it further out, the
    integral update is skipped for that step.
    """
    i: float = 0.0
    Kp: float = 1.0
    Ki: float = 0.0
    lo: float = -1.0
    hi: float = 1.0


def pi_step(s: PiState, e: float, dt: float) -> tuple[PiState, float]:
    """One PI step; returns (new state, limited output)."""
    i_new = s.i + e * dt
    u_trial = s.Kp * e + s.Ki * i_new
    drive = s.Ki * e
    if (u_trial > s.hi and drive > 0.0) or (u_trial < s.lo and drive < 0.0):
        i_new = s.i  # conditional integration: freeze under saturation
    u_raw = s.Kp * e + s.Ki * i_new
    u_out = limiter(u_raw, s.lo, s.hi)
    return PiState(i=i_new, Kp=s.Kp, Ki=s.Ki, lo=s.lo, hi=s.hi), u_out


def limiter(u: float, lo: float, hi: float) -> float:
    """Clamp u into [lo, hi]; idempotent.  Requires lo < hi."""
    if u < lo:
        return lo
    if u > hi:
        return hi
    return u
