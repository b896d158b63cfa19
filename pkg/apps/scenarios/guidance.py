"""scenarios/guidance.py

Polynomial descent guidance: a quadratic acceleration profile that reaches the
target position, velocity and acceleration after the time-to-go.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import NonPositiveTgo, NoPositiveTgo

# Remaining time below which the command is frozen at its last value.
TGO_FLOOR = 1.0


@dataclass(frozen=True)
class GuidanceState:
    r: np.ndarray
    v: np.ndarray
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    j_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    s_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t_go: float = None

    def __post_init__(self):
        for name in ("r", "v", "a", "r_t", "v_t", "a_t", "j_t", "s_t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.t_go is not None and self.t_go <= 0:
            raise NonPositiveTgo(f"t_go={self.t_go} must be positive")


def apollo_tgo(state, tol=1e-12):
    """Time-to-go from the vertical channel, chosen so the command is at most linear in time.

    With ``(a_t)_z`` zero the root is ``3 (r_t - r)_z / (v_z + 2 (v_t)_z)``; otherwise
    the smallest positive root of ``a_t T^2 - 2 (2 v_t + v) T + 6 (r_t - r) = 0``.
    """
    dr = state.r_t[2] - state.r[2]
    lead = state.a_t[2]
    slope = state.v[2] + 2 * state.v_t[2]
    if abs(lead) <= tol:
        if abs(slope) <= tol:
            raise NoPositiveTgo("vertical closing speed is zero")
        t_go = 3 * dr / slope
        if t_go <= 0:
            raise NoPositiveTgo(f"linear branch gives t_go={t_go:.6g}")
        return float(t_go)
    disc = slope**2 - 6 * lead * dr
    if disc < 0:
        raise NoPositiveTgo("time-to-go polynomial has no real root")
    roots = [(slope + sign * math.sqrt(disc)) / lead for sign in (1.0, -1.0)]
    positive = [root for root in roots if root > 0]
    if not positive:
        raise NoPositiveTgo(f"time-to-go roots {roots} are not positive")
    return float(min(positive))


def guidance_coefficients(state, t_go):
    """``(C0, C1, C2)`` of ``a(s) = C0 + C1 s + C2 s^2`` over the remaining ``t_go`` seconds."""
    if t_go <= 0:
        raise NonPositiveTgo(f"t_go={t_go} must be positive")
    T = float(t_go)
    dr = state.r_t - state.r
    c0 = state.a_t - 6 * (state.v_t + state.v) / T + 12 * dr / T**2
    c1 = -6 * state.a_t / T + (30 * state.v_t + 18 * state.v) / T**2 - 48 * dr / T**3
    c2 = 6 * state.a_t / T**2 - (24 * state.v_t + 12 * state.v) / T**3 + 36 * dr / T**4
    return c0, c1, c2


def apollo_acmd(state, t_go):
    """Acceleration command now: the profile evaluated at ``s = 0``."""
    c0, _, _ = guidance_coefficients(state, t_go)
    return c0


def boundary_system(t_go):
    """Matrix mapping ``(C0, C1, C2)`` to ``(a(T), v(T) - v, r(T) - r - v T)``."""
    T = float(t_go)
    return np.array(
        [
            [1.0, T, T**2],
            [T, T**2 / 2, T**3 / 3],
            [T**2 / 2, T**3 / 6, T**4 / 12],
        ]
    )


def apollo_rd(state, t_go):
    """Desired position ``t_go`` seconds before touchdown, from the target derivatives."""
    T = float(t_go)
    return (
        state.r_t
        - state.v_t * T
        + state.a_t * T**2 / 2
        - state.j_t * T**3 / 6
        + state.s_t * T**4 / 24
    )


def guidance_controller(target, t_go0):
    """Controller ``(t, y) -> a_cmd`` with ``y = (r, v)`` and ``t_go`` counted down from ``t_go0``."""

    def controller(t, y):
        t_go = max(t_go0 - t, TGO_FLOOR)
        state = GuidanceState(r=y[:3], v=y[3:6], r_t=target.r_t, v_t=target.v_t, a_t=target.a_t)
        return apollo_acmd(state, t_go)

    return controller
