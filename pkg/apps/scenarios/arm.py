"""scenarios/arm.py

Single-link robot arm, state ``(omega, theta)``. The fixed inner loop
``tau = pi(theta) - 4 omega + 9 r`` leaves the network to shape the angle.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from core.exceptions import DomainExceeded
from iqclib.factors import UncertaintyClass
from sysmodels.statespace import new_state_space

MASS = 0.15
LENGTH = 0.5
FRICTION = 0.5

GRAVITY_COEFF = 10.0
DAMPING = 2.0
RATE_GAIN = 4.0
FEEDFORWARD = 9.0

ANGLE_LIMIT = math.pi / 2
SECTOR_ALPHA = 0.0
SECTOR_BETA = 0.364


@dataclass(frozen=True)
class ArmScenario:
    mass: float = MASS
    length: float = LENGTH
    friction: float = FRICTION
    gravity_coeff: float = GRAVITY_COEFF
    angle_limit: float = ANGLE_LIMIT


def arm_plant_field(state, tau, gravity_coeff=GRAVITY_COEFF):
    """``omega' = -g sin(theta) - 2 omega + tau``, ``theta' = omega``."""
    omega, theta = state
    return np.array([-gravity_coeff * math.sin(theta) - DAMPING * omega + tau, omega])


def arm_plant_field_rearranged(state, tau, gravity_coeff=GRAVITY_COEFF):
    """The same field split into a linear part plus ``10 q`` with ``q = theta - sin(theta)``.

    The split is exact for any ``gravity_coeff``; the linear part keeps the nominal 10.
    """
    omega, theta = state
    q = arm_delta_value(theta, gravity_coeff)
    return np.array([-GRAVITY_COEFF * theta - DAMPING * omega + tau + GRAVITY_COEFF * q, omega])


def arm_reference(state, r):
    """Reference model ``omega_r' = -9 theta_r - 6 omega_r + 9 r``."""
    omega, theta = state
    return np.array([-9.0 * theta - 6.0 * omega + FEEDFORWARD * r, omega])


def arm_ideal_controller(state_r, r, printed_sign=False):
    """Feedback-linearizing torque making the arm reproduce ``arm_reference``.

    ``printed_sign`` returns the negated law, the printed form of the derivation.
    """
    omega, theta = state_r
    tau = GRAVITY_COEFF * math.sin(theta) - 9.0 * theta - 4.0 * omega + FEEDFORWARD * r
    return -tau if printed_sign else tau


def arm_delta_value(theta, gravity_coeff=GRAVITY_COEFF):
    return theta - (gravity_coeff / GRAVITY_COEFF) * np.sin(theta)


def arm_delta(theta, gravity_coeff=GRAVITY_COEFF):
    """``q = theta - sin(theta)`` and its declared sector class on the angle domain."""
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta_arr) > ANGLE_LIMIT):
        raise DomainExceeded(f"|theta| exceeds {ANGLE_LIMIT:.6g} rad, outside the declared sector domain")
    return arm_delta_value(theta_arr, gravity_coeff), arm_uncertainty()


def arm_uncertainty():
    return UncertaintyClass("sector", alpha=[SECTOR_ALPHA], beta=[SECTOR_BETA])


@lru_cache(maxsize=None)
def arm_state_space():
    """Nominal loop with inputs ``(q, pi)``: A, B = [B~ B], C = theta, D = 0."""
    return new_state_space(
        [[-(DAMPING + RATE_GAIN), -GRAVITY_COEFF], [1.0, 0.0]],
        [[GRAVITY_COEFF, 1.0], [0.0, 0.0]],
        [[0.0, 1.0]],
        [[0.0, 0.0]],
        1,
    )


def arm_framework_ideal(theta_hat):
    """Controller that turns the nominal loop into the reference model.

    Reads the angle and ignores a trailing reference command, which the inner
    loop already feeds forward.
    """
    return np.atleast_1d(np.asarray(theta_hat, dtype=float))[:1].copy()


def loop_field(gravity_coeff=GRAVITY_COEFF):
    """Arm driven by a network output ``u`` through the fixed inner loop."""

    def rhs(t, x, u, r):
        return arm_plant_field(x, u[0] - RATE_GAIN * x[0] + FEEDFORWARD * r, gravity_coeff)

    return rhs


def reference_loop_field(t, x, u, r):
    """Nominal linear loop without the gravity mismatch."""
    plant = arm_state_space()
    return plant.A @ x + plant.control_input @ u + np.array([FEEDFORWARD * r, 0.0])


def plant_loop_field(t, x, u, r):
    """Arm driven directly by the torque ``u``."""
    return arm_plant_field(x, u[0])


def linearized_controller(reference, printed_sign=False):
    """``(t, x) -> tau`` of ``arm_ideal_controller`` on the full state; tracks ``arm_reference`` exactly."""

    def controller(t, x):
        return np.array([arm_ideal_controller(x, reference(t), printed_sign)])

    return controller


def sine_sum(amplitudes, frequencies, phases=None):
    amplitudes = np.asarray(amplitudes, dtype=float)
    frequencies = np.asarray(frequencies, dtype=float)
    phases = np.zeros_like(amplitudes) if phases is None else np.asarray(phases, dtype=float)

    def r(t):
        return float(np.sum(amplitudes * np.sin(frequencies * t + phases)))

    return r


def case_a():
    """Periodic reference."""
    return sine_sum([0.6, 0.3], [0.6, 1.7])


def case_b():
    """Non-periodic reference: incommensurate frequencies."""
    return sine_sum([0.5, 0.4], [0.7, math.sqrt(2.0)])


def random_reference(rng, amplitude=1.0, terms=3, max_frequency=2.0):
    """Seeded sum of sines whose absolute amplitudes add up to at most ``amplitude``."""
    weights = rng.dirichlet(np.ones(terms))
    scale = rng.uniform(0.3, 1.0) * amplitude
    return sine_sum(
        scale * weights,
        rng.uniform(0.1, max_frequency, size=terms),
        rng.uniform(0.0, 2 * math.pi, size=terms),
    )
