"""scenarios/apollo.py

Powered descent of a point-mass lander in a local East-North-Up frame. The
controller output is the commanded acceleration without gravity; the engine
delivers ``m (u + g)`` inside the throttle range.
"""

from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DomainExceeded, MassDepleted
from iqclib.factors import UncertaintyClass
from sysmodels.statespace import new_state_space

STANDARD_GRAVITY = 9.80665
AXES = ("x", "y", "z")

# Sector pairs of the drag mismatch as printed per axis, kept for comparison.
PRINTED_SECTORS = ((-0.003, 0.008), (-0.004, 0.013), (-0.004, 0.006))


@dataclass(frozen=True, eq=False)
class ApolloScenario:
    p0: np.ndarray
    v0: np.ndarray
    a0: np.ndarray
    m0: float
    S: float
    g: np.ndarray
    T_max: float = 3600.0
    throttle_min: float = 0.3
    rho: float = 0.023
    C_D: float = 2.0
    I_sp: float = 225.0
    dry_mass: float = 350.0
    a: np.ndarray = field(default_factory=lambda: np.array([-0.0087, -0.0075, -0.0077]))
    tau: np.ndarray = field(default_factory=lambda: np.array([16.0, 16.0, 30.0]))
    envelope_margin: float = 1.1

    def __post_init__(self):
        for name in ("p0", "v0", "a0", "g", "a", "tau"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def gravity(self):
        """Gravity acceleration vector; ``g`` may be given with either sign along Up."""
        return -np.abs(self.g)

    @property
    def exhaust_velocity(self):
        return STANDARD_GRAVITY * self.I_sp

    @property
    def drag_gain_max(self):
        """Largest ``rho C_D S / (2 m)`` over the mass range."""
        return self.rho * self.C_D * self.S / (2 * self.dry_mass)

    @property
    def speed_max(self):
        return self.envelope_margin * float(np.linalg.norm(self.v0))

    @property
    def position_max(self):
        return self.envelope_margin * np.abs(self.p0)

    @property
    def velocity_max(self):
        return self.envelope_margin * np.abs(self.v0)

    def gains(self, axis):
        """``(k_p, k_d)`` placing a double pole at ``-1 / tau``."""
        tau = self.tau[axis]
        return 1.0 / tau**2, 2.0 / tau + self.a[axis]

    def drag_sector(self, axis):
        """Slope range of the drag mismatch against the axis velocity."""
        return -self.drag_gain_max * self.speed_max - self.a[axis], -self.a[axis]


def drag_force(scenario, v, wind=None):
    """Aerodynamic force opposing the fluid-relative velocity."""
    v_rel = np.asarray(v, dtype=float) - (0.0 if wind is None else np.asarray(wind, dtype=float))
    return -0.5 * scenario.rho * scenario.C_D * scenario.S * np.linalg.norm(v_rel) * v_rel


def clamp_thrust(scenario, thrust_force):
    """Engine off for a zero request; otherwise magnitude inside the throttle range."""
    thrust_force = np.asarray(thrust_force, dtype=float)
    size = float(np.linalg.norm(thrust_force))
    if size == 0.0:
        return thrust_force
    low, high = scenario.throttle_min * scenario.T_max, scenario.T_max
    return thrust_force * (min(max(size, low), high) / size)


def apollo_dynamics(scenario, state, thrust_force, wind=None):
    """Derivative of ``(r, v, m)`` under the clamped thrust, drag, gravity and fuel burn."""
    v, m = state[3:6], state[6]
    if m <= scenario.dry_mass:
        raise MassDepleted(f"mass {m:.6g} kg reached the dry mass {scenario.dry_mass:.6g} kg")
    thrust = clamp_thrust(scenario, thrust_force)
    accel = (thrust + drag_force(scenario, v, wind)) / m + scenario.gravity
    m_dot = -float(np.linalg.norm(thrust)) / scenario.exhaust_velocity
    return np.concatenate([v, accel, [m_dot]])


def apollo_reference(scenario, state, u):
    """Linear reference ``r' = v``, ``v' = a v + u`` per axis; ``state = (r, v)``."""
    v = state[3:6]
    return np.concatenate([v, scenario.a * v + np.asarray(u, dtype=float)])


def apollo_delta(scenario, v, m, wind=None):
    """Drag mismatch ``drag / m - a v`` per axis and the declared velocity sectors."""
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) > scenario.speed_max:
        raise DomainExceeded(f"speed {np.linalg.norm(v):.6g} m/s exceeds the envelope {scenario.speed_max:.6g}")
    q = drag_force(scenario, v, wind) / m - scenario.a * v
    return q, [axis_uncertainty(scenario, i) for i in range(3)]


def axis_uncertainty(scenario, axis):
    alpha, beta = scenario.drag_sector(axis)
    return UncertaintyClass("sector", alpha=[alpha], beta=[beta], input_map=[[0.0, 1.0]])


def axis_state_space(scenario, axis):
    """Axis ``(rho, v)`` with inputs ``(q, u)``, both entering the velocity."""
    return new_state_space(
        [[0.0, 1.0], [0.0, scenario.a[axis]]],
        [[0.0, 0.0], [1.0, 1.0]],
        np.eye(2),
        np.zeros((2, 2)),
        1,
    )


def axis_ideal(scenario, axis):
    k_p, k_d = scenario.gains(axis)

    def ideal(y):
        return np.array([-k_p * y[0] - k_d * y[1]])

    return ideal


def ideal_controller(scenario):
    """All three axis laws on ``y = (rho_x, rho_y, rho_z, v_x, v_y, v_z)``."""
    gains = np.array([scenario.gains(i) for i in range(3)])

    def ideal(y):
        y = np.asarray(y, dtype=float)
        return -gains[:, 0] * y[:3] - gains[:, 1] * y[3:6]

    return ideal


def fit_drag_gain(speeds, mass, scenario):
    """Least-squares slope ``a`` of the drag deceleration ``-k |v| v`` on sampled speeds."""
    speeds = np.asarray(speeds, dtype=float)
    decel = -0.5 * scenario.rho * scenario.C_D * scenario.S / mass * np.abs(speeds) * speeds
    return float(np.sum(decel * speeds) / np.sum(speeds**2))


def headwind(scenario, speed):
    """Constant horizontal wind opposing the initial ground track."""
    horizontal = np.array([scenario.v0[0], scenario.v0[1], 0.0])
    return -speed * horizontal / np.linalg.norm(horizontal)


# Lander network reading all six outputs: hidden widths and activations.
JOINT_ARCH = ("40:tanh", "40:sigmoid", "40:tanh")


def output_envelope(scenario):
    """Largest |y| per component of ``y = (rho, v)`` over all three axes."""
    return np.concatenate([scenario.position_max, scenario.velocity_max])
