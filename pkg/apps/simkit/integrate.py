"""simkit/integrate.py"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from django.conf import settings

from core.exceptions import GridMismatch, NonFiniteState

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of the plant loop and, when simulated alongside, the reference loop."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    x_hat: np.ndarray = None
    y_hat: np.ndarray = None
    u_hat: np.ndarray = None
    label: str = ""

    @property
    def has_reference(self):
        return self.y_hat is not None

    @property
    def z(self):
        if self.y_hat is None:
            raise GridMismatch("trajectory has no reference loop")
        return self.y - self.y_hat

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def head(self, count):
        """The first ``count`` samples."""
        fields = {name: getattr(self, name) for name in ("x", "y", "u", "x_hat", "y_hat", "u_hat")}
        return replace(
            self,
            t=self.t[:count],
            **{name: value[:count] for name, value in fields.items() if value is not None},
        )


@dataclass(frozen=True, eq=False)
class LoopModel:
    """A loop to integrate: ``x' = rhs(t, x, u, r)``, ``y = output(x)``, ``u = controller(t, y)``."""

    rhs: object
    controller: object
    output: object = None

    def observe(self, x):
        return x if self.output is None else np.atleast_1d(self.output(x))


def _grid(T, dt):
    if dt <= 0:
        raise GridMismatch(f"step dt={dt} must be positive")
    if T < dt:
        raise GridMismatch(f"horizon T={T} is shorter than one step dt={dt}")
    steps = int(round(T / dt))
    return np.arange(steps + 1) * dt


class _Hold:
    """Zero-order hold of a controller, refreshed every ``period`` seconds."""

    def __init__(self, controller, period):
        self.controller = controller
        self.period = period
        self.next_update = 0.0
        self.value = None

    def refresh(self, t, y):
        """Resample at grid time t when a period has elapsed."""
        if self.value is None or t >= self.next_update - 1e-12:
            self.value = np.atleast_1d(self.controller(t, y))
            self.next_update += self.period

    def __call__(self, t, y):
        return self.value


def _field(loop, controller, r_fn):
    def f(t, x):
        u = np.atleast_1d(controller(t, loop.observe(x)))
        r = None if r_fn is None else r_fn(t)
        return np.asarray(loop.rhs(t, x, u, r), dtype=float)

    return f


def _rk4_step(f, t, x, dt):
    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate(f, x0, t, blowup, sample):
    """RK4 over the grid; ``sample(t, x)`` records outputs at every grid point."""
    x = np.array(x0, dtype=float)
    states = [x]
    samples = [sample(t[0], x)]
    for k in range(1, t.size):
        x_next = _rk4_step(f, t[k - 1], x, t[k] - t[k - 1])
        if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > blowup:
            return np.array(states), samples, k
        x = x_next
        states.append(x)
        samples.append(sample(t[k], x))
    return np.array(states), samples, t.size


def simulate_closed_loop(
    rhs,
    controller,
    ref_input,
    x0,
    T,
    dt,
    *,
    output=None,
    reference=None,
    x0_hat=None,
    hold=None,
    blowup=None,
    label="",
):
    """Fixed-step RK4 of the loop ``x' = rhs(t, x, controller(t, output(x)), ref_input(t))``.

    The controller is evaluated at every stage state unless ``hold`` gives a
    sampling period. ``reference`` (a LoopModel) is integrated on the same grid,
    by default from the same initial state. Samples of u are taken at grid points.
    """
    blowup = settings.KEEPCLOSE_BLOWUP if blowup is None else blowup
    t = _grid(T, dt)
    plant = LoopModel(rhs, controller, output)
    loops = [plant] if reference is None else [plant, reference]
    controllers = [_Hold(loop.controller, hold) if hold else loop.controller for loop in loops]

    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    starts = [x0]
    if reference is not None:
        starts.append(x0 if x0_hat is None else np.atleast_1d(np.asarray(x0_hat, dtype=float)))
    sizes = [s.size for s in starts]
    cuts = np.cumsum(sizes)[:-1]

    fields = [_field(loop, ctrl, ref_input) for loop, ctrl in zip(loops, controllers)]

    def f(tt, x):
        return np.concatenate([fld(tt, part) for fld, part in zip(fields, np.split(x, cuts))])

    def sample(tt, x):
        out = []
        for loop, ctrl, part in zip(loops, controllers, np.split(x, cuts)):
            y = loop.observe(part)
            if hold:
                ctrl.refresh(tt, y)
            out.append((y, np.atleast_1d(ctrl(tt, y))))
        return out

    states, samples, count = _integrate(f, np.concatenate(starts), t, blowup, sample)
    parts = np.split(states, cuts, axis=1)
    traj = Trajectory(
        t=t[:count],
        x=parts[0],
        y=np.array([s[0][0] for s in samples]),
        u=np.array([s[0][1] for s in samples]),
        label=label,
    )
    if reference is not None:
        traj = replace(
            traj,
            x_hat=parts[1],
            y_hat=np.array([s[1][0] for s in samples]),
            u_hat=np.array([s[1][1] for s in samples]),
        )
    if count < t.size:
        raise NonFiniteState(
            f"state left the finite range after t={t[count - 1]:.6g} s{f' in run {label}' if label else ''}",
            partial=traj,
        )
    logger.debug("Simulated %s over %d steps of %g s", label or "loop", t.size - 1, dt)
    return traj


@dataclass(frozen=True, eq=False)
class ExtendedTrajectory:
    """Samples of an extended system: state chi, inputs (q, eta), outputs (z, r)."""

    t: np.ndarray
    chi: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    r: np.ndarray


def simulate_extended(ext, q_fn, eta_fn, T, dt, chi0=None, blowup=None):
    """RK4 of ``chi' = A chi + B1 q + B2 eta`` with ``eta = eta_fn(t)`` and ``q = q_fn(t, chi, eta)``."""
    blowup = settings.KEEPCLOSE_BLOWUP if blowup is None else blowup
    t = _grid(T, dt)
    chi0 = np.zeros(ext.n_chi) if chi0 is None else np.asarray(chi0, dtype=float)

    def inputs(tt, chi):
        eta = np.atleast_1d(np.asarray(eta_fn(tt), dtype=float))
        return np.atleast_1d(np.asarray(q_fn(tt, chi, eta), dtype=float)), eta

    def f(tt, chi):
        q, eta = inputs(tt, chi)
        return ext.rhs(chi, q, eta)

    def sample(tt, chi):
        q, eta = inputs(tt, chi)
        z, r = ext.outputs(chi, q, eta)
        return q, eta, z, r

    states, samples, count = _integrate(f, chi0, t, blowup, sample)
    traj = ExtendedTrajectory(
        t=t[:count],
        chi=states,
        q=np.array([s[0] for s in samples]),
        eta=np.array([s[1] for s in samples]),
        z=np.array([s[2] for s in samples]),
        r=np.array([s[3] for s in samples]),
    )
    if count < t.size:
        raise NonFiniteState(f"extended state left the finite range after t={t[count - 1]:.6g} s", partial=traj)
    return traj
