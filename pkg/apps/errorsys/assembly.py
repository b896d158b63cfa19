"""errorsys/assembly.py"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from django.conf import settings

from core.exceptions import DimensionMismatch, ModelMismatch, SingularFeedthrough
from sysmodels.statespace import new_state_space

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ErrorSystem:
    """Dynamics of ``zeta = x - x_hat`` driven by (q_delta, mu), output ``z = y - y_hat``.

    ``base`` keeps the plant matrices with the disturbance split, so B~ and D~ are
    the columns fed by q_delta. The state starts at zero because both loops share x0.
    """

    base: object

    @property
    def A(self):
        return self.base.A

    @property
    def B(self):
        return self.base.control_input

    @property
    def B_tilde(self):
        return self.base.disturbance_input

    @property
    def C(self):
        return self.base.C

    @property
    def D(self):
        return self.base.control_feedthrough

    @property
    def D_tilde(self):
        return self.base.disturbance_feedthrough

    @property
    def n(self):
        return self.base.n

    @property
    def d(self):
        return self.base.disturbance_split

    @property
    def m(self):
        return self.base.m - self.base.disturbance_split

    @property
    def p(self):
        return self.base.p

    def output_rows(self, rows):
        """The same error system observed through a subset of its outputs."""
        rows = list(np.atleast_1d(rows))
        return ErrorSystem(
            new_state_space(
                self.base.A, self.base.B, self.base.C[rows], self.base.D[rows], self.base.disturbance_split
            )
        )


@dataclass(frozen=True, eq=False)
class ControllerErrorGain:
    """``mu = G_zeta zeta + G_q q_delta + G_eps eps`` at one Jacobian vertex."""

    G_zeta: np.ndarray
    G_q: np.ndarray
    G_eps: np.ndarray
    vertex: np.ndarray


def controller_error_gain(Lam, plant, singular_cond=None):
    Lam = np.atleast_2d(np.asarray(Lam, dtype=float))
    C = plant.C
    D = plant.control_feedthrough
    D_tilde = plant.disturbance_feedthrough
    m = plant.m - plant.disturbance_split
    if Lam.shape != (m, plant.p):
        raise DimensionMismatch(f"vertex must be {m}x{plant.p}, got {Lam.shape}")

    if not np.any(D):
        return ControllerErrorGain(Lam @ C, Lam @ D_tilde, np.eye(m), Lam)

    singular_cond = settings.KEEPCLOSE_SINGULAR_COND if singular_cond is None else singular_cond
    loop = np.eye(m) - Lam @ D
    cond = np.linalg.cond(loop)
    if not np.isfinite(cond) or cond >= singular_cond:
        raise SingularFeedthrough(f"I - Lambda D is singular (condition number {cond:.3g})")
    K = np.linalg.inv(loop)
    return ControllerErrorGain(K @ Lam @ C, K @ Lam @ D_tilde, K, Lam)


def build_error_system(plant, reference_check, tol=None):
    """Error system of the plant against a reference sharing its nominal (A, B, C, D)."""
    tol = settings.KEEPCLOSE_MODEL_MATCH_TOL if tol is None else tol
    pairs = (
        ("A", plant.A, reference_check.A),
        ("B", plant.control_input, reference_check.control_input),
        ("C", plant.C, reference_check.C),
        ("D", plant.control_feedthrough, reference_check.control_feedthrough),
    )
    for name, ours, theirs in pairs:
        if ours.shape != theirs.shape:
            raise ModelMismatch(f"{name} differs in shape: {ours.shape} vs {theirs.shape}")
        gap = float(np.max(np.abs(ours - theirs))) if ours.size else 0.0
        if gap > tol:
            raise ModelMismatch(f"plant and reference {name} differ by {gap:.3g}")
    return ErrorSystem(plant)


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    """Per-vertex extended system over ``chi = (zeta, xi)``.

    Inputs are ``q = (q_delta, q_eps)`` through ``B1`` and ``eta`` through ``B2``;
    outputs are the tracking error ``z`` and the filter output ``r``.
    """

    Acal: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    vertex: np.ndarray
    n_zeta: int
    xi: object

    @property
    def n_chi(self):
        return self.Acal.shape[0]

    @property
    def q_dim(self):
        return self.B1.shape[1]

    @property
    def eta_dim(self):
        return self.B2.shape[1]

    @property
    def z_dim(self):
        return self.C2.shape[0]

    @property
    def M(self):
        return self.xi.M

    def rhs(self, chi, q, eta):
        return self.Acal @ chi + self.B1 @ q + self.B2 @ eta

    def outputs(self, chi, q, eta):
        z = self.C2 @ chi + self.D21 @ q + self.D22 @ eta
        r = self.C1 @ chi + self.D11 @ q + self.D12 @ eta
        return z, r

    def output_rows(self, rows):
        rows = list(np.atleast_1d(rows))
        return ExtendedSystem(
            self.Acal, self.B1, self.B2, self.C1, self.C2[rows], self.D11, self.D12,
            self.D21[rows], self.D22[rows], self.vertex, self.n_zeta, self.xi,
        )


def build_extended(err, gain, xi):
    """Extended system at one vertex; q is ``(q_delta, q_eps)`` plus any further
    controller-side blocks of size m, which enter the loop the way eps does."""
    n, m, d = err.n, err.m, err.d
    blocks, rest = divmod(xi.q_dim - d, m) if m else (0, xi.q_dim - d)
    if rest or blocks < 1:
        raise DimensionMismatch(f"filter reads {xi.q_dim} q channels, error system has {d} + {m}")
    if gain.G_zeta.shape != (m, n) or gain.G_eps.shape != (m, m):
        raise DimensionMismatch("controller error gain does not match the error system")
    n_xi = xi.n_xi
    eta_dim = xi.p_dim

    Acal = scipy.linalg.block_diag(err.A + err.B @ gain.G_zeta, xi.A_xi)
    B1 = np.vstack([np.hstack([err.B @ gain.G_q + err.B_tilde] + [err.B @ gain.G_eps] * blocks), xi.B_xi1])
    B2 = np.vstack([np.zeros((n, eta_dim)), xi.B_xi2])
    C1 = np.hstack([np.zeros((xi.r_dim, n)), xi.C_xi])

    if not np.any(err.D):
        # mu enters z only through D, so the simplified gains apply
        C2 = np.hstack([err.C, np.zeros((err.p, n_xi))])
        D21 = np.hstack([err.D_tilde, np.zeros((err.p, blocks * m))])
    else:
        C2 = np.hstack([err.C + err.D @ gain.G_zeta, np.zeros((err.p, n_xi))])
        D21 = np.hstack([err.D @ gain.G_q + err.D_tilde] + [err.D @ gain.G_eps] * blocks)

    ext = ExtendedSystem(
        Acal=np.reshape(Acal, (n + n_xi, n + n_xi)),
        B1=B1,
        B2=B2,
        C1=C1,
        C2=C2,
        D11=xi.D_xi1,
        D12=xi.D_xi2,
        D21=D21,
        D22=np.zeros((err.p, eta_dim)),
        vertex=gain.vertex,
        n_zeta=n,
        xi=xi,
    )
    logger.debug("Extended system at vertex %s: %d states", gain.vertex.ravel().tolist(), ext.n_chi)
    return ext
