"""iqclib/factors.py"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal
from scipy.integrate import cumulative_trapezoid

from core.exceptions import BoundOrder, DimensionMismatch, EmptyList, GridMismatch, NegativeBound, ScenarioError
from sysmodels.statespace import is_hurwitz, new_state_space

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IqcFactor:
    """Hard IQC factorization (psi, M); psi reads the stacked input (p, q).

    ``psi.disturbance_split`` is the size of p, so ``psi.disturbance_input`` is the
    p block of B and ``psi.control_input`` the q block.
    """

    psi: object
    M: np.ndarray
    label: str = ""

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if not np.allclose(M, M.T, atol=0.0):
            raise DimensionMismatch("IQC middle matrix must be symmetric")
        if M.shape[0] != self.psi.p:
            raise DimensionMismatch(f"psi has {self.psi.p} outputs, M is {M.shape[0]}x{M.shape[1]}")
        if not (self.psi.is_static or is_hurwitz(self.psi.A)):
            raise DimensionMismatch("IQC filter must be stable or static")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def p_dim(self):
        return self.psi.disturbance_split

    @property
    def q_dim(self):
        return self.psi.m - self.psi.disturbance_split

    @property
    def r_dim(self):
        return self.M.shape[0]

    @property
    def A(self):
        return self.psi.A

    @property
    def B_p(self):
        return self.psi.disturbance_input

    @property
    def B_q(self):
        return self.psi.control_input

    @property
    def C(self):
        return self.psi.C

    @property
    def D_p(self):
        return self.psi.disturbance_feedthrough

    @property
    def D_q(self):
        return self.psi.control_feedthrough

    # a lone factor is its own extended filter
    A_xi = property(lambda self: self.A)
    B_xi1 = property(lambda self: self.B_q)
    B_xi2 = property(lambda self: self.B_p)
    C_xi = property(lambda self: self.C)
    D_xi1 = property(lambda self: self.D_q)
    D_xi2 = property(lambda self: self.D_p)

    @property
    def n_xi(self):
        return self.A.shape[0]

    @property
    def row_slices(self):
        return (slice(0, self.r_dim),)

    @property
    def labels(self):
        return (self.label,)

    def factor_M(self, index):
        rows = self.row_slices[index]
        return self.M[rows, rows]


@dataclass(frozen=True, eq=False)
class CombinedFilter:
    """Extended filter over the stacked input (q_1..q_k, p_1..p_k).

    ``row_slices[i]`` selects the rows of r (and of M) that belong to factor i.
    """

    A_xi: np.ndarray
    B_xi1: np.ndarray
    B_xi2: np.ndarray
    C_xi: np.ndarray
    D_xi1: np.ndarray
    D_xi2: np.ndarray
    M: np.ndarray
    row_slices: tuple = field(default_factory=tuple)
    labels: tuple = field(default_factory=tuple)

    @property
    def n_xi(self):
        return self.A_xi.shape[0]

    @property
    def q_dim(self):
        return self.B_xi1.shape[1]

    @property
    def p_dim(self):
        return self.B_xi2.shape[1]

    @property
    def r_dim(self):
        return self.M.shape[0]

    # shared accessor names with IqcFactor for signal evaluation
    A = property(lambda self: self.A_xi)
    B_q = property(lambda self: self.B_xi1)
    B_p = property(lambda self: self.B_xi2)
    C = property(lambda self: self.C_xi)
    D_q = property(lambda self: self.D_xi1)
    D_p = property(lambda self: self.D_xi2)

    @property
    def psi(self):
        """The filter as one state-space model with inputs ordered (q, p)."""
        return new_state_space(
            self.A_xi,
            np.hstack([self.B_xi1, self.B_xi2]),
            self.C_xi,
            np.hstack([self.D_xi1, self.D_xi2]),
            self.q_dim,
        )

    def factor_M(self, index):
        rows = self.row_slices[index]
        return self.M[rows, rows]


def _static_psi(D, p_dim):
    D = np.asarray(D, dtype=float)
    return new_state_space(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D, p_dim)


def sector_iqc(alpha, beta, input_map=None):
    """Static sector multiplier ``r_k = [beta_k p_k - q_k; q_k - alpha_k p_k]`` per channel.

    ``input_map`` (k x p_dim) picks the component of p each channel acts on; the
    default is the identity. ``r'Mr = 2 (beta p - q)(q - alpha p) >= 0`` inside the sector.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if alpha.shape != beta.shape:
        raise DimensionMismatch(f"alpha {alpha.shape} and beta {beta.shape} differ")
    if np.any(alpha > beta):
        raise BoundOrder(f"sector has alpha {alpha} > beta {beta}")
    k = alpha.size
    S = np.eye(k) if input_map is None else np.atleast_2d(np.asarray(input_map, dtype=float))
    if S.shape[0] != k:
        raise DimensionMismatch(f"input_map has {S.shape[0]} rows for {k} sector channels")

    D_p = np.zeros((2 * k, S.shape[1]))
    D_q = np.zeros((2 * k, k))
    for i in range(k):
        D_p[2 * i] = beta[i] * S[i]
        D_p[2 * i + 1] = -alpha[i] * S[i]
        D_q[2 * i, i] = -1.0
        D_q[2 * i + 1, i] = 1.0
    M = np.kron(np.eye(k), np.array([[0.0, 1.0], [1.0, 0.0]]))
    return IqcFactor(_static_psi(np.hstack([D_p, D_q]), S.shape[1]), M, label="sector")


def norm_bound_iqc(c, q_dim=1, p_dim=None):
    """Static gain multiplier ``M = diag(c^2 I_p, -I_q)``: ``c^2 |p|^2 - |q|^2 >= 0``."""
    c = float(c)
    if c < 0:
        raise NegativeBound(f"norm bound c={c} is negative")
    p_dim = q_dim if p_dim is None else p_dim
    M = scipy.linalg.block_diag(c**2 * np.eye(p_dim), -np.eye(q_dim))
    return IqcFactor(_static_psi(np.eye(p_dim + q_dim), p_dim), M, label="norm")


def combine(factors, eta_maps=None):
    """Stack factors into one filter over ``(q_1..q_k, p)``.

    Without ``eta_maps`` the p inputs are stacked too (``p = (p_1..p_k)``) and a
    single factor comes back unchanged. ``eta_maps[i]`` instead reads
    ``p_i = eta_maps[i] @ eta`` from one shared exogenous vector.
    """
    factors = list(factors)
    if not factors:
        raise EmptyList("combine needs at least one IQC factor")
    if eta_maps is None and len(factors) == 1:
        return factors[0]
    if eta_maps is not None:
        eta_maps = [np.atleast_2d(np.asarray(S, dtype=float)) for S in eta_maps]
        if len(eta_maps) != len(factors):
            raise DimensionMismatch(f"{len(eta_maps)} eta maps for {len(factors)} factors")
        if len({S.shape[1] for S in eta_maps}) != 1:
            raise DimensionMismatch("eta maps read exogenous vectors of different sizes")
        for f, S in zip(factors, eta_maps):
            if S.shape[0] != f.p_dim:
                raise DimensionMismatch(f"eta map gives {S.shape[0]} p inputs, factor reads {f.p_dim}")

    slices = []
    start = 0
    for f in factors:
        slices.append(slice(start, start + f.r_dim))
        start += f.r_dim

    n = sum(f.A.shape[0] for f in factors)
    q_dim = sum(f.q_dim for f in factors)
    p_dim = sum(f.p_dim for f in factors)
    r_dim = start

    def stack(parts, rows, cols):
        return np.reshape(scipy.linalg.block_diag(*parts), (rows, cols))

    if eta_maps is None:
        B_xi2 = stack([f.B_p for f in factors], n, p_dim)
        D_xi2 = stack([f.D_p for f in factors], r_dim, p_dim)
    else:
        p_dim = eta_maps[0].shape[1]
        B_xi2 = np.reshape(np.vstack([f.B_p @ S for f, S in zip(factors, eta_maps)]), (n, p_dim))
        D_xi2 = np.vstack([f.D_p @ S for f, S in zip(factors, eta_maps)])

    combined = CombinedFilter(
        A_xi=stack([f.A for f in factors], n, n),
        B_xi1=stack([f.B_q for f in factors], n, q_dim),
        B_xi2=B_xi2,
        C_xi=stack([f.C for f in factors], r_dim, n),
        D_xi1=stack([f.D_q for f in factors], r_dim, q_dim),
        D_xi2=D_xi2,
        M=stack([f.M for f in factors], r_dim, r_dim),
        row_slices=tuple(slices),
        labels=tuple(f.label for f in factors),
    )
    logger.debug("Combined %d IQC factors: %d filter states, r of size %d", len(factors), n, r_dim)
    return combined


def _signals(t, signal, name):
    signal = np.asarray(signal, dtype=float)
    if signal.ndim == 1:
        signal = signal[:, None]
    if signal.shape[0] != t.size:
        raise GridMismatch(f"{name} has {signal.shape[0]} samples, grid has {t.size}")
    return signal


def filter_output(factor, p, q, t):
    """Response r of the IQC filter to sampled (p, q) from a zero filter state."""
    t = np.asarray(t, dtype=float)
    p = _signals(t, p, "p")
    q = _signals(t, q, "q")
    if p.shape[1] != factor.p_dim or q.shape[1] != factor.q_dim:
        raise DimensionMismatch(
            f"filter expects p of size {factor.p_dim} and q of size {factor.q_dim}, "
            f"got {p.shape[1]} and {q.shape[1]}"
        )
    r = p @ factor.D_p.T + q @ factor.D_q.T
    if factor.A.shape[0]:
        system = scipy.signal.StateSpace(
            factor.A, np.hstack([factor.B_p, factor.B_q]), factor.C, np.zeros((factor.C.shape[0], p.shape[1] + q.shape[1]))
        )
        _, y, _ = scipy.signal.lsim(system, np.hstack([p, q]), t)
        r = r + np.reshape(y, r.shape)
    return r


def iqc_running_integral(factor, p, q, t):
    """Prefix integrals ``int_0^T r'Mr`` for every T on the grid."""
    r = filter_output(factor, p, q, t)
    integrand = np.einsum("ni,ij,nj->n", r, factor.M, r)
    return cumulative_trapezoid(integrand, np.asarray(t, dtype=float), initial=0.0)


def eval_hard_iqc(factor, p, q, t, T=None):
    """Trapezoidal ``int_0^T r'Mr`` with ``T`` defaulting to the end of the grid."""
    t = np.asarray(t, dtype=float)
    running = iqc_running_integral(factor, p, q, t)
    if T is None:
        return float(running[-1])
    if T < t[0] or T > t[-1] * (1 + 1e-12):
        raise GridMismatch(f"T={T} outside the sample grid [{t[0]}, {t[-1]}]")
    return float(np.interp(T, t, running))


@dataclass(frozen=True, eq=False)
class UncertaintyClass:
    """Declared class of an uncertain operator: sector bounded or norm bounded."""

    kind: str
    alpha: np.ndarray = None
    beta: np.ndarray = None
    c: float = 0.0
    input_map: np.ndarray = None
    q_dim: int = 1
    p_dim: int = None
    domain: object = None

    def __post_init__(self):
        if self.kind == "sector":
            alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
            beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
            if np.any(alpha > beta):
                raise BoundOrder(f"sector has alpha {alpha} > beta {beta}")
            object.__setattr__(self, "alpha", alpha)
            object.__setattr__(self, "beta", beta)
            object.__setattr__(self, "q_dim", alpha.size)
        elif self.kind == "norm":
            if self.c < 0:
                raise NegativeBound(f"norm bound c={self.c} is negative")
        else:
            raise ScenarioError(f"unknown uncertainty kind '{self.kind}'")

    def factor(self):
        if self.kind == "sector":
            return sector_iqc(self.alpha, self.beta, self.input_map)
        return norm_bound_iqc(self.c, self.q_dim, self.p_dim)

    def contains(self, p, q, tol=1e-12):
        """Pointwise class membership of sampled (p, q)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if self.kind == "norm":
            return bool(np.all(np.linalg.norm(q, axis=1) <= self.c * np.linalg.norm(p, axis=1) + tol))
        S = np.eye(self.alpha.size) if self.input_map is None else np.asarray(self.input_map)
        sp = p @ S.T
        lo = np.minimum(self.alpha * sp, self.beta * sp)
        hi = np.maximum(self.alpha * sp, self.beta * sp)
        return bool(np.all(q >= lo - tol) and np.all(q <= hi + tol))

    def to_dict(self):
        if self.kind == "norm":
            return {"kind": "norm", "c": self.c}
        data = {"kind": "sector", "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}
        if self.input_map is not None:
            data["input_map"] = np.asarray(self.input_map).tolist()
        return data

    @classmethod
    def from_dict(cls, data, domain=None):
        try:
            if data["kind"] == "norm":
                return cls("norm", c=float(data["c"]), domain=domain)
            return cls(
                data["kind"],
                alpha=data["alpha"],
                beta=data["beta"],
                input_map=data.get("input_map"),
                domain=domain,
            )
        except KeyError as e:
            raise ScenarioError(f"Uncertainty description is missing key {e}") from e
