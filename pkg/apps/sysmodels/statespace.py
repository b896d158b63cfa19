"""sysmodels/statespace.py"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from django.conf import settings
from scipy.integrate import trapezoid
from scipy.stats import qmc

from core.exceptions import (
    BoundOrder,
    DimensionMismatch,
    EigenFailure,
    EmptyList,
    GridMismatch,
    NonFiniteEntry,
)

logger = logging.getLogger(__name__)


def as_matrix(value, name="matrix"):
    """Coerce scalars, vectors and nested lists into a 2-D float array."""
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntry(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time (A, B, C, D) with a recorded disturbance split.

    Columns ``B[:, :disturbance_split]`` and ``D[:, :disturbance_split]`` are the
    disturbance input (B~, D~); the remaining columns are the control input.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    disturbance_split: int = 0

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def disturbance_input(self):
        return self.B[:, : self.disturbance_split]

    @property
    def control_input(self):
        return self.B[:, self.disturbance_split :]

    @property
    def disturbance_feedthrough(self):
        return self.D[:, : self.disturbance_split]

    @property
    def control_feedthrough(self):
        return self.D[:, self.disturbance_split :]

    @property
    def is_static(self):
        return self.n == 0

    def to_dict(self):
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "disturbance_split": self.disturbance_split,
        }

    @classmethod
    def from_dict(cls, data):
        return new_state_space(
            data["A"], data["B"], data["C"], data["D"], data.get("disturbance_split", 0)
        )

    def __str__(self):
        return f"StateSpace(n={self.n}, m={self.m}, p={self.p}, split={self.disturbance_split})"


def new_state_space(A, B, C, D, disturbance_split=0):
    """Validate and freeze a state-space model.

    Empty state dimensions are allowed (static gains): pass ``A`` as a 0x0 array
    together with ``B`` 0xm and ``C`` px0.
    """
    A = _shaped(A, "A")
    B = _shaped(B, "B")
    C = _shaped(C, "C")
    D = _shaped(D, "D")

    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {n}x{n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, A is {n}x{n}")
    if D.shape != (C.shape[0], B.shape[1]):
        raise DimensionMismatch(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
    if not 0 <= disturbance_split <= B.shape[1]:
        raise DimensionMismatch(
            f"disturbance_split {disturbance_split} outside 0..{B.shape[1]}"
        )

    for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteEntry(f"{name} has non-finite entries")
        arr.setflags(write=False)

    return StateSpace(A, B, C, D, int(disturbance_split))


def _shaped(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr.copy()


def is_hurwitz(A, tol=None):
    """True iff every eigenvalue of ``A`` has real part below ``-tol``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if A.shape[0] == 0:
        return True
    tol = settings.KEEPCLOSE_TOL_STAB if tol is None else tol
    try:
        eigs = scipy.linalg.eigvals(A)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(f"Eigenvalue iteration failed: {e}") from e
    return bool(np.max(eigs.real) < -tol)


def block_diag(systems, disturbance_split=0):
    """Block-diagonal stack of state-space systems."""
    systems = list(systems)
    if not systems:
        raise EmptyList("block_diag needs at least one system")
    if len(systems) == 1:
        return systems[0]

    A = scipy.linalg.block_diag(*[s.A for s in systems])
    B = scipy.linalg.block_diag(*[s.B for s in systems])
    C = scipy.linalg.block_diag(*[s.C for s in systems])
    D = scipy.linalg.block_diag(*[s.D for s in systems])
    # scipy drops empty blocks' shapes, so rebuild the row/column counts
    n = sum(s.n for s in systems)
    m = sum(s.m for s in systems)
    p = sum(s.p for s in systems)
    return new_state_space(
        np.reshape(A, (n, n)),
        np.reshape(B, (n, m)),
        np.reshape(C, (p, n)),
        np.reshape(D, (p, m)),
        disturbance_split,
    )


@dataclass(frozen=True, eq=False)
class LpvParameterBox:
    """Axis-aligned box ``lower <= s <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch(f"box bounds differ in shape: {lower.shape} vs {upper.shape}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise NonFiniteEntry("box bounds must be finite")
        if np.any(lower > upper):
            raise BoundOrder(f"box lower {lower} exceeds upper {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.size

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)

    def contains(self, point, tol=0.0):
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol))

    def select(self, axes):
        axes = list(axes)
        return LpvParameterBox(self.lower[axes], self.upper[axes])

    def grid(self, density):
        """All points of a tensor grid with ``density`` samples per axis."""
        axes = [np.linspace(lo, hi, int(density)) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def points(self, density, budget, seed=0):
        """The tensor grid when it has at most ``budget`` points, otherwise a
        scrambled Sobol sample of about ``budget`` points plus every corner."""
        if float(density) ** self.dim <= budget:
            return self.grid(density)
        sampler = qmc.Sobol(d=self.dim, scramble=True, seed=seed)
        unit = sampler.random_base2(m=max(1, int(np.floor(np.log2(budget)))))
        corners = np.array(list(itertools.product((0.0, 1.0), repeat=self.dim)))
        unit = np.vstack([unit, corners])
        return self.lower + unit * (self.upper - self.lower)

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["lower"], data["upper"])


@dataclass(frozen=True)
class SignalNorms:
    l2: float
    linf: float


def signal_norms(t, x):
    """Trapezoidal L2 norm and sample sup-norm of a sampled signal.

    ``x`` is (N,) or (N, k); vector samples are measured with the Euclidean norm.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != t.size:
        raise GridMismatch(f"signal has {x.shape[0]} samples, grid has {t.size}")
    sq = np.sum(x**2, axis=1)
    l2 = float(np.sqrt(max(trapezoid(sq, t), 0.0))) if t.size > 1 else 0.0
    linf = float(np.sqrt(np.max(sq))) if sq.size else 0.0
    return SignalNorms(l2=l2, linf=linf)
