"""nncontroller/epsilon.py"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from core.exceptions import BoundOrder, DimensionMismatch, GridTooCoarse, NegativeBound
from nncontroller.mlp import forward

logger = logging.getLogger(__name__)


class EpsilonKind:
    NORM = "norm"
    SECTOR = "sector"


@dataclass(frozen=True, eq=False)
class EpsilonBound:
    """Bound on the training error ``eps(y) = pi(y) - pi*(y)`` over a box.

    ``mode`` records how a norm bound was measured: ``amplitude`` (|eps| <= c) or
    ``gain`` (|eps(y)| <= c |y|). Only the gain reading is a pointwise hard IQC
    against p = y.
    """

    kind: str
    c: float = 0.0
    alpha: np.ndarray = None
    beta: np.ndarray = None
    mode: str = "amplitude"
    domain: object = None
    grid_density: int = 0
    samples: int = 0
    sampled_max: float = 0.0
    channel_inputs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind == EpsilonKind.NORM and self.c < 0:
            raise NegativeBound(f"epsilon bound c={self.c} is negative")
        if self.kind == EpsilonKind.SECTOR and np.any(np.asarray(self.alpha) > np.asarray(self.beta)):
            raise BoundOrder("epsilon sector has alpha > beta")

    def to_dict(self):
        data = {"kind": self.kind, "mode": self.mode, "grid_density": self.grid_density, "samples": self.samples}
        if self.kind == EpsilonKind.NORM:
            data["c"] = self.c
        else:
            data["alpha"] = np.asarray(self.alpha).tolist()
            data["beta"] = np.asarray(self.beta).tolist()
            data["channel_inputs"] = list(self.channel_inputs)
        data["sampled_max"] = self.sampled_max
        return data


def evaluate_ideal(ideal, Y):
    """Apply a pointwise ideal controller to every row of ``Y``."""
    return np.array([np.atleast_1d(np.asarray(ideal(row), dtype=float)) for row in Y])


def estimate_epsilon(
    net,
    ideal,
    box,
    grid_density,
    mode="amplitude",
    margin=None,
    channel_inputs=None,
    min_grid=None,
    reference_inputs=None,
):
    """Sample ``pi - pi*`` over ``box`` and inflate the observed bound.

    ``mode`` is ``amplitude``, ``gain`` or ``sector``. The gain is measured
    against the first ``reference_inputs`` network inputs (default: all); the
    rest are commands shared by both loops. For ``sector`` output k is compared
    against input ``channel_inputs[k]``. Grids larger than
    ``KEEPCLOSE_SAMPLE_BUDGET`` points are replaced by Sobol samples.
    """
    margin = settings.KEEPCLOSE_EPS_MARGIN if margin is None else margin
    min_grid = settings.KEEPCLOSE_MIN_GRID if min_grid is None else min_grid
    if grid_density < min_grid:
        raise GridTooCoarse(f"grid density {grid_density} per axis is below {min_grid}")
    if box.dim != net.input_dim:
        raise DimensionMismatch(f"box has {box.dim} axes, network has {net.input_dim} inputs")

    Y = box.points(grid_density, settings.KEEPCLOSE_SAMPLE_BUDGET)
    where = {"domain": box, "grid_density": int(grid_density), "samples": int(Y.shape[0])}
    eps = forward(net, Y) - evaluate_ideal(ideal, Y)

    if mode == "amplitude":
        sampled = float(np.max(np.linalg.norm(eps, axis=1)))
        bound = EpsilonBound(
            EpsilonKind.NORM, c=(1.0 + margin) * sampled, mode=mode, sampled_max=sampled, **where
        )
    elif mode == "gain":
        k = net.input_dim if reference_inputs is None else int(reference_inputs)
        size = np.linalg.norm(Y[:, :k], axis=1)
        keep = size > 1e-9 * max(float(np.max(size)), 1.0)
        ratio = np.linalg.norm(eps[keep], axis=1) / size[keep]
        sampled = float(np.max(ratio)) if ratio.size else 0.0
        # eps must vanish where the reference output does, whatever the commands
        residual = np.linalg.norm(eps[~keep], axis=1)
        if residual.size and float(np.max(residual)) > 1e-12 * max(float(np.max(np.abs(eps))), 1.0):
            sampled = math.inf
        bound = EpsilonBound(
            EpsilonKind.NORM, c=(1.0 + margin) * sampled, mode=mode, sampled_max=sampled, **where
        )
    elif mode == "sector":
        if channel_inputs is None:
            channel_inputs = tuple(range(eps.shape[1]))
        if len(channel_inputs) != eps.shape[1]:
            raise DimensionMismatch("one input channel per controller output is required")
        alpha = np.zeros(eps.shape[1])
        beta = np.zeros(eps.shape[1])
        for k, j in enumerate(channel_inputs):
            p = Y[:, j]
            keep = np.abs(p) > 1e-9 * max(float(np.max(np.abs(p))), 1.0)
            slopes = eps[keep, k] / p[keep]
            lo, hi = (float(np.min(slopes)), float(np.max(slopes))) if slopes.size else (0.0, 0.0)
            alpha[k] = lo - margin * abs(lo)
            beta[k] = hi + margin * abs(hi)
        bound = EpsilonBound(
            EpsilonKind.SECTOR,
            alpha=alpha,
            beta=beta,
            mode=mode,
            sampled_max=float(np.max(np.abs(eps))),
            channel_inputs=tuple(channel_inputs),
            **where,
        )
    else:
        raise ValueError(f"unknown epsilon mode '{mode}'")

    logger.info("Training-error bound (%s): %s", mode, bound.to_dict())
    return bound

