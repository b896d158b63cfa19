"""nncontroller/bounds.py"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from core.exceptions import BoundOrder, DimensionMismatch, VertexExplosion
from nncontroller.mlp import activate

logger = logging.getLogger(__name__)

# Relative outward padding applied to non-degenerate entries of an enclosure.
ROUNDING_PAD = 1e-12


@dataclass(frozen=True, eq=False)
class IntervalMatrix:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_2d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch(f"interval bounds differ in shape: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise BoundOrder("interval matrix has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def shape(self):
        return self.lo.shape

    @property
    def free(self):
        return self.hi > self.lo

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, matrix, tol=0.0):
        matrix = np.asarray(matrix, dtype=float)
        return bool(np.all(matrix >= self.lo - tol) and np.all(matrix <= self.hi + tol))

    def select(self, rows, cols):
        rows = np.atleast_1d(rows)
        cols = np.atleast_1d(cols)
        return IntervalMatrix(self.lo[np.ix_(rows, cols)], self.hi[np.ix_(rows, cols)])

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _derivative_range(act, lower, upper):
    """Range of the activation derivative over [lower, upper], elementwise."""
    if act == "linear":
        ones = np.ones_like(lower)
        return ones, ones
    # tanh' and sigmoid' are even and decrease with |z|
    nearest = np.clip(0.0, lower, upper)
    farthest = np.maximum(np.abs(lower), np.abs(upper))
    if act == "tanh":
        return 1.0 - np.tanh(farthest) ** 2, 1.0 - np.tanh(nearest) ** 2
    s_far = activate("sigmoid", farthest)
    s_near = activate("sigmoid", nearest)
    return s_far * (1.0 - s_far), s_near * (1.0 - s_near)


def _point_times_interval(W, lo, hi):
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    center = W @ mid
    spread = np.abs(W) @ rad
    return center - spread, center + spread


def jacobian_box(net, box):
    """Sound entrywise enclosure of the Jacobian of ``net`` over ``box``.

    Pre-activation ranges come from interval bound propagation; the layer
    Jacobians ``diag(sigma'(z)) W`` are then multiplied with interval arithmetic.
    """
    lower = np.asarray(box.lower, dtype=float)
    upper = np.asarray(box.upper, dtype=float)
    if lower.size != net.input_dim:
        raise DimensionMismatch(f"box has {lower.size} axes, network has {net.input_dim} inputs")

    a_lo, a_hi = lower, upper
    j_lo = np.eye(net.input_dim)
    j_hi = np.eye(net.input_dim)
    for layer in net.layers:
        z_lo, z_hi = _point_times_interval(layer.W, a_lo, a_hi)
        z_lo = z_lo + layer.b
        z_hi = z_hi + layer.b
        # activations are monotone
        a_lo, a_hi = activate(layer.act, z_lo), activate(layer.act, z_hi)

        j_lo, j_hi = _point_times_interval(layer.W, j_lo, j_hi)
        d_lo, d_hi = _derivative_range(layer.act, z_lo, z_hi)
        d_lo, d_hi = d_lo[:, None], d_hi[:, None]
        # d >= 0, so the sign of the Jacobian bound picks the extreme
        new_lo = np.where(j_lo >= 0.0, d_lo * j_lo, d_hi * j_lo)
        new_hi = np.where(j_hi >= 0.0, d_hi * j_hi, d_lo * j_hi)
        j_lo, j_hi = new_lo, new_hi

    free = j_hi > j_lo
    pad = ROUNDING_PAD * np.maximum(np.abs(j_lo), np.abs(j_hi))
    j_lo = np.where(free, j_lo - pad, j_lo)
    j_hi = np.where(free, j_hi + pad, j_hi)
    return IntervalMatrix(j_lo, j_hi)


def vertex_count(iv):
    return 2 ** int(np.count_nonzero(iv.free))


def vertices(iv, cap=None):
    """Corner matrices of the interval hull in lexicographic (row-major) order."""
    cap = settings.KEEPCLOSE_VERTEX_CAP if cap is None else cap
    count = vertex_count(iv)
    if count > cap:
        raise VertexExplosion(
            f"{count} vertices from {int(np.count_nonzero(iv.free))} free entries exceed the cap of {cap}"
        )
    free_idx = list(zip(*np.nonzero(iv.free)))
    result = []
    for choice in itertools.product((0, 1), repeat=len(free_idx)):
        V = iv.lo.copy()
        for (i, j), pick in zip(free_idx, choice):
            V[i, j] = iv.hi[i, j] if pick else iv.lo[i, j]
        result.append(V)
    logger.debug("Enumerated %d vertices of a %s interval matrix", len(result), iv.shape)
    return result
