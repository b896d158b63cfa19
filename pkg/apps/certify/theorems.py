"""certify/theorems.py"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from django.conf import settings
from scipy.integrate import cumulative_trapezoid

from core.exceptions import (
    BoundOrder,
    EmptyList,
    GammaOutOfRange,
    GridMismatch,
    InfeasibleAtUpper,
    NonPositiveGamma,
    NonPositiveSigma,
    UnsupportedFeedthrough,
)
from lmi.problem import NEGATIVE, POSITIVE, LmiConstraint, LmiProblem, is_feasible, minimize_s

logger = logging.getLogger(__name__)

RISE = "RISE"
SSE = "SSE"

LAMBDA_MODES = ("auto", "single", "per_factor")


@dataclass(frozen=True, eq=False)
class Certificate:
    metric: str
    level: float
    witness: object
    vertices: int
    bisection_trace: list = field(default_factory=list)
    channel: str = ""
    lambda_mode: str = "single"
    solver: str = ""

    @property
    def factor(self):
        """``2 level / (1 - level)``, only meaningful below one."""
        if self.metric != RISE or not 0 < self.level < 1:
            return None
        return 2 * self.level / (1 - self.level)

    def to_dict(self):
        return {
            "metric": self.metric,
            "level": self.level,
            "factor_2g_over_1mg": self.factor,
            "vertices": self.vertices,
            "bisection_trace": [[level, feasible] for level, feasible in self.bisection_trace],
            "witness_eigs": np.linalg.eigvalsh(self.witness.P).tolist(),
            "channel": self.channel,
            "lambda_mode": self.lambda_mode,
            "lambda": self.witness.lam.tolist(),
            "P": self.witness.P.tolist(),
            "solver": self.solver,
        }


@dataclass(frozen=True)
class TubeBound:
    factor: float
    reference_norm: float
    bound: float


def tube_bound(gamma, ref_norm):
    if not 0 < gamma < 1:
        raise GammaOutOfRange(f"tube bound needs 0 < gamma < 1, got {gamma}")
    factor = 2 * gamma / (1 - gamma)
    return TubeBound(factor=factor, reference_norm=float(ref_norm), bound=factor * float(ref_norm))


def _lambda_terms(ext, M, mode):
    R = np.hstack([ext.C1, ext.D11, ext.D12])
    if mode == "single":
        return (R.T @ M @ R,)
    return tuple(R[rows].T @ M[rows, rows] @ R[rows] for rows in ext.xi.row_slices)


def _storage_terms(ext):
    n, nq, ne = ext.n_chi, ext.q_dim, ext.eta_dim
    E = np.hstack([np.eye(n), np.zeros((n, nq + ne))])
    G = np.hstack([ext.Acal, ext.B1, ext.B2])
    return ((E, G),)


def _supply(ext):
    size = ext.n_chi + ext.q_dim + ext.eta_dim
    constant = np.zeros((size, size))
    constant[size - ext.eta_dim :, size - ext.eta_dim :] = -np.eye(ext.eta_dim)
    return constant


def _n_lambda(ext, mode):
    return 1 if mode == "single" else len(ext.xi.row_slices)


def rise_lmi(ext, M, gamma, lambda_mode="single", lambda_floor=None):
    """Dissipation LMI bounding the L2 gain from eta to z by gamma at one vertex."""
    if gamma <= 0:
        raise NonPositiveGamma(f"gamma={gamma} must be positive")
    lambda_floor = settings.KEEPCLOSE_TOL_FEAS if lambda_floor is None else lambda_floor
    M = ext.M if M is None else np.asarray(M, dtype=float)
    H = np.hstack([ext.C2, ext.D21, ext.D22])
    constant = _supply(ext) + (H.T @ H) / gamma**2
    label = f"rise[{np.ravel(ext.vertex).tolist()}]"
    constraint = LmiConstraint(
        label, NEGATIVE, constant, p_terms=_storage_terms(ext), lambda_terms=_lambda_terms(ext, M, lambda_mode)
    )
    return LmiProblem(
        n=ext.n_chi,
        n_lambda=_n_lambda(ext, lambda_mode),
        constraints=(constraint,),
        lambda_floor=lambda_floor,
        label=label,
    )


def sse_lmis(ext, M, sigma=None, lambda_mode="single", lambda_floor=None):
    """Storage decrease plus the Schur bound ``[[P, C2'], [C2, sigma^2 I]] > 0``.

    With ``sigma=None`` the square ``s = sigma^2`` is left as a decision variable.
    """
    if sigma is not None and sigma <= 0:
        raise NonPositiveSigma(f"sigma={sigma} must be positive")
    if np.any(ext.D21) or np.any(ext.D22):
        raise UnsupportedFeedthrough("the peak bound needs z to depend on the state only (D21 = D22 = 0)")
    lambda_floor = settings.KEEPCLOSE_TOL_FEAS if lambda_floor is None else lambda_floor
    M = ext.M if M is None else np.asarray(M, dtype=float)
    label = f"sse[{np.ravel(ext.vertex).tolist()}]"
    decrease = LmiConstraint(
        label + ".decrease",
        NEGATIVE,
        _supply(ext),
        p_terms=_storage_terms(ext),
        lambda_terms=_lambda_terms(ext, M, lambda_mode),
    )

    n, nz = ext.n_chi, ext.z_dim
    E = np.hstack([np.eye(n), np.zeros((n, nz))])
    constant = np.block([[np.zeros((n, n)), ext.C2.T], [ext.C2, np.zeros((nz, nz))]])
    s_term = scipy.linalg.block_diag(np.zeros((n, n)), np.eye(nz))
    if sigma is not None:
        constant = constant + sigma**2 * s_term
    peak = LmiConstraint(
        label + ".peak",
        POSITIVE,
        constant,
        p_terms=((E, 0.5 * E),),
        lambda_terms=tuple(np.zeros((n + nz, n + nz)) for _ in range(_n_lambda(ext, lambda_mode))),
        s_term=None if sigma is not None else s_term,
    )
    return LmiProblem(
        n=n,
        n_lambda=_n_lambda(ext, lambda_mode),
        constraints=(decrease, peak),
        has_s=sigma is None,
        lambda_floor=lambda_floor,
        label=label,
    )


def _joint(problems, label):
    first = problems[0]
    constraints = tuple(c for prob in problems for c in prob.constraints)
    return LmiProblem(
        n=first.n,
        n_lambda=first.n_lambda,
        constraints=constraints,
        has_s=first.has_s,
        lambda_floor=first.lambda_floor,
        label=label,
    )


def _per_vertex(builder, ext_vertices, workers):
    workers = settings.KEEPCLOSE_THREADS if workers is None else workers
    if workers <= 1 or len(ext_vertices) == 1:
        return [builder(ext) for ext in ext_vertices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(builder, ext_vertices))


def _modes(lambda_mode, ext_vertices):
    if lambda_mode not in LAMBDA_MODES:
        raise ValueError(f"unknown multiplier mode '{lambda_mode}'")
    if lambda_mode != "auto":
        return (lambda_mode,)
    if len(ext_vertices[0].xi.row_slices) > 1:
        return ("single", "per_factor")
    return ("single",)


def _check(problem_for, ext_vertices, modes, workers, solve=is_feasible):
    """Joint solve over every vertex, trying each multiplier mode in turn."""
    result = None
    for mode in modes:
        problems = _per_vertex(lambda ext: problem_for(ext, mode), ext_vertices, workers)
        result = solve(_joint(problems, problems[0].label.split("[")[0]))
        if result.feasible:
            return result, mode
    return result, modes[-1]


def _bisect(problem_for, ext_vertices, level_range, tol_bisect, max_iter, modes, workers, metric):
    lo, hi = (float(v) for v in level_range)
    if not 0 < lo < hi:
        raise BoundOrder(f"search range must satisfy 0 < lo < hi, got ({lo}, {hi})")
    tol_bisect = settings.KEEPCLOSE_BISECT_TOL if tol_bisect is None else tol_bisect
    max_iter = settings.KEEPCLOSE_BISECT_MAX_ITER if max_iter is None else max_iter
    trace = []

    best, mode = _check(lambda ext, m: problem_for(ext, hi, m), ext_vertices, modes, workers)
    trace.append((hi, best.feasible))
    if not best.feasible:
        raise InfeasibleAtUpper(
            f"no {metric} certificate at the upper edge {hi:g} ({best.status})", upper=hi, trace=trace
        )
    level = hi

    low_result, low_mode = _check(lambda ext, m: problem_for(ext, lo, m), ext_vertices, modes, workers)
    trace.append((lo, low_result.feasible))
    if low_result.feasible:
        return lo, low_result, low_mode, trace

    for _ in range(max_iter):
        if hi / lo - 1 <= tol_bisect:
            break
        mid = math.sqrt(lo * hi)
        result, m = _check(lambda ext, mm: problem_for(ext, mid, mm), ext_vertices, modes, workers)
        trace.append((mid, result.feasible))
        if result.feasible:
            hi, level, best, mode = mid, mid, result, m
        else:
            lo = mid
    logger.info("%s bisection finished at %.6g after %d solves", metric, level, len(trace))
    return level, best, mode, trace


def _recheck(problem_for, ext_vertices, level, mode, workers, metric):
    result, _ = _check(lambda ext, m: problem_for(ext, 2 * level, m), ext_vertices, (mode,), workers)
    if not result.feasible:
        logger.warning("%s feasibility not monotone: feasible at %.6g but not at %.6g", metric, level, 2 * level)
    return result.feasible


def certify_rise(
    ext_vertices,
    M=None,
    gamma_range=(1e-4, 1e2),
    tol_bisect=None,
    *,
    max_iter=None,
    lambda_mode="auto",
    workers=None,
    channel="",
):
    """Smallest gamma in range certified by one storage function shared by all vertices."""
    ext_vertices = list(ext_vertices)
    if not ext_vertices:
        raise EmptyList("certify_rise needs at least one vertex")

    def problem_for(ext, gamma, mode):
        return rise_lmi(ext, M, gamma, lambda_mode=mode)

    modes = _modes(lambda_mode, ext_vertices)
    level, result, mode, trace = _bisect(
        problem_for, ext_vertices, gamma_range, tol_bisect, max_iter, modes, workers, RISE
    )
    _recheck(problem_for, ext_vertices, level, mode, workers, RISE)
    cert = Certificate(
        metric=RISE,
        level=level,
        witness=result.witness,
        vertices=len(ext_vertices),
        bisection_trace=trace,
        channel=channel,
        lambda_mode=mode,
        solver=result.solver,
    )
    logger.info("Certified RISE %s gamma=%.6g over %d vertices", channel or "", level, len(ext_vertices))
    return cert


def certify_sse(
    ext_vertices,
    M=None,
    mode="bisect",
    sigma_range=(1e-4, 1e2),
    tol_bisect=None,
    *,
    max_iter=None,
    lambda_mode="auto",
    workers=None,
    channel="",
):
    """Smallest sigma bounding ``|z|_inf / |eta|_2``, by bisection or by minimizing sigma^2."""
    ext_vertices = list(ext_vertices)
    if not ext_vertices:
        raise EmptyList("certify_sse needs at least one vertex")
    modes = _modes(lambda_mode, ext_vertices)

    if mode == "direct":
        lo, hi = (float(v) for v in sigma_range)
        # per-factor multipliers can lower the optimum, so every mode is solved
        solved = [
            _check(lambda ext, m: sse_lmis(ext, M, None, lambda_mode=m), ext_vertices, (each,), workers, solve=minimize_s)
            for each in modes
        ]
        feasible = [pair for pair in solved if pair[0].feasible]
        result, used = min(feasible, key=lambda pair: pair[0].witness.s) if feasible else solved[-1]
        if not result.feasible:
            raise InfeasibleAtUpper(f"no SSE certificate ({result.status})", upper=hi, trace=[(hi, False)])
        level = max(math.sqrt(max(result.witness.s, 0.0)), lo)
        if level > hi:
            raise InfeasibleAtUpper(
                f"smallest certified sigma {level:.6g} exceeds the upper edge {hi:g}",
                upper=hi,
                trace=[(level, True)],
            )
        trace = [(level, True)]
    elif mode == "bisect":

        def problem_for(ext, sigma, m):
            return sse_lmis(ext, M, sigma, lambda_mode=m)

        level, result, used, trace = _bisect(
            problem_for, ext_vertices, sigma_range, tol_bisect, max_iter, modes, workers, SSE
        )
        _recheck(problem_for, ext_vertices, level, used, workers, SSE)
    else:
        raise ValueError(f"unknown SSE mode '{mode}'")

    cert = Certificate(
        metric=SSE,
        level=level,
        witness=result.witness,
        vertices=len(ext_vertices),
        bisection_trace=trace,
        channel=channel,
        lambda_mode=used,
        solver=result.solver,
    )
    logger.info("Certified SSE %s sigma=%.6g over %d vertices (%s)", channel or "", level, len(ext_vertices), mode)
    return cert


def scaled_multiplier(M, lam, row_slices=None):
    """``lam * M`` for one multiplier, block-wise scaling for one per factor."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size == 1:
        return lam[0] * np.asarray(M, dtype=float)
    scaled = np.zeros_like(M, dtype=float)
    for value, rows in zip(lam, row_slices):
        scaled[rows, rows] = value * M[rows, rows]
    return scaled


def _dissipation_terms(traj, P, lam, gamma, M, row_slices):
    t = np.asarray(traj.t, dtype=float)
    for name in ("chi", "z", "eta", "r"):
        if getattr(traj, name).shape[0] != t.size:
            raise GridMismatch(f"trajectory {name} has {getattr(traj, name).shape[0]} samples, grid has {t.size}")
    V = np.einsum("ni,ij,nj->n", traj.chi, P, traj.chi)
    supply = -np.sum(traj.eta**2, axis=1)
    if gamma is not None:
        supply = supply + np.sum(traj.z**2, axis=1) / gamma**2
    Ml = scaled_multiplier(M, lam, row_slices)
    supply = supply + np.einsum("ni,ij,nj->n", traj.r, Ml, traj.r)
    return t, V, supply


def check_dissipation(traj, P, lam, gamma, M, row_slices=None):
    """Largest sample of ``dV/dt + z'z/gamma^2 - eta'eta + lam r'Mr`` (``gamma=None`` drops z)."""
    t, V, supply = _dissipation_terms(traj, P, lam, gamma, M, row_slices)
    if t.size < 3:
        raise GridMismatch("dissipation check needs at least three samples")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise GridMismatch("dissipation check needs a uniform grid")
    dV = np.gradient(V, t)
    return float(np.max(dV + supply))


def integrated_dissipation(traj, P, lam, gamma, M, row_slices=None):
    """Largest ``V(T) + int_0^T (z'z/gamma^2 - eta'eta + lam r'Mr)`` over the grid."""
    t, V, supply = _dissipation_terms(traj, P, lam, gamma, M, row_slices)
    return float(np.max(V - V[0] + cumulative_trapezoid(supply, t, initial=0.0)))
