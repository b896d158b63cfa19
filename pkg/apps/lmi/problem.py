"""lmi/problem.py"""

import logging
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from django.conf import settings

from core.exceptions import DimensionMismatch, NonPositiveS, SolverUnknown

logger = logging.getLogger(__name__)

NEGATIVE = "<"
POSITIVE = ">"

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNKNOWN = "unknown"

# Floor on P's eigenvalues accepted as positive semidefinite.
PSD_FLOOR = -1e-9


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """``F = constant + sum(E'PG + G'PE) + sum(lam_k L_k) + s S``, required ``< 0`` or ``> 0``."""

    label: str
    sense: str
    constant: np.ndarray
    p_terms: tuple = field(default_factory=tuple)
    lambda_terms: tuple = field(default_factory=tuple)
    s_term: np.ndarray = None

    def __post_init__(self):
        if self.sense not in (NEGATIVE, POSITIVE):
            raise DimensionMismatch(f"constraint sense must be '<' or '>', got {self.sense!r}")
        size = self.constant.shape[0]
        if self.constant.shape != (size, size):
            raise DimensionMismatch(f"constraint '{self.label}' constant is not square")
        for E, G in self.p_terms:
            if E.shape != G.shape or E.shape[1] != size:
                raise DimensionMismatch(f"constraint '{self.label}' has a P term of shape {E.shape}/{G.shape}")
        for L in self.lambda_terms:
            if L.shape != (size, size):
                raise DimensionMismatch(f"constraint '{self.label}' has a multiplier term of shape {L.shape}")

    @property
    def size(self):
        return self.constant.shape[0]


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """Constraints affine in a symmetric ``P`` (n x n), multipliers ``lam`` and optionally ``s``."""

    n: int
    n_lambda: int
    constraints: tuple
    has_s: bool = False
    lambda_floor: float = 0.0
    p_floor: float = 0.0
    label: str = ""


@dataclass(frozen=True, eq=False)
class Witness:
    P: np.ndarray
    lam: np.ndarray
    s: float = None
    margins: dict = field(default_factory=dict)

    @property
    def margin(self):
        """Smallest distance from the boundary over all constraints."""
        return min(self.margins.values()) if self.margins else 0.0

    def to_dict(self):
        return {
            "P": self.P.tolist(),
            "lambda": self.lam.tolist(),
            "s": self.s,
            "margins": self.margins,
        }


@dataclass(frozen=True, eq=False)
class LmiResult:
    status: str
    witness: Witness = None
    solver: str = ""
    detail: str = ""

    @property
    def feasible(self):
        return self.status == FEASIBLE


def evaluate(constraint, witness):
    """Numeric value of a constraint at a witness, symmetrized."""
    F = np.array(constraint.constant, dtype=float)
    for E, G in constraint.p_terms:
        F = F + E.T @ witness.P @ G + G.T @ witness.P @ E
    for lam, L in zip(witness.lam, constraint.lambda_terms):
        F = F + lam * L
    if constraint.s_term is not None and witness.s is not None:
        F = F + witness.s * constraint.s_term
    return 0.5 * (F + F.T)


def constraint_margin(constraint, witness):
    """Signed margin: positive when the constraint holds strictly."""
    eigs = np.linalg.eigvalsh(evaluate(constraint, witness))
    return float(-eigs[-1]) if constraint.sense == NEGATIVE else float(eigs[0])


def schur_embed(P, C2, s):
    """``[[P, C2'], [C2, s I]]``; for s > 0 this is positive definite iff ``P - C2'C2/s`` is."""
    if s <= 0:
        raise NonPositiveS(f"s={s} must be positive")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    if C2.shape[1] != P.shape[0]:
        raise DimensionMismatch(f"C2 has {C2.shape[1]} columns, P is {P.shape[0]}x{P.shape[0]}")
    return np.block([[P, C2.T], [C2, s * np.eye(C2.shape[0])]])


def _expression(constraint, P, lam, s):
    expr = constraint.constant
    for E, G in constraint.p_terms:
        expr = expr + E.T @ P @ G + G.T @ P @ E
    for k, L in enumerate(constraint.lambda_terms):
        expr = expr + lam[k] * L
    if constraint.s_term is not None:
        expr = expr + s * constraint.s_term
    return expr


def _build(prob, margin, objective):
    P = cp.Variable((prob.n, prob.n), symmetric=True)
    lam = cp.Variable(prob.n_lambda) if prob.n_lambda else None
    s = cp.Variable() if prob.has_s else None

    cons = [P >> prob.p_floor * np.eye(prob.n)] if prob.n else []
    if lam is not None:
        cons.append(lam >= prob.lambda_floor)
    if s is not None:
        cons.append(s >= 0)
    for c in prob.constraints:
        Z = cp.Variable((c.size, c.size), symmetric=True)
        cons.append(Z == _expression(c, P, lam, s))
        if c.sense == NEGATIVE:
            cons.append(Z << -margin * np.eye(c.size))
        else:
            cons.append(Z >> margin * np.eye(c.size))

    if objective == "s":
        goal = cp.Minimize(s)
    else:
        terms = [cp.trace(P)] if prob.n else []
        if lam is not None:
            terms.append(cp.sum(lam))
        goal = cp.Minimize(sum(terms) if terms else 0)
    return cp.Problem(goal, cons), P, lam, s


def _verify(prob, witness, tol_feas):
    margins = {}
    for c in prob.constraints:
        margins[c.label] = constraint_margin(c, witness)
    ok = all(m >= tol_feas / 2 for m in margins.values())
    if prob.n:
        ok = ok and float(np.min(np.linalg.eigvalsh(witness.P))) >= PSD_FLOOR
    if prob.n_lambda:
        ok = ok and bool(np.all(witness.lam >= 0.0))
    return ok, margins


def _solve(prob, objective, tol_feas, margin, solvers):
    problem, P, lam, s = _build(prob, margin, objective)
    failures = []
    for name in solvers:
        try:
            problem.solve(solver=name)
        except (cp.error.SolverError, ValueError, ArithmeticError) as e:
            failures.append(f"{name}: {e}")
            logger.debug("Solver %s failed on %s: %s", name, prob.label, e)
            continue

        if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return LmiResult(INFEASIBLE, solver=name, detail=problem.status)
        if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or P.value is None:
            failures.append(f"{name}: {problem.status}")
            continue

        P_val = 0.5 * (P.value + P.value.T) if prob.n else np.zeros((0, 0))
        lam_val = np.asarray(lam.value, dtype=float) if lam is not None else np.zeros(0)
        s_val = float(s.value) if s is not None else None
        witness = Witness(P_val, lam_val, s_val)
        ok, margins = _verify(prob, witness, tol_feas)
        witness = Witness(P_val, lam_val, s_val, margins)
        if ok:
            return LmiResult(FEASIBLE, witness=witness, solver=name, detail=problem.status)
        failures.append(f"{name}: solution failed re-verification (margin {min(margins.values()):.3g})")

    raise SolverUnknown("; ".join(failures) or "no solver configured")


def _run(prob, objective, tol_feas, margin, solvers):
    tol_feas = settings.KEEPCLOSE_TOL_FEAS if tol_feas is None else tol_feas
    margin = settings.KEEPCLOSE_SOLVE_MARGIN if margin is None else margin
    solvers = settings.KEEPCLOSE_SOLVERS if solvers is None else solvers
    try:
        result = _solve(prob, objective, tol_feas, margin, solvers)
    except SolverUnknown as e:
        logger.warning("No usable solver answer for %s: %s", prob.label or "LMI problem", e)
        return LmiResult(UNKNOWN, detail=str(e))
    logger.debug("%s: %s via %s", prob.label or "LMI problem", result.status, result.solver)
    return result


def is_feasible(prob, tol_feas=None, margin=None, solvers=None):
    """Feasibility solve; Feasible results are re-verified with an eigenvalue check."""
    return _run(prob, "trace", tol_feas, margin, solvers)


def minimize_s(prob, tol_feas=None, margin=None, solvers=None):
    """Smallest feasible ``s``; the problem must declare ``has_s``."""
    if not prob.has_s:
        raise DimensionMismatch("minimize_s needs a problem with an s variable")
    return _run(prob, "s", tol_feas, margin, solvers)


def _write_matrix(stream, M):
    for row in np.atleast_2d(M):
        stream.write("  " + " ".join("%.9g" % v for v in row) + "\n")


def dump_problem(prob, stream):
    """Plain-text dump of every constraint block for external cross-checking."""
    stream.write(f"# problem {prob.label or '-'}: P {prob.n}x{prob.n}, {prob.n_lambda} multipliers")
    stream.write(", s\n" if prob.has_s else "\n")
    for c in prob.constraints:
        stream.write(f"lmi {c.label} {c.sense} 0 size {c.size}\n")
        stream.write("constant\n")
        _write_matrix(stream, c.constant)
        for k, (E, G) in enumerate(c.p_terms):
            stream.write(f"P-term {k} E\n")
            _write_matrix(stream, E)
            stream.write(f"P-term {k} G\n")
            _write_matrix(stream, G)
        for k, L in enumerate(c.lambda_terms):
            stream.write(f"lambda {k}\n")
            _write_matrix(stream, L)
        if c.s_term is not None:
            stream.write("s\n")
            _write_matrix(stream, c.s_term)
        stream.write("end\n")
