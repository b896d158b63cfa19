import io

import numpy as np
from django.test import SimpleTestCase, tag

from core.exceptions import NonPositiveS
from lmi.problem import (
    FEASIBLE,
    INFEASIBLE,
    NEGATIVE,
    POSITIVE,
    UNKNOWN,
    LmiConstraint,
    LmiProblem,
    constraint_margin,
    dump_problem,
    is_feasible,
    minimize_s,
    schur_embed,
)
from sysmodels.statespace import is_hurwitz


def lyapunov_problem(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    decrease = LmiConstraint("decrease", NEGATIVE, np.zeros((n, n)), p_terms=((np.eye(n), A),))
    return LmiProblem(n=n, n_lambda=0, constraints=(decrease,), label="lyapunov")


class FeasibilityTests(SimpleTestCase):
    def test_stable_scalar(self):
        result = is_feasible(lyapunov_problem([[-1.0]]))
        self.assertEqual(result.status, FEASIBLE)
        self.assertGreater(result.witness.P[0, 0], 0.0)

    def test_unstable_scalar(self):
        self.assertEqual(is_feasible(lyapunov_problem([[1.0]])).status, INFEASIBLE)

    def test_witness_is_reverified(self):
        result = is_feasible(lyapunov_problem([[-1.0, 2.0], [0.0, -3.0]]), tol_feas=1e-7)
        c = lyapunov_problem([[-1.0, 2.0], [0.0, -3.0]]).constraints[0]
        self.assertGreaterEqual(constraint_margin(c, result.witness), 0.5e-7)
        self.assertGreaterEqual(result.witness.margin, 0.5e-7)

    def test_multiplier_term(self):
        # -1 + lam * 1 < 0 and lam * 1 > 0.5
        upper = LmiConstraint("upper", NEGATIVE, -np.eye(1), lambda_terms=(np.eye(1),))
        lower = LmiConstraint("lower", POSITIVE, -0.5 * np.eye(1), lambda_terms=(np.eye(1),))
        prob = LmiProblem(n=1, n_lambda=1, constraints=(upper, lower))
        result = is_feasible(prob)
        self.assertTrue(result.feasible)
        self.assertTrue(0.5 < result.witness.lam[0] < 1.0)

    def test_no_solver_is_unknown(self):
        self.assertEqual(is_feasible(lyapunov_problem([[-1.0]]), solvers=[]).status, UNKNOWN)

    @tag("slow")
    def test_agrees_with_eigenvalue_oracle(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 200:
            A = rng.normal(size=(3, 3))
            abscissa = np.max(np.linalg.eigvals(A).real)
            if abs(abscissa) < 1e-1:
                continue
            result = is_feasible(lyapunov_problem(A))
            self.assertEqual(result.feasible, is_hurwitz(A), msg=f"A={A.tolist()}")
            checked += 1


class MinimizeSTests(SimpleTestCase):
    def test_smallest_s(self):
        bound = LmiConstraint("bound", POSITIVE, -2.0 * np.eye(1), s_term=np.eye(1))
        prob = LmiProblem(n=1, n_lambda=0, constraints=(bound,), has_s=True)
        result = minimize_s(prob)
        self.assertTrue(result.feasible)
        self.assertAlmostEqual(result.witness.s, 2.0, places=4)


class SchurEmbedTests(SimpleTestCase):
    def test_decoupled(self):
        M = schur_embed(np.eye(2), np.zeros((1, 2)), 1.0)
        self.assertTrue(np.all(np.linalg.eigvalsh(M) > 0))

    def test_positive_definite_example(self):
        M = schur_embed([[1.0]], [[1.0]], 2.0)
        np.testing.assert_array_equal(M, [[1.0, 1.0], [1.0, 2.0]])
        self.assertAlmostEqual(np.linalg.det(M), 1.0)

    def test_indefinite_example(self):
        M = schur_embed([[1.0]], [[2.0]], 1.0)
        self.assertAlmostEqual(np.linalg.det(M), -3.0)
        self.assertLess(np.min(np.linalg.eigvalsh(M)), 0.0)

    def test_non_positive_s(self):
        with self.assertRaises(NonPositiveS):
            schur_embed(np.eye(1), np.eye(1), 0.0)


class DumpTests(SimpleTestCase):
    def test_block_format(self):
        stream = io.StringIO()
        dump_problem(lyapunov_problem([[-1.0]]), stream)
        text = stream.getvalue()
        self.assertIn("lmi decrease < 0 size 1", text)
        self.assertIn("P-term 0 G\n  -1\n", text)
        self.assertTrue(text.rstrip().endswith("end"))
