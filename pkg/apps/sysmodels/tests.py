import numpy as np
import scipy.linalg
from django.test import SimpleTestCase

from core.exceptions import BoundOrder, DimensionMismatch, EmptyList, GridMismatch, NonFiniteEntry
from sysmodels.statespace import (
    LpvParameterBox,
    StateSpace,
    block_diag,
    is_hurwitz,
    new_state_space,
    signal_norms,
)


def random_system(rng, n, m=1, p=1):
    return new_state_space(
        rng.normal(size=(n, n)), rng.normal(size=(n, m)), rng.normal(size=(p, n)), np.zeros((p, m))
    )


class NewStateSpaceTests(SimpleTestCase):
    def test_arm_error_system(self):
        sys = new_state_space([[-6, -9], [1, 0]], [[10, 1], [0, 0]], [[0, 1]], [[0, 0]], 1)
        self.assertEqual((sys.n, sys.m, sys.p), (2, 2, 1))
        np.testing.assert_array_equal(sys.disturbance_input, [[10], [0]])
        np.testing.assert_array_equal(sys.control_input, [[1], [0]])
        self.assertEqual(sys.disturbance_feedthrough.shape, (1, 1))

    def test_zero_system(self):
        sys = new_state_space(0, 0, 0, 0)
        self.assertEqual(sys.A.shape, (1, 1))
        self.assertFalse(sys.A.any())

    def test_static_gain(self):
        sys = new_state_space(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2))
        self.assertTrue(sys.is_static)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            new_state_space(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), 0)

    def test_bad_split(self):
        with self.assertRaises(DimensionMismatch):
            new_state_space(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), 0, disturbance_split=2)

    def test_non_finite(self):
        with self.assertRaises(NonFiniteEntry):
            new_state_space([[np.nan]], 1, 1, 0)

    def test_matrices_are_frozen(self):
        sys = new_state_space([[-1.0]], 1, 1, 0)
        with self.assertRaises(ValueError):
            sys.A[0, 0] = 5.0

    def test_dict_form(self):
        sys = new_state_space([[-6, -9], [1, 0]], [[10, 1], [0, 0]], [[0, 1]], [[0, 0]], 1)
        again = StateSpace.from_dict(sys.to_dict())
        np.testing.assert_array_equal(again.B, sys.B)
        self.assertEqual(again.disturbance_split, 1)


class HurwitzTests(SimpleTestCase):
    def test_examples(self):
        self.assertTrue(is_hurwitz([[-6, -9], [1, 0]]))
        self.assertFalse(is_hurwitz([[0.0]]))
        self.assertFalse(is_hurwitz([[1.0]]))

    def test_agrees_with_matrix_exponential_decay(self):
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 100:
            A = rng.normal(size=(3, 3)) - rng.uniform(0.0, 2.0) * np.eye(3)
            abscissa = np.max(np.linalg.eigvals(A).real)
            if abs(abscissa) < 0.05:
                continue
            x0 = rng.normal(size=3)
            horizon = 20.0 / abs(abscissa)
            late = np.linalg.norm(scipy.linalg.expm(A * horizon) @ x0)
            self.assertEqual(is_hurwitz(A), late < np.linalg.norm(x0))
            checked += 1


class BlockDiagTests(SimpleTestCase):
    def test_two_first_order_filters(self):
        a = new_state_space([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
        b = new_state_space([[-2.0]], [[1.0]], [[1.0]], [[0.0]])
        sys = block_diag([a, b])
        np.testing.assert_array_equal(sys.A, [[-1.0, 0.0], [0.0, -2.0]])
        self.assertEqual((sys.n, sys.m, sys.p), (2, 2, 2))

    def test_single_system_is_returned(self):
        a = new_state_space([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
        self.assertIs(block_diag([a]), a)

    def test_static_blocks_add_outputs(self):
        psi = new_state_space(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2))
        xi = block_diag([psi, psi])
        self.assertEqual((xi.n, xi.p, xi.m), (0, 4, 4))

    def test_empty(self):
        with self.assertRaises(EmptyList):
            block_diag([])

    def test_eigenvalues_are_the_union(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            parts = [random_system(rng, int(n)) for n in rng.integers(2, 5, size=2)]
            stacked = block_diag(parts)
            expected = np.sort_complex(np.concatenate([np.linalg.eigvals(s.A) for s in parts]))
            np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(stacked.A)), expected, atol=1e-10)


class ParameterBoxTests(SimpleTestCase):
    def test_bound_order(self):
        with self.assertRaises(BoundOrder):
            LpvParameterBox([1.0], [0.0])

    def test_grid_covers_corners(self):
        box = LpvParameterBox([-1.0, 0.0], [1.0, 2.0])
        grid = box.grid(3)
        self.assertEqual(grid.shape, (9, 2))
        np.testing.assert_array_equal(grid[0], [-1.0, 0.0])
        np.testing.assert_array_equal(grid[-1], [1.0, 2.0])
        self.assertTrue(box.contains(box.center))

    def test_points_keep_small_grids(self):
        box = LpvParameterBox([-1.0, 0.0], [1.0, 2.0])
        np.testing.assert_array_equal(box.points(3, 9), box.grid(3))

    def test_points_sample_large_boxes(self):
        box = LpvParameterBox(-np.ones(6), np.ones(6))
        pts = box.points(100, 1000)
        # 2**9 Sobol points plus the 64 corners
        self.assertEqual(pts.shape, (512 + 64, 6))
        self.assertTrue(all(box.contains(row) for row in pts))
        np.testing.assert_array_equal(pts[-1], np.ones(6))
        np.testing.assert_array_equal(pts, box.points(100, 1000))

    def test_select(self):
        box = LpvParameterBox([-1.0, 0.0, 5.0], [1.0, 2.0, 6.0])
        sub = box.select([2, 0])
        np.testing.assert_array_equal(sub.lower, [5.0, -1.0])
        np.testing.assert_array_equal(sub.upper, [6.0, 1.0])


class SignalNormTests(SimpleTestCase):
    def test_constant_signal(self):
        t = np.linspace(0.0, 4.0, 401)
        norms = signal_norms(t, 2.0 * np.ones_like(t))
        self.assertAlmostEqual(norms.l2, 4.0)
        self.assertAlmostEqual(norms.linf, 2.0)

    def test_vector_samples_use_euclidean_norm(self):
        t = np.linspace(0.0, 1.0, 11)
        x = np.tile([3.0, 4.0], (11, 1))
        self.assertAlmostEqual(signal_norms(t, x).linf, 5.0)

    def test_grid_mismatch(self):
        with self.assertRaises(GridMismatch):
            signal_norms(np.arange(3.0), np.zeros(4))
