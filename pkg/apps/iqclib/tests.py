import numpy as np
from django.test import SimpleTestCase

from core.exceptions import BoundOrder, DimensionMismatch, EmptyList, GridMismatch, NegativeBound
from iqclib.factors import (
    IqcFactor,
    UncertaintyClass,
    combine,
    eval_hard_iqc,
    filter_output,
    iqc_running_integral,
    norm_bound_iqc,
    sector_iqc,
)
from sysmodels.statespace import new_state_space


class SectorIqcTests(SimpleTestCase):
    def test_arm_sector_is_static(self):
        f = sector_iqc(0.0, 0.364)
        self.assertTrue(f.psi.is_static)
        np.testing.assert_allclose(np.hstack([f.D_p, f.D_q]), [[0.364, -1.0], [0.0, 1.0]])
        np.testing.assert_array_equal(f.M, [[0.0, 1.0], [1.0, 0.0]])

    def test_degenerate_sector_vanishes_on_graph(self):
        f = sector_iqc(0.7, 0.7)
        t = np.linspace(0.0, 5.0, 501)
        p = np.sin(t)
        running = iqc_running_integral(f, p, 0.7 * p, t)
        np.testing.assert_allclose(running, 0.0, atol=1e-14)

    def test_in_sector_signal_has_positive_integral(self):
        t = np.linspace(0.0, 10.0, 2001)
        p = np.sin(t)
        self.assertGreater(eval_hard_iqc(sector_iqc(0.0, 0.364), p, 0.2 * p, t, 10.0), 0.0)

    def test_integrand_nonnegative_in_sector(self):
        rng = np.random.default_rng(0)
        f = sector_iqc([0.0, -1.0], [0.364, 2.0])
        p = rng.normal(size=(500, 2))
        slopes = rng.uniform([0.0, -1.0], [0.364, 2.0], size=(500, 2))
        r = filter_output(f, p, slopes * p, np.arange(500.0))
        self.assertTrue(np.all(np.einsum("ni,ij,nj->n", r, f.M, r) >= -1e-12))

    def test_input_map_selects_velocity(self):
        f = sector_iqc([-0.08], [-0.007], input_map=[[0.0, 1.0]])
        self.assertEqual((f.p_dim, f.q_dim), (2, 1))
        t = np.linspace(0.0, 1.0, 11)
        p = np.column_stack([1e3 * np.ones_like(t), 5.0 * np.ones_like(t)])
        self.assertGreater(eval_hard_iqc(f, p, -0.05 * p[:, 1], t), 0.0)

    def test_bound_order(self):
        with self.assertRaises(BoundOrder):
            sector_iqc(1.0, 0.0)


class NormIqcTests(SimpleTestCase):
    def setUp(self):
        self.t = np.linspace(0.0, 10.0, 1001)
        self.p = np.sin(self.t)

    def test_inside_class(self):
        value = eval_hard_iqc(norm_bound_iqc(0.2), self.p, 0.1 * self.p, self.t)
        energy = eval_hard_iqc(norm_bound_iqc(1.0), self.p, 0.0 * self.p, self.t)
        self.assertAlmostEqual(value, 0.03 * energy)

    def test_outside_class(self):
        self.assertLess(eval_hard_iqc(norm_bound_iqc(0.2), self.p, 0.3 * self.p, self.t), 0.0)

    def test_zero_bound_forces_zero(self):
        self.assertEqual(eval_hard_iqc(norm_bound_iqc(0.0), self.p, 0.0 * self.p, self.t), 0.0)
        self.assertLess(eval_hard_iqc(norm_bound_iqc(0.0), self.p, 1e-3 * self.p, self.t), 0.0)

    def test_negative(self):
        with self.assertRaises(NegativeBound):
            norm_bound_iqc(-0.1)

    def test_quadratic_in_scaling(self):
        f = norm_bound_iqc(0.5)
        base = eval_hard_iqc(f, self.p, 0.1 * self.p, self.t)
        self.assertAlmostEqual(eval_hard_iqc(f, 3 * self.p, 0.3 * self.p, self.t), 9 * base)


class CombineTests(SimpleTestCase):
    def test_sector_and_norm(self):
        xi = combine([sector_iqc(0.0, 0.364), norm_bound_iqc(0.2)])
        self.assertEqual(xi.M.shape, (4, 4))
        self.assertEqual(xi.n_xi, 0)
        self.assertEqual((xi.q_dim, xi.p_dim), (2, 2))
        # q_delta drives the first two rows only, q_eps the last two
        np.testing.assert_array_equal(xi.D_xi1, [[-1, 0], [1, 0], [0, 0], [0, 1]])
        np.testing.assert_allclose(xi.D_xi2, [[0.364, 0], [0, 0], [0, 1], [0, 0]])
        np.testing.assert_allclose(xi.factor_M(1), np.diag([0.04, -1.0]))

    def test_singleton_is_the_factor(self):
        f = sector_iqc(0.0, 0.364)
        xi = combine([f])
        self.assertIs(xi, f)
        self.assertEqual(xi.row_slices, (slice(0, 2),))
        self.assertEqual(xi.labels, ("sector",))
        self.assertEqual((xi.n_xi, xi.q_dim, xi.p_dim, xi.r_dim), (0, 1, 1, 2))
        np.testing.assert_array_equal(xi.factor_M(0), f.M)
        np.testing.assert_array_equal(xi.D_xi1, f.D_q)
        np.testing.assert_array_equal(xi.D_xi2, f.D_p)

    def test_eta_maps_share_one_exogenous_vector(self):
        # eta = (y1, y2, y1_hat, y2_hat); sector on y2, gain on the reference pair
        S_delta = [[0.0, 1.0, 0.0, 0.0]]
        S_eps = np.hstack([np.zeros((2, 2)), np.eye(2)])
        xi = combine([sector_iqc(0.0, 0.5), norm_bound_iqc(0.1, q_dim=1, p_dim=2)], eta_maps=[S_delta, S_eps])
        self.assertEqual((xi.q_dim, xi.p_dim), (2, 4))
        np.testing.assert_allclose(xi.D_xi2[0], [0.0, 0.5, 0.0, 0.0])
        np.testing.assert_allclose(xi.D_xi2[2:4], S_eps)

    def test_eta_map_rows_must_match_factor(self):
        with self.assertRaises(DimensionMismatch):
            combine([sector_iqc(0.0, 0.5)], eta_maps=[np.eye(2)])

    def test_dynamic_factor_keeps_states(self):
        psi = new_state_space([[-1.0]], [[1.0, 0.0]], [[1.0], [0.0]], [[0.0, 0.0], [0.0, 1.0]], 1)
        dyn = IqcFactor(psi, np.diag([1.0, -1.0]))
        xi = combine([dyn, norm_bound_iqc(0.1)])
        self.assertEqual(xi.n_xi, 1)
        self.assertEqual(xi.B_xi2.shape, (1, 2))
        self.assertEqual(xi.psi.m, 4)

    def test_empty(self):
        with self.assertRaises(EmptyList):
            combine([])

    def test_combined_integral_is_the_sum(self):
        t = np.linspace(0.0, 5.0, 501)
        p = np.column_stack([np.sin(t), np.cos(t)])
        q = np.column_stack([0.1 * p[:, 0], 0.05 * p[:, 1]])
        a, b = sector_iqc(0.0, 0.364), norm_bound_iqc(0.2)
        total = eval_hard_iqc(combine([a, b]), p, q, t)
        parts = eval_hard_iqc(a, p[:, :1], q[:, :1], t) + eval_hard_iqc(b, p[:, 1:], q[:, 1:], t)
        self.assertAlmostEqual(total, parts)


class EvalHardIqcTests(SimpleTestCase):
    def test_zero_q_on_sector_starting_at_zero(self):
        t = np.linspace(0.0, 3.0, 301)
        self.assertEqual(eval_hard_iqc(sector_iqc(0.0, 0.364), np.sin(t), np.zeros_like(t), t), 0.0)

    def test_arm_mismatch_along_a_swing(self):
        t = np.linspace(0.0, 20.0, 4001)
        theta = 1.5 * np.sin(0.8 * t) * np.exp(-0.05 * t)
        running = iqc_running_integral(sector_iqc(0.0, 0.364), theta, theta - np.sin(theta), t)
        self.assertGreaterEqual(running.min(), -1e-9)

    def test_out_of_sector_is_detected(self):
        t = np.linspace(0.0, 10.0, 1001)
        p = np.sin(t)
        q = np.where(t > 2.0, 0.6 * p, 0.1 * p)
        running = iqc_running_integral(sector_iqc(0.0, 0.364), p, q, t)
        self.assertLess(running.min(), 0.0)

    def test_grid_mismatch(self):
        t = np.linspace(0.0, 1.0, 11)
        with self.assertRaises(GridMismatch):
            eval_hard_iqc(norm_bound_iqc(1.0), np.zeros(10), np.zeros(11), t)
        with self.assertRaises(GridMismatch):
            eval_hard_iqc(norm_bound_iqc(1.0), np.zeros(11), np.zeros(11), t, T=2.0)


class UncertaintyClassTests(SimpleTestCase):
    def test_from_dict(self):
        sector = UncertaintyClass.from_dict({"kind": "sector", "alpha": [0.0], "beta": [0.364]})
        norm = UncertaintyClass.from_dict({"kind": "norm", "c": 0.2})
        self.assertEqual(sector.factor().r_dim, 2)
        self.assertAlmostEqual(norm.factor().M[0, 0], 0.04)
        self.assertEqual(norm.to_dict(), {"kind": "norm", "c": 0.2})

    def test_membership(self):
        sector = UncertaintyClass("sector", alpha=[0.0], beta=[0.364])
        theta = np.linspace(-np.pi / 2, np.pi / 2, 101)[:, None]
        self.assertTrue(sector.contains(theta, theta - np.sin(theta)))
        self.assertFalse(sector.contains(theta, 0.5 * theta))
