import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DimensionMismatch, ModelMismatch, SingularFeedthrough
from errorsys.assembly import build_error_system, build_extended, controller_error_gain
from iqclib.factors import IqcFactor, combine, norm_bound_iqc, sector_iqc
from sysmodels.statespace import new_state_space


def arm_plant():
    return new_state_space([[-6.0, -10.0], [1.0, 0.0]], [[10.0, 1.0], [0.0, 0.0]], [[0.0, 1.0]], [[0.0, 0.0]], 1)


def arm_filter(c=0.2):
    return combine([sector_iqc(0.0, 0.364), norm_bound_iqc(c)])


class ControllerErrorGainTests(SimpleTestCase):
    def test_zero_feedthrough_branch(self):
        plant = new_state_space(np.eye(2) * -1, [[0.0], [1.0]], [[0.0, 1.0]], 0)
        gain = controller_error_gain([[2.0]], plant)
        np.testing.assert_array_equal(gain.G_zeta, [[0.0, 2.0]])
        self.assertEqual(gain.G_q.shape, (1, 0))
        np.testing.assert_array_equal(gain.G_eps, np.eye(1))

    def test_scalar_feedthrough_scales_every_gain(self):
        plant = new_state_space([[-1.0]], [[1.0, 1.0]], [[1.0]], [[0.5, 0.25]], 1)
        gain = controller_error_gain([[2.0]], plant)
        self.assertAlmostEqual(gain.G_eps[0, 0], 2.0)
        self.assertAlmostEqual(gain.G_zeta[0, 0], 4.0)
        self.assertAlmostEqual(gain.G_q[0, 0], 2.0)

    def test_singular_loop(self):
        plant = new_state_space([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
        with self.assertRaises(SingularFeedthrough):
            controller_error_gain([[1.0]], plant)

    def test_wrong_vertex_shape(self):
        with self.assertRaises(DimensionMismatch):
            controller_error_gain(np.ones((2, 2)), arm_plant())


class ErrorSystemTests(SimpleTestCase):
    def test_model_mismatch(self):
        other = new_state_space([[-6.0, -9.0], [1.0, 0.0]], [[1.0], [0.0]], [[0.0, 1.0]], 0)
        with self.assertRaises(ModelMismatch):
            build_error_system(arm_plant(), other)

    def test_reference_without_disturbance_columns_matches(self):
        reference = new_state_space([[-6.0, -10.0], [1.0, 0.0]], [[1.0], [0.0]], [[0.0, 1.0]], 0)
        err = build_error_system(arm_plant(), reference)
        self.assertEqual((err.n, err.d, err.m, err.p), (2, 1, 1, 1))
        np.testing.assert_array_equal(err.B_tilde, [[10.0], [0.0]])

    def test_no_uncertainty_channel(self):
        plant = new_state_space([[-6.0, -10.0], [1.0, 0.0]], [[1.0], [0.0]], [[0.0, 1.0]], 0)
        err = build_error_system(plant, plant)
        self.assertEqual(err.d, 0)
        ext = build_extended(err, controller_error_gain([[1.0]], plant), combine([norm_bound_iqc(0.1)]))
        np.testing.assert_array_equal(ext.B1, [[1.0], [0.0]])


class ExtendedSystemTests(SimpleTestCase):
    def setUp(self):
        self.plant = arm_plant()
        self.err = build_error_system(self.plant, self.plant)

    def test_arm_vertex_with_unit_slope(self):
        ext = build_extended(self.err, controller_error_gain([[1.0]], self.plant), arm_filter())
        np.testing.assert_array_equal(ext.Acal, [[-6.0, -9.0], [1.0, 0.0]])
        np.testing.assert_array_equal(ext.B1, [[10.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(ext.B2, np.zeros((2, 2)))
        np.testing.assert_array_equal(ext.C1, np.zeros((4, 2)))
        np.testing.assert_array_equal(ext.C2, [[0.0, 1.0]])
        np.testing.assert_array_equal(ext.D21, np.zeros((1, 2)))
        np.testing.assert_array_equal(ext.D22, np.zeros((1, 2)))
        self.assertEqual(ext.n_chi, 2)

    def test_dimensions_with_dynamic_filter(self):
        psi = new_state_space([[-2.0]], [[1.0, 1.0]], [[1.0], [0.0]], [[0.0, 0.0], [0.0, 1.0]], 1)
        xi = combine([IqcFactor(psi, np.diag([1.0, -1.0])), norm_bound_iqc(0.1)])
        ext = build_extended(self.err, controller_error_gain([[0.5]], self.plant), xi)
        self.assertEqual(ext.n_chi, 3)
        self.assertEqual(ext.C1.shape, (xi.r_dim, 3))
        np.testing.assert_array_equal(ext.Acal[:2, 2:], 0.0)
        np.testing.assert_array_equal(ext.Acal[2:, :2], 0.0)
        np.testing.assert_array_equal(ext.B2[:2], 0.0)
        np.testing.assert_array_equal(ext.C2[:, 2:], 0.0)

    def test_coupling_block_enters_like_epsilon(self):
        xi = combine([sector_iqc(0.0, 0.364), norm_bound_iqc(0.2), norm_bound_iqc(0.5)])
        ext = build_extended(self.err, controller_error_gain([[1.0]], self.plant), xi)
        np.testing.assert_array_equal(ext.B1, [[10.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(ext.D21, np.zeros((1, 3)))
        self.assertEqual(ext.D12.shape, (xi.r_dim, 3))

    def test_filter_channel_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            build_extended(self.err, controller_error_gain([[1.0]], self.plant), combine([norm_bound_iqc(0.1)]))

    def test_affine_in_vertex(self):
        xi = arm_filter()
        low, high, mid = (
            build_extended(self.err, controller_error_gain([[v]], self.plant), xi) for v in (0.6, 1.4, 1.0)
        )
        for name in ("Acal", "B1", "B2", "C1", "C2", "D21"):
            np.testing.assert_allclose(getattr(mid, name), 0.5 * (getattr(low, name) + getattr(high, name)))

    def test_general_feedthrough_matches_algebraic_loop(self):
        rng = np.random.default_rng(3)
        plant = new_state_space(
            rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=(2, 3)), 0.1 * rng.normal(size=(2, 3)), 1
        )
        err = build_error_system(plant, plant)
        Lam = 0.5 * rng.normal(size=(2, 2))
        xi = combine([sector_iqc(-1.0, 1.0), norm_bound_iqc(1.0, q_dim=2, p_dim=2)])
        ext = build_extended(err, controller_error_gain(Lam, plant), xi)
        zeta, q_delta, eps = rng.normal(size=3), rng.normal(size=1), rng.normal(size=2)
        # mu = Lam (C zeta + D mu + D~ q) + eps solved directly
        D = plant.control_feedthrough
        mu = np.linalg.solve(np.eye(2) - Lam @ D, Lam @ (plant.C @ zeta + plant.disturbance_feedthrough @ q_delta) + eps)
        q = np.concatenate([q_delta, eps])
        eta = np.zeros(ext.eta_dim)
        expected = plant.A @ zeta + plant.control_input @ mu + plant.disturbance_input @ q_delta
        np.testing.assert_allclose(ext.rhs(zeta, q, eta), expected)
        z, _ = ext.outputs(zeta, q, eta)
        np.testing.assert_allclose(z, plant.C @ zeta + D @ mu + plant.disturbance_feedthrough @ q_delta)

    def test_output_rows(self):
        ext = build_extended(self.err, controller_error_gain([[1.0]], self.plant), arm_filter())
        self.assertEqual(ext.output_rows([0]).z_dim, 1)
