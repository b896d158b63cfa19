import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from core.exceptions import DimensionMismatch, GridTooCoarse, ScenarioError, VertexExplosion
from nncontroller.bounds import IntervalMatrix, jacobian_box, vertex_count, vertices
from nncontroller.epsilon import EpsilonKind, estimate_epsilon
from nncontroller.mlp import Layer, MlpController, forward, jacobian, load_weights, save_weights
from nncontroller.training import build_module, export_layers, fit_to_teacher, parse_arch
from sysmodels.statespace import LpvParameterBox


def scalar_tanh_net(w1=1.0, w2=1.0):
    return MlpController([Layer([[w1]], [0.0], "tanh"), Layer([[w2]], [0.0], "linear")])


def random_net(rng, sizes, act="tanh"):
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        last = k == len(sizes) - 2
        layers.append(
            Layer(rng.normal(size=(fan_out, fan_in)), rng.normal(size=fan_out), "linear" if last else act)
        )
    return MlpController(layers)


class ForwardTests(SimpleTestCase):
    def test_constant_net_returns_output_bias(self):
        net = MlpController([Layer(np.zeros((2, 3)), np.zeros(2), "tanh"), Layer(np.zeros((1, 2)), [0.3], "linear")])
        self.assertAlmostEqual(forward(net, np.array([1.0, -2.0, 5.0]))[0], 0.3)

    def test_odd_tanh_net(self):
        net = scalar_tanh_net()
        self.assertEqual(forward(net, [0.0])[0], 0.0)
        self.assertAlmostEqual(forward(net, [1.0])[0], np.tanh(1.0), places=14)

    def test_batch_matches_pointwise(self):
        net = random_net(np.random.default_rng(3), [2, 4, 3])
        Y = np.random.default_rng(4).normal(size=(7, 2))
        batch = forward(net, Y)
        for row, out in zip(Y, batch):
            np.testing.assert_allclose(forward(net, row), out)

    def test_wrong_input_size(self):
        with self.assertRaises(DimensionMismatch):
            forward(scalar_tanh_net(), [1.0, 2.0])

    def test_rejects_unsupported_activation(self):
        with self.assertRaises(ScenarioError):
            Layer([[1.0]], [0.0], "relu")


class JacobianTests(SimpleTestCase):
    def test_linear_net_is_its_weight(self):
        W = np.array([[1.0, -2.0], [0.5, 3.0]])
        net = MlpController([Layer(W, [0.1, 0.2], "linear")])
        np.testing.assert_array_equal(jacobian(net, [0.3, -0.7]), W)

    def test_tanh_slope_at_origin(self):
        self.assertEqual(jacobian(scalar_tanh_net(), [0.0])[0, 0], 1.0)

    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        net = random_net(rng, [2, 3, 2])
        h = 1e-5
        for y in rng.uniform(-1.0, 1.0, size=(5, 2)):
            J = jacobian(net, y)
            for j in range(2):
                step = np.zeros(2)
                step[j] = h
                fd = (forward(net, y + step) - forward(net, y - step)) / (2 * h)
                np.testing.assert_allclose(J[:, j], fd, rtol=1e-6, atol=1e-8)

    def test_sigmoid_matches_central_differences(self):
        rng = np.random.default_rng(12)
        net = random_net(rng, [3, 4, 1], act="sigmoid")
        y = rng.normal(size=3)
        h = 1e-5
        J = jacobian(net, y)
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            fd = (forward(net, y + step) - forward(net, y - step)) / (2 * h)
            np.testing.assert_allclose(J[:, j], fd, rtol=1e-6, atol=1e-8)


class JacobianBoxTests(SimpleTestCase):
    def test_linear_net_gives_degenerate_box(self):
        W = np.array([[1.0, -2.0]])
        net = MlpController([Layer(W, [0.0], "linear")])
        iv = jacobian_box(net, LpvParameterBox([-5.0, -5.0], [5.0, 5.0]))
        np.testing.assert_array_equal(iv.lo, W)
        np.testing.assert_array_equal(iv.hi, W)
        self.assertEqual(vertex_count(iv), 1)

    def test_scalar_tanh_enclosure(self):
        iv = jacobian_box(scalar_tanh_net(), LpvParameterBox([-2.0], [2.0]))
        self.assertLessEqual(iv.lo[0, 0], 1.0 / np.cosh(2.0) ** 2)
        self.assertGreaterEqual(iv.hi[0, 0], 1.0)

    def test_sampled_jacobians_stay_inside(self):
        rng = np.random.default_rng(5)
        for sizes in ([1, 1, 1], [2, 3, 2], [2, 4, 4, 1]):
            net = random_net(rng, sizes)
            box = LpvParameterBox(-np.ones(sizes[0]), np.ones(sizes[0]))
            iv = jacobian_box(net, box)
            Y = rng.uniform(box.lower, box.upper, size=(10_000, sizes[0]))
            J = jacobian(net, Y)
            self.assertTrue(np.all(J >= iv.lo) and np.all(J <= iv.hi))

    def test_difference_quotients_lie_in_enclosure(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            net = random_net(rng, [2, 3, 2], act=rng.choice(["tanh", "sigmoid"]))
            y1, y2 = rng.uniform(-2.0, 2.0, size=(2, 2))
            box = LpvParameterBox(np.minimum(y1, y2), np.maximum(y1, y2))
            iv = jacobian_box(net, box)
            d = y1 - y2
            diff = forward(net, y1) - forward(net, y2)
            lo = np.sum(np.minimum(iv.lo * d, iv.hi * d), axis=1)
            hi = np.sum(np.maximum(iv.lo * d, iv.hi * d), axis=1)
            self.assertTrue(np.all(diff >= lo - 1e-12) and np.all(diff <= hi + 1e-12))


class VerticesTests(SimpleTestCase):
    def test_scalar_interval_has_two_corners(self):
        corners = vertices(IntervalMatrix([[0.0]], [[0.5]]))
        self.assertEqual([v[0, 0] for v in corners], [0.0, 0.5])

    def test_degenerate_entry_is_not_doubled(self):
        iv = IntervalMatrix([[1.0], [0.0]], [[1.0], [2.0]])
        corners = vertices(iv)
        self.assertEqual(len(corners), 2)
        for corner in corners:
            self.assertTrue(iv.contains(corner))
            self.assertEqual(corner[0, 0], 1.0)

    def test_count_and_explosion(self):
        iv = IntervalMatrix(np.zeros((3, 4)), np.ones((3, 4)))
        self.assertEqual(vertex_count(iv), 4096)
        with self.assertRaises(VertexExplosion):
            vertices(iv, cap=4095)
        bigger = IntervalMatrix(np.zeros((3, 5)), np.ones((3, 5)))
        with self.assertRaises(VertexExplosion):
            vertices(bigger)

    def test_lexicographic_order(self):
        iv = IntervalMatrix([[0.0, 0.0]], [[1.0, 1.0]])
        corners = [tuple(v.ravel()) for v in vertices(iv)]
        self.assertEqual(corners, [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)])

    def test_select_keeps_bounds(self):
        iv = IntervalMatrix([[0.0, 1.0], [2.0, 3.0]], [[0.5, 1.5], [2.5, 3.5]])
        sub = iv.select([1], [0, 1])
        np.testing.assert_array_equal(sub.lo, [[2.0, 3.0]])


class EpsilonTests(SimpleTestCase):
    def setUp(self):
        self.box = LpvParameterBox([-np.pi / 2], [np.pi / 2])

    def test_identical_controller_has_zero_bound(self):
        net = scalar_tanh_net()
        bound = estimate_epsilon(net, lambda y: np.tanh(y), self.box, 200)
        self.assertEqual(bound.kind, EpsilonKind.NORM)
        self.assertEqual(bound.c, 0.0)
        self.assertEqual(bound.grid_density, 200)

    def test_grid_too_coarse(self):
        with self.assertRaises(GridTooCoarse):
            estimate_epsilon(scalar_tanh_net(), lambda y: y, self.box, 99)

    def test_amplitude_bound_is_inflated(self):
        net = MlpController([Layer([[1.0]], [0.1], "linear")])
        bound = estimate_epsilon(net, lambda y: y, self.box, 100, margin=0.05)
        self.assertAlmostEqual(bound.sampled_max, 0.1)
        self.assertAlmostEqual(bound.c, 0.105)

    def test_gain_bound_measures_slope_error(self):
        net = MlpController([Layer([[1.2]], [0.0], "linear")])
        bound = estimate_epsilon(net, lambda y: y, self.box, 101, mode="gain", margin=0.0)
        self.assertAlmostEqual(bound.c, 0.2)

    def test_sector_bound_is_ordered(self):
        net = MlpController([Layer([[0.9, 0.0]], [0.0], "linear")])
        box = LpvParameterBox([-1.0, -1.0], [1.0, 1.0])
        bound = estimate_epsilon(net, lambda y: y[:1], box, 100, mode="sector", channel_inputs=(0,))
        self.assertEqual(bound.kind, EpsilonKind.SECTOR)
        self.assertLessEqual(bound.alpha[0], bound.beta[0])
        self.assertAlmostEqual(bound.alpha[0], -0.105)

    def test_gain_ignores_shared_command_inputs(self):
        net = MlpController([Layer([[1.2, 0.0]], [0.0], "linear")])
        box = LpvParameterBox([-1.0, -2.0], [1.0, 2.0])
        bound = estimate_epsilon(
            net, lambda y: y[:1], box, 101, mode="gain", margin=0.0, reference_inputs=1
        )
        self.assertAlmostEqual(bound.c, 0.2)

    def test_gain_is_unbounded_when_error_survives_a_zero_output(self):
        net = MlpController([Layer([[1.0, 0.1]], [0.0], "linear")])
        box = LpvParameterBox([-1.0, -2.0], [1.0, 2.0])
        bound = estimate_epsilon(net, lambda y: y[:1], box, 101, mode="gain", reference_inputs=1)
        self.assertEqual(bound.c, np.inf)

    def test_large_boxes_are_sampled(self):
        net = MlpController([Layer(np.eye(6), np.zeros(6), "linear")])
        box = LpvParameterBox(-np.ones(6), np.ones(6))
        bound = estimate_epsilon(net, lambda y: y, box, 100)
        self.assertEqual(bound.samples, 2**18 + 2**6)
        self.assertEqual(bound.to_dict()["samples"], bound.samples)
        self.assertEqual(bound.c, 0.0)


class TrainingTests(SimpleTestCase):
    def test_linear_target_is_recovered(self):
        box = LpvParameterBox([-1.0, -2.0], [1.0, 2.0])
        target = np.array([[2.0, -0.5]])
        net = fit_to_teacher(lambda y: target @ y + 0.25, box, [], seed=0)
        Y = box.grid(30)
        err = np.max(np.abs(forward(net, Y) - (Y @ target.T + 0.25)))
        self.assertLess(err, 1e-6)

    def test_same_seed_gives_identical_weights(self):
        box = LpvParameterBox([-1.0], [1.0])
        nets = [fit_to_teacher(np.sin, box, [(3, "tanh")], seed=4, max_iter=200) for _ in range(2)]
        for a, b in zip(nets[0].layers, nets[1].layers):
            self.assertTrue(np.array_equal(a.W, b.W))
            self.assertTrue(np.array_equal(a.b, b.b))

    def test_identity_fit_on_arm_domain(self):
        box = LpvParameterBox([-np.pi / 2], [np.pi / 2])
        net = fit_to_teacher(lambda y: y, box, [(1, "tanh")], seed=0, anchor=[0.0])
        self.assertAlmostEqual(forward(net, [0.0])[0], 0.0, places=12)
        bound = estimate_epsilon(net, lambda y: y, box, 200)
        self.assertLessEqual(bound.c, 0.25)

    def test_module_export_matches_torch(self):
        hidden = parse_arch(["4:tanh", "3:sigmoid"])
        module = build_module(2, hidden, 1, generator=torch.Generator().manual_seed(0))
        net = MlpController([Layer(W, b, act) for W, b, act in export_layers(module, hidden)])
        Y = np.array([[0.3, -0.7], [1.0, 2.0]])
        with torch.no_grad():
            expected = module(torch.from_numpy(Y)).numpy()
        np.testing.assert_allclose(forward(net, Y), expected, rtol=1e-12, atol=1e-12)

    def test_lander_architecture(self):
        box = LpvParameterBox(-np.ones(6), np.ones(6))
        net = fit_to_teacher(
            lambda y: -y[:3] - y[3:], box, ["40:tanh", "40:sigmoid", "40:tanh"], seed=0, max_iter=5
        )
        self.assertEqual(repr(net), "MlpController(6-40-40-40-3, tanh/sigmoid/tanh/linear)")


class WeightsFileTests(SimpleTestCase):
    def test_save_then_load(self):
        net = random_net(np.random.default_rng(1), [2, 3, 1])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "weights.json")
            save_weights(net, path)
            loaded = load_weights(path)
        for a, b in zip(net.layers, loaded.layers):
            np.testing.assert_array_equal(a.W, b.W)
            self.assertEqual(a.act, b.act)

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_weights("/nonexistent/weights.json")


class BlockStackTests(SimpleTestCase):
    def test_off_block_jacobian_is_exactly_zero(self):
        rng = np.random.default_rng(2)
        nets = [random_net(rng, [2, 3, 1]) for _ in range(3)]
        stacked = MlpController.block_stack(nets, [[0, 3], [1, 4], [2, 5]])
        y = rng.normal(size=6)
        J = jacobian(stacked, y)
        mask = np.zeros((3, 6), dtype=bool)
        for k, group in enumerate([[0, 3], [1, 4], [2, 5]]):
            mask[k, group] = True
            np.testing.assert_allclose(forward(stacked, y)[k], forward(nets[k], y[group])[0])
        self.assertTrue(np.all(J[~mask] == 0.0))
        iv = jacobian_box(stacked, LpvParameterBox(-np.ones(6), np.ones(6)))
        self.assertEqual(vertex_count(iv), 2**6)
