import csv
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import GridMismatch, NonFiniteState, ZeroDenominator
from core.jsonio import read_json
from simkit.export import trajectory_header, write_manifest, write_trajectory_csv
from simkit.integrate import LoopModel, Trajectory, simulate_closed_loop
from simkit.metrics import channel_rise, empirical_rise, empirical_sse, running_metrics


def decay(t, x, u, r):
    return u


def negate(t, y):
    return -y


def zero(t, y):
    return np.zeros(1)


def paired(y, y_hat, T=1.0):
    t = np.linspace(0.0, T, y.shape[0])
    return Trajectory(t=t, x=y, y=y, u=np.zeros((t.size, 1)), y_hat=y_hat, u_hat=np.zeros((t.size, 1)))


class SimulateClosedLoopTests(SimpleTestCase):
    def test_exponential_decay(self):
        traj = simulate_closed_loop(decay, negate, None, [1.0], 1.0, 1e-3)
        self.assertAlmostEqual(traj.x[-1, 0], math.exp(-1.0), delta=1e-9)
        self.assertEqual(traj.t.size, 1001)
        np.testing.assert_allclose(traj.u[:, 0], -traj.y[:, 0])

    def test_reference_loop_shares_grid(self):
        reference = LoopModel(lambda t, x, u, r: -2.0 * x, zero)
        traj = simulate_closed_loop(decay, negate, None, [1.0], 1.0, 1e-3, reference=reference)
        self.assertTrue(traj.has_reference)
        self.assertAlmostEqual(traj.y_hat[-1, 0], math.exp(-2.0), delta=1e-9)
        np.testing.assert_allclose(traj.z, traj.y - traj.y_hat)

    def test_reference_input_reaches_both_loops(self):
        def driven(t, x, u, r):
            return -x + r

        reference = LoopModel(driven, zero)
        traj = simulate_closed_loop(driven, zero, lambda t: 1.0, [0.0], 2.0, 1e-3, reference=reference)
        self.assertAlmostEqual(traj.x[-1, 0], 1.0 - math.exp(-2.0), delta=1e-9)
        np.testing.assert_array_equal(traj.y, traj.y_hat)

    def test_hold_keeps_control_between_samples(self):
        traj = simulate_closed_loop(decay, negate, None, [1.0], 0.3, 1e-3, hold=0.1)
        u = traj.u[:, 0]
        self.assertEqual(np.unique(u[:100]).size, 1)
        self.assertNotEqual(u[100], u[99])
        self.assertAlmostEqual(traj.x[100, 0], 0.9, delta=1e-12)

    def test_blowup_returns_partial_trajectory(self):
        with self.assertRaises(NonFiniteState) as ctx:
            simulate_closed_loop(lambda t, x, u, r: x**2, zero, None, [1.0], 2.0, 1e-3, label="square")
        partial = ctx.exception.partial
        self.assertEqual(ctx.exception.exit_code, 4)
        self.assertLess(partial.t[-1], 1.01)
        self.assertGreater(partial.t[-1], 0.9)
        self.assertEqual(partial.x.shape[0], partial.t.size)

    def test_bad_step(self):
        with self.assertRaises(GridMismatch):
            simulate_closed_loop(decay, negate, None, [1.0], 1.0, 0.0)
        with self.assertRaises(GridMismatch):
            simulate_closed_loop(decay, negate, None, [1.0], 1e-4, 1e-3)

    def test_head(self):
        traj = simulate_closed_loop(decay, negate, None, [1.0], 1.0, 0.1)
        self.assertEqual(traj.head(3).t.size, 3)
        self.assertEqual(traj.head(3).u.shape, (3, 1))


class MetricTests(SimpleTestCase):
    def setUp(self):
        self.t = np.linspace(0.0, 1.0, 201)
        self.y_hat = np.sin(3.0 * self.t)[:, None]

    def test_scaled_output(self):
        self.assertAlmostEqual(empirical_rise(2.0 * self.y_hat, self.y_hat, self.t), 1 / math.sqrt(5.0), places=12)

    def test_constant_offset(self):
        zeros = np.zeros_like(self.t)
        self.assertAlmostEqual(empirical_rise(zeros + 1.0, zeros, self.t), 1.0, places=12)
        self.assertAlmostEqual(empirical_sse(zeros + 1.0, zeros, self.t), 1.0, places=12)

    def test_identical_outputs(self):
        self.assertEqual(empirical_rise(self.y_hat, self.y_hat, self.t), 0.0)

    def test_zero_energy(self):
        zeros = np.zeros_like(self.t)
        with self.assertRaises(ZeroDenominator):
            empirical_rise(zeros, zeros, self.t)

    def test_mismatched_grid(self):
        with self.assertRaises(GridMismatch):
            empirical_rise(self.y_hat[:-1], self.y_hat[:-1], self.t)
        with self.assertRaises(GridMismatch):
            empirical_sse(self.y_hat, np.hstack([self.y_hat, self.y_hat]), self.t)

    def test_channel_shares_denominator(self):
        y = np.hstack([2.0 * self.y_hat, self.y_hat])
        y_hat = np.hstack([self.y_hat, self.y_hat])
        # only the first column differs, so the channel carries the whole error
        self.assertAlmostEqual(channel_rise(y, y_hat, self.t, 0), empirical_rise(y, y_hat, self.t), places=12)
        self.assertEqual(channel_rise(y, y_hat, self.t, 1), 0.0)

    def test_running_metrics_end_at_totals(self):
        traj = paired(2.0 * self.y_hat, self.y_hat)
        rise, sse = running_metrics(traj)
        self.assertEqual(rise[0], 0.0)
        self.assertAlmostEqual(rise[-1], empirical_rise(traj.y, traj.y_hat, traj.t), places=12)
        self.assertAlmostEqual(sse[-1], empirical_sse(traj.y, traj.y_hat, traj.t), places=12)


class ExportTests(SimpleTestCase):
    def test_header(self):
        traj = paired(np.ones((3, 2)), np.ones((3, 2)))
        self.assertEqual(
            trajectory_header(traj),
            ["t", "y_1", "y_2", "yhat_1", "yhat_2", "u_1", "uhat_1", "rise_running", "sse_running"],
        )

    def test_csv_rows_and_format(self):
        traj = simulate_closed_loop(
            decay, negate, None, [1.0], 0.01, 1e-3, reference=LoopModel(decay, negate), label="decay"
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trajectory_csv(traj, os.path.join(tmp, "runs", "decay.csv"))
            with open(path, newline="") as f:
                rows = list(csv.reader(f))
            first = open(path, "rb").read()
            write_trajectory_csv(traj, path)
            second = open(path, "rb").read()
        self.assertEqual(rows[0][0], "t")
        self.assertEqual(len(rows), traj.t.size + 1)
        self.assertEqual(rows[2][0], "0.001")
        self.assertEqual(rows[1][1], "1")
        self.assertEqual(first, second)

    def test_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_manifest([{"label": "a", "rise": 0.5}], os.path.join(tmp, "manifest.json"))
            data = read_json(path)
        self.assertEqual(data, {"runs": [{"label": "a", "rise": 0.5}]})
