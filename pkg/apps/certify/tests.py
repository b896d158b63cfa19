import dataclasses

import numpy as np
from django.test import SimpleTestCase, TestCase
from scipy.integrate import cumulative_trapezoid

from certify.models import CertificateRecord
from certify.pipeline import (
    certificate_document,
    certify_problem,
    epsilon_for,
    epsilon_matches,
    levels_from_document,
    weights_digest,
)
from certify.theorems import (
    RISE,
    SSE,
    Certificate,
    certify_rise,
    certify_sse,
    check_dissipation,
    integrated_dissipation,
    rise_lmi,
    sse_lmis,
    tube_bound,
)
from certify.validation import PASS, failures, validate_study
from core.exceptions import (
    BoundOrder,
    EmptyList,
    GammaOutOfRange,
    InfeasibleAtUpper,
    NonPositiveGamma,
    NonPositiveSigma,
    UnsupportedFeedthrough,
)
from errorsys.assembly import build_error_system, build_extended, controller_error_gain
from iqclib.factors import combine, norm_bound_iqc, sector_iqc
from lmi.problem import Witness
from nncontroller.mlp import Layer, MlpController
from scenarios.arm import arm_state_space
from scenarios.loader import load_scenario
from simkit.integrate import simulate_extended
from sysmodels.statespace import new_state_space, signal_norms


def arm_vertices(gains=(1.0,), c=0.05):
    plant = arm_state_space()
    err = build_error_system(plant, plant)
    xi = combine([sector_iqc(0.0, 0.364), norm_bound_iqc(c)])
    return [build_extended(err, controller_error_gain([[g]], plant), xi) for g in gains]


def identity_net():
    return MlpController([Layer(np.eye(1), np.zeros(1), "linear")])


def in_class_run(ext, c=0.05, T=10.0, dt=1e-3):
    def q_fn(t, chi, eta):
        return np.array([0.2 * eta[0], 0.5 * c * eta[1]])

    def eta_fn(t):
        return np.array([np.sin(t), 0.5 * np.cos(2.0 * t)])

    return simulate_extended(ext, q_fn, eta_fn, T, dt)


class TubeBoundTests(SimpleTestCase):
    def test_reported_level(self):
        self.assertAlmostEqual(tube_bound(0.05669, 1.0).factor, 0.1202, places=4)

    def test_one_third_gives_unit_factor(self):
        tb = tube_bound(1 / 3, 2.0)
        self.assertAlmostEqual(tb.factor, 1.0)
        self.assertAlmostEqual(tb.bound, 2.0)

    def test_out_of_range(self):
        for gamma in (0.0, 1.0, 1.5):
            with self.assertRaises(GammaOutOfRange):
                tube_bound(gamma, 1.0)


class LmiBuilderTests(SimpleTestCase):
    def test_nonpositive_gamma(self):
        ext = arm_vertices()[0]
        with self.assertRaises(NonPositiveGamma):
            rise_lmi(ext, None, 0.0)

    def test_nonpositive_sigma(self):
        ext = arm_vertices()[0]
        with self.assertRaises(NonPositiveSigma):
            sse_lmis(ext, None, -1.0)

    def test_peak_bound_needs_state_output(self):
        plant = new_state_space([[-1.0]], [[1.0, 1.0]], [[1.0]], [[0.5, 0.0]], 1)
        err = build_error_system(plant, plant)
        xi = combine([sector_iqc(0.0, 0.5), norm_bound_iqc(0.1)])
        ext = build_extended(err, controller_error_gain([[0.5]], plant), xi)
        with self.assertRaises(UnsupportedFeedthrough):
            sse_lmis(ext, None, 1.0)

    def test_per_factor_mode_has_one_multiplier_per_factor(self):
        ext = arm_vertices()[0]
        self.assertEqual(rise_lmi(ext, None, 1.0, lambda_mode="per_factor").n_lambda, 2)
        self.assertEqual(rise_lmi(ext, None, 1.0).n_lambda, 1)


class CertifyRiseTests(SimpleTestCase):
    def test_empty_vertex_list(self):
        with self.assertRaises(EmptyList):
            certify_rise([])

    def test_reversed_range(self):
        with self.assertRaises(BoundOrder):
            certify_rise(arm_vertices(), gamma_range=(1.0, 0.1))

    def test_no_output_certifies_lower_edge(self):
        ext = arm_vertices()[0]
        silent = dataclasses.replace(ext, C2=np.zeros_like(ext.C2))
        cert = certify_rise([silent], gamma_range=(1e-3, 1.0))
        self.assertEqual(cert.level, 1e-3)
        self.assertEqual(cert.bisection_trace, [(1.0, True), (1e-3, True)])

    def test_infeasible_upper_edge(self):
        with self.assertRaises(InfeasibleAtUpper) as ctx:
            certify_rise(arm_vertices(), gamma_range=(1e-7, 1e-6))
        self.assertEqual(ctx.exception.exit_code, 2)
        self.assertEqual(ctx.exception.trace, [(1e-6, False)])

    def test_bisection_brackets_level(self):
        cert = certify_rise(arm_vertices((0.9, 1.1)), gamma_range=(1e-4, 1e2), tol_bisect=1e-3)
        feasible = [level for level, ok in cert.bisection_trace if ok]
        infeasible = [level for level, ok in cert.bisection_trace if not ok]
        self.assertEqual(cert.level, min(feasible))
        self.assertLess(max(infeasible), cert.level)
        self.assertLessEqual(cert.level / max(infeasible) - 1, 1e-3)
        self.assertEqual(cert.vertices, 2)

    def test_simulated_gain_and_dissipation(self):
        exts = arm_vertices((0.9, 1.1))
        cert = certify_rise(exts)
        lam = cert.witness.lam
        for ext in exts:
            traj = in_class_run(ext)
            gain = signal_norms(traj.t, traj.z).l2 / signal_norms(traj.t, traj.eta).l2
            self.assertLessEqual(gain, cert.level + 1e-6)
            residual = check_dissipation(traj, cert.witness.P, lam, cert.level, ext.M, ext.xi.row_slices)
            self.assertLessEqual(residual, 1e-3 * float(np.max(np.sum(traj.eta**2, axis=1))))

    def test_tampered_level_breaks_dissipation(self):
        ext = arm_vertices()[0]
        cert = certify_rise([ext])
        traj = in_class_run(ext)
        tampered = integrated_dissipation(
            traj, cert.witness.P, cert.witness.lam, cert.level / 1000, ext.M, ext.xi.row_slices
        )
        self.assertGreater(tampered, 0.0)


class CertifySseTests(SimpleTestCase):
    def test_direct_matches_bisection(self):
        exts = arm_vertices((0.9, 1.1))
        bisected = certify_sse(exts, mode="bisect", tol_bisect=1e-4, lambda_mode="per_factor")
        direct = certify_sse(exts, mode="direct", lambda_mode="per_factor")
        self.assertEqual(bisected.metric, SSE)
        self.assertLess(abs(direct.level - bisected.level) / bisected.level, 1e-2)

    def test_peak_bound_holds_on_simulation(self):
        ext = arm_vertices()[0]
        cert = certify_sse([ext])
        traj = in_class_run(ext)
        energy = np.sqrt(cumulative_trapezoid(np.sum(traj.eta**2, axis=1), traj.t, initial=0.0))
        peak = np.linalg.norm(traj.z, axis=1)
        # |z(t)| <= sigma |eta|_2 over [0, t]
        self.assertTrue(np.all(peak <= cert.level * energy * (1 + 1e-2) + 1e-9))


class CertificateSerializationTests(SimpleTestCase):
    def test_field_order(self):
        cert = Certificate(RISE, 0.25, Witness(np.eye(2), np.array([1.0])), 4, [(1.0, True)])
        keys = list(cert.to_dict())
        self.assertEqual(
            keys[:6], ["metric", "level", "factor_2g_over_1mg", "vertices", "bisection_trace", "witness_eigs"]
        )
        self.assertAlmostEqual(cert.to_dict()["factor_2g_over_1mg"], 2 / 3)

    def test_sse_has_no_factor(self):
        cert = Certificate(SSE, 0.25, Witness(np.eye(1), np.array([1.0])), 1)
        self.assertIsNone(cert.factor)


class PipelineTests(SimpleTestCase):
    def setUp(self):
        self.study = load_scenario("arm")
        self.problem = self.study.problems(identity_net())[0]

    def test_exact_controller_is_certified(self):
        result = certify_problem(self.problem, (RISE,))
        self.assertEqual(result.epsilon.c, 0.0)
        cert = result.get(RISE, "arm:theta")
        self.assertEqual(cert.vertices, 1)
        # sector gain 0.364 times the DC gain 10/9 of the reference loop
        self.assertTrue(0.40 < cert.level < 0.42)
        document = certificate_document(self.study, [result], RISE, seed=7, net=identity_net())
        self.assertEqual(document["weights_digest"], weights_digest(identity_net()))
        self.assertEqual(document["epsilon"]["arm"]["c"], 0.0)
        self.assertNotIn("coupling", document)
        self.assertEqual(levels_from_document(document)["arm:theta"], (cert.level, cert.factor))

    def test_validation_passes_for_certified_level(self):
        result = certify_problem(self.problem, (RISE,))
        cert = result.get(RISE, "arm:theta")
        levels = {(RISE, "arm:theta"): (cert.level, cert.factor)}
        self.study.T = 5.0
        runs = self.study.runs(count=1)
        table = validate_study(self.study, identity_net(), levels, runs, {"arm": result.epsilon})
        self.assertEqual(failures(table), [])
        self.assertEqual({row.check for row in table}, {"iqc:sector", "iqc:epsilon", "rise", "tube"})

    def test_halved_level_is_a_certificate_failure(self):
        self.study.T = 5.0
        runs = self.study.runs(count=0)
        table = validate_study(self.study, identity_net(), {(RISE, "arm:theta"): (1e-4, None)}, runs)
        bad = failures(table)
        self.assertEqual({row.run for row in bad}, {"case_a", "case_b"})
        self.assertTrue(all(row.attribution == "certificate" for row in bad))
        self.assertTrue(all(row.status == PASS for row in table if row.check.startswith("iqc")))


class CertificateRecordTests(TestCase):
    def test_store_and_fetch_latest(self):
        cert = Certificate(RISE, 0.1, Witness(np.eye(2), np.array([0.5])), 2, [(1.0, True)], channel="arm:theta")
        CertificateRecord.from_certificate("arm", cert)
        record = CertificateRecord.latest("arm", RISE, "arm:theta")
        self.assertAlmostEqual(record.level, 0.1)
        self.assertAlmostEqual(record.factor, 0.2 / 0.9)
        self.assertEqual(record.payload["metric"], RISE)
        self.assertIsNone(CertificateRecord.latest("arm", SSE, "arm:theta"))
        self.assertIn("RISE", str(record))

    def test_latest_is_scoped_to_network_and_bound(self):
        cert = Certificate(RISE, 0.3, Witness(np.eye(2), np.array([0.5])), 1, [(1.0, True)], channel="arm:theta")
        bound = {"kind": "norm", "mode": "gain", "c": 0.01}
        CertificateRecord.from_certificate("arm", cert, weights_digest="a" * 64, epsilon=bound, seed=7)
        record = CertificateRecord.latest("arm", RISE, "arm:theta", weights_digest="a" * 64, epsilon=dict(bound))
        self.assertEqual(record.seed, 7)
        self.assertEqual(record.epsilon, bound)
        self.assertIsNone(CertificateRecord.latest("arm", RISE, "arm:theta", weights_digest="b" * 64))
        self.assertIsNone(
            CertificateRecord.latest("arm", RISE, "arm:theta", epsilon={"kind": "norm", "mode": "gain", "c": 0.02})
        )


class EpsilonMatchTests(SimpleTestCase):
    def test_recorded_bound_must_agree(self):
        problem = load_scenario("arm").problems(identity_net())[0]
        bound = epsilon_for(problem)
        self.assertTrue(epsilon_matches(bound.to_dict(), bound))
        self.assertFalse(epsilon_matches(None, bound))
        self.assertFalse(epsilon_matches({**bound.to_dict(), "c": 0.5}, bound))
        self.assertFalse(epsilon_matches({**bound.to_dict(), "mode": "amplitude"}, bound))
