import os
import tempfile
from io import StringIO

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from certify.models import CertificateRecord
from certify.pipeline import weights_digest
from core.config import RunConfig, parse_range
from core.exceptions import BoundOrder, ScenarioError
from core.jsonio import read_json, write_json
from nncontroller.mlp import Layer, MlpController, load_weights, save_weights
from scenarios.loader import scenario_path


class ParseRangeTests(SimpleTestCase):
    def test_valid(self):
        self.assertEqual(parse_range("0.001:10"), (0.001, 10.0))

    def test_invalid(self):
        for text in ("1:0.5", "0:1", "-1:1", "abc", "1:2:3"):
            with self.assertRaises(BoundOrder):
                parse_range(text)


class RunConfigTests(SimpleTestCase):
    def test_gamma_max_sets_range(self):
        cfg = RunConfig.from_options({"gamma_max": 1e-6})
        self.assertEqual(cfg.gamma_range, (1e-7, 1e-6))
        self.assertTrue(cfg.store)

    def test_unknown_metric(self):
        with self.assertRaises(ScenarioError):
            RunConfig(metric="energy")

    def test_nonpositive_step(self):
        with self.assertRaises(BoundOrder):
            RunConfig(dt=0.0)

    def test_missing_weights(self):
        with self.assertRaises(ScenarioError):
            RunConfig(weights="/nonexistent/weights.json")

    def test_output_dirs(self):
        cfg = RunConfig(out="/tmp/keepclose")
        self.assertEqual(cfg.cache_dir, os.path.join("/tmp/keepclose", "weights"))


class CommandTestMixin:
    """Arm runs with a one-unit linear network so no training happens."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.weights = os.path.join(self.tmp.name, "identity.json")
        save_weights(MlpController([Layer(np.eye(1), np.zeros(1), "linear")]), self.weights)

    def out(self, name="out"):
        return os.path.join(self.tmp.name, name)

    def call(self, command, *args, **options):
        stdout = StringIO()
        call_command(command, *args, stdout=stdout, stderr=StringIO(), **options)
        return stdout.getvalue()

    def certify(self, out, *extra):
        return self.call("certify", "--weights", self.weights, "--out", out, *extra)


class CertifyCommandTests(CommandTestMixin, TestCase):
    def test_infeasible_upper_edge_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.certify(self.out(), "--gamma-max", "1e-6", "--no-store")
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("InfeasibleAtUpper", str(ctx.exception))

    def test_missing_weights_exits_3(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("certify", "--weights", os.path.join(self.tmp.name, "none.json"), "--out", self.out())
        self.assertEqual(ctx.exception.returncode, 3)

    def test_writes_and_stores_certificate(self):
        output = self.certify(self.out())
        document = read_json(os.path.join(self.out(), "arm_certificate_rise.json"))
        self.assertEqual(document["scenario"], "arm")
        self.assertEqual(document["metric"], "RISE")
        self.assertEqual(document["epsilon"]["arm"]["c"], 0.0)
        [entry] = document["certificates"]
        self.assertEqual(entry["channel"], "arm:theta")
        self.assertTrue(0.40 < entry["level"] < 0.42)
        self.assertEqual(document["seed"], 7)
        self.assertEqual(document["weights_digest"], weights_digest(load_weights(self.weights)))
        self.assertIn("arm:theta", output)
        record = CertificateRecord.latest("arm", "RISE", "arm:theta")
        self.assertAlmostEqual(record.level, entry["level"])
        self.assertEqual(record.weights_digest, document["weights_digest"])
        self.assertEqual(record.epsilon, document["epsilon"]["arm"])
        self.assertEqual(record.seed, 7)

    def test_identical_runs_write_identical_bytes(self):
        self.certify(self.out("first"), "--no-store")
        self.certify(self.out("second"), "--no-store")
        with open(os.path.join(self.out("first"), "arm_certificate_rise.json"), "rb") as f:
            first = f.read()
        with open(os.path.join(self.out("second"), "arm_certificate_rise.json"), "rb") as f:
            second = f.read()
        self.assertEqual(first, second)
        self.assertFalse(CertificateRecord.objects.exists())


@tag("slow")
class ValidateCommandTests(CommandTestMixin, TestCase):
    def validate(self, *extra):
        return self.call(
            "validate", "--weights", self.weights, "--out", self.out(), "--runs", "0", "--T", "5", *extra
        )

    def test_certified_level_passes(self):
        output = self.validate()
        self.assertIn("All", output)
        checks = read_json(os.path.join(self.out(), "arm_validation.json"))["checks"]
        self.assertEqual({row["run"] for row in checks}, {"case_a", "case_b"})

    def test_tampered_certificate_exits_5(self):
        self.certify(self.out(), "--no-store")
        path = os.path.join(self.out(), "arm_certificate_rise.json")
        document = read_json(path)
        for entry in document["certificates"]:
            entry["level"] /= 1000
            entry["factor_2g_over_1mg"] = 2 * entry["level"] / (1 - entry["level"])
        tampered = os.path.join(self.tmp.name, "tampered.json")
        write_json(document, tampered)

        with self.assertRaises(CommandError) as ctx:
            self.validate("--certificate", tampered)
        self.assertEqual(ctx.exception.returncode, 5)
        self.assertIn("certificate", str(ctx.exception))

    def test_certificate_for_other_scenario(self):
        other = os.path.join(self.tmp.name, "other.json")
        write_json({"scenario": "apollo", "metric": "RISE", "certificates": []}, other)
        with self.assertRaises(CommandError) as ctx:
            self.validate("--certificate", other)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_weak_gravity_is_a_model_class_failure(self):
        data = read_json(scenario_path("arm"))
        data["name"] = "arm_weak"
        data["constants"]["gravity_coeff"] = 5.0
        scenario = os.path.join(self.tmp.name, "arm_weak.json")
        write_json(data, scenario)

        with self.assertRaises(CommandError) as ctx:
            self.validate("--scenario", scenario)
        self.assertEqual(ctx.exception.returncode, 5)
        self.assertIn("model-class", str(ctx.exception))
        self.assertIn("iqc:sector", str(ctx.exception))

    def test_record_for_another_network_is_ignored(self):
        self.certify(self.out())
        CertificateRecord.objects.update(weights_digest="0" * 64, level=1e-4, factor=None)
        output = self.validate()
        self.assertIn("All", output)
        self.assertEqual(CertificateRecord.objects.exclude(weights_digest="0" * 64).count(), 1)


class CertificateFileTests(CommandTestMixin, TestCase):
    """A certificate file is only accepted for the network and bound it was issued for."""

    def setUp(self):
        super().setUp()
        self.certify(self.out(), "--no-store")
        self.document = read_json(os.path.join(self.out(), "arm_certificate_rise.json"))

    def rejected(self, document, *extra):
        path = os.path.join(self.tmp.name, "edited.json")
        write_json(document, path)
        with self.assertRaises(CommandError) as ctx:
            self.call(
                "validate",
                "--weights",
                self.weights,
                "--out",
                self.out(),
                "--runs",
                "0",
                "--certificate",
                path,
                *extra,
            )
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn("ScenarioError", str(ctx.exception))
        return str(ctx.exception)

    def test_other_weights(self):
        self.document["weights_digest"] = "0" * 64
        self.assertIn("network weights", self.rejected(self.document))

    def test_other_network_file(self):
        scaled = os.path.join(self.tmp.name, "scaled.json")
        save_weights(MlpController([Layer(1.01 * np.eye(1), np.zeros(1), "linear")]), scaled)
        path = os.path.join(self.out(), "arm_certificate_rise.json")
        with self.assertRaises(CommandError) as ctx:
            self.call("validate", "--weights", scaled, "--out", self.out(), "--runs", "0", "--certificate", path)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_other_seed(self):
        self.assertIn("seed", self.rejected(self.document, "--seed", "8"))

    def test_other_epsilon(self):
        self.document["epsilon"]["arm"]["c"] = 0.01
        self.assertIn("training-error bound", self.rejected(self.document))

    def test_missing_epsilon(self):
        del self.document["epsilon"]
        self.assertIn("training-error bound", self.rejected(self.document))


class SimulateCommandTests(CommandTestMixin, TestCase):
    def test_writes_runs_and_manifest(self):
        self.call("simulate", "--weights", self.weights, "--out", self.out(), "--runs", "0", "--T", "1")
        manifest = read_json(os.path.join(self.out(), "arm", "manifest.json"))
        labels = [entry["label"] for entry in manifest["runs"]]
        self.assertEqual(labels[:2], ["case_a", "case_b"])
        self.assertIn("linearized_case_a", labels)
        for entry in manifest["runs"]:
            self.assertTrue(os.path.exists(entry["csv"]))


class ReportCommandTests(CommandTestMixin, TestCase):
    def test_empty(self):
        self.assertIn("No certificates stored", self.call("report"))

    def test_lists_latest(self):
        self.certify(self.out())
        self.certify(self.out())
        output = self.call("report", "--scenario", "arm", "--latest")
        self.assertEqual(output.count("arm:theta"), 1)
        self.assertEqual(CertificateRecord.objects.filter(scenario="arm").count(), 2)
