"""Tests for the CSV, JSON and SVG writers."""

import csv
import json
import os
import shutil
import tempfile

import numpy as np
from absl.testing import absltest

from engine import checks
from engine.capsules import RoutingConfig
from engine.experiments import (
    gen_random_instance,
    gen_ring_instance,
    run_distribution_experiment,
    run_numerical_experiment,
)
from engine.routing import route_matrix
from export import svg, tables


class TempDirTest(absltest.TestCase):

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def read(self, name):
        with open(self.path(name), encoding="utf-8") as fh:
            return fh.read()


class FmtTest(absltest.TestCase):

    def test_values(self):
        self.assertEqual(tables.fmt(None), "")
        self.assertEqual(tables.fmt(True), "true")
        self.assertEqual(tables.fmt(np.bool_(False)), "false")
        self.assertEqual(tables.fmt(3), "3")
        self.assertEqual(tables.fmt(np.int64(4)), "4")
        self.assertEqual(tables.fmt(1.0), "1")
        self.assertEqual(tables.fmt(0.1), "0.10000000000000001")
        self.assertEqual(float(tables.fmt(np.float64(2.0) / 3.0)), 2.0 / 3.0)


class TrajectoryCsvTest(TempDirTest):

    def test_layout(self):
        preds = gen_random_instance(4, 3, 2, 1.0, 42)
        trajectory = route_matrix(preds, RoutingConfig(iterations=5))
        tables.write_trajectory_csv(trajectory, self.path("traj.csv"))
        with open(self.path("traj.csv"), encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(tuple(rows[0]), tables.TRAJECTORY_COLUMNS)
        self.assertLen(rows, 1 + 6 * 3)
        self.assertEqual(rows[1][:2], ["0", "0"])
        self.assertEqual(rows[1][-1], "")
        self.assertEqual(rows[-1][:2], ["5", "2"])
        self.assertEqual(float(rows[-1][5]), -trajectory.final.total_energy)
        self.assertEqual(float(rows[-1][2]), trajectory.final.per_capsule_energy[2])

    def test_bytes_are_reproducible(self):
        preds = gen_random_instance(4, 3, 2, 1.0, 42)
        for name in ("a.csv", "b.csv"):
            tables.write_trajectory_csv(route_matrix(preds, RoutingConfig(iterations=8)), self.path(name))
        self.assertEqual(self.read("a.csv"), self.read("b.csv"))
        self.assertNotIn("\r", self.read("a.csv"))

    def test_couplings_json(self):
        preds = gen_random_instance(4, 3, 2, 1.0, 42)
        trajectory = route_matrix(preds, RoutingConfig(iterations=3, record_full_state=False))
        tables.write_couplings_json(trajectory, self.path("c.json"))
        payload = json.loads(self.read("c.json"))
        self.assertLen(payload, 4)
        self.assertEqual(payload[0]["B"], np.zeros((4, 3)).tolist())
        self.assertIsNone(payload[1]["C"])
        self.assertEqual(payload[3]["C"], trajectory.final.coupling.values.tolist())


class SeriesTest(TempDirTest):

    def test_columns_are_flattened(self):
        columns = tables.series_columns({"total": [1.0, 2.0], "per": [[1.0, 2.0], [3.0, 4.0]]})
        self.assertEqual([name for name, _ in columns], ["total", "per[0]", "per[1]"])
        np.testing.assert_array_equal(columns[2][1], [2.0, 4.0])

    def test_series_csv(self):
        report = run_numerical_experiment(gen_random_instance(4, 3, 2, 1.0, 42), 4)
        tables.write_series_csv(report.series, self.path("s.csv"))
        lines = self.read("s.csv").splitlines()
        self.assertLen(lines, 6)
        header = lines[0].split(",")
        self.assertEqual(header[:2], ["iteration", "total_agreement"])
        self.assertIn("agreement[2]", header)
        self.assertIn("max_coupling[3]", header)

    def test_report_json(self):
        preds = gen_ring_instance(10, (0.0, 1.0, 1.0), 0.1, 7)
        report = run_distribution_experiment(preds, 3)
        tables.write_report_json(report, {"experiment": "distribution", "iterations": 3}, self.path("r.json"))
        payload = json.loads(self.read("r.json"))
        self.assertEqual(payload["config"]["iterations"], 3)
        self.assertEqual(len(payload["positions"]), 4)
        self.assertLen(payload["final_outputs"], 3)
        self.assertIn("suppressed", payload["flags"])
        self.assertIsInstance(payload["gaps"]["monotone"], bool)


class CheckCsvTest(TempDirTest):

    def test_rows(self):
        sizes = {"m": (2, 3), "n": (2, 3), "dim": (2, 2)}
        outcomes = checks.run_instance_checks(0, "zero", sizes, chords=5)
        tables.write_check_csv(outcomes, self.path("check.csv"))
        with open(self.path("check.csv"), encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(tuple(rows[0]), tables.CHECK_COLUMNS)
        self.assertEqual([r[4] for r in rows[1:]], list(checks.CHECK_NAMES))
        self.assertTrue(all(r[-1] == "true" for r in rows[1:]))


class SvgTest(TempDirTest):

    def test_agreement_plot(self):
        report = run_numerical_experiment(gen_random_instance(4, 3, 2, 1.0, 42), 5)
        text = svg.agreement_plot(report.series, "agreement")
        self.assertTrue(text.startswith("<svg"))
        self.assertEqual(text.count("<polyline"), 4)
        self.assertTrue(text.rstrip().endswith("</svg>"))

    def test_distribution_plot(self):
        preds = gen_ring_instance(6, (0.0, 1.0, 1.0, 1.0), 0.1, 7)
        report = run_distribution_experiment(preds, 3)
        text = svg.distribution_plot(report.scatter, report.positions[-1])
        self.assertEqual(text.count("<circle"), 24)
        self.assertEqual(text.count("<polygon"), 4)
        svg.write_svg(text, self.path(os.path.join("plots", "d.svg")))
        self.assertEqual(self.read(os.path.join("plots", "d.svg")), text)

    def test_flat_series_still_has_a_range(self):
        text = svg.agreement_plot({"total_agreement": np.zeros(3), "agreement": np.zeros((3, 2))})
        self.assertNotIn("nan", text)


if __name__ == "__main__":
    absltest.main()
