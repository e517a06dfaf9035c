"""
Unit tests for trajectory records and run manifests.
"""

import csv
import json
import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd import records
from gaussvgd.config import VERSION
from gaussvgd.core import GaussianParams
from gaussvgd.records import TrajectoryRecord, TrajectoryRow, build_manifest, write_manifest


def _record():
    rec = TrajectoryRecord("demo", metadata={"dt": 0.1})
    rec.append(TrajectoryRow(0.0, kl=1.0, mu_err=0.5, theta=GaussianParams.standard(2)))
    rec.append(TrajectoryRow(0.1, kl=0.5, extras={"hamiltonian": 2.0}, theta=GaussianParams.standard(2)))
    return rec


class TestTrajectoryRecord(unittest.TestCase):
    """In-memory access to recorded rows."""

    def test_columns(self):
        rec = _record()
        self.assertEqual(len(rec), 2)
        np.testing.assert_allclose(rec.times(), [0.0, 0.1])
        np.testing.assert_allclose(rec.column("kl"), [1.0, 0.5])
        self.assertTrue(np.isnan(rec.column("hamiltonian")[0]))
        self.assertTrue(np.isnan(rec.column("free_energy")).all())

    def test_extra_columns_in_first_seen_order(self):
        rec = _record()
        rec.append(TrajectoryRow(0.2, extras={"stationarity": 0.1, "hamiltonian": 1.0}))
        self.assertEqual(rec.extra_columns(), ["hamiltonian", "stationarity"])

    def test_final(self):
        rec = _record()
        self.assertEqual(rec.final.t, 0.1)
        self.assertEqual(rec.final_theta.dim, 2)
        with self.assertRaises(IndexError):
            TrajectoryRecord("empty").final


class TestSerialization(unittest.TestCase):
    """CSV and JSON output."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_csv_header_and_blanks(self):
        path = _record().to_csv(os.path.join(self.tmp.name, "sub", "demo.csv"))
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["t", "kl", "free_energy", "mu_err", "sigma_err", "hamiltonian"])
        self.assertEqual(rows[1][2], "")
        self.assertEqual(float(rows[2][5]), 2.0)

    def test_csv_with_theta(self):
        path = _record().to_csv(os.path.join(self.tmp.name, "demo.csv"), include_theta=True)
        with open(path, newline="") as f:
            header = next(csv.reader(f))
        self.assertIn("mu_1", header)
        self.assertIn("sigma_1_1", header)
        self.assertEqual(len(header), 6 + 2 + 4)

    def test_json(self):
        path = _record().to_json(os.path.join(self.tmp.name, "demo.json"), include_theta=True)
        with open(path) as f:
            data = json.load(f)
        self.assertEqual(data["label"], "demo")
        self.assertEqual(data["metadata"], {"dt": 0.1})
        self.assertEqual(data["rows"][0]["cov"], [[1.0, 0.0], [0.0, 1.0]])


class TestManifest(unittest.TestCase):
    """Provenance manifests."""

    def test_fields(self):
        with patch.object(records, 'git_revision', return_value='abc123'):
            manifest = build_manifest({"name": "x"}, 42)
        self.assertEqual(manifest["git_revision"], "abc123")
        self.assertEqual(manifest["seed"], 42)
        self.assertEqual(manifest["version"], VERSION)
        self.assertEqual(manifest["config"], {"name": "x"})
        self.assertIn("created_utc", manifest)

    def test_git_failure_is_unknown(self):
        with patch.object(records.subprocess, 'run', side_effect=OSError("no git")):
            self.assertEqual(records.git_revision(), "unknown")

    def test_write_with_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_manifest(os.path.join(tmp, "manifest.json"), {"a": np.float64(1.5)}, 7,
                                  outputs=["demo.csv"])
            with open(path) as f:
                data = json.load(f)
        self.assertEqual(data["outputs"], ["demo.csv"])
        self.assertEqual(data["config"]["a"], 1.5)


if __name__ == '__main__':
    unittest.main()
