"""
Unit tests for run-wide settings.
"""

import os
import sys
import tempfile
import unittest
from unittest.mock import patch

from pydantic import ValidationError

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.config import Settings


class TestSettings(unittest.TestCase):
    """GAUSSVGD_* settings and validators."""

    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=True):
            s = Settings(_env_file=None)
        self.assertEqual(s.log_level, "INFO")
        self.assertEqual(s.default_seed, 20240101)
        self.assertEqual(s.w2_exact_cap, 512)
        self.assertEqual(s.max_workers, 1)

    def test_environment_override(self):
        env = {"GAUSSVGD_DEFAULT_DT": "5e-4", "GAUSSVGD_LOG_LEVEL": "debug", "GAUSSVGD_MAX_WORKERS": "4"}
        with patch.dict(os.environ, env, clear=True):
            s = Settings(_env_file=None)
        self.assertEqual(s.default_dt, 5e-4)
        self.assertEqual(s.log_level, "DEBUG")
        self.assertEqual(s.max_workers, 4)

    def test_invalid_values(self):
        for env in ({"GAUSSVGD_LOG_LEVEL": "LOUD"},
                    {"GAUSSVGD_DEFAULT_DT": "0"},
                    {"GAUSSVGD_SPD_REL_TOL": "1.5"},
                    {"GAUSSVGD_DEFAULT_SEED": "-3"},
                    {"GAUSSVGD_MAX_WORKERS": "0"}):
            with patch.dict(os.environ, env, clear=True):
                with self.assertRaises(ValidationError, msg=str(env)):
                    Settings(_env_file=None)

    def test_output_path_creates_parent(self):
        with tempfile.TemporaryDirectory() as tmp:
            s = Settings(_env_file=None, output_dir=tmp)
            path = s.output_path("study", "rates.csv")
            self.assertTrue(path.parent.is_dir())
            self.assertEqual(path.name, "rates.csv")

    def test_as_dict(self):
        s = Settings(_env_file=None)
        self.assertIn("divergence_threshold", s.as_dict())


if __name__ == '__main__':
    unittest.main()
