"""
Unit tests for experiment configuration files.
"""

import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import yaml

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.algorithms import Framework
from gaussvgd.config import settings
from gaussvgd.cli_config import (
    ExperimentConfigError,
    create_example_config,
    load_config,
    parse_config,
    parse_flow,
    parse_kernel,
)
from gaussvgd.kernels import K3
from gaussvgd.meanfield import FlowFamily
from gaussvgd.targets import GaussianTarget, LogisticTarget, MixtureTarget


class TestLoadConfig(unittest.TestCase):
    """Reading YAML experiment files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _write(self, text):
        path = os.path.join(self.tmp.name, "config.yaml")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_missing_file(self):
        with self.assertRaises(ExperimentConfigError):
            load_config(os.path.join(self.tmp.name, "nope.yaml"))

    def test_empty_file(self):
        with self.assertRaises(ExperimentConfigError):
            load_config(self._write(""))

    def test_invalid_yaml(self):
        with self.assertRaises(ExperimentConfigError):
            load_config(self._write("target: [unclosed"))

    def test_not_a_mapping(self):
        with self.assertRaises(ExperimentConfigError):
            load_config(self._write("- 1\n- 2\n"))

    def test_example_config_loads(self):
        config = load_config(self._write(create_example_config()))
        self.assertEqual(config.name, "mixture-bwpf")
        self.assertEqual(config.algorithm.framework, Framework.PARTICLE)
        self.assertEqual(config.algorithm.kernel_kind, K3)
        self.assertIs(config.flow.flow_kind.family, FlowFamily.GENERAL)
        target = config.build_target()
        self.assertIsInstance(target, MixtureTarget)
        self.assertEqual(config.build_initial(target.dim).dim, 1)

    def test_environment_expansion(self):
        text = "name: ${RUN_NAME}\ntarget: {kind: gaussian, b: [0.0]}\nflow: {flow: wgf}\n"
        with patch.dict(os.environ, {"RUN_NAME": "from-env"}):
            config = load_config(self._write(text))
        self.assertEqual(config.name, "from-env")


class TestParseConfig(unittest.TestCase):
    """Validation of experiment sections."""

    def test_needs_flow_or_algorithm(self):
        with self.assertRaises(ExperimentConfigError):
            parse_config({"target": {"kind": "gaussian", "b": [0.0]}})

    def test_unknown_target_kind(self):
        with self.assertRaises(ExperimentConfigError):
            parse_config({"target": {"kind": "banana"}, "flow": {"flow": "wgf"}})

    def test_invalid_flow(self):
        with self.assertRaises(ExperimentConfigError):
            parse_config({"target": {"kind": "gaussian", "b": [0.0]}, "flow": {"flow": "rsvgd:2"}})

    def test_flow_step_defaults_to_settings(self):
        with patch.object(settings, "default_dt", 0.02):
            config = parse_config({"target": {"kind": "gaussian", "b": [0.0]}, "flow": {"flow": "wgf"}})
        self.assertEqual(config.flow.dt, 0.02)
        config = parse_config({"target": {"kind": "gaussian", "b": [0.0]}, "flow": {"flow": "wgf", "dt": 0.5}})
        self.assertEqual(config.flow.dt, 0.5)

    def test_gaussian_target_shapes(self):
        config = parse_config({"target": {"kind": "gaussian", "b": [1.0, 2.0], "Q": [2.0, 0.5]},
                               "flow": {"flow": "svgd_k2"}})
        target = config.build_target()
        self.assertIsInstance(target, GaussianTarget)
        np.testing.assert_allclose(np.asarray(target.Q), np.diag([2.0, 0.5]))

    def test_random_gaussian_target(self):
        config = parse_config({"target": {"kind": "gaussian", "dim": 4, "seed": 2}, "flow": {"flow": "wgf"}})
        self.assertEqual(config.build_target().dim, 4)

    def test_gaussian_needs_b_or_dim(self):
        with self.assertRaises(ExperimentConfigError):
            parse_config({"target": {"kind": "gaussian"}, "flow": {"flow": "wgf"}})

    def test_mixture_lengths(self):
        with self.assertRaises(ExperimentConfigError):
            parse_config({"target": {"kind": "mixture", "w": [1.0], "mu": [0.0, 1.0], "sigma2": [1.0]},
                          "flow": {"flow": "wgf"}})

    def test_logistic_target(self):
        config = parse_config({"target": {"kind": "logistic", "n": 20, "d": 2, "seed": 1, "prior_precision": 1.0},
                               "algorithm": {"framework": "density", "kernel": "k2", "step": 0.1}})
        target = config.build_target()
        self.assertIsInstance(target, LogisticTarget)
        self.assertEqual(target.X.shape, (20, 2))

    def test_initial_scalar_covariance(self):
        config = parse_config({"target": {"kind": "gaussian", "b": [0.0, 0.0]},
                               "initial": {"mean": [1.0, 1.0], "cov": 2.0}, "flow": {"flow": "wgf"}})
        np.testing.assert_allclose(config.build_initial(2).sigma, 2.0 * np.eye(2))

    def test_flow_normalized(self):
        config = parse_config({"target": {"kind": "gaussian", "b": [0.0]}, "flow": {"flow": "RSVGD:nu=0.5"}})
        self.assertEqual(config.flow.flow, "rsvgd:0.5")

    def test_example_is_valid_yaml(self):
        self.assertIsInstance(yaml.safe_load(create_example_config()), dict)


class TestParseHelpers(unittest.TestCase):
    """Kernel and flow name helpers."""

    def test_kernel(self):
        self.assertEqual(parse_kernel("k3"), K3)
        with self.assertRaises(ExperimentConfigError):
            parse_kernel("k7")

    def test_flow(self):
        self.assertIs(parse_flow("bw").family, FlowFamily.BW)
        with self.assertRaises(ExperimentConfigError):
            parse_flow("svgd_k9")


if __name__ == '__main__':
    unittest.main()
