"""
Unit tests for the bilinear kernel family.
"""

import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.core import DimensionMismatchError, SpdMatrix, random_spd
from gaussvgd.kernels import (
    K1,
    K2,
    K3,
    KernelFamily,
    KernelKind,
    KernelState,
    gram_matrix,
    k4,
    kernel_eval,
    kernel_grad_y,
    regularized_shape,
)


class TestKernelParsing(unittest.TestCase):
    """Config names of kernels."""

    def test_simple_names(self):
        self.assertEqual(KernelKind.parse("k1"), K1)
        self.assertEqual(KernelKind.parse(" K2 "), K2)
        self.assertEqual(KernelKind.parse("k3"), K3)

    def test_k4_spellings(self):
        for text in ("k4:nu=0.5", "k4:0.5", "k4:ν=0.5"):
            kind = KernelKind.parse(text)
            self.assertIs(kind.family, KernelFamily.REGULARIZED)
            self.assertEqual(kind.nu, 0.5)

    def test_round_trip_string(self):
        self.assertEqual(str(k4(0.25)), "k4:nu=0.25")
        self.assertEqual(KernelKind.parse(str(k4(0.25))), k4(0.25))

    def test_rejects_bad_names(self):
        for text in ("k5", "k4", "k4:nu=abc", "k4:nu=1.5", "rbf"):
            with self.assertRaises(ValueError):
                KernelKind.parse(text)

    def test_nu_only_for_k4(self):
        with self.assertRaises(ValueError):
            KernelKind(KernelFamily.SIMPLE_BILINEAR, 0.5)

    def test_centered_flag(self):
        self.assertFalse(K1.centered)
        self.assertTrue(K2.centered)
        self.assertTrue(k4(0.5).centered)


class TestKernelState(unittest.TestCase):
    """Snapshots built from moments."""

    def setUp(self):
        self.mean = np.array([1.0, -2.0])
        self.cov = SpdMatrix([[2.0, 0.5], [0.5, 1.0]])

    def test_k1_ignores_mean(self):
        state = KernelState.from_moments(K1, self.mean)
        assert_allclose(state.center, 0.0)
        assert_allclose(state.weight, np.eye(2))

    def test_k2_centers(self):
        state = KernelState.from_moments(K2, self.mean)
        assert_allclose(state.center, self.mean)

    def test_k3_weight_is_inverse_covariance(self):
        state = KernelState.from_moments(K3, self.mean, self.cov)
        assert_allclose(state.weight, np.linalg.inv(np.asarray(self.cov)), atol=1e-12)

    def test_k4_weight(self):
        state = KernelState.from_moments(k4(0.5), self.mean, self.cov)
        r = 0.5 * np.asarray(self.cov) + 0.5 * np.eye(2)
        assert_allclose(state.weight, np.linalg.inv(r), atol=1e-12)

    def test_k4_extremes(self):
        assert_allclose(np.asarray(regularized_shape(self.cov, 1.0)), np.eye(2))
        assert_allclose(np.asarray(regularized_shape(self.cov, 0.0)), np.asarray(self.cov))

    def test_k3_requires_covariance(self):
        with self.assertRaises(ValueError):
            KernelState.from_moments(K3, self.mean)

    def test_shape_dimension_checked(self):
        with self.assertRaises(DimensionMismatchError):
            KernelState(K3, np.zeros(3), SpdMatrix.identity(2))


class TestKernelEvaluation(unittest.TestCase):
    """K(x, y), its gradient and Gram matrices."""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.points = rng.standard_normal((6, 3))
        cov = random_spd(3, 1)
        self.states = [
            KernelState.from_moments(K1, self.points.mean(axis=0)),
            KernelState.from_moments(K2, self.points.mean(axis=0)),
            KernelState.from_moments(K3, self.points.mean(axis=0), cov),
            KernelState.from_moments(k4(0.3), self.points.mean(axis=0), cov),
        ]

    def test_symmetry(self):
        x, y = self.points[0], self.points[1]
        for state in self.states:
            self.assertEqual(kernel_eval(state, x, y), kernel_eval(state, y, x))

    def test_gradient_matches_finite_difference(self):
        x, y = self.points[0], self.points[1]
        h = 1e-6
        for state in self.states:
            fd = np.array([
                (kernel_eval(state, x, y + h * e) - kernel_eval(state, x, y - h * e)) / (2 * h)
                for e in np.eye(3)
            ])
            assert_allclose(kernel_grad_y(state, x, y), fd, atol=1e-7)

    def test_gram_matrix_entries(self):
        for state in self.states:
            g = gram_matrix(state, self.points)
            self.assertEqual(g.shape, (6, 6))
            self.assertAlmostEqual(g[2, 4], kernel_eval(state, self.points[2], self.points[4]), places=12)
            assert_allclose(g, g.T, atol=1e-12)

    def test_gram_matrix_psd(self):
        rng = np.random.default_rng(3)
        for n in range(1, 7):
            pts = 2.0 * rng.standard_normal((n, 3))
            for i, state in enumerate(self.states):
                eigs = np.linalg.eigvalsh(gram_matrix(state, pts))
                self.assertGreaterEqual(eigs.min(), -1e-10 * max(1.0, eigs.max()), msg=f"kernel {i}, n={n}")

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            kernel_eval(self.states[0], np.zeros(2), np.zeros(3))


if __name__ == '__main__':
    unittest.main()
