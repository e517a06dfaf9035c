"""
Unit tests for the metric isomorphisms and gradient-flow velocities.
"""

import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.core import DimensionMismatchError, GaussianParams, SpdMatrix, SymMatrix, random_spd
from gaussvgd.geometry import (
    FORWARD_ISOMORPHISMS,
    INVERSE_ISOMORPHISMS,
    CotangentElement,
    Metric,
    TangentElement,
    cotangent_pairing,
    gradient_flow_velocity,
    inv_iso_k2,
    inv_iso_rs,
    iso_rs,
    metric_pairing,
)
from gaussvgd.meanfield import rhs_rsvgd, rhs_svgd_k1, rhs_svgd_k2, rhs_wgf
from gaussvgd.targets import GaussianTarget, exact_gaussian_moments, gvi_kl_gradients


def random_tangent(dim, rng):
    a = rng.standard_normal((dim, dim))
    return TangentElement(rng.standard_normal(dim), SymMatrix(a + a.T))


def random_cotangent(dim, rng):
    a = rng.standard_normal((dim, dim))
    return CotangentElement(rng.standard_normal(dim), SymMatrix(a + a.T))


def _assert_tangent_close(test, a, b, atol=1e-10):
    assert_allclose(a.dmu, b.dmu, atol=atol)
    assert_allclose(np.asarray(a.dSigma), np.asarray(b.dSigma), atol=atol)


class TestIsomorphisms(unittest.TestCase):
    """Forward and inverse maps are mutually inverse and self-adjoint."""

    def setUp(self):
        self.rng = np.random.default_rng(2024)
        self.theta = GaussianParams(self.rng.standard_normal(3), random_spd(3, self.rng))

    def test_round_trip_each_metric(self):
        for metric in Metric:
            c = random_cotangent(3, self.rng)
            xi = INVERSE_ISOMORPHISMS[metric](self.theta, c)
            back = FORWARD_ISOMORPHISMS[metric](self.theta, xi)
            assert_allclose(back.nu, c.nu, atol=1e-9, err_msg=metric.value)
            assert_allclose(np.asarray(back.S), np.asarray(c.S), atol=1e-9, err_msg=metric.value)

    def test_inverse_map_is_symmetric(self):
        for metric in Metric:
            c1 = random_cotangent(3, self.rng)
            c2 = random_cotangent(3, self.rng)
            inv = INVERSE_ISOMORPHISMS[metric]
            self.assertAlmostEqual(cotangent_pairing(c1, inv(self.theta, c2)),
                                   cotangent_pairing(c2, inv(self.theta, c1)), places=9)

    def test_metric_is_symmetric_and_positive(self):
        for metric in Metric:
            xi = random_tangent(3, self.rng)
            eta = random_tangent(3, self.rng)
            self.assertAlmostEqual(metric_pairing(self.theta, xi, eta, metric),
                                   metric_pairing(self.theta, eta, xi, metric), places=8)
            self.assertGreater(metric_pairing(self.theta, xi, xi, metric), 0.0)

    def test_regularized_map_endpoints(self):
        sigma = random_spd(3, self.rng)
        S = SymMatrix(self.rng.standard_normal((3, 3)))
        k2 = inv_iso_k2(GaussianParams(np.zeros(3), sigma), CotangentElement(np.zeros(3), S))
        assert_allclose(np.asarray(inv_iso_rs(sigma, S, 1.0)), np.asarray(k2.dSigma), atol=1e-10)
        bw = 2.0 * (np.asarray(sigma) @ np.asarray(S) + np.asarray(S) @ np.asarray(sigma))
        assert_allclose(np.asarray(inv_iso_rs(sigma, S, 0.0)), bw, atol=1e-10)

    def test_regularized_round_trip(self):
        sigma = random_spd(3, self.rng)
        S = SymMatrix(self.rng.standard_normal((3, 3)))
        assert_allclose(np.asarray(iso_rs(sigma, inv_iso_rs(sigma, S, 0.4), 0.4)), np.asarray(S), atol=1e-10)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            INVERSE_ISOMORPHISMS[Metric.STEIN_K1](self.theta, CotangentElement.zeros(2))


class TestGradientFlows(unittest.TestCase):
    """Minus the inverse isomorphism of the KL gradient is the flow right-hand side."""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def _random_problem(self):
        theta = GaussianParams(self.rng.standard_normal(3), random_spd(3, self.rng))
        target = GaussianTarget(self.rng.standard_normal(3), random_spd(3, self.rng))
        grad = gvi_kl_gradients(theta, target, exact_gaussian_moments(theta, target))
        return theta, target, grad

    def test_stein_k1(self):
        for _ in range(10):
            theta, target, grad = self._random_problem()
            _assert_tangent_close(self, gradient_flow_velocity(theta, grad, Metric.STEIN_K1),
                                  rhs_svgd_k1(theta, target))

    def test_stein_k2(self):
        for _ in range(10):
            theta, target, grad = self._random_problem()
            _assert_tangent_close(self, gradient_flow_velocity(theta, grad, Metric.STEIN_K2),
                                  rhs_svgd_k2(theta, target))

    def test_bures_wasserstein(self):
        for _ in range(10):
            theta, target, grad = self._random_problem()
            _assert_tangent_close(self, gradient_flow_velocity(theta, grad, Metric.BURES_WASSERSTEIN),
                                  rhs_wgf(theta, target))

    def test_regularized_stein_centered(self):
        sigma = random_spd(3, self.rng)
        q = random_spd(3, self.rng)
        S = (q.inv() - sigma.inv()) * 0.5
        velocity = -np.asarray(inv_iso_rs(sigma, S, 0.5))
        assert_allclose(velocity, np.asarray(rhs_rsvgd(sigma, q, 0.5)), atol=1e-10)

    def test_stationary_at_target(self):
        target = GaussianTarget([1.0, 2.0], SpdMatrix([[2.0, 0.3], [0.3, 1.0]]))
        theta = target.params
        grad = gvi_kl_gradients(theta, target, exact_gaussian_moments(theta, target))
        for metric in Metric:
            v = gradient_flow_velocity(theta, grad, metric)
            self.assertLess(v.norm(), 1e-12)


if __name__ == '__main__':
    unittest.main()
