"""
Unit tests for the mean-field flows, closed forms and rate calculators.
"""

import math
import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.core import GaussianParams, SpdMatrix, random_spd
from gaussvgd.estimators import FixedSampleMoments
from gaussvgd.integrator import IntegrationError
from gaussvgd.kernels import K1, k4
from gaussvgd.meanfield import (
    AigfState,
    AlphaSchedule,
    FlowFamily,
    FlowKind,
    NonCommutingError,
    closed_form_commuting,
    closed_form_rsvgd,
    closed_form_rsvgd_eig,
    compute_gamma_general,
    compute_gamma_k1,
    integrate,
    rhs_saigf,
    rhs_svgd_centered,
    rhs_waigf,
    rsvgd_relation_residual,
    theoretical_rate,
)
from gaussvgd.targets import GaussianTarget, MixtureTarget


def _commuting_pair(seed=0):
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    sigma0 = SpdMatrix((u * [3.0, 0.5, 1.2]) @ u.T)
    q = SpdMatrix((u * [1.0, 2.0, 0.4]) @ u.T)
    return sigma0, q


class TestFlowKind(unittest.TestCase):
    """Parsing of flow names."""

    def test_parse_simple(self):
        self.assertIs(FlowKind.parse("wgf").family, FlowFamily.WGF)
        self.assertIs(FlowKind.parse(" SVGD_K1 ").family, FlowFamily.SVGD_K1)

    def test_parse_with_arguments(self):
        self.assertEqual(FlowKind.parse("rsvgd:0.25").nu, 0.25)
        self.assertEqual(FlowKind.parse("rsvgd:nu=0.25").nu, 0.25)
        self.assertEqual(FlowKind.parse("general:k4:nu=0.5").kernel, k4(0.5))
        self.assertEqual(FlowKind.parse("saigf:const=2").alpha, AlphaSchedule.constant(2.0))
        self.assertEqual(FlowKind.parse("waigf").alpha, AlphaSchedule.nesterov())

    def test_string_round_trip(self):
        for text in ("wgf", "rsvgd:0.5", "general:k1", "saigf:const=2", "waigf:nesterov=3"):
            flow = FlowKind.parse(text)
            self.assertEqual(FlowKind.parse(str(flow)), flow)

    def test_parse_errors(self):
        for text in ("wgf:1", "rsvgd", "rsvgd:1.5", "general", "nope", "general:k9"):
            with self.assertRaises(ValueError, msg=text):
                FlowKind.parse(text)

    def test_flags(self):
        self.assertTrue(FlowKind.parse("rsvgd:0.5").centered_only)
        self.assertTrue(FlowKind.parse("saigf").accelerated)
        self.assertFalse(FlowKind.parse("svgd_k2").centered_only)

    def test_alpha_schedule(self):
        self.assertEqual(AlphaSchedule.nesterov()(0.0), 3.0)
        self.assertEqual(AlphaSchedule.constant(0.7)(5.0), 0.7)
        with self.assertRaises(ValueError):
            AlphaSchedule("cosine")


class TestClosedForms(unittest.TestCase):
    """Analytical covariance trajectories on commuting centered problems."""

    def setUp(self):
        self.sigma0, self.q = _commuting_pair()

    def test_commuting_closed_form_satisfies_riccati(self):
        h = 1e-5
        t = 0.7
        plus = np.asarray(closed_form_commuting(self.sigma0, self.q, t + h))
        minus = np.asarray(closed_form_commuting(self.sigma0, self.q, t - h))
        here = closed_form_commuting(self.sigma0, self.q, t)
        assert_allclose((plus - minus) / (2 * h), np.asarray(rhs_svgd_centered(here, self.q)), atol=1e-6)

    def test_commuting_closed_form_limits(self):
        assert_allclose(np.asarray(closed_form_commuting(self.sigma0, self.q, 0.0)),
                        np.asarray(self.sigma0), atol=1e-12)
        assert_allclose(np.asarray(closed_form_commuting(self.sigma0, self.q, 30.0)),
                        np.asarray(self.q), atol=1e-10)

    def test_non_commuting_rejected(self):
        with self.assertRaises(NonCommutingError):
            closed_form_commuting(random_spd(3, 1), random_spd(3, 2), 1.0)

    def test_rsvgd_endpoints(self):
        # nu = 1 is the affine-invariant flow, nu = 0 the Wasserstein flow
        assert_allclose(np.asarray(closed_form_rsvgd(self.sigma0, self.q, 1.0, 0.8)),
                        np.asarray(closed_form_commuting(self.sigma0, self.q, 0.8)), atol=1e-10)
        sigma, lam, t = 3.0, 1.0, 0.4
        expected = lam + (sigma - lam) * math.exp(-2.0 * t / lam)
        self.assertAlmostEqual(closed_form_rsvgd_eig(sigma, lam, 0.0, t), expected, places=12)

    def test_rsvgd_relation_holds(self):
        for sigma0, lam in ((3.0, 1.0), (0.2, 2.0)):
            sigma = closed_form_rsvgd_eig(sigma0, lam, 0.5, 1.3)
            self.assertAlmostEqual(rsvgd_relation_residual(sigma, sigma0, lam, 0.5, 1.3), 0.0, places=10)
            self.assertTrue(min(sigma0, lam) < sigma < max(sigma0, lam))

    def test_rsvgd_fixed_point(self):
        self.assertEqual(closed_form_rsvgd_eig(2.0, 2.0, 0.5, 3.0), 2.0)


class TestRates(unittest.TestCase):
    """Rate exponents and theoretical rates."""

    def test_gamma_k1_centered_diagonal(self):
        report = compute_gamma_k1(GaussianTarget([0.0, 0.0], np.diag([2.0, 1.0])))
        self.assertAlmostEqual(report.gamma, 0.25, places=12)
        self.assertAlmostEqual(report.lower_bound, 0.2, places=12)

    def test_gamma_k1_exceeds_bound(self):
        target = GaussianTarget([0.5, -1.0, 0.3], random_spd(3, 4))
        report = compute_gamma_k1(target)
        self.assertGreater(report.gamma, report.lower_bound)

    def test_gamma_general(self):
        report = compute_gamma_general(GaussianParams([0.0, 0.0], np.diag([2.0, 1.0])), alpha=1.0, beta=1.0)
        self.assertAlmostEqual(report.gamma, 1.0, places=12)
        self.assertAlmostEqual(report.lower_bound, 0.5, places=12)
        with self.assertRaises(ValueError):
            compute_gamma_general(GaussianParams.standard(2), alpha=0.0)

    def test_theoretical_rates(self):
        self.assertEqual(theoretical_rate(FlowKind.parse("wgf"), 2.0), 1.0)
        self.assertEqual(theoretical_rate(FlowKind.parse("svgd_k2"), 2.0), 2.0)
        self.assertAlmostEqual(theoretical_rate(FlowKind.parse("rsvgd:0.5"), 2.0), 4.0 / 3.0)
        self.assertIsNone(theoretical_rate(FlowKind.parse("saigf"), 2.0))


class TestAcceleratedRhs(unittest.TestCase):
    """Accelerated flow right-hand sides."""

    def test_stationary_at_target(self):
        q = random_spd(3, 5)
        state = AigfState.initial(q)
        for rhs in (rhs_saigf, rhs_waigf):
            dsig, dS = rhs(state, q, 1.0)
            assert_allclose(np.asarray(dsig), 0.0, atol=1e-12)
            assert_allclose(np.asarray(dS), 0.0, atol=1e-12)


class TestIntegrate(unittest.TestCase):
    """RK4 integration of the flows."""

    def setUp(self):
        self.sigma0, self.q = _commuting_pair(1)
        self.target = GaussianTarget(np.zeros(3), self.q)
        self.theta0 = GaussianParams(np.zeros(3), self.sigma0)

    def test_svgd_k2_matches_closed_form(self):
        record = integrate(FlowKind.parse("svgd_k2"), self.theta0, self.target, 1e-3, 1.0, record_every=100)
        expected = np.asarray(closed_form_commuting(self.sigma0, self.q, 1.0))
        self.assertAlmostEqual(record.final.t, 1.0, places=12)
        assert_allclose(record.final_theta.sigma, expected, atol=1e-9)

    def test_rsvgd_matches_closed_form(self):
        record = integrate(FlowKind.parse("rsvgd:0.3"), self.theta0, self.target, 1e-3, 1.0, record_every=1000)
        expected = np.asarray(closed_form_rsvgd(self.sigma0, self.q, 0.3, 1.0))
        assert_allclose(record.final_theta.sigma, expected, atol=1e-8)

    def test_kl_decreases(self):
        target = GaussianTarget([1.0, -0.5, 0.2], self.q)
        record = integrate(FlowKind.parse("svgd_k1"), GaussianParams.standard(3), target, 1e-2, 5.0,
                           record_every=50)
        kl = record.column("kl")
        self.assertTrue(np.all(np.diff(kl) <= 1e-12))
        self.assertIn("svgd_k1", record.label)

    def test_general_flow_matches_specialized(self):
        target = GaussianTarget([1.0, -0.5, 0.2], self.q)
        general = integrate(FlowKind(FlowFamily.GENERAL, kernel=K1), GaussianParams.standard(3), target,
                            1e-2, 1.0, record_every=100)
        special = integrate(FlowKind.parse("svgd_k1"), GaussianParams.standard(3), target, 1e-2, 1.0,
                            record_every=100)
        assert_allclose(general.final_theta.sigma, special.final_theta.sigma, atol=1e-12)
        assert_allclose(general.final_theta.mean, special.final_theta.mean, atol=1e-12)

    def test_hamiltonian_non_increasing(self):
        flow = FlowKind(FlowFamily.SAIGF, alpha=AlphaSchedule.constant(1.0))
        record = integrate(flow, AigfState.initial(self.sigma0), self.target, 1e-3, 3.0, record_every=100)
        h = record.column("hamiltonian")
        self.assertTrue(np.all(np.diff(h) <= 1e-9))
        self.assertLess(h[-1], h[0])

    def test_centered_only_rejects_offset(self):
        target = GaussianTarget([1.0, 0.0, 0.0], self.q)
        with self.assertRaises(ValueError):
            integrate(FlowKind.parse("rsvgd:0.5"), self.theta0, target, 1e-2, 1.0)

    def test_gaussian_flow_needs_gaussian_target(self):
        mixture = MixtureTarget([1.0], np.zeros((1, 3)), [np.eye(3)])
        with self.assertRaises(ValueError):
            integrate(FlowKind.parse("wgf"), self.theta0, mixture, 1e-2, 1.0)
        with self.assertRaises(ValueError):
            integrate(FlowKind.parse("general:k2"), self.theta0, mixture, 1e-2, 1.0)

    def test_general_flow_records_stationarity(self):
        mixture = MixtureTarget([0.5, 0.5], [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [np.eye(3), np.eye(3)])
        oracle = FixedSampleMoments(mixture, 200, seed=1)
        record = integrate(FlowKind.parse("general:k2"), GaussianParams.standard(3), mixture, 1e-2, 0.5,
                           record_every=10, moments=oracle, diagnostic_samples=100)
        self.assertIn("stationarity", record.extra_columns())
        self.assertTrue(np.all(np.isfinite(record.column("free_energy"))))
        self.assertIsNone(record.final.kl)

    def test_blow_up_reports_integration_error(self):
        # K1 with an enormous step leaves the SPD cone
        target = GaussianTarget([3.0, 0.0, 0.0], self.q)
        with self.assertRaises(IntegrationError):
            integrate(FlowKind.parse("svgd_k1"), GaussianParams.standard(3), target, 2.0, 50.0)


if __name__ == '__main__':
    unittest.main()
