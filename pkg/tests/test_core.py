"""
Unit tests for the linear-algebra substrate.
"""

import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.core import (
    DimensionMismatchError,
    GaussianParams,
    NotPositiveDefiniteError,
    RngSeed,
    SpdMatrix,
    SymMatrix,
    as_vector,
    commutes,
    joint_eigenbasis,
    random_spd,
    sample_gaussian,
    solve_lyapunov,
)


class TestSymMatrix(unittest.TestCase):
    """Symmetric matrix value type."""

    def test_symmetrized_on_construction(self):
        m = SymMatrix([[1.0, 2.0], [0.0, 3.0]])
        assert_allclose(np.asarray(m), [[1.0, 1.0], [1.0, 3.0]])

    def test_entries_read_only(self):
        m = SymMatrix(np.eye(2))
        with self.assertRaises(ValueError):
            m.entries[0, 0] = 5.0

    def test_rejects_non_square(self):
        with self.assertRaises(DimensionMismatchError):
            SymMatrix(np.ones((2, 3)))

    def test_arithmetic(self):
        a = SymMatrix(np.eye(2))
        b = SymMatrix([[0.0, 1.0], [1.0, 0.0]])
        assert_allclose(np.asarray(a + b), [[1.0, 1.0], [1.0, 1.0]])
        assert_allclose(np.asarray(a - b), [[1.0, -1.0], [-1.0, 1.0]])
        assert_allclose(np.asarray(b * 2.0), [[0.0, 2.0], [2.0, 0.0]])
        assert_allclose(np.asarray(-a), -np.eye(2))


class TestSpdMatrix(unittest.TestCase):
    """SPD checks and spectral functions."""

    def setUp(self):
        self.a = random_spd(4, seed=11)

    def test_rejects_indefinite(self):
        with self.assertRaises(NotPositiveDefiniteError):
            SpdMatrix([[1.0, 0.0], [0.0, -1.0]])

    def test_rejects_nearly_singular(self):
        with self.assertRaises(NotPositiveDefiniteError):
            SpdMatrix(np.diag([1.0, 1e-14]))

    def test_rejects_non_finite(self):
        with self.assertRaises(NotPositiveDefiniteError):
            SpdMatrix([[np.nan, 0.0], [0.0, 1.0]])

    def test_sqrt_squares_back(self):
        r = np.asarray(self.a.sqrt())
        assert_allclose(r @ r, np.asarray(self.a), atol=1e-12)

    def test_inverse(self):
        assert_allclose(np.asarray(self.a.inv()) @ np.asarray(self.a), np.eye(4), atol=1e-12)

    def test_inv_sqrt(self):
        r = np.asarray(self.a.inv_sqrt())
        assert_allclose(r @ np.asarray(self.a) @ r, np.eye(4), atol=1e-12)

    def test_logdet(self):
        self.assertAlmostEqual(self.a.logdet(), np.linalg.slogdet(np.asarray(self.a))[1], places=12)

    def test_identity_condition_number(self):
        self.assertEqual(SpdMatrix.identity(3).condition_number(), 1.0)


class TestLyapunov(unittest.TestCase):
    """P X + X P = Q solver."""

    def test_solution_satisfies_equation(self):
        p = random_spd(5, seed=3)
        rng = np.random.default_rng(4)
        q = SymMatrix(rng.standard_normal((5, 5)))
        x = np.asarray(solve_lyapunov(p, q))
        assert_allclose(np.asarray(p) @ x + x @ np.asarray(p), np.asarray(q), atol=1e-10)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            solve_lyapunov(SpdMatrix.identity(2), SymMatrix(np.eye(3)))


class TestSeedsAndSampling(unittest.TestCase):
    """Seeded generators and Gaussian draws."""

    def test_seed_range(self):
        with self.assertRaises(ValueError):
            RngSeed(-1)
        with self.assertRaises(ValueError):
            RngSeed(2 ** 64)

    def test_spawn_is_deterministic_and_distinct(self):
        a = RngSeed(7).spawn(5)
        b = RngSeed(7).spawn(5)
        self.assertEqual([s.seed for s in a], [s.seed for s in b])
        self.assertEqual(len({s.seed for s in a}), 5)

    def test_sampling_reproducible(self):
        theta = GaussianParams([1.0, -1.0], np.diag([2.0, 0.5]))
        x = sample_gaussian(theta, 10, 123)
        y = sample_gaussian(theta, 10, RngSeed(123))
        self.assertEqual(x.shape, (10, 2))
        assert_allclose(x, y)

    def test_sampling_moments(self):
        theta = GaussianParams([1.0, -1.0], [[2.0, 0.3], [0.3, 0.5]])
        x = sample_gaussian(theta, 200000, 1)
        assert_allclose(x.mean(axis=0), theta.mean, atol=0.02)
        assert_allclose(np.cov(x.T), theta.sigma, atol=0.03)

    def test_sampling_rejects_zero(self):
        with self.assertRaises(ValueError):
            sample_gaussian(GaussianParams.standard(2), 0, 1)


class TestGaussianParams(unittest.TestCase):
    """Gaussian container."""

    def test_mean_dimension_checked(self):
        with self.assertRaises(DimensionMismatchError):
            GaussianParams([0.0, 0.0, 0.0], np.eye(2))

    def test_replace(self):
        theta = GaussianParams.standard(2)
        moved = theta.replace(mean=[1.0, 2.0])
        assert_allclose(moved.mean, [1.0, 2.0])
        assert_allclose(moved.sigma, np.eye(2))

    def test_logpdf_standard(self):
        theta = GaussianParams.standard(2)
        self.assertAlmostEqual(float(theta.logpdf(np.zeros((1, 2)))[0]), -np.log(2.0 * np.pi), places=12)

    def test_as_vector_read_only(self):
        v = as_vector([1.0, 2.0], 2)
        self.assertFalse(v.flags.writeable)


class TestCommutation(unittest.TestCase):
    """Commutation checks and joint eigenbases."""

    def test_diagonal_matrices_commute(self):
        self.assertTrue(commutes(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])))

    def test_generic_matrices_do_not_commute(self):
        self.assertFalse(commutes(np.asarray(random_spd(3, 1)), np.asarray(random_spd(3, 2))))

    def test_joint_eigenbasis_with_repeated_eigenvalues(self):
        a = SymMatrix(np.diag([1.0, 1.0, 2.0]))
        b = SymMatrix(np.diag([3.0, 4.0, 4.0]))
        v = joint_eigenbasis(a, b)
        for m in (a, b):
            d = v.T @ np.asarray(m) @ v
            assert_allclose(d - np.diag(np.diag(d)), 0.0, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
