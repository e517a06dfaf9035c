"""
Moment estimators, distances between Gaussians and particle clouds, and
exponential rate fitting.

Moment oracles return (m, Gamma) = (E[grad V], E[hess V]) under a Gaussian
and are the swappable estimator concern of the flows and algorithms:

    ExactGaussianMoments   closed form for Gaussian targets
    MonteCarloMoments      fresh samples on every call
    FixedSampleMoments     one set of base normals, moved linearly with theta
    ParticleMoments        the particles themselves are the samples
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import linregress

from .core import (
    ArrayLike,
    DimensionMismatchError,
    GaussianParams,
    NotPositiveDefiniteError,
    SeedLike,
    SpdMatrix,
    SymMatrix,
    as_generator,
    commutes,
    sample_gaussian,
    symmetrize,
)
from .config import settings
from .targets import GaussianTarget, Moments, TargetPotential, exact_gaussian_moments

logger = logging.getLogger(__name__)


class EstimatorError(ValueError):
    """Raised when an estimate cannot be formed from the given data."""
    pass


class EstimationMethod(Enum):
    """How E[hess V] is estimated."""
    HESSIAN = "hessian"
    FIRST_ORDER = "first_order"


@dataclass(frozen=True)
class MomentEstimate:
    """Estimated (E[grad V], E[hess V]) with provenance."""
    m_hat: np.ndarray
    Gamma_hat: SymMatrix
    method: EstimationMethod
    sample_size: int

    def as_tuple(self) -> Moments:
        return self.m_hat, self.Gamma_hat


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit log(value) ~ intercept + slope * t over a window."""
    slope: float
    intercept: float
    window: Tuple[float, float]
    r_squared: float

    @property
    def rate(self) -> float:
        return -self.slope


def _samples(samples: ArrayLike, dim: int) -> np.ndarray:
    pts = np.asarray(samples, dtype=float)
    if pts.size == 0:
        raise EstimatorError("No samples given")
    pts = np.atleast_2d(pts)
    if pts.shape[1] != dim:
        raise DimensionMismatchError(f"Samples have dim {pts.shape[1]}, expected {dim}")
    return pts


def sample_moments(points: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance with the 1/N convention (may be singular)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise EstimatorError("No points given")
    mean = pts.mean(axis=0)
    centered = pts - mean
    return mean, symmetrize(centered.T @ centered / pts.shape[0])


def estimate_moments(samples: ArrayLike, theta: GaussianParams, target: TargetPotential,
                     method: EstimationMethod = EstimationMethod.HESSIAN) -> MomentEstimate:
    """
    Estimate (E[grad V], E[hess V]) from samples of N(theta).

    The first-order method replaces the Hessian average by
    (1/N) sum_k Sigma^-1 (x_k - mu) grad V(x_k)^T, symmetrized, which only
    needs gradients.

    Args:
        samples: (N, d) draws representing N(theta)
        theta: Gaussian the samples represent
        target: Potential V
        method: EstimationMethod

    Returns:
        MomentEstimate

    Raises:
        EstimatorError: On empty samples
    """
    pts = _samples(samples, theta.dim)
    grads = target.grads(pts)
    m_hat = grads.mean(axis=0)
    if method is EstimationMethod.HESSIAN:
        gamma = target.hessians(pts).mean(axis=0)
    else:
        prec = np.asarray(theta.cov.inv())
        gamma = prec @ (pts - theta.mean).T @ grads / pts.shape[0]
    return MomentEstimate(m_hat, SymMatrix(gamma), method, pts.shape[0])


def resampled_moments(theta: GaussianParams, target: TargetPotential, M: int,
                      method: EstimationMethod, seed: SeedLike) -> MomentEstimate:
    """Draw M fresh points from N(theta) and estimate the moments from them."""
    return estimate_moments(sample_gaussian(theta, M, seed), theta, target, method)


class MomentOracle(ABC):
    """Source of (m, Gamma) at a Gaussian state."""

    @abstractmethod
    def estimate(self, theta: GaussianParams, points: Optional[np.ndarray] = None) -> MomentEstimate:
        """Moments under theta; points are the particles when the oracle uses them."""

    def __call__(self, theta: GaussianParams) -> Moments:
        return self.estimate(theta).as_tuple()


class ExactGaussianMoments(MomentOracle):
    """Closed-form moments of a Gaussian target."""

    def __init__(self, target: GaussianTarget):
        self.target = target

    def estimate(self, theta: GaussianParams, points: Optional[np.ndarray] = None) -> MomentEstimate:
        m, gamma = exact_gaussian_moments(theta, self.target)
        return MomentEstimate(m, gamma, EstimationMethod.HESSIAN, 0)


class MonteCarloMoments(MomentOracle):
    """Fresh n_samples draws from N(theta) on every call."""

    def __init__(self, target: TargetPotential, n_samples: int,
                 method: EstimationMethod = EstimationMethod.HESSIAN, seed: SeedLike = 0):
        if n_samples < 1:
            raise ValueError(f"Sample count must be >= 1, got {n_samples}")
        self.target = target
        self.n_samples = n_samples
        self.method = method
        self.rng = as_generator(seed)

    def estimate(self, theta: GaussianParams, points: Optional[np.ndarray] = None) -> MomentEstimate:
        return resampled_moments(theta, self.target, self.n_samples, self.method, self.rng)


class FixedSampleMoments(MomentOracle):
    """
    Draws n_samples standard normals once and moves them with theta,
    x = mu + Sigma^{1/2} z, so the estimate is a deterministic function of theta.
    """

    def __init__(self, target: TargetPotential, n_samples: int,
                 method: EstimationMethod = EstimationMethod.HESSIAN, seed: SeedLike = 0):
        if n_samples < 1:
            raise ValueError(f"Sample count must be >= 1, got {n_samples}")
        self.target = target
        self.method = method
        self.base = as_generator(seed).standard_normal((n_samples, target.dim))

    def estimate(self, theta: GaussianParams, points: Optional[np.ndarray] = None) -> MomentEstimate:
        return estimate_moments(theta.transform_normals(self.base), theta, self.target, self.method)


class ParticleMoments(MomentOracle):
    """Uses the particle positions as the sample set, with theta their sample moments."""

    def __init__(self, target: TargetPotential, method: EstimationMethod = EstimationMethod.HESSIAN):
        self.target = target
        self.method = method

    def estimate(self, theta: GaussianParams, points: Optional[np.ndarray] = None) -> MomentEstimate:
        if points is None:
            raise EstimatorError("ParticleMoments needs the particle positions")
        return estimate_moments(points, theta, self.target, self.method)


def particle_state(points: ArrayLike, method: EstimationMethod) -> GaussianParams:
    """
    Gaussian with the sample moments of a cloud.

    Raises:
        EstimatorError: If the sample covariance is singular and the first-order
            estimator needs its inverse
    """
    mean, cov = sample_moments(points)
    try:
        return GaussianParams(mean, SpdMatrix(cov))
    except NotPositiveDefiniteError as e:
        if method is EstimationMethod.FIRST_ORDER:
            raise EstimatorError(f"First-order estimator needs a nonsingular sample covariance: {e}")
        # Hessian estimates never invert Sigma; keep a tiny ridge so the container stays valid
        ridge = max(np.trace(cov), 1.0) * 1e-10
        return GaussianParams(mean, SpdMatrix(cov + ridge * np.eye(cov.shape[0]), rel_tol=0.0))


def bures_w2(theta1: GaussianParams, theta2: GaussianParams) -> float:
    """
    Squared 2-Wasserstein distance between two Gaussians,

        |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}).
    """
    if theta1.dim != theta2.dim:
        raise DimensionMismatchError(f"Dims differ: {theta1.dim} vs {theta2.dim}")
    root2 = np.asarray(theta2.cov.sqrt())
    inner = symmetrize(root2 @ theta1.sigma @ root2)
    w, _ = np.linalg.eigh(inner)
    cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = theta1.mean - theta2.mean
    value = float(diff @ diff) + theta1.cov.trace() + theta2.cov.trace() - 2.0 * cross
    return max(value, 0.0)


def bures_w2_commuting(theta1: GaussianParams, theta2: GaussianParams) -> float:
    """|mu1 - mu2|^2 + ||S1^{1/2} - S2^{1/2}||_F^2, valid when the covariances commute."""
    if not commutes(theta1.sigma, theta2.sigma):
        raise ValueError("Covariances do not commute")
    diff = theta1.mean - theta2.mean
    root_diff = np.asarray(theta1.cov.sqrt()) - np.asarray(theta2.cov.sqrt())
    return float(diff @ diff + np.sum(root_diff ** 2))


def _cloud_points(cloud) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(cloud, "points", cloud), dtype=float))


def empirical_w2(cloud_a, other, seed: SeedLike = 0, cap: Optional[int] = None) -> float:
    """
    Squared W2 between two equal-size empirical measures via optimal assignment.

    When other is a GaussianParams, N points are drawn from it (seeded) and
    matched to the cloud.

    Args:
        cloud_a: Points (N, d) or an object with a points attribute
        other: Second cloud of the same size, or a Gaussian
        seed: Seed for the Gaussian draws
        cap: Largest N allowed for the O(N^3) assignment (defaults to settings.w2_exact_cap)

    Returns:
        Mean squared distance of the optimal matching

    Raises:
        EstimatorError: If N exceeds the cap or the sizes differ
    """
    a = _cloud_points(cloud_a)
    if isinstance(other, GaussianParams):
        b = sample_gaussian(other, a.shape[0], seed)
    else:
        b = _cloud_points(other)
    if a.shape != b.shape:
        raise EstimatorError(f"Cloud shapes differ: {a.shape} vs {b.shape}")
    cap = settings.w2_exact_cap if cap is None else cap
    if a.shape[0] > cap:
        raise EstimatorError(
            f"Exact W2 is capped at N={cap} (got {a.shape[0]}); average repetitions at smaller N instead"
        )
    cost = cdist(a, b, metric="sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def fit_rate(times: ArrayLike, values: ArrayLike, window: Tuple[float, float]) -> RateFit:
    """
    Fit the exponential rate of a positive series on a time window.

    Raises:
        EstimatorError: If fewer than 3 points fall in the window or a value
            in it is not positive
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if mask.sum() < 3:
        raise EstimatorError(f"Need at least 3 points in window [{lo}, {hi}], got {int(mask.sum())}")
    if np.any(v[mask] <= 0) or not np.all(np.isfinite(v[mask])):
        raise EstimatorError("Rate fit needs finite positive values in the window")
    logv = np.log(v[mask])
    if np.ptp(logv) == 0.0:
        return RateFit(0.0, float(logv[0]), (lo, hi), 1.0)
    result = linregress(t[mask], logv)
    return RateFit(float(result.slope), float(result.intercept), (lo, hi), float(result.rvalue ** 2))
