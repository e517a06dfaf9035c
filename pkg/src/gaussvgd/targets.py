"""
Target potentials V = -log rho* and the Gaussian variational inference
gradients built from their moments.

All targets evaluate batches: points are rows of an (N, d) array, and
single-point helpers wrap the batched versions.
"""

import logging
from abc import ABC, abstractmethod
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit, logsumexp
from scipy.stats import ortho_group

from .core import (
    ArrayLike,
    DimensionMismatchError,
    GaussianParams,
    SeedLike,
    SpdMatrix,
    SymMatrix,
    as_generator,
    as_vector,
)
from .geometry import CotangentElement

logger = logging.getLogger(__name__)

Moments = Tuple[np.ndarray, SymMatrix]


class TargetPotential(ABC):
    """Smooth potential V with batched value, gradient and Hessian."""

    dim: int

    @abstractmethod
    def values(self, points: np.ndarray) -> np.ndarray:
        """V at each row, shape (N,)."""

    @abstractmethod
    def grads(self, points: np.ndarray) -> np.ndarray:
        """Gradient of V at each row, shape (N, d)."""

    @abstractmethod
    def hessians(self, points: np.ndarray) -> np.ndarray:
        """Hessian of V at each row, shape (N, d, d)."""

    def _points(self, points: ArrayLike) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise DimensionMismatchError(f"Target dim {self.dim}, points have dim {pts.shape[1]}")
        return pts

    def value(self, x: ArrayLike) -> float:
        return float(self.values(self._points(x))[0])

    def grad(self, x: ArrayLike) -> np.ndarray:
        return self.grads(self._points(x))[0]

    def hess(self, x: ArrayLike) -> SymMatrix:
        return SymMatrix(self.hessians(self._points(x))[0])


class GaussianTarget(TargetPotential):
    """V(x) = 1/2 (x - b)^T Q^-1 (x - b)."""

    def __init__(self, b: ArrayLike, Q: ArrayLike):
        self.Q = Q if isinstance(Q, SpdMatrix) else SpdMatrix(Q)
        self.b = as_vector(b, self.Q.dim)
        self.dim = self.Q.dim
        self.precision = np.asarray(self.Q.inv())

    @property
    def params(self) -> GaussianParams:
        return GaussianParams(self.b, self.Q)

    @property
    def centered(self) -> bool:
        return not np.any(self.b)

    def values(self, points: np.ndarray) -> np.ndarray:
        diff = self._points(points) - self.b
        return 0.5 * np.einsum("ni,ij,nj->n", diff, self.precision, diff)

    def grads(self, points: np.ndarray) -> np.ndarray:
        return (self._points(points) - self.b) @ self.precision

    def hessians(self, points: np.ndarray) -> np.ndarray:
        n = self._points(points).shape[0]
        return np.broadcast_to(self.precision, (n, self.dim, self.dim)).copy()

    def log_normalizer(self) -> float:
        """log of the integral of exp(-V), i.e. d/2 log(2 pi) + 1/2 log det Q."""
        return 0.5 * self.dim * np.log(2.0 * np.pi) + 0.5 * self.Q.logdet()

    def __repr__(self) -> str:
        return f"GaussianTarget(dim={self.dim})"


class MixtureTarget(TargetPotential):
    """
    V(x) = -log sum_k w_k N(x; mu_k, Sigma_k).

    Gradient and Hessian use log-space responsibilities r_k(x), with
    g_k = Sigma_k^-1 (x - mu_k):

        grad V = sum_k r_k g_k
        hess V = sum_k r_k Sigma_k^-1 - sum_k r_k g_k g_k^T + gbar gbar^T
    """

    def __init__(self, weights: Sequence[float], means: ArrayLike, covs: Sequence[ArrayLike]):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size == 0 or np.any(w <= 0):
            raise ValueError("Mixture weights must be positive")
        self.weights = w / w.sum()
        mu = np.asarray(means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1)
        self.means = mu
        self.covs = [c if isinstance(c, SpdMatrix) else SpdMatrix(np.atleast_2d(c)) for c in covs]
        if not (len(self.covs) == mu.shape[0] == w.size):
            raise DimensionMismatchError("Mixture weights, means and covariances differ in count")
        self.dim = mu.shape[1]
        if any(c.dim != self.dim for c in self.covs):
            raise DimensionMismatchError("Mixture covariance dimensions do not match the means")
        self._precisions = np.stack([np.asarray(c.inv()) for c in self.covs])
        self._log_norms = np.array([
            -0.5 * (self.dim * np.log(2.0 * np.pi) + c.logdet()) for c in self.covs
        ])

    @classmethod
    def from_unnormalized(cls, amplitudes: Sequence[float], means: Sequence[float],
                          variances: Sequence[float]) -> "MixtureTarget":
        """
        One-dimensional mixture with density proportional to
        sum_k a_k exp(-(x - m_k)^2 / (2 s_k^2)).
        """
        a = np.asarray(amplitudes, dtype=float)
        s2 = np.asarray(variances, dtype=float)
        weights = a * np.sqrt(2.0 * np.pi * s2)
        return cls(weights, np.asarray(means, dtype=float).reshape(-1, 1), [[[v]] for v in s2])

    def _components(self, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # g[n, k] = Sigma_k^-1 (x_n - mu_k); log_terms[n, k] = log w_k + log N_k(x_n)
        diff = pts[:, None, :] - self.means[None, :, :]
        g = np.einsum("kij,nkj->nki", self._precisions, diff)
        quad = np.einsum("nki,nki->nk", diff, g)
        log_terms = np.log(self.weights)[None, :] + self._log_norms[None, :] - 0.5 * quad
        return g, log_terms

    def values(self, points: np.ndarray) -> np.ndarray:
        _, log_terms = self._components(self._points(points))
        return -logsumexp(log_terms, axis=1)

    def responsibilities(self, points: np.ndarray) -> np.ndarray:
        _, log_terms = self._components(self._points(points))
        return np.exp(log_terms - logsumexp(log_terms, axis=1, keepdims=True))

    def grads(self, points: np.ndarray) -> np.ndarray:
        g, log_terms = self._components(self._points(points))
        r = np.exp(log_terms - logsumexp(log_terms, axis=1, keepdims=True))
        return np.einsum("nk,nki->ni", r, g)

    def hessians(self, points: np.ndarray) -> np.ndarray:
        g, log_terms = self._components(self._points(points))
        r = np.exp(log_terms - logsumexp(log_terms, axis=1, keepdims=True))
        gbar = np.einsum("nk,nki->ni", r, g)
        h = np.einsum("nk,kij->nij", r, self._precisions)
        h -= np.einsum("nk,nki,nkj->nij", r, g, g)
        h += np.einsum("ni,nj->nij", gbar, gbar)
        return 0.5 * (h + np.swapaxes(h, 1, 2))

    def __repr__(self) -> str:
        return f"MixtureTarget(components={self.weights.size}, dim={self.dim})"


class LogisticTarget(TargetPotential):
    """
    Bayesian logistic regression posterior potential

        V(xi) = sum_i [log(1 + exp(<xi, X_i>)) - Y_i <xi, X_i>] + tau/2 |xi|^2

    with an optional Gaussian prior precision tau (0 is the flat prior).
    """

    def __init__(self, X: ArrayLike, Y: ArrayLike, prior_precision: float = 0.0):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.Y = np.asarray(Y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionMismatchError(f"{self.X.shape[0]} design rows but {self.Y.shape[0]} labels")
        if not np.all((self.Y == 0.0) | (self.Y == 1.0)):
            raise ValueError("Labels must be 0 or 1")
        if prior_precision < 0:
            raise ValueError(f"Prior precision must be non-negative, got {prior_precision}")
        self.prior_precision = float(prior_precision)
        self.dim = self.X.shape[1]
        if self.prior_precision == 0.0 and self.is_separable():
            logger.warning("Logistic data are linearly separable; the flat-prior posterior is improper")

    @classmethod
    def simulate(cls, n: int, d: int, xi_star: ArrayLike, seed: SeedLike,
                 prior_precision: float = 0.0) -> "LogisticTarget":
        """Draw X_i ~ N(0, I_d) and Y_i ~ Bernoulli(sigmoid(<xi*, X_i>))."""
        rng = as_generator(seed)
        xi_star = as_vector(xi_star, d)
        X = rng.standard_normal((n, d))
        Y = (rng.uniform(size=n) < expit(X @ xi_star)).astype(float)
        logger.info(f"Simulated logistic data: n={n}, d={d}, positives={int(Y.sum())}")
        return cls(X, Y, prior_precision)

    def is_separable(self) -> bool:
        """True when some xi has (2 Y_i - 1) <xi, X_i> >= 1 for all i (LP feasibility)."""
        signs = 2.0 * self.Y - 1.0
        result = linprog(
            c=np.zeros(self.dim),
            A_ub=-(signs[:, None] * self.X),
            b_ub=-np.ones(self.X.shape[0]),
            bounds=[(None, None)] * self.dim,
            method="highs",
        )
        return bool(result.status == 0)

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        z = pts @ self.X.T
        return (np.sum(np.logaddexp(0.0, z) - self.Y * z, axis=1)
                + 0.5 * self.prior_precision * np.sum(pts ** 2, axis=1))

    def grads(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        p = expit(pts @ self.X.T)
        return (p - self.Y) @ self.X + self.prior_precision * pts

    def hessians(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        p = expit(pts @ self.X.T)
        h = np.einsum("kn,ni,nj->kij", p * (1.0 - p), self.X, self.X)
        return h + self.prior_precision * np.eye(self.dim)[None, :, :]

    def __repr__(self) -> str:
        return f"LogisticTarget(n={self.X.shape[0]}, dim={self.dim})"


def random_gaussian_target(dim: int, seed: SeedLike, lambda_min: float = 0.01,
                           lambda_max: float = 1.0) -> GaussianTarget:
    """
    Target with b ~ Unif([0, 1]^d) and Q^-1 = U diag(lambda) U^T, U Haar
    orthogonal and lambda geometric from lambda_min to lambda_max.
    """
    rng = as_generator(seed)
    b = rng.uniform(0.0, 1.0, size=dim)
    lam = np.geomspace(lambda_min, lambda_max, dim)
    u = ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    precision = SpdMatrix((u * lam) @ u.T)
    return GaussianTarget(b, precision.inv())


def gvi_kl_gradients(theta: GaussianParams, target: TargetPotential, moments: Moments) -> CotangentElement:
    """
    Euclidean gradient of KL(N(mu, Sigma) || rho*) from caller-supplied moments.

    Args:
        theta: Current Gaussian
        target: Target potential (dimension check only)
        moments: (m, Gamma) = (E[grad V], E[hess V]) under theta

    Returns:
        (m, 1/2 (Gamma - Sigma^-1))
    """
    m, gamma = moments
    if target.dim != theta.dim:
        raise DimensionMismatchError(f"Target dim {target.dim} != state dim {theta.dim}")
    return CotangentElement(m, 0.5 * (SymMatrix(gamma) - theta.cov.inv()))


def exact_gaussian_moments(theta: GaussianParams, target: GaussianTarget) -> Moments:
    """m = Q^-1 (mu - b), Gamma = Q^-1."""
    if target.dim != theta.dim:
        raise DimensionMismatchError(f"Target dim {target.dim} != state dim {theta.dim}")
    return target.precision @ (theta.mean - target.b), SymMatrix(target.precision)


def kl_gaussians(theta: GaussianParams, other: GaussianParams) -> float:
    """KL(N(theta) || N(other)) in closed form."""
    if theta.dim != other.dim:
        raise DimensionMismatchError(f"Dims differ: {theta.dim} vs {other.dim}")
    prec = np.asarray(other.cov.inv())
    diff = theta.mean - other.mean
    trace = float(np.sum(prec * theta.sigma))
    logdet = other.cov.logdet() - theta.cov.logdet()
    value = 0.5 * (trace - theta.dim + logdet + diff @ prec @ diff)
    return max(float(value), 0.0)


def kl_gaussian(theta: GaussianParams, target: GaussianTarget) -> float:
    """
    KL(N(mu, Sigma) || N(b, Q)).

    Returns 1/2 (tr(Q^-1 Sigma) - log det(Q^-1 Sigma) - d + (mu - b)^T Q^-1 (mu - b)).
    """
    return kl_gaussians(theta, target.params)


def free_energy_estimate(samples: ArrayLike, theta: GaussianParams, target: TargetPotential) -> float:
    """
    Sample estimator (1/N) sum_i [log rho_theta(x_i) + V(x_i)] of the free energy.

    Raises:
        ValueError: If no samples are given
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0:
        raise ValueError("Free energy estimate needs at least one sample")
    return float(np.mean(theta.logpdf(pts) + target.values(pts)))

