"""
Canonical isomorphisms of the Gaussian Stein, Bures-Wasserstein and
regularized Stein metrics.

A cotangent element (nu, S) pairs with a tangent element (dmu, dSigma) as
nu^T dmu + tr(S dSigma). The inverse isomorphisms G^-1 map Euclidean KL
gradients to tangent vectors; minus that image is the gradient-flow velocity.
Forward maps G recover the cotangent element from a tangent one by solving
the defining Lyapunov system.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    DimensionMismatchError,
    GaussianParams,
    SpdMatrix,
    SymMatrix,
    as_vector,
    solve_lyapunov,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CotangentElement:
    """Mean part nu and covariance part S of a cotangent vector."""
    nu: np.ndarray
    S: SymMatrix

    def __post_init__(self):
        if not isinstance(self.S, SymMatrix):
            object.__setattr__(self, "S", SymMatrix(self.S))
        object.__setattr__(self, "nu", as_vector(self.nu, self.S.dim))

    @property
    def dim(self) -> int:
        return self.S.dim

    def __add__(self, other: "CotangentElement") -> "CotangentElement":
        return CotangentElement(self.nu + other.nu, self.S + other.S)

    def scale(self, a: float) -> "CotangentElement":
        return CotangentElement(a * self.nu, a * self.S)

    @classmethod
    def zeros(cls, dim: int) -> "CotangentElement":
        return cls(np.zeros(dim), SymMatrix.zeros(dim))


@dataclass(frozen=True)
class TangentElement:
    """Velocity (dmu, dSigma) of a curve on the Gaussian manifold."""
    dmu: np.ndarray
    dSigma: SymMatrix

    def __post_init__(self):
        if not isinstance(self.dSigma, SymMatrix):
            object.__setattr__(self, "dSigma", SymMatrix(self.dSigma))
        object.__setattr__(self, "dmu", as_vector(self.dmu, self.dSigma.dim))

    @property
    def dim(self) -> int:
        return self.dSigma.dim

    def __add__(self, other: "TangentElement") -> "TangentElement":
        return TangentElement(self.dmu + other.dmu, self.dSigma + other.dSigma)

    def __neg__(self) -> "TangentElement":
        return TangentElement(-self.dmu, -self.dSigma)

    def scale(self, a: float) -> "TangentElement":
        return TangentElement(a * self.dmu, a * self.dSigma)

    def norm(self) -> float:
        """Euclidean norm sqrt(|dmu|^2 + ||dSigma||_F^2)."""
        return float(np.sqrt(self.dmu @ self.dmu + self.dSigma.frobenius_norm() ** 2))

    @classmethod
    def zeros(cls, dim: int) -> "TangentElement":
        return cls(np.zeros(dim), SymMatrix.zeros(dim))


class Metric(Enum):
    """Metrics with a closed-form isomorphism on Gaussians."""
    STEIN_K1 = "stein_k1"
    STEIN_K2 = "stein_k2"
    BURES_WASSERSTEIN = "bw"


def _check_dims(theta: GaussianParams, dim: int) -> None:
    if theta.dim != dim:
        raise DimensionMismatchError(f"State dim {theta.dim} != element dim {dim}")


def _cov_squared(cov: SpdMatrix) -> SpdMatrix:
    return SpdMatrix(cov.apply(np.square), rel_tol=0.0)


def _rs_factor(cov: SpdMatrix, nu_reg: float) -> SpdMatrix:
    # R^-1 Sigma^2 with R = (1 - nu) Sigma + nu I; R is a function of Sigma so the product is SPD
    if not 0.0 <= nu_reg <= 1.0:
        raise ValueError(f"Regularization weight must lie in [0, 1], got {nu_reg}")
    return SpdMatrix(cov.apply(lambda w: w ** 2 / ((1.0 - nu_reg) * w + nu_reg)), rel_tol=0.0)


def inv_iso_k1(theta: GaussianParams, c: CotangentElement) -> TangentElement:
    """
    Inverse isomorphism of the Gaussian-Stein metric for the kernel x^T y + 1.

    Returns (2 S Sigma mu + (1 + mu^T mu) nu,
             Sigma (2 Sigma S + mu nu^T) + (2 S Sigma + nu mu^T) Sigma).
    """
    _check_dims(theta, c.dim)
    mu = theta.mean
    sigma = theta.sigma
    nu = c.nu
    s = np.asarray(c.S)
    dmu = 2.0 * s @ sigma @ mu + (1.0 + mu @ mu) * nu
    dsigma = sigma @ (2.0 * sigma @ s + np.outer(mu, nu)) + (2.0 * s @ sigma + np.outer(nu, mu)) @ sigma
    return TangentElement(dmu, SymMatrix(dsigma))


def inv_iso_k2(theta: GaussianParams, c: CotangentElement) -> TangentElement:
    """Affine-invariant kernel: (nu, 2 (Sigma^2 S + S Sigma^2))."""
    _check_dims(theta, c.dim)
    sigma2 = np.asarray(_cov_squared(theta.cov))
    s = np.asarray(c.S)
    return TangentElement(c.nu, SymMatrix(2.0 * (sigma2 @ s + s @ sigma2)))


def inv_iso_bw(theta: GaussianParams, c: CotangentElement) -> TangentElement:
    """Bures-Wasserstein: (nu, 2 (Sigma S + S Sigma))."""
    _check_dims(theta, c.dim)
    sigma = theta.sigma
    s = np.asarray(c.S)
    return TangentElement(c.nu, SymMatrix(2.0 * (sigma @ s + s @ sigma)))


def inv_iso_rs(Sigma: SpdMatrix, S: SymMatrix, nu_reg: float) -> SymMatrix:
    """
    Regularized Stein metric on centered Gaussians.

    Returns 2 (R^-1 Sigma^2 S + S R^-1 Sigma^2) with R = (1 - nu) Sigma + nu I.
    nu = 1 gives the K2 covariance map, nu = 0 the Bures-Wasserstein one.
    """
    if Sigma.dim != S.dim:
        raise DimensionMismatchError(f"Sigma dim {Sigma.dim} != S dim {S.dim}")
    p = np.asarray(_rs_factor(Sigma, nu_reg))
    s = np.asarray(S)
    return SymMatrix(2.0 * (p @ s + s @ p))


def iso_k1(theta: GaussianParams, xi: TangentElement) -> CotangentElement:
    """
    Forward isomorphism for K1: recover (nu, S) with inv_iso_k1(theta, (nu, S)) == xi.

    With c = 1 + |mu|^2, v = Sigma mu and S_m = 2 S, the defining equations are
    dmu = S_m v + c nu and dSigma = Sigma^2 S_m + S_m Sigma^2 + v nu^T + nu v^T.
    Eliminating nu leaves P S_m + S_m P = dSigma - (v dmu^T + dmu v^T) / c with
    P = Sigma (I - mu mu^T / c) Sigma, which is SPD since |mu mu^T / c| < 1.

    Raises:
        NotPositiveDefiniteError: If P loses definiteness numerically
    """
    _check_dims(theta, xi.dim)
    mu = theta.mean
    sigma = theta.sigma
    c = 1.0 + mu @ mu
    v = sigma @ mu
    p = SpdMatrix(sigma @ (np.eye(theta.dim) - np.outer(mu, mu) / c) @ sigma)
    rhs = SymMatrix(np.asarray(xi.dSigma) - (np.outer(v, xi.dmu) + np.outer(xi.dmu, v)) / c)
    s_metric = np.asarray(solve_lyapunov(p, rhs))
    nu = (xi.dmu - s_metric @ v) / c
    return CotangentElement(nu, SymMatrix(0.5 * s_metric))


def iso_k2(theta: GaussianParams, xi: TangentElement) -> CotangentElement:
    _check_dims(theta, xi.dim)
    s = solve_lyapunov(_cov_squared(theta.cov), 0.5 * xi.dSigma)
    return CotangentElement(xi.dmu, s)


def iso_bw(theta: GaussianParams, xi: TangentElement) -> CotangentElement:
    _check_dims(theta, xi.dim)
    s = solve_lyapunov(theta.cov, 0.5 * xi.dSigma)
    return CotangentElement(xi.dmu, s)


def iso_rs(Sigma: SpdMatrix, dSigma: SymMatrix, nu_reg: float) -> SymMatrix:
    """Inverse of inv_iso_rs: solves P S + S P = dSigma / 2 with P = R^-1 Sigma^2."""
    return solve_lyapunov(_rs_factor(Sigma, nu_reg), 0.5 * dSigma)


def cotangent_pairing(c: CotangentElement, xi: TangentElement) -> float:
    """Duality pairing nu^T dmu + tr(S dSigma)."""
    if c.dim != xi.dim:
        raise DimensionMismatchError(f"Cotangent dim {c.dim} != tangent dim {xi.dim}")
    return float(c.nu @ xi.dmu + np.sum(np.asarray(c.S) * np.asarray(xi.dSigma)))


def stein_metric_pairing(theta: GaussianParams, xi: TangentElement, eta: TangentElement) -> float:
    """
    Gaussian-Stein metric g_theta(xi, eta) for the kernel x^T y + 1.

    Each argument is mapped to its coefficients (b_i, S_i) with dmu_i =
    S_i Sigma mu + (1 + mu^T mu) b_i and dSigma_i = Sigma^2 S_i + S_i Sigma^2 +
    Sigma mu b_i^T + b_i mu^T Sigma. Then

        g = tr(S_1 S_2 Sigma^2) + (b_1^T S_2 + b_2^T S_1) Sigma mu
            + (1 + mu^T mu) b_1^T b_2.

    Args:
        theta: Base point
        xi: First tangent vector
        eta: Second tangent vector

    Returns:
        The metric value, symmetric in (xi, eta)
    """
    mu = theta.mean
    sigma = theta.sigma
    c1 = iso_k1(theta, xi)
    c2 = iso_k1(theta, eta)
    b1, s1 = c1.nu, 2.0 * np.asarray(c1.S)
    b2, s2 = c2.nu, 2.0 * np.asarray(c2.S)
    sigma2 = sigma @ sigma
    v = sigma @ mu
    cross = b1 @ s2 @ v + b2 @ s1 @ v
    trace_term = 0.5 * (np.trace(s1 @ s2 @ sigma2) + np.trace(s2 @ s1 @ sigma2))
    return float(trace_term + cross + (1.0 + mu @ mu) * (b1 @ b2))


def metric_pairing(theta: GaussianParams, xi: TangentElement, eta: TangentElement,
                   metric: Metric = Metric.STEIN_K1) -> float:
    """g_theta(xi, eta) = <G_theta xi, eta> for any metric with a closed-form isomorphism."""
    if metric is Metric.STEIN_K1:
        return stein_metric_pairing(theta, xi, eta)
    forward = iso_k2 if metric is Metric.STEIN_K2 else iso_bw
    return 0.5 * (cotangent_pairing(forward(theta, xi), eta) + cotangent_pairing(forward(theta, eta), xi))


INVERSE_ISOMORPHISMS = {
    Metric.STEIN_K1: inv_iso_k1,
    Metric.STEIN_K2: inv_iso_k2,
    Metric.BURES_WASSERSTEIN: inv_iso_bw,
}

FORWARD_ISOMORPHISMS = {
    Metric.STEIN_K1: iso_k1,
    Metric.STEIN_K2: iso_k2,
    Metric.BURES_WASSERSTEIN: iso_bw,
}


def gradient_flow_velocity(theta: GaussianParams, gradient: CotangentElement,
                           metric: Metric) -> TangentElement:
    """Velocity -G^-1(gradient) of the metric gradient flow."""
    return -INVERSE_ISOMORPHISMS[metric](theta, gradient)
