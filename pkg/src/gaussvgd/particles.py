"""
Finite-particle Gaussian-SVGD systems.

For a bilinear kernel K(x, y) = (x - c)^T A (y - c) + 1 and per-particle
gradients g_j the interacting system

    x_i' = (1/N) sum_j grad_{x_j} K(x_i, x_j) - (1/N) sum_j K(x_i, x_j) g_j

collapses to the moment form

    x_i' = A (x_i - c) - E[g (x - c)^T] A (x_i - c) - E[g]

with E the particle average, which costs O(N d^2) instead of O(N^2 d). The
double sum is kept as an oracle. This module also holds the discrete update,
the closed-form and linear-factor trajectories, and the scalar step-size map
f_eps(x) = (1 + eps (1 - x))^2 x governing discrete centered runs.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .config import settings
from .core import (
    ArrayLike,
    DimensionMismatchError,
    GaussianParams,
    NotPositiveDefiniteError,
    SeedLike,
    SpdMatrix,
    as_generator,
    commutes,
    joint_eigenbasis,
    sample_gaussian,
    symmetrize,
)
from .estimators import MomentOracle, sample_moments
from .integrator import integrate_fixed_step
from .kernels import KernelFamily, KernelKind, KernelState, kernel_eval, kernel_grad_y
from .meanfield import NonCommutingError, _drift_general
from .records import TrajectoryRecord, TrajectoryRow
from .targets import GaussianTarget, TargetPotential, kl_gaussian

logger = logging.getLogger(__name__)

GradientFunction = Callable[[np.ndarray], np.ndarray]


class StepSizeError(ValueError):
    """Raised when a step size lies outside the analysed range (0, 1/2)."""
    pass


@dataclass(frozen=True)
class ParticleCloud:
    """N particles in R^d (rows of points) with their sample moments (1/N convention)."""
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DimensionMismatchError(f"Particle array must be (N, d) with N >= 1, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def _moments(self) -> Tuple[np.ndarray, np.ndarray]:
        return sample_moments(self.points)

    @property
    def mean(self) -> np.ndarray:
        return self._moments[0]

    @property
    def cov(self) -> np.ndarray:
        return self._moments[1]

    def gaussian(self) -> GaussianParams:
        """Sample moments as a Gaussian; raises NotPositiveDefiniteError for degenerate clouds."""
        return GaussianParams(self.mean, SpdMatrix(self.cov))

    def with_points(self, points: np.ndarray) -> "ParticleCloud":
        return ParticleCloud(points)

    def to_csv(self, path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        header = ",".join(f"x{i}" for i in range(self.dim))
        np.savetxt(out, self.points, delimiter=",", header=header, comments="")
        return out

    @classmethod
    def sample(cls, theta: GaussianParams, n: int, seed: SeedLike) -> "ParticleCloud":
        return cls(sample_gaussian(theta, n, seed))

    @classmethod
    def with_exact_moments(cls, mean: ArrayLike, cov: ArrayLike, n: int, seed: SeedLike) -> "ParticleCloud":
        """
        Cloud whose sample mean and covariance equal (mean, cov) up to roundoff.

        Standard normals are centered and whitened before being mapped, so n > d is needed.
        """
        cov = cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)
        if n <= cov.dim:
            raise ValueError(f"Need more particles than dimensions (n={n}, d={cov.dim})")
        z = as_generator(seed).standard_normal((n, cov.dim))
        z -= z.mean(axis=0)
        whitener = np.asarray(SpdMatrix(z.T @ z / n).inv_sqrt())
        z = z @ whitener
        return cls(np.asarray(mean, dtype=float) + z @ np.asarray(cov.sqrt()))


def kernel_state_for(kind: KernelKind, points: np.ndarray) -> KernelState:
    """Kernel snapshot at the sample moments of the given particles."""
    mean, cov = sample_moments(points)
    if kind.family in (KernelFamily.SIMPLE_BILINEAR, KernelFamily.AFFINE_INVARIANT):
        return KernelState.from_moments(kind, mean)
    try:
        return KernelState.from_moments(kind, mean, SpdMatrix(cov))
    except NotPositiveDefiniteError as e:
        raise NotPositiveDefiniteError(f"Kernel {kind} needs a nonsingular particle covariance: {e}")


def _points_of(cloud) -> np.ndarray:
    return np.asarray(getattr(cloud, "points", cloud), dtype=float)


def particle_rhs(cloud, kernel: KernelState, grad_v, double_sum: bool = False) -> np.ndarray:
    """
    Velocity of every particle under the interacting Stein system.

    Args:
        cloud: ParticleCloud or (N, d) array
        kernel: Kernel snapshot
        grad_v: Callable mapping (N, d) points to (N, d) gradients, or the gradients themselves
        double_sum: Sum grad_y K(x_i, x_j) - K(x_i, x_j) grad V(x_j) pair by pair
            instead of using the moment form

    Returns:
        (N, d) array of velocities
    """
    pts = _points_of(cloud)
    grads = grad_v(pts) if callable(grad_v) else np.asarray(grad_v, dtype=float)
    if grads.shape != pts.shape:
        raise DimensionMismatchError(f"Gradient shape {grads.shape} != particle shape {pts.shape}")
    if double_sum:
        out = np.zeros_like(pts)
        for i, x in enumerate(pts):
            for y, g in zip(pts, grads):
                out[i] += kernel_grad_y(kernel, x, y) - kernel_eval(kernel, x, y) * g
        return out / pts.shape[0]
    u = pts - kernel.center
    drive = u @ kernel.weight
    cross = grads.T @ u / pts.shape[0]
    return drive - drive @ cross.T - grads.mean(axis=0)


def linearized_gradient(points: np.ndarray, moments: MomentOracle, method_needs_points: bool = True) -> np.ndarray:
    """
    Linear surrogate grad V(x) ~ Gamma (x - mu) + m with (mu, Sigma) the sample
    moments and (m, Gamma) from the oracle.
    """
    mean, cov = sample_moments(points)
    theta = GaussianParams(mean, SpdMatrix(cov, rel_tol=0.0))
    estimate = moments.estimate(theta, points=points if method_needs_points else None)
    return (points - mean) @ np.asarray(estimate.Gamma_hat) + estimate.m_hat


@dataclass
class ParticleTrajectory:
    """Recorded clouds with the matching diagnostics record."""
    times: List[float] = field(default_factory=list)
    clouds: List[ParticleCloud] = field(default_factory=list)
    record: Optional[TrajectoryRecord] = None

    @property
    def final(self) -> ParticleCloud:
        return self.clouds[-1]


def _cloud_row(t: float, cloud: ParticleCloud, gaussian: Optional[GaussianTarget],
               reference: Optional[GaussianParams]) -> TrajectoryRow:
    row = TrajectoryRow(t=t)
    try:
        theta = cloud.gaussian()
    except NotPositiveDefiniteError:
        theta = None
    row.theta = theta
    if theta is not None and gaussian is not None:
        row.kl = kl_gaussian(theta, gaussian)
    if reference is not None:
        row.mu_err = float(np.linalg.norm(cloud.mean - reference.mean))
        row.sigma_err = float(np.linalg.norm(cloud.cov - reference.sigma, "fro"))
    return row


def integrate_particles(cloud0: ParticleCloud, kernel: KernelKind, target: TargetPotential,
                        dt: float, T: float, record_every: int = 1,
                        moments: Optional[MomentOracle] = None,
                        reference: Optional[GaussianParams] = None) -> ParticleTrajectory:
    """
    RK4 integration of the N-particle system.

    Each drift evaluation builds its kernel from the sample moments of the
    state it is given. Without a moment oracle the exact gradients of V are
    used; with one, the linear surrogate Gamma (x - mu) + m keeps the cloud an
    affine image of its initial configuration.

    Raises:
        IntegrationError: On non-finite state
    """
    gaussian = target if isinstance(target, GaussianTarget) else None
    if reference is None and gaussian is not None:
        reference = gaussian.params

    def rhs(t, y):
        pts = y[0]
        state = kernel_state_for(kernel, pts)
        if moments is None:
            return (particle_rhs(pts, state, target.grads),)
        return (particle_rhs(pts, state, linearized_gradient(pts, moments)),)

    trajectory = ParticleTrajectory(record=TrajectoryRecord(
        label=f"particles:{kernel}", metadata={"kernel": str(kernel), "n": cloud0.n, "dt": dt, "T": T},
    ))

    def on_record(step: int, t: float, y) -> None:
        cloud = ParticleCloud(y[0])
        trajectory.times.append(t)
        trajectory.clouds.append(cloud)
        trajectory.record.append(_cloud_row(t, cloud, gaussian, reference))

    logger.info(f"Integrating {cloud0.n} particles with kernel {kernel} up to T={T}")
    integrate_fixed_step(rhs, (cloud0.points,), dt, T, record_every=record_every, on_record=on_record)
    return trajectory


def closed_form_trajectory(cloud0: ParticleCloud, Q: SpdMatrix, t: float) -> ParticleCloud:
    """
    Centered commuting K1/K2 particles at time t:

        x_i(t) = (e^{-2t} I + (1 - e^{-2t}) Q^-1 C_0)^{-1/2} x_i(0)

    Raises:
        ValueError: If the cloud is not centered
        NonCommutingError: If C_0 Q != Q C_0
    """
    scale = max(1.0, float(np.abs(cloud0.points).max()))
    if np.linalg.norm(cloud0.mean) > 1e-12 * scale:
        raise ValueError("Closed-form trajectory needs a centered cloud")
    if not commutes(cloud0.cov, np.asarray(Q)):
        raise NonCommutingError("Sample covariance and Q do not commute")
    e = math.exp(-2.0 * t)
    m = SpdMatrix(symmetrize(e * np.eye(cloud0.dim) + (1.0 - e) * np.asarray(Q.inv()) @ cloud0.cov), rel_tol=0.0)
    return ParticleCloud(cloud0.points @ np.asarray(m.inv_sqrt()))


def factor_generator(kernel: KernelKind, mu: np.ndarray, C: np.ndarray,
                     m: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """
    Matrix B with A' = B A for the linear factor of x(t) = A_t (x(0) - m_0) + m_t.

        K1  I - Gamma C - m mu^T
        K2  I - Gamma C
        K3  C^-1 - Gamma
        K4  (I - Gamma C) R^-1,  R = (1 - nu) C + nu I
    """
    d = C.shape[0]
    family = kernel.family
    if family is KernelFamily.SIMPLE_BILINEAR:
        return np.eye(d) - gamma @ C - np.outer(m, mu)
    if family is KernelFamily.AFFINE_INVARIANT:
        return np.eye(d) - gamma @ C
    if family is KernelFamily.RESCALED_AFFINE_INVARIANT:
        return np.linalg.inv(C) - gamma
    r = (1.0 - kernel.nu) * C + kernel.nu * np.eye(d)
    return (np.eye(d) - gamma @ C) @ np.linalg.inv(r)


@dataclass
class FactorTrajectory:
    """Linear factors A_t together with the moment path (m_t, C_t)."""
    times: List[float] = field(default_factory=list)
    factors: List[np.ndarray] = field(default_factory=list)
    thetas: List[GaussianParams] = field(default_factory=list)

    def reconstruct(self, cloud0: ParticleCloud, index: int = -1) -> ParticleCloud:
        """x_i(t) = A_t (x_i(0) - m_0) + m_t."""
        a = self.factors[index]
        m0 = self.thetas[0].mean
        return ParticleCloud((cloud0.points - m0) @ a.T + self.thetas[index].mean)


def linear_factor_ode(kernel: KernelKind, initial: GaussianParams, moments: MomentOracle,
                      dt: float, T: float, record_every: int = 1) -> FactorTrajectory:
    """
    Integrate A' = B(mu_t, C_t, m_t, Gamma_t) A with A_0 = I jointly with the
    mean-field moment ODE, (m, Gamma) supplied by the oracle along the path.
    """
    d = initial.dim
    out = FactorTrajectory()

    def rhs(t, y):
        mu, C, A = y
        theta = GaussianParams(mu, SpdMatrix(C, rel_tol=0.0))
        m, gamma = moments(theta)
        m = np.asarray(m)
        gamma = np.asarray(gamma)
        dmu, dC = _drift_general(mu, C, m, gamma, kernel)
        return dmu, dC, factor_generator(kernel, mu, C, m, gamma) @ A

    def on_record(step: int, t: float, y) -> None:
        out.times.append(t)
        out.factors.append(np.array(y[2]))
        out.thetas.append(GaussianParams(y[0], SpdMatrix(y[1], rel_tol=0.0)))

    integrate_fixed_step(
        rhs, (initial.mean, initial.sigma, np.eye(d)), dt, T,
        project=lambda y: (y[0], symmetrize(y[1]), y[2]),
        check=lambda y: SpdMatrix(y[1]),
        record_every=record_every, on_record=on_record,
    )
    return out


def discrete_step(cloud: ParticleCloud, kernel: KernelKind, grad_hat, eps: float) -> ParticleCloud:
    """
    One explicit update x_i <- x_i + eps * velocity_i.

    Args:
        cloud: Current particles
        kernel: Kernel kind; its snapshot is taken at the cloud's sample moments
        grad_hat: Gradient function on (N, d) points (exact or linearized)
        eps: Step size >= 0
    """
    if eps < 0:
        raise StepSizeError(f"Step size must be non-negative, got {eps}")
    if eps == 0:
        return cloud
    state = kernel_state_for(kernel, cloud.points)
    return ParticleCloud(cloud.points + eps * particle_rhs(cloud, state, grad_hat))


def f_eps(x, eps: float):
    """Eigenvalue map (1 + eps (1 - x))^2 x of the centered discrete update."""
    return (1.0 + eps * (1.0 - x)) ** 2 * x


def f_eps_prime(x, eps: float):
    """(1 + eps - eps x)(1 + eps - 3 eps x)."""
    return (1.0 + eps - eps * x) * (1.0 + eps - 3.0 * eps * x)


def f_eps_fixed_points(eps: float) -> Tuple[float, float, float]:
    """Fixed points 0, 1 and the repelling 2/eps + 1."""
    if eps <= 0:
        raise StepSizeError(f"Step size must be positive, got {eps}")
    return 0.0, 1.0, 2.0 / eps + 1.0


@dataclass(frozen=True)
class StepAnalysis:
    """Contraction interval [u_eps, upper] and safe interval (0, 1 + 1/eps) of f_eps."""
    eps: float
    u_eps: float
    w_eps: float
    upper: float
    safe_interval: Tuple[float, float]

    def contracting(self, x: float) -> bool:
        return self.u_eps <= x <= self.upper

    def safe(self, x: float) -> bool:
        return self.safe_interval[0] < x < self.safe_interval[1]


def _smaller_root(eps: float, level: float) -> float:
    # Smaller root of f'_eps(x) = level, written without cancellation
    lead = (1.0 + eps) ** 2
    return (lead - level) / (eps * (2.0 * (1.0 + eps) + math.sqrt(lead + 3.0 * level)))


def step_analysis(eps: float) -> StepAnalysis:
    """
    Roots u_eps (f' = 1 - eps) and w_eps (f' = 1) of the derivative of f_eps.

    Raises:
        StepSizeError: If eps is outside (0, 1/2)
        ArithmeticError: If the ordering 0 < w < u < 1 < upper fails
    """
    if not 0.0 < eps < 0.5:
        raise StepSizeError(f"Step size must lie in (0, 0.5), got {eps}")
    u = _smaller_root(eps, 1.0 - eps)
    w = _smaller_root(eps, 1.0)
    upper = 1.0 / 3.0 + 1.0 / (3.0 * eps)
    if not (0.0 < w < u < 1.0 < upper):
        raise ArithmeticError(f"Step analysis ordering violated for eps={eps}: w={w}, u={u}, upper={upper}")
    return StepAnalysis(eps, u, w, upper, (0.0, 1.0 + 1.0 / eps))


class ConvergenceVerdict(Enum):
    """What the spectrum of Q^-1 C_0 guarantees for the discrete run."""
    GEOMETRIC = "geometric"
    EVENTUAL = "eventual"
    NO_GUARANTEE = "no_guarantee"


class RunOutcome(Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNDECIDED = "undecided"


@dataclass
class DiscreteConvergenceReport:
    """Per-step errors ||C_t - Q||_F with the geometric bound and verdicts."""
    eps: float
    spectrum: np.ndarray
    verdict: ConvergenceVerdict
    errors: np.ndarray
    bounds: np.ndarray
    outcome: RunOutcome
    bound_holds: Optional[bool]
    analysis: StepAnalysis
    clouds: List[ParticleCloud] = field(default_factory=list)

    @property
    def final_error(self) -> float:
        return float(self.errors[-1])


def classify_spectrum(spectrum: np.ndarray, analysis: StepAnalysis) -> ConvergenceVerdict:
    if all(analysis.contracting(x) for x in spectrum):
        return ConvergenceVerdict.GEOMETRIC
    if all(analysis.safe(x) for x in spectrum):
        return ConvergenceVerdict.EVENTUAL
    return ConvergenceVerdict.NO_GUARANTEE


def run_discrete_convergence(C0: SpdMatrix, Q: SpdMatrix, eps: float, T: int,
                             n_particles: Optional[int] = None, seed: SeedLike = 0,
                             keep_clouds: bool = False,
                             converge_tol: float = 1e-8) -> DiscreteConvergenceReport:
    """
    Run the centered discrete K1 update on a cloud with sample covariance C_0.

    The geometric bound ||C_t - Q|| <= (1 - eps)^t ||C_0 - Q|| is checked at
    every step when the spectrum of Q^-1 C_0 lies in [u_eps, upper]. Runs
    stop early on divergence (non-finite state or error above the configured
    threshold).

    Raises:
        NonCommutingError: If C_0 and Q do not commute
        StepSizeError: If eps is outside (0, 1/2)
    """
    if not commutes(np.asarray(C0), np.asarray(Q)):
        raise NonCommutingError("C_0 and Q do not commute")
    analysis = step_analysis(eps)
    v = joint_eigenbasis(C0, Q)
    spectrum = np.sort(
        np.einsum("ij,jk,ki->i", v.T, np.asarray(C0), v) / np.einsum("ij,jk,ki->i", v.T, np.asarray(Q), v)
    )
    verdict = classify_spectrum(spectrum, analysis)
    if verdict is ConvergenceVerdict.NO_GUARANTEE:
        logger.warning(f"Spectrum {spectrum} lies outside (0, {analysis.safe_interval[1]:.4g}): no guarantee")
    else:
        logger.info(f"Spectrum {spectrum}: {verdict.value} convergence expected for eps={eps}")

    d = C0.dim
    n = n_particles or 8 * d + 8
    cloud = ParticleCloud.with_exact_moments(np.zeros(d), C0, n, seed)
    target = GaussianTarget(np.zeros(d), Q)
    q = np.asarray(Q)

    errors = [float(np.linalg.norm(cloud.cov - q, "fro"))]
    clouds = [cloud] if keep_clouds else []
    outcome = RunOutcome.UNDECIDED
    for step in range(1, T + 1):
        cloud = discrete_step(cloud, KernelKind(KernelFamily.SIMPLE_BILINEAR), target.grads, eps)
        err = float(np.linalg.norm(cloud.cov - q, "fro")) if np.all(np.isfinite(cloud.points)) else math.inf
        errors.append(err)
        if keep_clouds:
            clouds.append(cloud)
        if not math.isfinite(err) or err > settings.divergence_threshold:
            outcome = RunOutcome.DIVERGED
            logger.warning(f"Discrete run diverged at step {step} (error {err:.3g})")
            break
    errors_arr = np.array(errors)
    bounds = (1.0 - eps) ** np.arange(errors_arr.size) * errors_arr[0]
    if outcome is not RunOutcome.DIVERGED and errors_arr[-1] < converge_tol:
        outcome = RunOutcome.CONVERGED
    # errors bottom out at roundoff while the bound keeps shrinking
    slack = 64.0 * np.finfo(float).eps * max(1.0, float(np.linalg.norm(q, "fro")))
    bound_holds = bool(np.all(errors_arr <= bounds + slack)) if verdict is ConvergenceVerdict.GEOMETRIC else None
    if bound_holds is False:
        logger.error(f"Geometric bound violated for eps={eps}")
    return DiscreteConvergenceReport(eps, spectrum, verdict, errors_arr, bounds, outcome,
                                     bound_holds, analysis, clouds)
