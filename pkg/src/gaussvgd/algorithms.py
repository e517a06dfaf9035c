"""
Density-based and particle-based Gaussian-SVGD algorithms.

The density framework moves (mu, Sigma) directly:

    mu    <- mu + eps_1 F(mu, Sigma, m, Gamma)
    M     <- I + eps_2 G(mu, Sigma, m, Gamma)^T
    Sigma <- M Sigma M^T

with (m, Gamma) estimated from samples of N(mu, Sigma). The particle framework
moves N particles with the interacting update driven by the linearized
gradient Gamma (x - mu) + m at the particles' sample moments.

With kernels K1..K4 the two frameworks give eight named algorithms:

    density   SBGD  GF   BWGD  RGF
    particle  SBPF  GPF  BWPF  RGPF
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .config import settings
from .core import (
    GaussianParams,
    NotPositiveDefiniteError,
    SpdMatrix,
    as_generator,
    symmetrize,
)
from .estimators import (
    EstimationMethod,
    ExactGaussianMoments,
    FixedSampleMoments,
    MomentOracle,
    MonteCarloMoments,
    ParticleMoments,
    particle_state,
    resampled_moments,
)
from .kernels import KernelFamily, KernelKind
from .particles import ParticleCloud, discrete_step
from .records import TrajectoryRecord, TrajectoryRow
from .targets import GaussianTarget, TargetPotential, free_energy_estimate, kl_gaussian

logger = logging.getLogger(__name__)


class Framework(Enum):
    DENSITY = "density"
    PARTICLE = "particle"


class MomentSource(Enum):
    """Where (m, Gamma) come from at each iteration."""
    SAMPLED = "sampled"
    FIXED = "fixed"
    EXACT = "exact"


ALGORITHM_NAMES: Dict[Tuple[Framework, KernelFamily], str] = {
    (Framework.DENSITY, KernelFamily.SIMPLE_BILINEAR): "SBGD",
    (Framework.DENSITY, KernelFamily.AFFINE_INVARIANT): "GF",
    (Framework.DENSITY, KernelFamily.RESCALED_AFFINE_INVARIANT): "BWGD",
    (Framework.DENSITY, KernelFamily.REGULARIZED): "RGF",
    (Framework.PARTICLE, KernelFamily.SIMPLE_BILINEAR): "SBPF",
    (Framework.PARTICLE, KernelFamily.AFFINE_INVARIANT): "GPF",
    (Framework.PARTICLE, KernelFamily.RESCALED_AFFINE_INVARIANT): "BWPF",
    (Framework.PARTICLE, KernelFamily.REGULARIZED): "RGPF",
}

ALGORITHM_ORDER = ("SBGD", "GF", "BWGD", "RGF", "SBPF", "GPF", "BWPF", "RGPF")

# Regularization used by RGF/RGPF presets
DEFAULT_NU = 0.5

# Largest stable step sizes per study, in ALGORITHM_ORDER
PRESET_STEPS: Dict[str, Dict[str, float]] = {
    "logistic": dict(zip(ALGORITHM_ORDER, (0.02, 0.1, 2.0, 0.8, 0.02, 0.2, 4.0, 4.0))),
    "mixture": dict(zip(ALGORITHM_ORDER, (0.02, 0.1, 1.0, 1.0, 0.2, 0.8, 8.0, 8.0))),
}

# Common step size for comparisons over time
OVER_TIME_STEPS: Dict[str, float] = {"logistic": 0.01, "mixture": 0.1}


def algorithm_name(framework: Framework, kernel: KernelKind) -> str:
    return ALGORITHM_NAMES[(framework, kernel.family)]


def parse_algorithm(name: str, nu: float = DEFAULT_NU) -> Tuple[Framework, KernelKind]:
    """Framework and kernel for a named algorithm, e.g. 'BWPF' -> (particle, k3)."""
    key = name.strip().upper()
    for (framework, family), label in ALGORITHM_NAMES.items():
        if label == key:
            return framework, KernelKind(family, nu if family is KernelFamily.REGULARIZED else None)
    raise ValueError(f"Unknown algorithm '{name}'; expected one of {list(ALGORITHM_ORDER)}")


class DivergenceError(ArithmeticError):
    """Raised when an iterate stops being finite or blows past the divergence threshold."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class SingularUpdateError(DivergenceError):
    """Raised when M = I + eps G^T is singular and Sigma would lose positive-definiteness."""
    pass


class AlgoConfig(BaseModel):
    """
    Configuration of one algorithm run.

    step applies to both parts unless step_mu / step_sigma are given
    (density framework); the particle framework uses step alone.
    """

    framework: Framework = Framework.PARTICLE
    kernel: str = "k1"
    estimator: EstimationMethod = EstimationMethod.HESSIAN
    step: float = Field(default=0.01, gt=0)
    step_mu: Optional[float] = Field(default=None, gt=0)
    step_sigma: Optional[float] = Field(default=None, gt=0)
    n: int = Field(default=100, ge=1)
    iters: int = Field(default=100, ge=0)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    resample: Optional[int] = Field(default=None, ge=1)
    moments: MomentSource = MomentSource.SAMPLED
    record_every: int = Field(default=1, ge=1)
    diagnostic_samples: int = Field(default=1000, ge=0)

    @field_validator('kernel')
    @classmethod
    def validate_kernel(cls, v):
        return str(KernelKind.parse(v))

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v):
        if not (0 <= v < 2 ** 64):
            raise ValueError('Seed must be a 64-bit unsigned integer')
        return v

    @model_validator(mode="after")
    def fill_steps(self):
        if self.step_mu is None:
            self.step_mu = self.step
        if self.step_sigma is None:
            self.step_sigma = self.step
        return self

    @property
    def kernel_kind(self) -> KernelKind:
        return KernelKind.parse(self.kernel)

    @property
    def name(self) -> str:
        return algorithm_name(self.framework, self.kernel_kind)

    @classmethod
    def preset(cls, name: str, study: str = "logistic", **overrides) -> "AlgoConfig":
        """Named algorithm with its largest stable step size for a study."""
        if study not in PRESET_STEPS:
            raise ValueError(f"Unknown study '{study}'; expected one of {list(PRESET_STEPS)}")
        framework, kernel = parse_algorithm(name)
        fields = {"framework": framework, "kernel": str(kernel), "step": PRESET_STEPS[study][name.upper()]}
        fields.update(overrides)
        return cls(**fields)


@dataclass
class AlgoState:
    """Loop state: a Gaussian (density framework) or a cloud (particle framework)."""
    framework: Framework
    theta: Optional[GaussianParams] = None
    cloud: Optional[ParticleCloud] = None

    def __post_init__(self):
        if self.framework is Framework.DENSITY and self.theta is None:
            raise ValueError("Density state needs theta")
        if self.framework is Framework.PARTICLE and self.cloud is None:
            raise ValueError("Particle state needs a cloud")

    def gaussian(self, method: EstimationMethod = EstimationMethod.HESSIAN) -> GaussianParams:
        if self.framework is Framework.DENSITY:
            return self.theta
        return particle_state(self.cloud.points, method)


def drift_pair(theta: GaussianParams, m: np.ndarray, gamma: np.ndarray,
               kernel: KernelKind) -> Tuple[np.ndarray, np.ndarray]:
    """
    Kernel-specific (F, G) with Sigma G + G^T Sigma equal to the mean-field covariance drift.

        K1  F = (I - Gamma Sigma) mu - (1 + mu^T mu) m   G = I - Sigma Gamma - mu m^T
        K2  F = -m                                       G = I - Sigma Gamma
        K3  F = -m                                       G = Sigma^-1 - Gamma
        K4  F = -m                                       G = R^-1 (I - Sigma Gamma)
    """
    d = theta.dim
    mu, sig = theta.mean, theta.sigma
    m = np.asarray(m, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    eye = np.eye(d)
    family = kernel.family
    if family is KernelFamily.SIMPLE_BILINEAR:
        return (eye - gamma @ sig) @ mu - (1.0 + mu @ mu) * m, eye - sig @ gamma - np.outer(mu, m)
    if family is KernelFamily.AFFINE_INVARIANT:
        return -m, eye - sig @ gamma
    if family is KernelFamily.RESCALED_AFFINE_INVARIANT:
        return -m, np.asarray(theta.cov.inv()) - gamma
    r = (1.0 - kernel.nu) * sig + kernel.nu * eye
    return -m, np.linalg.solve(r, eye - sig @ gamma)


def _check_finite(values: np.ndarray, iteration: int) -> None:
    if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > settings.divergence_threshold:
        raise DivergenceError("Iterate diverged", iteration)


def density_step(theta: GaussianParams, target: TargetPotential, cfg: AlgoConfig,
                 oracle: Optional[MomentOracle] = None, iteration: int = 0) -> GaussianParams:
    """
    One density-framework update.

    Raises:
        SingularUpdateError: If the new covariance is not positive definite
        DivergenceError: If the iterate is not finite
    """
    oracle = oracle or build_oracle(cfg, target)
    m, gamma = oracle(theta)
    F, G = drift_pair(theta, m, gamma, cfg.kernel_kind)
    mu = theta.mean + cfg.step_mu * F
    M = np.eye(theta.dim) + cfg.step_sigma * G.T
    sigma = symmetrize(M @ theta.sigma @ M.T)
    _check_finite(mu, iteration)
    _check_finite(sigma, iteration)
    try:
        return GaussianParams(mu, SpdMatrix(sigma))
    except NotPositiveDefiniteError as e:
        raise SingularUpdateError(f"Covariance update lost positive-definiteness: {e}", iteration)


def particle_step(cloud: ParticleCloud, target: TargetPotential, cfg: AlgoConfig,
                  oracle: Optional[MomentOracle] = None, rng: Optional[np.random.Generator] = None,
                  iteration: int = 0) -> ParticleCloud:
    """
    One particle-framework update with grad V replaced by Gamma_hat (x - mu_t) + m_hat.

    Raises:
        EstimatorError: First-order estimator with a singular sample covariance
        DivergenceError: If the particles stop being finite
    """
    theta = particle_state(cloud.points, cfg.estimator)
    if cfg.resample is not None:
        estimate = resampled_moments(theta, target, cfg.resample, cfg.estimator,
                                     rng if rng is not None else as_generator(cfg.seed))
    else:
        oracle = oracle or build_oracle(cfg, target)
        estimate = oracle.estimate(theta, points=cloud.points)
    m_hat = estimate.m_hat
    gamma_hat = np.asarray(estimate.Gamma_hat)
    mean = theta.mean

    def grad_hat(points: np.ndarray) -> np.ndarray:
        return (points - mean) @ gamma_hat + m_hat

    try:
        new = discrete_step(cloud, cfg.kernel_kind, grad_hat, cfg.step)
    except NotPositiveDefiniteError as e:
        raise DivergenceError(f"Particle covariance degenerated: {e}", iteration)
    _check_finite(new.points, iteration)
    return new


def build_oracle(cfg: AlgoConfig, target: TargetPotential) -> MomentOracle:
    """Moment oracle for a config: exact, fixed base draws, fresh draws or the particles."""
    if cfg.moments is MomentSource.EXACT:
        if not isinstance(target, GaussianTarget):
            raise ValueError("Exact moments are only available for Gaussian targets")
        return ExactGaussianMoments(target)
    if cfg.moments is MomentSource.FIXED:
        return FixedSampleMoments(target, cfg.n, cfg.estimator, cfg.seed)
    if cfg.framework is Framework.PARTICLE:
        return ParticleMoments(target, cfg.estimator)
    return MonteCarloMoments(target, cfg.n, cfg.estimator, cfg.seed)


def _row(iteration: int, cfg: AlgoConfig, state: AlgoState, target: TargetPotential,
         reference: Optional[GaussianParams], base: Optional[np.ndarray]) -> TrajectoryRow:
    try:
        theta = state.gaussian(EstimationMethod.HESSIAN)
    except NotPositiveDefiniteError:
        theta = None
    row = TrajectoryRow(t=float(iteration), theta=theta)
    row.extras["time"] = iteration * (cfg.step if cfg.framework is Framework.PARTICLE else cfg.step_sigma)
    if theta is None:
        return row
    if isinstance(target, GaussianTarget):
        row.kl = kl_gaussian(theta, target)
        row.free_energy = row.kl - target.log_normalizer()
    elif base is not None:
        row.free_energy = free_energy_estimate(theta.transform_normals(base), theta, target)
    if reference is not None:
        row.mu_err = float(np.linalg.norm(theta.mean - reference.mean))
        row.sigma_err = float(np.linalg.norm(theta.sigma - reference.sigma, "fro"))
    return row


def run_algorithm(cfg: AlgoConfig, target: TargetPotential, initial: Optional[GaussianParams] = None,
                  reference: Optional[GaussianParams] = None,
                  raise_on_divergence: bool = True, stop_kl: Optional[float] = None) -> TrajectoryRecord:
    """
    Run cfg.iters iterations and record diagnostics every cfg.record_every iterations.

    The free energy of non-Gaussian targets is estimated on fixed base draws
    (cfg.diagnostic_samples), so rows are comparable across iterations.

    Args:
        cfg: Algorithm configuration
        target: Target potential
        initial: Starting Gaussian, N(0, I) by default
        reference: theta* for the error columns (defaults to (b, Q) on Gaussian targets)
        raise_on_divergence: If False, divergence stops the run, is noted in the metadata
            and the last finite iterate is recorded
        stop_kl: Stop once the KL to a Gaussian target drops below this value

    Returns:
        TrajectoryRecord; row.t is the iteration and extras["time"] the elapsed step-size sum
    """
    initial = initial or GaussianParams.standard(target.dim)
    if reference is None and isinstance(target, GaussianTarget):
        reference = target.params
    kernel = cfg.kernel_kind
    if (cfg.framework is Framework.DENSITY and kernel.family is KernelFamily.REGULARIZED
            and not (isinstance(target, GaussianTarget) and target.centered and not np.any(initial.mean))):
        logger.warning(f"{cfg.name} on a non-centered problem uses the mean-recentred K4 update")

    rng = as_generator(cfg.seed)
    oracle = build_oracle(cfg, target)
    if cfg.framework is Framework.DENSITY:
        state = AlgoState(Framework.DENSITY, theta=initial)
    else:
        state = AlgoState(Framework.PARTICLE, cloud=ParticleCloud.sample(initial, cfg.n, rng))
    base = None
    if cfg.diagnostic_samples > 0 and not isinstance(target, GaussianTarget):
        base = as_generator(cfg.seed + 1).standard_normal((cfg.diagnostic_samples, target.dim))

    record = TrajectoryRecord(label=cfg.name, metadata={"algorithm": cfg.name, **cfg.model_dump(mode="json")})
    record.append(_row(0, cfg, state, target, reference, base))
    logger.info(f"Running {cfg.name} for {cfg.iters} iterations (step {cfg.step:g}, n={cfg.n})")
    for it in range(1, cfg.iters + 1):
        try:
            if state.framework is Framework.DENSITY:
                state.theta = density_step(state.theta, target, cfg, oracle, iteration=it)
            else:
                state.cloud = particle_step(state.cloud, target, cfg, oracle, rng, iteration=it)
        except DivergenceError as e:
            if raise_on_divergence:
                raise
            logger.warning(f"{cfg.name} diverged: {e}")
            record.metadata["diverged_at"] = e.iteration
            if record.final.t != it - 1:
                record.append(_row(it - 1, cfg, state, target, reference, base))
            break
        if it % cfg.record_every == 0 or it == cfg.iters:
            record.append(_row(it, cfg, state, target, reference, base))
            if stop_kl is not None and record.final.kl is not None and record.final.kl < stop_kl:
                record.metadata["stopped_at"] = it
                break
    record.metadata.setdefault("diverged_at", None)
    logger.info(f"{cfg.name} finished: {len(record)} rows")
    return record

