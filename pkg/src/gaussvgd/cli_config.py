"""
Experiment configuration for the gaussvgd CLI

Handles loading and validating YAML experiment files: the target, the
mean-field flow or algorithm to run, and the initial Gaussian.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .algorithms import AlgoConfig
from .config import settings
from .core import GaussianParams, SpdMatrix
from .kernels import KernelKind
from .meanfield import FlowKind
from .targets import GaussianTarget, LogisticTarget, MixtureTarget, TargetPotential, random_gaussian_target


class ExperimentConfigError(Exception):
    """Exception raised for experiment configuration errors."""
    pass


def _matrix(value: Any, dim: int) -> np.ndarray:
    """Scalar -> multiple of I, vector -> diagonal, nested list -> matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        return np.diag(arr)
    return arr


class GaussianTargetSpec(BaseModel):
    kind: Literal["gaussian"] = "gaussian"
    b: Optional[List[float]] = None
    Q: Optional[Any] = None
    dim: Optional[int] = Field(default=None, ge=1)
    # Random target with a geometric precision spectrum when b and Q are omitted
    lambda_min: float = Field(default=0.01, gt=0)
    lambda_max: float = Field(default=1.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def check_shape(self):
        if self.b is None and self.dim is None:
            raise ValueError("Gaussian target needs b/Q or dim")
        return self

    def build(self) -> GaussianTarget:
        if self.b is None:
            return random_gaussian_target(self.dim, self.seed, self.lambda_min, self.lambda_max)
        dim = len(self.b)
        Q = np.eye(dim) if self.Q is None else _matrix(self.Q, dim)
        return GaussianTarget(self.b, Q)


class MixtureTargetSpec(BaseModel):
    """One-dimensional mixture given by unnormalized amplitudes w_k exp(-(x - mu_k)^2 / (2 sigma2_k))."""
    kind: Literal["mixture"] = "mixture"
    w: List[float]
    mu: List[float]
    sigma2: List[float]

    @model_validator(mode="after")
    def check_lengths(self):
        if not (len(self.w) == len(self.mu) == len(self.sigma2)) or not self.w:
            raise ValueError("Mixture w, mu and sigma2 must be non-empty and of equal length")
        return self

    def build(self) -> MixtureTarget:
        return MixtureTarget.from_unnormalized(self.w, self.mu, self.sigma2)


class LogisticTargetSpec(BaseModel):
    kind: Literal["logistic"] = "logistic"
    n: int = Field(default=50, ge=1)
    d: int = Field(default=5, ge=1)
    xi_star: Optional[List[float]] = None
    seed: int = 0
    prior_precision: float = Field(default=0.0, ge=0)

    def build(self) -> LogisticTarget:
        xi = self.xi_star if self.xi_star is not None else [1.0] * self.d
        if len(xi) != self.d:
            raise ValueError(f"xi_star has length {len(xi)}, expected {self.d}")
        return LogisticTarget.simulate(self.n, self.d, xi, self.seed, self.prior_precision)


TargetSpec = Union[GaussianTargetSpec, MixtureTargetSpec, LogisticTargetSpec]


class InitialSpec(BaseModel):
    mean: Optional[List[float]] = None
    cov: Optional[Any] = None

    def build(self, dim: int) -> GaussianParams:
        mean = np.zeros(dim) if self.mean is None else np.asarray(self.mean, dtype=float)
        cov = np.eye(dim) if self.cov is None else _matrix(self.cov, dim)
        return GaussianParams(mean, SpdMatrix(cov))


class FlowSpec(BaseModel):
    flow: str
    dt: float = Field(default_factory=lambda: settings.default_dt, gt=0)
    T: float = Field(default=5.0, ge=0)
    record_every: int = Field(default=10, ge=1)
    diagnostic_samples: int = Field(default=0, ge=0)

    @field_validator('flow')
    @classmethod
    def validate_flow(cls, v):
        return str(FlowKind.parse(v))

    @property
    def flow_kind(self) -> FlowKind:
        return FlowKind.parse(self.flow)


class ExperimentConfig(BaseModel):
    """A target with either a flow or an algorithm (or both) to run on it."""
    name: str = "experiment"
    target: TargetSpec = Field(discriminator="kind")
    initial: InitialSpec = Field(default_factory=InitialSpec)
    flow: Optional[FlowSpec] = None
    algorithm: Optional[AlgoConfig] = None

    @model_validator(mode="after")
    def check_runnable(self):
        if self.flow is None and self.algorithm is None:
            raise ValueError("Experiment needs a 'flow' or an 'algorithm' section")
        return self

    def build_target(self) -> TargetPotential:
        return self.target.build()

    def build_initial(self, dim: int) -> GaussianParams:
        return self.initial.build(dim)


def load_config(config_path: str = "config.yaml") -> ExperimentConfig:
    """
    Load and validate an experiment file.

    Args:
        config_path: Path to the YAML file

    Returns:
        Validated ExperimentConfig

    Raises:
        ExperimentConfigError: If the file is missing, empty, not YAML or invalid
    """
    config_file = Path(config_path)
    if not config_file.exists():
        raise ExperimentConfigError(f"Configuration file not found: {config_path}")
    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ExperimentConfigError(f"Invalid YAML in configuration file: {e}")
    if raw is None:
        raise ExperimentConfigError(f"Configuration file is empty: {config_path}")
    if not isinstance(raw, dict):
        raise ExperimentConfigError("Configuration must be a mapping")
    return parse_config(_expand_env_vars(raw))


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ExperimentConfigError(f"Invalid experiment configuration: {e}")


def _expand_env_vars(config: Any) -> Any:
    """Recursively expand ${VAR} references in string values."""
    if isinstance(config, dict):
        return {key: _expand_env_vars(value) for key, value in config.items()}
    if isinstance(config, list):
        return [_expand_env_vars(item) for item in config]
    if isinstance(config, str):
        return os.path.expandvars(config)
    return config


def parse_kernel(text: str) -> KernelKind:
    try:
        return KernelKind.parse(text)
    except ValueError as e:
        raise ExperimentConfigError(str(e))


def parse_flow(text: str) -> FlowKind:
    try:
        return FlowKind.parse(text)
    except ValueError as e:
        raise ExperimentConfigError(str(e))


def create_example_config() -> str:
    """Example experiment file as a YAML string."""
    example_config = """
# gaussvgd experiment example

name: mixture-bwpf

# Target: gaussian {b, Q} | gaussian {dim, lambda_min, lambda_max, seed}
#         mixture {w, mu, sigma2} | logistic {n, d, xi_star, seed, prior_precision}
target:
  kind: mixture
  w: [0.3, 0.7]
  mu: [5.0, 10.0]
  sigma2: [25.0, 4.0]

initial:
  mean: [0.0]
  cov: 1.0

# Particle-based run with the Bures-Wasserstein kernel
algorithm:
  framework: particle
  kernel: k3
  estimator: hessian
  step: 8.0
  n: 500
  iters: 500
  seed: 7

# Mean-field flow on the same target (general:<kernel>)
flow:
  flow: general:k3
  dt: 0.01
  T: 10
  record_every: 10
  diagnostic_samples: 2000
"""
    return example_config.strip()
