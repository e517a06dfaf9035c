"""
Mean-field dynamics on the Gaussian parameters (mu, Sigma).

Right-hand sides for the Wasserstein, Stein (kernels K1-K4), regularized
Stein and accelerated flows, closed-form solutions for commuting centered
problems, exponential-rate calculators and the RK4 driver that records
trajectories.

Public rhs_* functions take typed values; the array-level drift functions
they wrap are what the integrator evaluates, so intermediate RK4 stages are
not required to be SPD. Positive-definiteness is asserted after every step.
"""

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .config import settings
from .core import (
    GaussianParams,
    SpdMatrix,
    SymMatrix,
    commutes,
    joint_eigenbasis,
    symmetrize,
)
from .estimators import ExactGaussianMoments, MomentOracle
from .geometry import TangentElement
from .integrator import integrate_fixed_step
from .kernels import KernelFamily, KernelKind
from .records import TrajectoryRecord, TrajectoryRow
from .targets import GaussianTarget, Moments, TargetPotential, kl_gaussian

logger = logging.getLogger(__name__)


class NonCommutingError(ValueError):
    """Raised when a closed form needs commuting matrices and they do not commute."""
    pass


class FlowFamily(Enum):
    """Mean-field flows by config tag."""
    WGF = "wgf"
    BW = "bw"
    SVGD_K1 = "svgd_k1"
    SVGD_K2 = "svgd_k2"
    RSVGD = "rsvgd"
    SAIGF = "saigf"
    WAIGF = "waigf"
    GENERAL = "general"


@dataclass(frozen=True)
class AlphaSchedule:
    """
    Damping alpha_t >= 0 of the accelerated flows.

    constant: alpha_t = value; nesterov: alpha_t = value / (t + t0).
    """
    kind: str = "nesterov"
    value: float = 3.0
    t0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "nesterov"):
            raise ValueError(f"Unknown alpha schedule '{self.kind}'")
        if self.value < 0:
            raise ValueError(f"Damping must be non-negative, got {self.value}")
        if self.kind == "nesterov" and self.t0 <= 0:
            raise ValueError(f"Nesterov offset t0 must be positive, got {self.t0}")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.value
        return self.value / (t + self.t0)

    @classmethod
    def constant(cls, alpha: float) -> "AlphaSchedule":
        return cls("constant", alpha)

    @classmethod
    def nesterov(cls, c: float = 3.0, t0: float = 1.0) -> "AlphaSchedule":
        return cls("nesterov", c, t0)

    def __str__(self) -> str:
        if self.kind == "constant":
            return f"const={self.value:g}"
        return f"nesterov={self.value:g}"


_FLOW_PATTERN = re.compile(r"^(?P<name>[a-z_0-9]+)(?::(?P<arg>.+))?$")


@dataclass(frozen=True)
class FlowKind:
    """A flow family with its parameter: nu for R-SVGD, the kernel for general targets, alpha for AIGF."""
    family: FlowFamily
    nu: Optional[float] = None
    kernel: Optional[KernelKind] = None
    alpha: Optional[AlphaSchedule] = None

    def __post_init__(self):
        if self.family is FlowFamily.RSVGD:
            if self.nu is None or not 0.0 <= float(self.nu) <= 1.0:
                raise ValueError(f"R-SVGD needs nu in [0, 1], got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        if self.family is FlowFamily.GENERAL and self.kernel is None:
            raise ValueError("General-target flow needs a kernel")
        if self.family in (FlowFamily.SAIGF, FlowFamily.WAIGF) and self.alpha is None:
            object.__setattr__(self, "alpha", AlphaSchedule.nesterov())

    @classmethod
    def parse(cls, text: str) -> "FlowKind":
        """
        Parse wgf | bw | svgd_k1 | svgd_k2 | rsvgd:<nu> | saigf[:const=a|:nesterov=c]
        | waigf[...] | general:<kernel>.
        """
        match = _FLOW_PATTERN.match(text.strip().lower())
        if not match:
            raise ValueError(f"Invalid flow '{text}'")
        name, arg = match.group("name"), match.group("arg")
        try:
            family = FlowFamily(name)
        except ValueError:
            raise ValueError(f"Unknown flow '{name}'; expected one of {[f.value for f in FlowFamily]}")
        if family is FlowFamily.RSVGD:
            if arg is None:
                raise ValueError("R-SVGD flow needs nu, e.g. rsvgd:0.5")
            return cls(family, nu=float(arg.split("=")[-1]))
        if family is FlowFamily.GENERAL:
            if arg is None:
                raise ValueError("General flow needs a kernel, e.g. general:k1")
            return cls(family, kernel=KernelKind.parse(arg))
        if family in (FlowFamily.SAIGF, FlowFamily.WAIGF):
            if arg is None:
                return cls(family)
            kind, _, value = arg.partition("=")
            kind = {"const": "constant"}.get(kind, kind)
            if kind == "constant":
                return cls(family, alpha=AlphaSchedule.constant(float(value)))
            return cls(family, alpha=AlphaSchedule.nesterov(float(value or 3.0)))
        if arg is not None:
            raise ValueError(f"Flow '{name}' takes no argument")
        return cls(family)

    @property
    def centered_only(self) -> bool:
        return self.family in (FlowFamily.RSVGD, FlowFamily.SAIGF, FlowFamily.WAIGF)

    @property
    def accelerated(self) -> bool:
        return self.family in (FlowFamily.SAIGF, FlowFamily.WAIGF)

    def __str__(self) -> str:
        if self.family is FlowFamily.RSVGD:
            return f"rsvgd:{self.nu:g}"
        if self.family is FlowFamily.GENERAL:
            return f"general:{self.kernel}"
        if self.accelerated:
            return f"{self.family.value}:{self.alpha}"
        return self.family.value


@dataclass(frozen=True)
class AigfState:
    """Centered accelerated-flow state: covariance and dual variable S (S_0 = 0)."""
    theta: GaussianParams
    S: SymMatrix

    @classmethod
    def initial(cls, cov: Union[SpdMatrix, np.ndarray]) -> "AigfState":
        cov = cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)
        return cls(GaussianParams(np.zeros(cov.dim), cov), SymMatrix.zeros(cov.dim))


@dataclass(frozen=True)
class RateReport:
    """Exponential rate exponent with its analytical lower bound."""
    gamma: float
    lower_bound: Optional[float]
    source: str


# Array-level drifts. mu: (d,), sig: (d, d), P: target precision Q^-1.

def _drift_wgf(mu, sig, b, P):
    d = sig.shape[0]
    return -P @ (mu - b), 2.0 * np.eye(d) - sig @ P - P @ sig


def _drift_general(mu, sig, m, gamma, kernel: KernelKind):
    d = sig.shape[0]
    family = kernel.family
    if family is KernelFamily.SIMPLE_BILINEAR:
        dmu = (np.eye(d) - gamma @ sig) @ mu - (1.0 + mu @ mu) * m
        dsig = 2.0 * sig - sig @ (sig @ gamma + np.outer(mu, m)) - (gamma @ sig + np.outer(m, mu)) @ sig
        return dmu, dsig
    if family is KernelFamily.AFFINE_INVARIANT:
        sig2 = sig @ sig
        return -m, 2.0 * sig - sig2 @ gamma - gamma @ sig2
    if family is KernelFamily.RESCALED_AFFINE_INVARIANT:
        return -m, 2.0 * np.eye(d) - sig @ gamma - gamma @ sig
    r = (1.0 - kernel.nu) * sig + kernel.nu * np.eye(d)
    rinv_sig = np.linalg.solve(r, sig)
    rinv_sig2 = rinv_sig @ sig
    return -m, 2.0 * rinv_sig - rinv_sig2 @ gamma - gamma @ rinv_sig2.T


def _drift_rsvgd(sig, P, nu):
    d = sig.shape[0]
    r = (1.0 - nu) * sig + nu * np.eye(d)
    rinv_sig = np.linalg.solve(r, sig)
    rinv_sig2 = rinv_sig @ sig
    return 2.0 * rinv_sig - rinv_sig2 @ P - P @ rinv_sig2.T


def _drift_saigf(sig, S, P, alpha):
    sig2 = sig @ sig
    dsig = 2.0 * (S @ sig2 + sig2 @ S)
    S2 = S @ S
    dS = -alpha * S - 2.0 * (S2 @ sig + sig @ S2) + 0.5 * (np.linalg.inv(sig) - P)
    return dsig, dS


def _drift_waigf(sig, S, P, alpha):
    dsig = 2.0 * (S @ sig + sig @ S)
    dS = -alpha * S - 2.0 * S @ S + 0.5 * (np.linalg.inv(sig) - P)
    return dsig, dS


def _tangent(dmu, dsig) -> TangentElement:
    return TangentElement(dmu, SymMatrix(dsig))


def rhs_wgf(theta: GaussianParams, target: GaussianTarget) -> TangentElement:
    """Wasserstein (equivalently Bures-Wasserstein) flow: mu' = -Q^-1 (mu - b), Sigma' = 2I - Sigma Q^-1 - Q^-1 Sigma."""
    return _tangent(*_drift_wgf(theta.mean, theta.sigma, target.b, target.precision))


def rhs_svgd_k1(theta: GaussianParams, target: GaussianTarget) -> TangentElement:
    """
    Gaussian-SVGD with the kernel x^T y + 1 on a Gaussian target:

        mu'    = (I - Q^-1 Sigma) mu - (1 + mu^T mu) Q^-1 (mu - b)
        Sigma' = 2 Sigma - Sigma (Sigma + mu (mu - b)^T) Q^-1 - Q^-1 (Sigma + (mu - b) mu^T) Sigma
    """
    m = target.precision @ (theta.mean - target.b)
    return _tangent(*_drift_general(theta.mean, theta.sigma, m, target.precision,
                                    KernelKind(KernelFamily.SIMPLE_BILINEAR)))


def rhs_svgd_k2(theta: GaussianParams, target: GaussianTarget) -> TangentElement:
    """Affine-invariant kernel: mu' = -Q^-1 (mu - b), Sigma' = 2 Sigma - Sigma^2 Q^-1 - Q^-1 Sigma^2."""
    m = target.precision @ (theta.mean - target.b)
    return _tangent(*_drift_general(theta.mean, theta.sigma, m, target.precision,
                                    KernelKind(KernelFamily.AFFINE_INVARIANT)))


def rhs_svgd_centered(Sigma: SpdMatrix, Q: SpdMatrix) -> SymMatrix:
    """Riccati equation Sigma' = 2 Sigma - Sigma^2 Q^-1 - Q^-1 Sigma^2."""
    sig = np.asarray(Sigma)
    P = np.asarray(Q.inv())
    sig2 = sig @ sig
    return SymMatrix(2.0 * sig - sig2 @ P - P @ sig2)


def rhs_rsvgd(Sigma: SpdMatrix, Q: SpdMatrix, nu: float) -> SymMatrix:
    """Regularized SVGD: Sigma' = 2 R^-1 Sigma - R^-1 Sigma^2 Q^-1 - Q^-1 R^-1 Sigma^2, R = (1-nu) Sigma + nu I."""
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")
    return SymMatrix(_drift_rsvgd(np.asarray(Sigma), np.asarray(Q.inv()), nu))


def rhs_saigf(state: AigfState, Q: SpdMatrix, alpha_t: float) -> Tuple[SymMatrix, SymMatrix]:
    """
    Stein accelerated information gradient flow:

        Sigma' = 2 (S Sigma^2 + Sigma^2 S)
        S'     = -alpha S - 2 (S^2 Sigma + Sigma S^2) + 1/2 (Sigma^-1 - Q^-1)
    """
    dsig, dS = _drift_saigf(state.theta.sigma, np.asarray(state.S), np.asarray(Q.inv()), alpha_t)
    return SymMatrix(dsig), SymMatrix(dS)


def rhs_waigf(state: AigfState, Q: SpdMatrix, alpha_t: float) -> Tuple[SymMatrix, SymMatrix]:
    """Wasserstein accelerated flow: Sigma' = 2 (S Sigma + Sigma S), S' = -alpha S - 2 S^2 + 1/2 (Sigma^-1 - Q^-1)."""
    dsig, dS = _drift_waigf(state.theta.sigma, np.asarray(state.S), np.asarray(Q.inv()), alpha_t)
    return SymMatrix(dsig), SymMatrix(dS)


def rhs_general(theta: GaussianParams, moments: Moments, kernel: KernelKind) -> TangentElement:
    """
    Gaussian-SVGD on a general target with (m, Gamma) = (E[grad V], E[hess V]).

        K1  mu' = (I - Gamma Sigma) mu - (1 + mu^T mu) m
            Sigma' = 2 Sigma - Sigma (Sigma Gamma + mu m^T) - (Gamma Sigma + m mu^T) Sigma
        K2  mu' = -m, Sigma' = 2 Sigma - Sigma^2 Gamma - Gamma Sigma^2
        K3  mu' = -m, Sigma' = 2 I - Sigma Gamma - Gamma Sigma
        K4  mu' = -m, Sigma' = 2 R^-1 Sigma - R^-1 Sigma^2 Gamma - Gamma Sigma^2 R^-1
    """
    m, gamma = moments
    return _tangent(*_drift_general(theta.mean, theta.sigma, np.asarray(m, dtype=float),
                                    np.asarray(gamma), kernel))


def kl_centered(Sigma: np.ndarray, Q: SpdMatrix) -> float:
    """KL(N(0, Sigma) || N(0, Q)) = 1/2 (tr(Q^-1 Sigma) - log det(Q^-1 Sigma) - d)."""
    P = np.asarray(Q.inv())
    sign, logdet_sig = np.linalg.slogdet(Sigma)
    if sign <= 0:
        return math.inf
    return 0.5 * (float(np.sum(P * Sigma)) - logdet_sig + Q.logdet() - Sigma.shape[0])


def hamiltonian_saigf(Sigma: np.ndarray, S: np.ndarray, Q: SpdMatrix) -> float:
    """H = 2 tr(Sigma^2 S^2) + KL(N(0, Sigma) || N(0, Q)); dH/dt = -4 alpha tr(Sigma^2 S^2)."""
    Sigma = np.asarray(Sigma)
    S = np.asarray(S)
    return 2.0 * float(np.trace(Sigma @ Sigma @ S @ S)) + kl_centered(Sigma, Q)


def hamiltonian_waigf(Sigma: np.ndarray, S: np.ndarray, Q: SpdMatrix) -> float:
    """H = 2 tr(S^2 Sigma) + KL(N(0, Sigma) || N(0, Q))."""
    Sigma = np.asarray(Sigma)
    S = np.asarray(S)
    return 2.0 * float(np.trace(S @ S @ Sigma)) + kl_centered(Sigma, Q)


def _require_commuting(a, b, what: str) -> None:
    if not commutes(a, b, settings.commute_rel_tol):
        raise NonCommutingError(f"{what} do not commute")


def closed_form_commuting(Sigma0: SpdMatrix, Q: SpdMatrix, t: float) -> SpdMatrix:
    """
    Centered SVGD covariance for commuting Sigma_0 and Q:

        Sigma_t^-1 = e^{-2t} Sigma_0^-1 + (1 - e^{-2t}) Q^-1

    Raises:
        NonCommutingError: If Sigma_0 Q != Q Sigma_0
    """
    _require_commuting(np.asarray(Sigma0), np.asarray(Q), "Sigma_0 and Q")
    e = math.exp(-2.0 * t)
    precision = SpdMatrix(e * np.asarray(Sigma0.inv()) + (1.0 - e) * np.asarray(Q.inv()))
    return precision.inv()


def closed_form_rsvgd_eig(sigma0: float, lam: float, nu: float, t: float) -> float:
    """
    Eigenvalue of the centered R-SVGD covariance at time t.

    With a = (1 - nu) lambda + nu, sigma(t) solves

        a log|sigma - lambda| - nu log sigma = a log|sigma0 - lambda| - nu log sigma0 - 2t.

    Writing sigma = lambda + s e^u with s = sign(sigma0 - lambda), the left side
    is strictly increasing in u, so the root is bracketed below the initial u.

    Raises:
        ArithmeticError: If the root cannot be bracketed
    """
    if sigma0 <= 0 or lam <= 0:
        raise ValueError("Eigenvalues must be positive")
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")
    if t == 0 or sigma0 == lam:
        return float(sigma0)
    a = (1.0 - nu) * lam + nu
    s = 1.0 if sigma0 > lam else -1.0
    u0 = math.log(abs(sigma0 - lam))
    target = a * u0 - nu * math.log(sigma0) - 2.0 * t

    def g(u: float) -> float:
        return a * u - nu * math.log(lam + s * math.exp(u)) - target

    width = 1.0
    u_lo = u0 - width
    while g(u_lo) > 0:
        width *= 2.0
        u_lo = u0 - width
        if width > 1e4:
            raise ArithmeticError(f"Could not bracket R-SVGD eigenvalue root (sigma0={sigma0}, t={t})")
    root = brentq(g, u_lo, u0, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    return float(lam + s * math.exp(root))


def rsvgd_relation_residual(sigma: float, sigma0: float, lam: float, nu: float, t: float) -> float:
    """Residual of the implicit R-SVGD eigenvalue relation (zero on the exact solution)."""
    a = (1.0 - nu) * lam + nu
    lhs = a * math.log(abs(sigma - lam)) - nu * math.log(sigma)
    rhs = a * math.log(abs(sigma0 - lam)) - nu * math.log(sigma0) - 2.0 * t
    return lhs - rhs


def closed_form_rsvgd(Sigma0: SpdMatrix, Q: SpdMatrix, nu: float, t: float) -> SpdMatrix:
    """Centered R-SVGD covariance for commuting Sigma_0 and Q, eigenvalue by eigenvalue."""
    _require_commuting(np.asarray(Sigma0), np.asarray(Q), "Sigma_0 and Q")
    v = joint_eigenbasis(Sigma0, Q)
    sig0 = np.einsum("ij,jk,ki->i", v.T, np.asarray(Sigma0), v)
    lam = np.einsum("ij,jk,ki->i", v.T, np.asarray(Q), v)
    sig_t = np.array([closed_form_rsvgd_eig(s0, lm, nu, t) for s0, lm in zip(sig0, lam)])
    return SpdMatrix((v * sig_t) @ v.T)


def compute_gamma_k1(target: GaussianTarget) -> RateReport:
    """
    Rate exponent of Gaussian-SVGD with kernel K1 on a Gaussian target.

    gamma is the smallest eigenvalue of

        [[ I_{d^2},                  (1/sqrt 2) b (x) Q^{-1/2} ],
         [ (1/sqrt 2) b^T (x) Q^{-1/2}, 1/2 (1 + b^T b) Q^-1     ]]

    and satisfies gamma > 1 / (1 + b^T b + 2 lambda_max(Q)).

    Raises:
        ValueError: If d exceeds the configured cap
        ArithmeticError: If the computed gamma violates the bound
    """
    d = target.dim
    if d > settings.gamma_max_dim:
        raise ValueError(f"Rate matrix is capped at d={settings.gamma_max_dim}, got d={d}")
    b = target.b
    q_inv_half = np.asarray(target.Q.inv_sqrt())
    off = np.kron(b.reshape(d, 1), q_inv_half) / math.sqrt(2.0)
    corner = 0.5 * (1.0 + b @ b) * target.precision
    matrix = np.block([[np.eye(d * d), off], [off.T, corner]])
    gamma = float(np.linalg.eigvalsh(symmetrize(matrix))[0])
    bound = 1.0 / (1.0 + b @ b + 2.0 * target.Q.eigenvalues[-1])
    if not gamma > bound:
        raise ArithmeticError(f"Rate exponent {gamma:.6g} does not exceed its lower bound {bound:.6g}")
    return RateReport(gamma, float(bound), "svgd_k1_gaussian")


def compute_gamma_general(theta_star: GaussianParams, alpha: float,
                          beta: Optional[float] = None) -> RateReport:
    """
    Rate exponent of Gaussian-SVGD (K1) near the optimum of an alpha-convex target.

    gamma / alpha is the smallest eigenvalue of

        [[ I (x) Sigma*,            mu* (x) Sigma*^{1/2} ],
         [ mu*^T (x) Sigma*^{1/2},  (1 + |mu*|^2) I      ]]

    With a Hessian upper bound beta the lower bound alpha / (beta (1 + |mu*|^2) + 1)
    is reported alongside.
    """
    d = theta_star.dim
    if d > settings.gamma_max_dim:
        raise ValueError(f"Rate matrix is capped at d={settings.gamma_max_dim}, got d={d}")
    if alpha <= 0:
        raise ValueError(f"Convexity constant must be positive, got {alpha}")
    mu = theta_star.mean
    root = np.asarray(theta_star.cov.sqrt())
    off = np.kron(mu.reshape(d, 1), root)
    matrix = np.block([
        [np.kron(np.eye(d), theta_star.sigma), off],
        [off.T, (1.0 + mu @ mu) * np.eye(d)],
    ])
    gamma = alpha * float(np.linalg.eigvalsh(symmetrize(matrix))[0])
    bound = None if beta is None else alpha / (beta * (1.0 + mu @ mu) + 1.0)
    if bound is not None and gamma < bound:
        logger.warning(f"General rate exponent {gamma:.6g} below its bound {bound:.6g}")
    return RateReport(gamma, bound, "svgd_k1_general")


def theoretical_rate(flow: FlowKind, lambda_max: float) -> Optional[float]:
    """
    Covariance convergence rate on centered Gaussian problems.

    WGF/BW 2/lambda, SVGD 2, R-SVGD 2/((1-nu) lambda + nu); None for flows
    without a known rate.
    """
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    if flow.family in (FlowFamily.WGF, FlowFamily.BW):
        return 2.0 / lambda_max
    if flow.family in (FlowFamily.SVGD_K1, FlowFamily.SVGD_K2):
        return 2.0
    if flow.family is FlowFamily.RSVGD:
        return 2.0 / ((1.0 - flow.nu) * lambda_max + flow.nu)
    return None


InitialState = Union[GaussianParams, AigfState]


def _gaussian_target_or_none(target: TargetPotential) -> Optional[GaussianTarget]:
    return target if isinstance(target, GaussianTarget) else None


def integrate(flow: FlowKind, initial: InitialState, target: TargetPotential, dt: float, T: float,
              record_every: int = 1, moments: Optional[MomentOracle] = None,
              reference: Optional[GaussianParams] = None,
              diagnostic_samples: int = 0, seed: int = 0) -> TrajectoryRecord:
    """
    Integrate a mean-field flow with fixed-step RK4 and record diagnostics.

    Args:
        flow: Flow to integrate
        initial: Initial Gaussian, or an AigfState for accelerated flows
        target: Target potential; flows other than general need a GaussianTarget
        dt: Step size
        T: Horizon
        record_every: Record stride in steps
        moments: Moment oracle for general flows (exact moments for Gaussian targets by default)
        reference: theta* for the mu_err/sigma_err columns (defaults to (b, Q) on Gaussian targets)
        diagnostic_samples: If positive, estimate the free energy on that many fixed base draws
        seed: Seed for the diagnostic base draws

    Returns:
        TrajectoryRecord with one row per recorded step

    Raises:
        IntegrationError: On loss of positive-definiteness or non-finite state
        ValueError: On a flow/target mismatch
    """
    gaussian = _gaussian_target_or_none(target)
    if flow.family is not FlowFamily.GENERAL and gaussian is None:
        raise ValueError(f"Flow {flow} requires a Gaussian target")
    if reference is None and gaussian is not None:
        reference = gaussian.params
    if flow.family is FlowFamily.GENERAL and moments is None:
        if gaussian is None:
            raise ValueError("General flow on a non-Gaussian target needs a moment oracle")
        moments = ExactGaussianMoments(gaussian)

    if isinstance(initial, AigfState):
        theta0, S0 = initial.theta, np.asarray(initial.S)
    else:
        theta0, S0 = initial, np.zeros((initial.dim, initial.dim))
    if flow.centered_only:
        if np.any(gaussian.b) or np.any(theta0.mean):
            raise ValueError(f"Flow {flow} is defined for centered problems only")

    rhs, y0 = _build_rhs(flow, theta0, S0, gaussian, moments)
    base = None
    if diagnostic_samples > 0:
        base = np.random.Generator(np.random.PCG64(seed)).standard_normal((diagnostic_samples, theta0.dim))

    record = TrajectoryRecord(label=str(flow), metadata={
        "flow": str(flow), "dt": dt, "T": T, "record_every": record_every, "dim": theta0.dim,
    })

    def on_record(step: int, t: float, y) -> None:
        record.append(_diagnostics(flow, t, y, gaussian, target, moments, reference, base))
        logger.debug(f"{flow} t={t:.4g} row recorded")

    def check(y) -> None:
        SpdMatrix(y[1] if not flow.accelerated else y[0])

    logger.info(f"Integrating {flow} up to T={T} with dt={dt}")
    integrate_fixed_step(rhs, y0, dt, T, project=_project(flow), check=check,
                         record_every=record_every, on_record=on_record)
    return record


def _project(flow: FlowKind) -> Callable:
    if flow.accelerated:
        return lambda y: (symmetrize(y[0]), symmetrize(y[1]))
    return lambda y: (y[0], symmetrize(y[1]))


def _build_rhs(flow: FlowKind, theta0: GaussianParams, S0: np.ndarray,
               gaussian: Optional[GaussianTarget], moments: Optional[MomentOracle]):
    family = flow.family
    if family in (FlowFamily.WGF, FlowFamily.BW):
        b, P = gaussian.b, gaussian.precision
        return (lambda t, y: _drift_wgf(y[0], y[1], b, P)), (theta0.mean, theta0.sigma)
    if family in (FlowFamily.SVGD_K1, FlowFamily.SVGD_K2):
        b, P = gaussian.b, gaussian.precision
        kernel = KernelKind(KernelFamily.SIMPLE_BILINEAR if family is FlowFamily.SVGD_K1
                            else KernelFamily.AFFINE_INVARIANT)
        return (lambda t, y: _drift_general(y[0], y[1], P @ (y[0] - b), P, kernel)), (theta0.mean, theta0.sigma)
    if family is FlowFamily.RSVGD:
        P, nu = gaussian.precision, flow.nu
        return (lambda t, y: (np.zeros_like(y[0]), _drift_rsvgd(y[1], P, nu))), (theta0.mean, theta0.sigma)
    if family is FlowFamily.SAIGF:
        P, alpha = gaussian.precision, flow.alpha
        return (lambda t, y: _drift_saigf(y[0], y[1], P, alpha(t))), (theta0.sigma, S0)
    if family is FlowFamily.WAIGF:
        P, alpha = gaussian.precision, flow.alpha
        return (lambda t, y: _drift_waigf(y[0], y[1], P, alpha(t))), (theta0.sigma, S0)

    kernel = flow.kernel

    def general(t, y):
        # Stage states may be indefinite only through a bug; SpdMatrix raises and the step aborts
        theta = GaussianParams(y[0], SpdMatrix(y[1], rel_tol=0.0))
        m, gamma = moments(theta)
        return _drift_general(y[0], y[1], np.asarray(m), np.asarray(gamma), kernel)

    return general, (theta0.mean, theta0.sigma)


def _diagnostics(flow: FlowKind, t: float, y, gaussian: Optional[GaussianTarget],
                 target: TargetPotential, moments: Optional[MomentOracle],
                 reference: Optional[GaussianParams], base: Optional[np.ndarray]) -> TrajectoryRow:
    if flow.accelerated:
        sig, S = y
        theta = GaussianParams(np.zeros(sig.shape[0]), SpdMatrix(sig, rel_tol=0.0))
    else:
        theta = GaussianParams(y[0], SpdMatrix(y[1], rel_tol=0.0))
        S = None
    row = TrajectoryRow(t=t, theta=theta)
    if gaussian is not None:
        row.kl = kl_gaussian(theta, gaussian)
        row.free_energy = row.kl - gaussian.log_normalizer()
    elif base is not None:
        pts = theta.transform_normals(base)
        row.free_energy = float(np.mean(theta.logpdf(pts) + target.values(pts)))
    if reference is not None:
        row.mu_err = float(np.linalg.norm(theta.mean - reference.mean))
        row.sigma_err = float(np.linalg.norm(theta.sigma - reference.sigma, "fro"))
    if flow.family is FlowFamily.SAIGF:
        row.extras["hamiltonian"] = hamiltonian_saigf(theta.sigma, S, gaussian.Q)
    elif flow.family is FlowFamily.WAIGF:
        row.extras["hamiltonian"] = hamiltonian_waigf(theta.sigma, S, gaussian.Q)
    if flow.family is FlowFamily.GENERAL and gaussian is None and moments is not None:
        m, gamma = moments(theta)
        residual = np.linalg.norm(m) + np.linalg.norm(np.asarray(gamma) - np.asarray(theta.cov.inv()), "fro")
        row.extras["stationarity"] = float(residual)
    return row
