"""
Bilinear kernels K1-K4 and their gradients.

Every kernel has the form K(x, y) = (x - c)^T A (y - c) + 1 with a center c
and an SPD weight A:

    K1  simple bilinear          c = 0, A = I
    K2  affine invariant         c = mu, A = I
    K3  rescaled affine inv.     c = mu, A = Sigma^-1
    K4  regularized              c = mu, A = ((1 - nu) Sigma + nu I)^-1

A KernelState is an immutable snapshot of (mu, Sigma) for one drift
evaluation; A is computed once on construction.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .core import ArrayLike, DimensionMismatchError, SpdMatrix, as_vector

logger = logging.getLogger(__name__)


class KernelFamily(Enum):
    """Kernel families by config tag."""
    SIMPLE_BILINEAR = "k1"
    AFFINE_INVARIANT = "k2"
    RESCALED_AFFINE_INVARIANT = "k3"
    REGULARIZED = "k4"


_K4_PATTERN = re.compile(r"^k4(?::(?:(?:nu|ν)\s*=\s*)?(?P<nu>[^\s]+))?$")


@dataclass(frozen=True)
class KernelKind:
    """Kernel family plus the regularization weight nu for K4."""
    family: KernelFamily
    nu: Optional[float] = None

    def __post_init__(self):
        if self.family is KernelFamily.REGULARIZED:
            if self.nu is None:
                raise ValueError("Regularized kernel requires nu in [0, 1]")
            nu = float(self.nu)
            if not 0.0 <= nu <= 1.0:
                raise ValueError(f"Regularization weight nu must lie in [0, 1], got {nu}")
            object.__setattr__(self, "nu", nu)
        elif self.nu is not None:
            raise ValueError(f"Kernel {self.family.value} takes no nu parameter")

    @classmethod
    def parse(cls, text: str) -> "KernelKind":
        """
        Parse a kernel name: k1 | k2 | k3 | k4:nu=<float> (also k4:<float>).

        Raises:
            ValueError: On an unknown tag or malformed nu
        """
        token = text.strip().lower()
        for family in (KernelFamily.SIMPLE_BILINEAR, KernelFamily.AFFINE_INVARIANT,
                       KernelFamily.RESCALED_AFFINE_INVARIANT):
            if token == family.value:
                return cls(family)
        match = _K4_PATTERN.match(token)
        if not match:
            raise ValueError(f"Unknown kernel '{text}'; expected k1, k2, k3 or k4:nu=<float>")
        if match.group("nu") is None:
            raise ValueError(f"Kernel '{text}' is missing nu (use k4:nu=<float>)")
        try:
            nu = float(match.group("nu"))
        except ValueError:
            raise ValueError(f"Invalid nu in kernel '{text}'")
        return cls(KernelFamily.REGULARIZED, nu)

    @property
    def centered(self) -> bool:
        return self.family is not KernelFamily.SIMPLE_BILINEAR

    def __str__(self) -> str:
        if self.family is KernelFamily.REGULARIZED:
            return f"k4:nu={self.nu:g}"
        return self.family.value


K1 = KernelKind(KernelFamily.SIMPLE_BILINEAR)
K2 = KernelKind(KernelFamily.AFFINE_INVARIANT)
K3 = KernelKind(KernelFamily.RESCALED_AFFINE_INVARIANT)


def k4(nu: float) -> KernelKind:
    return KernelKind(KernelFamily.REGULARIZED, nu)


def regularized_shape(cov: SpdMatrix, nu: float) -> SpdMatrix:
    """R = (1 - nu) Sigma + nu I."""
    return SpdMatrix((1.0 - nu) * np.asarray(cov) + nu * np.eye(cov.dim), rel_tol=0.0)


@dataclass(frozen=True)
class KernelState:
    """
    Kernel parameterized by a snapshot of the current Gaussian state.

    center is zero for K1; shape is Sigma for K3, (1 - nu) Sigma + nu I for
    K4 and absent otherwise.
    """
    kind: KernelKind
    center: np.ndarray
    shape: Optional[SpdMatrix] = None
    weight: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        has_shape = self.kind.family in (KernelFamily.RESCALED_AFFINE_INVARIANT,
                                         KernelFamily.REGULARIZED)
        if has_shape != (self.shape is not None):
            raise ValueError(f"Kernel {self.kind} {'requires' if has_shape else 'takes no'} shape matrix")
        dim = self.center.shape[0]
        if self.shape is not None:
            if self.shape.dim != dim:
                raise DimensionMismatchError(f"Shape dim {self.shape.dim} != center dim {dim}")
            weight = np.asarray(self.shape.inv())
        else:
            weight = np.eye(dim)
        object.__setattr__(self, "weight", weight)

    @classmethod
    def from_moments(cls, kind: KernelKind, mean: ArrayLike, cov: Optional[SpdMatrix] = None) -> "KernelState":
        """
        Build the kernel for the Gaussian (mean, cov).

        cov is only needed by K3 and K4.
        """
        mean = as_vector(mean)
        if kind.family is KernelFamily.SIMPLE_BILINEAR:
            return cls(kind, np.zeros(mean.shape[0]))
        if kind.family is KernelFamily.AFFINE_INVARIANT:
            return cls(kind, mean)
        if cov is None:
            raise ValueError(f"Kernel {kind} requires the covariance")
        if kind.family is KernelFamily.RESCALED_AFFINE_INVARIANT:
            return cls(kind, mean, cov)
        return cls(kind, mean, regularized_shape(cov, kind.nu))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def _check(self, *vectors: np.ndarray) -> None:
        for v in vectors:
            if v.shape[-1] != self.dim:
                raise DimensionMismatchError(f"Expected dimension {self.dim}, got {v.shape[-1]}")


def kernel_eval(state: KernelState, x: ArrayLike, y: ArrayLike) -> float:
    """K(x, y) = (x - c)^T A (y - c) + 1, evaluated so that K(x, y) == K(y, x) bitwise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    state._check(x, y)
    u = x - state.center
    v = y - state.center
    return float(0.5 * (u @ state.weight @ v + v @ state.weight @ u) + 1.0)


def kernel_grad_y(state: KernelState, x: ArrayLike, y: ArrayLike) -> np.ndarray:
    """Gradient of K(x, y) in y, which is A (x - c) and does not depend on y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    state._check(x, y)
    return state.weight @ (x - state.center)


def gram_matrix(state: KernelState, points: np.ndarray, others: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix of K(x_i, y_j) over the rows of points and others (default: points)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    others = points if others is None else np.atleast_2d(np.asarray(others, dtype=float))
    state._check(points, others)
    return (points - state.center) @ state.weight @ (others - state.center).T + 1.0
