"""
Linear-algebra substrate for gaussvgd.

This module provides the symmetric and symmetric positive-definite matrix value
types used throughout the package, the Lyapunov solver built on their cached
eigendecompositions, the Gaussian parameter container and seeded sampling.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from .config import settings

logger = logging.getLogger(__name__)

# Smallest admissible eigenvalue relative to the largest one
SPD_REL_TOL = settings.spd_rel_tol

# Bit generator behind every RngSeed; trajectories are reproducible across builds
RNG_ALGORITHM = "PCG64"

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix fails the SPD check on construction."""
    pass


class DimensionMismatchError(ValueError):
    """Raised when vector or matrix dimensions do not agree."""
    pass


def _as_square(entries: ArrayLike) -> np.ndarray:
    arr = np.array(entries, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"Expected a square matrix, got shape {arr.shape}")
    return arr


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2, which is exactly symmetric in floating point."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def as_vector(values: ArrayLike, dim: int = -1) -> np.ndarray:
    """
    Convert input to a read-only 1-D float array.

    Args:
        values: Vector-like input (scalars are promoted to length 1)
        dim: Expected length, or -1 to accept any length

    Returns:
        Read-only float vector

    Raises:
        DimensionMismatchError: If the length differs from dim
    """
    vec = np.array(values, dtype=float, copy=True).reshape(-1)
    if dim >= 0 and vec.shape[0] != dim:
        raise DimensionMismatchError(f"Expected vector of length {dim}, got {vec.shape[0]}")
    vec.setflags(write=False)
    return vec


class SymMatrix:
    """
    Dense symmetric d x d matrix, symmetrized on construction and immutable.

    Houses tangent and cotangent covariance parts. Arithmetic returns new
    SymMatrix instances; np.asarray() gives the (read-only) entries.
    """

    def __init__(self, entries: ArrayLike):
        arr = symmetrize(_as_square(entries))
        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @cached_property
    def eig(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
        w, v = np.linalg.eigh(self._entries)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig[0]

    def trace(self) -> float:
        return float(np.trace(self._entries))

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self._entries, "fro"))

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        if dtype is None:
            return self._entries
        return self._entries.astype(dtype)

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._entries + np.asarray(other))

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._entries - np.asarray(other))

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(float(scalar) * self._entries)

    __rmul__ = __mul__

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self._entries)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls(np.zeros((dim, dim)))


class SpdMatrix(SymMatrix):
    """
    Symmetric positive-definite matrix with eigendecomposition services.

    Construction fails with NotPositiveDefiniteError when the smallest
    eigenvalue does not exceed rel_tol times the largest one. The single
    eigendecomposition computed on construction backs sqrt, inverse,
    log-determinant and the Lyapunov solver.
    """

    def __init__(self, entries: ArrayLike, rel_tol: float = SPD_REL_TOL):
        super().__init__(entries)
        if not np.all(np.isfinite(self._entries)):
            raise NotPositiveDefiniteError("Matrix has non-finite entries")
        w = self.eigenvalues
        if w[-1] <= 0.0 or w[0] <= rel_tol * w[-1]:
            raise NotPositiveDefiniteError(
                f"Matrix is not positive definite: eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}]"
            )

    def apply(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Spectral function V diag(fn(w)) V^T, symmetrized."""
        w, v = self.eig
        return symmetrize((v * fn(w)) @ v.T)

    @cached_property
    def _inverse(self) -> "SpdMatrix":
        return SpdMatrix(self.apply(lambda w: 1.0 / w), rel_tol=0.0)

    @cached_property
    def _sqrt(self) -> "SpdMatrix":
        return SpdMatrix(self.apply(np.sqrt), rel_tol=0.0)

    def inv(self) -> "SpdMatrix":
        return self._inverse

    def sqrt(self) -> "SpdMatrix":
        return self._sqrt

    def inv_sqrt(self) -> "SpdMatrix":
        return SpdMatrix(self.apply(lambda w: 1.0 / np.sqrt(w)), rel_tol=0.0)

    def logdet(self) -> float:
        return float(np.sum(np.log(self.eigenvalues)))

    def condition_number(self) -> float:
        w = self.eigenvalues
        return float(w[-1] / w[0])

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))


def spd_sqrt(a: SpdMatrix) -> SpdMatrix:
    """Unique SPD square root R with R R = A, via eigendecomposition."""
    return a.sqrt()


def solve_lyapunov(p: SpdMatrix, q: SymMatrix) -> SymMatrix:
    """
    Solve P X + X P = Q for symmetric X.

    In P's eigenbasis the equation decouples: X'_ij = Q'_ij / (p_i + p_j),
    and p_i + p_j > 0 always holds for SPD P.

    Args:
        p: SPD coefficient matrix
        q: Symmetric right-hand side

    Returns:
        The unique symmetric solution X

    Raises:
        DimensionMismatchError: If P and Q dimensions differ
    """
    if p.dim != q.dim:
        raise DimensionMismatchError(f"Lyapunov dims differ: P is {p.dim}, Q is {q.dim}")
    w, v = p.eig
    q_rot = v.T @ np.asarray(q) @ v
    x_rot = q_rot / (w[:, None] + w[None, :])
    return SymMatrix(v @ x_rot @ v.T)


@dataclass(frozen=True)
class RngSeed:
    """64-bit seed for the PCG64 generator."""
    seed: int

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, n: int) -> List["RngSeed"]:
        """Independent child seeds derived through numpy's SeedSequence."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [RngSeed(int(child.generate_state(1, dtype=np.uint64)[0])) for child in children]


SeedLike = Union[RngSeed, int, np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Return a Generator for a seed, an integer, or pass a Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RngSeed):
        return seed.generator()
    return RngSeed(int(seed)).generator()


@dataclass(frozen=True)
class GaussianParams:
    """
    A point theta = (mu, Sigma) on the Gaussian manifold.

    Also houses target parameters (b, Q) where convenient.
    """
    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        if not isinstance(self.cov, SpdMatrix):
            object.__setattr__(self, "cov", SpdMatrix(self.cov))
        object.__setattr__(self, "mean", as_vector(self.mean, self.cov.dim))

    @property
    def dim(self) -> int:
        return self.cov.dim

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.cov)

    def replace(self, mean: ArrayLike = None, cov: ArrayLike = None) -> "GaussianParams":
        return GaussianParams(
            mean=self.mean if mean is None else mean,
            cov=self.cov if cov is None else cov,
        )

    def transform_normals(self, z: np.ndarray) -> np.ndarray:
        """Map standard-normal rows z to mu + Sigma^{1/2} z."""
        return self.mean + np.atleast_2d(z) @ np.asarray(self.cov.sqrt())

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log-density at each row of x."""
        from scipy.stats import multivariate_normal

        rv = multivariate_normal(mean=self.mean, cov=self.sigma)
        return np.atleast_1d(rv.logpdf(np.atleast_2d(x)))

    @classmethod
    def standard(cls, dim: int) -> "GaussianParams":
        return cls(np.zeros(dim), SpdMatrix.identity(dim))


def sample_gaussian(theta: GaussianParams, n: int, seed: SeedLike) -> np.ndarray:
    """
    Draw n i.i.d. points x = mu + Sigma^{1/2} z.

    Args:
        theta: Gaussian parameters
        n: Number of draws (>= 1)
        seed: RngSeed, integer seed or an existing Generator

    Returns:
        Array of shape (n, d), deterministic given an RngSeed or integer
    """
    if n < 1:
        raise ValueError(f"Sample count must be >= 1, got {n}")
    rng = as_generator(seed)
    z = rng.standard_normal((n, theta.dim))
    return theta.transform_normals(z)


def commutator_norm(a: ArrayLike, b: ArrayLike) -> float:
    """Frobenius norm of AB - BA."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a @ b - b @ a, "fro"))


def commutes(a: ArrayLike, b: ArrayLike, rel_tol: float = settings.commute_rel_tol) -> bool:
    """True when ||AB - BA||_F <= rel_tol * ||A||_F * ||B||_F."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.linalg.norm(a, "fro") * np.linalg.norm(b, "fro")
    return commutator_norm(a, b) <= rel_tol * scale


def joint_eigenbasis(a: SymMatrix, b: SymMatrix) -> np.ndarray:
    """
    Orthonormal basis diagonalizing two commuting symmetric matrices.

    Eigenvectors of a generic combination A + c B are shared by A and B when
    they commute, including the case of repeated eigenvalues of either one.
    """
    combo = np.asarray(a) + (np.sqrt(5.0) - 1.0) / 2.0 * np.asarray(b)
    _, v = np.linalg.eigh(symmetrize(combo))
    return v


def random_spd(dim: int, seed: SeedLike, spread: float = 1.0) -> SpdMatrix:
    """Random well-conditioned SPD matrix B B^T / d + spread I (test and harness helper)."""
    rng = as_generator(seed)
    b = rng.standard_normal((dim, dim))
    return SpdMatrix(b @ b.T / dim + spread * np.eye(dim))
