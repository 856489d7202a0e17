"""Spatial correlation kernels and correlation-matrix assembly.

Multi-dimensional correlations are tensor products of one-dimensional kernel
forms, each dimension with its own length-scale omega_k (and roughness p_k for
the power-exponential family). Distances are always computed on inputs scaled
to [0, 1]; length-scales are expressed in those scaled units.

Parameterization note: every kernel kind follows its own canonical
one-dimensional expression literally. In particular the Gaussian kind divides
the squared distance by 2*omega^2 while the power-exponential kind raises
(h/omega) to the p-th power; the sum-form weighted distance (|h|^p / omega)
computed by :func:`weighted_distance` therefore matches the exponent of the
power-exponential product only up to the documented reparameterization
omega' = omega**p. Conversions are never applied silently.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ConfigError, DataError, IllConditionedError, NumericalWarning
from .spaces import DesignMatrix

KERNEL_KINDS = ("linear", "exponential", "power_exponential", "gaussian",
                "matern_3_2", "matern_5_2")

#: default nugget on scaled data, and the escalation ceiling (x10 steps)
DEFAULT_NUGGET = 1e-10
MAX_NUGGET = 1e-4


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Correlation kernel kind with per-dimension length-scales and, for the
    power-exponential family, roughness exponents p in [0, 2]."""

    kind: str
    omega: np.ndarray
    p: np.ndarray

    def __init__(self, kind: str, omega, p=None):
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {kind!r}; options: {KERNEL_KINDS}")
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if omega.ndim != 1 or not np.all(omega > 0):
            raise ConfigError("length-scales omega must be positive")
        d = omega.size
        if kind == "power_exponential":
            p = np.full(d, 2.0) if p is None else np.atleast_1d(np.asarray(p, float))
            if p.size != d:
                raise ConfigError(f"p has {p.size} entries, omega has {d}")
            if np.any(p < 0) or np.any(p > 2):
                raise ConfigError("roughness p must lie in [0, 2]")
        else:
            # fixed by the kind; an explicit p argument is ignored for these
            p = np.full(d, 2.0 if kind == "gaussian" else 1.0)
        omega.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.omega.size

    def with_params(self, omega, p=None) -> "KernelSpec":
        return KernelSpec(self.kind, omega,
                          p if p is not None else
                          (self.p if self.kind == "power_exponential" else None))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "omega": self.omega.tolist(), "p": self.p.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "KernelSpec":
        return cls(d["kind"], d["omega"], d.get("p"))

    @classmethod
    def from_json(cls, s: str) -> "KernelSpec":
        return cls.from_dict(json.loads(s))


def weighted_distance(x_i, x_j, spec: KernelSpec) -> float:
    """Sum-form weighted distance: sum_k |x_i,k - x_j,k|^p_k / omega_k.

    Uses the kernel's effective exponents (2 for gaussian, 1 for linear,
    exponential and Matern kinds, the spec's p for power-exponential).
    """
    x_i = np.atleast_1d(np.asarray(x_i, float))
    x_j = np.atleast_1d(np.asarray(x_j, float))
    if x_i.shape != x_j.shape or x_i.size != spec.dim:
        raise DataError(
            f"dimension mismatch: points {x_i.size}/{x_j.size}, kernel {spec.dim}")
    return float(np.sum(np.abs(x_i - x_j) ** spec.p / spec.omega))


def _corr_1d(kind: str, h: np.ndarray, omega: float, p: float) -> np.ndarray:
    """One-dimensional correlation R(h) for |h| >= 0."""
    t = h / omega
    if kind == "linear":
        return np.maximum(0.0, 1.0 - t)
    if kind == "exponential":
        return np.exp(-t)
    if kind == "power_exponential":
        return np.exp(-t ** p)
    if kind == "gaussian":
        return np.exp(-(h * h) / (2.0 * omega * omega))
    if kind == "matern_3_2":
        s = math.sqrt(3.0) * t
        return (1.0 + s) * np.exp(-s)
    if kind == "matern_5_2":
        s = math.sqrt(5.0) * t
        return (1.0 + s + 5.0 * (h * h) / (3.0 * omega * omega)) * np.exp(-s)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def kernel_eval(spec: KernelSpec, x_i, x_j) -> float:
    """Correlation of two points: product over dimensions of the 1-D kernel."""
    x_i = np.atleast_1d(np.asarray(x_i, float))
    x_j = np.atleast_1d(np.asarray(x_j, float))
    if x_i.size != spec.dim or x_j.size != spec.dim:
        raise DataError(
            f"dimension mismatch: points {x_i.size}/{x_j.size}, kernel {spec.dim}")
    h = np.abs(x_i - x_j)
    val = 1.0
    for k in range(spec.dim):
        val *= float(_corr_1d(spec.kind, h[k:k + 1], spec.omega[k], spec.p[k])[0])
    return val


def cross_corr_matrix(A: np.ndarray, B: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """|A| x |B| correlation matrix between two point sets (scaled coords)."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    if A.shape[1] != spec.dim or B.shape[1] != spec.dim:
        raise DataError(
            f"dimension mismatch: points {A.shape[1]}/{B.shape[1]}, kernel {spec.dim}")
    out = np.ones((A.shape[0], B.shape[0]))
    for k in range(spec.dim):
        h = np.abs(A[:, k:k + 1] - B[None, :, k])
        out *= _corr_1d(spec.kind, h, spec.omega[k], spec.p[k])
    return out


def cross_correlation(X, x_star, spec: KernelSpec) -> np.ndarray:
    """Correlation vector r(x*) between one point and the m design sites."""
    pts = X.points if isinstance(X, DesignMatrix) else np.atleast_2d(np.asarray(X, float))
    if pts.shape[0] == 0:
        return np.empty(0)
    return cross_corr_matrix(pts, np.atleast_2d(np.asarray(x_star, float)), spec)[:, 0]


class CorrelationMatrix:
    """Nugget-augmented correlation matrix with a cached Cholesky factor.

    Immutable after construction; the factor is computed once in the
    constructor so instances can be shared across threads.
    """

    def __init__(self, values: np.ndarray, nugget):
        self.values = values
        self.nugget = nugget
        c, low = cho_factor(values, lower=True)
        self._cho = (c, low)
        self._L = np.tril(c)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(c))))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """R^{-1} b via the cached factorization."""
        return cho_solve(self._cho, b)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """L^{-1} b where R = L L^T."""
        return solve_triangular(self._L, b, lower=True)

    def inverse(self) -> np.ndarray:
        return cho_solve(self._cho, np.eye(self.m))


def correlation_matrix(X, spec: KernelSpec, nugget=DEFAULT_NUGGET,
                       auto_escalate: bool = True) -> CorrelationMatrix:
    """Assemble and factorize the m x m training correlation matrix.

    ``nugget`` may be a scalar or a per-point vector (heteroscedastic noise).
    If the Cholesky factorization fails, the nugget is escalated by factors of
    10 from max(nugget, 1e-10) up to 1e-4 before giving up; duplicate design
    sites with a zero nugget are rejected outright because the matrix is then
    singular in exact arithmetic regardless of floating-point luck.
    """
    pts = X.points if isinstance(X, DesignMatrix) else np.atleast_2d(np.asarray(X, float))
    m = pts.shape[0]
    if m < 1:
        raise DataError("correlation_matrix requires at least one design site")
    nug = np.asarray(nugget, dtype=float)
    if nug.ndim == 0:
        nug = np.full(m, float(nug))
    elif nug.size != m:
        raise DataError(f"nugget vector has {nug.size} entries for {m} sites")
    if np.any(nug < 0):
        raise DataError("nugget must be nonnegative")

    R = cross_corr_matrix(pts, pts, spec)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)

    offdiag = R - np.eye(m)
    if m > 1 and offdiag.max() >= 1.0:
        if np.all(nug == 0):
            raise IllConditionedError(
                "duplicate design sites make the correlation matrix singular; "
                "deduplicate the design or use a positive nugget")
    if spec.kind == "linear" and spec.dim > 1 and np.all(nug == 0):
        warnings.warn(
            "tensor-product linear kernel in d > 1 can be numerically "
            "indefinite; a positive nugget is recommended", NumericalWarning)

    extra = 0.0
    while True:
        try:
            return CorrelationMatrix(R + np.diag(nug + extra), nug + extra)
        except np.linalg.LinAlgError:
            pass
        if not auto_escalate:
            raise IllConditionedError(
                f"correlation matrix factorization failed at nugget {nug.max() + extra:g}")
        nxt = DEFAULT_NUGGET if extra == 0.0 else extra * 10.0
        if nxt > MAX_NUGGET:
            raise IllConditionedError(
                "correlation matrix is not positive definite even at nugget "
                f"{MAX_NUGGET:g}; the design likely contains (near-)duplicate points")
        extra = nxt
        warnings.warn(f"nugget escalated to {extra:g} to factorize the "
                      "correlation matrix", NumericalWarning)
