"""Shared domain types and the structure-inducing regularizers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DimensionError
from .truncation import TruncationScheme

L1 = "l1"
NUCLEAR = "nuclear"


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Measurement pairs; row i of ``design`` is x_i."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        X = _frozen(self.design)
        y = _frozen(self.response)
        if X.ndim != 2:
            raise DimensionError("design must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DimensionError(
                f"response length {y.shape} does not match {X.shape[0]} design rows")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError("empty sample set")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("sample set contains non-finite entries")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)

    @property
    def n_samples(self) -> int:
        return self.design.shape[0]

    @property
    def dim(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class Regularizer:
    """Either the l1 norm or the nuclear norm of an m x n matrix.

    Matrices travel as row-major flattened vectors of length m*n.
    """

    kind: str = L1
    m: Optional[int] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.kind == L1:
            return
        if self.kind != NUCLEAR:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if not (self.m and self.n and self.m > 0 and self.n > 0):
            raise ValueError("nuclear regularizer needs positive m and n")

    @classmethod
    def l1(cls):
        return cls(L1)

    @classmethod
    def nuclear(cls, m, n):
        return cls(NUCLEAR, int(m), int(n))

    def _as_matrix(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.m * self.n:
            raise DimensionError(
                f"nuclear({self.m},{self.n}) needs {self.m * self.n} entries, got {theta.size}")
        return theta.reshape(self.m, self.n)

    def value(self, theta) -> float:
        if self.kind == L1:
            return float(np.sum(np.abs(theta)))
        return float(np.sum(np.linalg.svd(self._as_matrix(theta), compute_uv=False)))

    def prox(self, v, t: float) -> np.ndarray:
        """argmin_u 0.5*||u - v||^2 + t * value(u), in the shape of ``v``."""
        if t < 0:
            raise ValueError("prox parameter must be nonnegative")
        v = np.asarray(v, dtype=np.float64)
        if self.kind == L1:
            return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        M = self._as_matrix(v)
        if t == 0:
            return v.copy()
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        s = np.maximum(s - t, 0.0)
        return ((U * s) @ Vt).reshape(v.shape)


def psi_value(reg: Regularizer, theta) -> float:
    return reg.value(theta)


def psi_prox(reg: Regularizer, v, t: float) -> np.ndarray:
    return reg.prox(v, t)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Generating parameter, its scaling constant, and the link used."""

    theta_star: np.ndarray
    eta: float = 1.0
    sparsity_s: int = 0
    link: object = None

    def __post_init__(self):
        theta = _frozen(self.theta_star)
        object.__setattr__(self, "theta_star", theta)
        limit = theta.size if theta.ndim == 1 else min(theta.shape)
        if not 0 <= self.sparsity_s <= limit:
            raise ValueError("sparsity/rank out of range")

    @property
    def is_matrix(self) -> bool:
        return self.theta_star.ndim == 2

    @property
    def regularizer(self) -> Regularizer:
        if self.is_matrix:
            return Regularizer.nuclear(*self.theta_star.shape)
        return Regularizer.l1()

    @property
    def target(self) -> np.ndarray:
        """eta * theta_star, the quantity least squares actually recovers."""
        return self.eta * self.theta_star


@dataclass(frozen=True)
class EstimatorConfig:
    """Controls for the truncated, regularized least-squares fit.

    ``response_clip`` is a threshold, ``None`` (no clipping) or ``"auto"``
    (reuse the design threshold). ``step_init=None`` means 1/L from power
    iteration.
    """

    lam: float = 0.0
    truncation: TruncationScheme = field(default_factory=TruncationScheme.none)
    response_clip: Union[float, str, None] = None
    regularizer: Regularizer = field(default_factory=Regularizer.l1)
    max_iters: int = 20000
    rel_tol: float = 1e-9
    kkt_tol: float = 1e-6
    step_init: Optional[float] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.rel_tol > 0 or not self.kkt_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_init is not None and not self.step_init > 0:
            raise ValueError("step_init must be positive")
        rc = self.response_clip
        if isinstance(rc, str):
            if rc != "auto":
                raise ValueError("response_clip must be a number, None or 'auto'")
        elif rc is not None and not rc > 0:
            raise ValueError("response_clip must be positive")


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    theta_hat: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    kkt_residual: float


def objective(samples: SampleSet, theta, config: EstimatorConfig) -> float:
    """(1/N) * sum_i (<x_i, theta> - y_i)^2 + lam * Psi(theta) on given samples."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != samples.dim:
        raise DimensionError(f"theta has {theta.size} entries, design has {samples.dim} columns")
    r = samples.design @ theta - samples.response
    return float(r @ r) / samples.n_samples + config.lam * config.regularizer.value(theta)
