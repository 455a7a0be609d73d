"""Truncation rules for heavy-tailed measurements.

Two rules are provided for the design: entrywise clipping (general sparse
recovery) and norm-based radial shrinkage (elliptical designs). The response
is clipped entrywise in both cases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

NONE = "none"
ENTRYWISE = "entrywise"
NORM_BASED = "norm"
_KINDS = (NONE, ENTRYWISE, NORM_BASED)


@dataclass(frozen=True)
class TruncationScheme:
    """Which truncation rule to apply to the design and at what level.

    ``tau=None`` selects the automatic threshold: ``tau_sparse(N, d)`` for
    the entrywise rule, ``tau_elliptical(N, q)`` for the norm rule (which
    then needs ``q``).
    """

    kind: str = NONE
    tau: Optional[float] = None
    q: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown truncation kind {self.kind!r}")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.kind == NORM_BASED and self.tau is None and self.q is None:
            raise ValueError("automatic norm-based threshold needs q")
        if self.q is not None and not self.q > 4:
            raise ValueError("q must exceed 4")

    @classmethod
    def none(cls):
        return cls(NONE)

    @classmethod
    def entrywise(cls, tau=None):
        return cls(ENTRYWISE, tau)

    @classmethod
    def norm_based(cls, tau=None, q=None):
        return cls(NORM_BASED, tau, q)

    def resolve_tau(self, n_samples: int, dim: int) -> float:
        """Threshold used for an N x d design; ``inf`` when no truncation."""
        if self.kind == NONE:
            return math.inf
        if self.tau is not None:
            return float(self.tau)
        if self.kind == ENTRYWISE:
            return tau_sparse(n_samples, dim)
        return tau_elliptical(n_samples, self.q)

    def apply(self, X, tau=None):
        if tau is None:
            tau = self.resolve_tau(*np.shape(X))
        if self.kind == ENTRYWISE:
            return entrywise_truncate(X, tau)
        if self.kind == NORM_BASED:
            return norm_truncate(X, tau)
        return np.asarray(X, dtype=np.float64)


def tau_sparse(N: int, d: int) -> float:
    """``(N / ln(e d))**(1/4)``."""
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    return (N / (1.0 + math.log(d))) ** 0.25


def tau_elliptical(N: int, q: float) -> float:
    """``N**(2 / (q + 4))``; requires a moment order q > 4."""
    if N < 1:
        raise ValueError("N must be positive")
    if not q > 4:
        raise ValueError(f"moment order q must exceed 4, got {q}")
    return float(N) ** (2.0 / (q + 4.0))


def entrywise_truncate(X, tau: float) -> np.ndarray:
    # sign(x) * min(|x|, tau) is exactly a symmetric clip
    if not tau > 0:
        raise ValueError("tau must be positive")
    return np.clip(np.asarray(X, dtype=np.float64), -tau, tau)


def norm_truncate(X, tau: float) -> np.ndarray:
    """Shrink each row to Euclidean norm at most ``sqrt(d) * tau``.

    Rows inside the ball are returned unchanged and the zero row maps to
    itself.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    radius = math.sqrt(d) * tau
    norms = np.linalg.norm(X, axis=1)
    over = norms > radius
    scale = np.ones_like(norms)
    scale[over] = radius / norms[over]
    return X * scale[:, None]


def clip_response(y, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError("tau must be positive")
    return np.clip(np.asarray(y, dtype=np.float64), -tau, tau)
