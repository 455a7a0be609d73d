"""Moment and small-ball diagnostics, Gaussian mean widths, rates, errors."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .model import GroundTruth, Regularizer, SampleSet
from .sampling import make_rng

DEFAULT_DIRECTIONS = 256


class DegenerateEtaWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MomentProfile:
    """Empirical versions of the moment constants.

    ``nu_hat`` is a maximum over finitely many directions, hence a lower
    bound on the true directional fourth-moment supremum.
    """

    kappa_hat: float
    nu_hat: float
    nu_q_hat: float
    q: float

    @property
    def degenerate(self) -> bool:
        return self.kappa_hat <= 0.0


def estimate_moments(X, y, q: float, n_dirs: int = DEFAULT_DIRECTIONS, seed=0,
                     psd_tol: float = 1e-10) -> MomentProfile:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if q < 2:
        raise ValueError("q must be at least 2")
    N, d = X.shape
    cov = X.T @ X / N
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    scale = max(float(np.max(np.abs(np.diag(cov)))), 1e-300)
    if lam_min < -psd_tol * scale:
        raise ValueError(f"empirical covariance is not PSD (min eigenvalue {lam_min:.3g})")
    kappa = max(lam_min, 0.0)
    if kappa <= psd_tol * scale:
        kappa = 0.0

    dirs = make_rng(seed).standard_normal((d, n_dirs))
    dirs /= np.linalg.norm(dirs, axis=0)
    V = np.hstack([np.eye(d), dirs])
    nu = float(np.max(np.mean((X @ V) ** 4, axis=0)))

    col_q = np.mean(np.abs(X) ** q, axis=0) ** (1.0 / q)
    y_q = float(np.mean(np.abs(y) ** q)) ** (1.0 / q) if y.size else 0.0
    nu_q = max(float(np.max(col_q)), y_q)
    return MomentProfile(kappa, nu, nu_q, float(q))


def small_ball_params(profile: MomentProfile):
    """(delta, Q) = (sqrt(kappa/2)/2, kappa^2 / (8 nu))."""
    k, nu = profile.kappa_hat, profile.nu_hat
    if not k > 0:
        raise ValueError("small-ball constants need kappa_hat > 0")
    if not nu > 0:
        raise ValueError("small-ball constants need nu_hat > 0")
    return 0.5 * math.sqrt(k / 2.0), k * k / (8.0 * nu)


def empirical_small_ball(X, v, threshold: float) -> float:
    """Fraction of rows with |<x_i, v>| >= threshold."""
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("direction must be a unit vector")
    return float(np.mean(np.abs(np.asarray(X) @ v) >= threshold))


# ----------------------------------------------------------- mean width

@dataclass(frozen=True)
class L2Ball:
    r: float = 1.0


@dataclass(frozen=True)
class L1Ball:
    rho: float = 1.0


@dataclass(frozen=True)
class L1L2Intersection:
    rho: float
    r: float


@dataclass(frozen=True)
class NuclearBall:
    """Nuclear-norm ball of radius rho in m x n matrices, optionally cut by
    a Frobenius ball of radius r."""

    rho: float
    m: int
    n: int
    r: float = math.inf


def intersection_support(a, rho, r):
    """Support function of {||t||_1 <= rho} cap {||t||_2 <= r} at rows of ``a``.

    Infimal convolution of the two support functions:
    min over c >= 0 of rho*c + r*||(|a| - c)_+||_2. The objective is convex
    and smooth between consecutive sorted |a_j|, with a closed-form
    stationary point on each piece.
    """
    a = np.atleast_2d(np.abs(np.asarray(a, dtype=np.float64)))
    if math.isinf(r):
        return rho * a.max(axis=1)
    if math.isinf(rho):
        return r * np.linalg.norm(a, axis=1)
    srt = -np.sort(-a, axis=1)
    n, d = srt.shape
    k = np.arange(1, d + 1, dtype=np.float64)
    s1 = np.cumsum(srt, axis=1)
    s2 = np.cumsum(srt * srt, axis=1)
    mean = s1 / k
    var = np.maximum(s2 - k * mean * mean, 0.0)
    upper = srt
    lower = np.hstack([srt[:, 1:], np.zeros((n, 1))])
    denom = k * (k * r * r - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = rho * np.sqrt(np.where(denom > 0, var / denom, 0.0))
    c = np.where(denom > 0, mean - t, lower)
    c = np.clip(c, lower, upper)

    def phi(c):
        return rho * c + r * np.sqrt(np.maximum(k * (mean - c) ** 2 + var, 0.0))

    vals = np.minimum(np.minimum(phi(c), phi(lower)), phi(upper))
    return vals.min(axis=1)


def support_function(body, G) -> np.ndarray:
    """sup_{t in body} <g, t> for each row g of G."""
    G = np.atleast_2d(G)
    if isinstance(body, L2Ball):
        return body.r * np.linalg.norm(G, axis=1)
    if isinstance(body, L1Ball):
        return body.rho * np.max(np.abs(G), axis=1)
    if isinstance(body, L1L2Intersection):
        return intersection_support(G, body.rho, body.r)
    if isinstance(body, NuclearBall):
        sv = np.linalg.svd(G.reshape(-1, body.m, body.n), compute_uv=False)
        return intersection_support(sv, body.rho, body.r)
    raise TypeError(f"unsupported body {body!r}")


def gaussian_mean_width(body, d: int, n_draws: int = 2000, seed=0,
                        chunk: int = 100_000) -> float:
    """Monte-Carlo estimate of E sup_{t in body} <g, t>, g ~ N(0, I_d)."""
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    if isinstance(body, NuclearBall):
        d = body.m * body.n
    rng = make_rng(seed)
    total = 0.0
    done = 0
    while done < n_draws:
        b = min(chunk, n_draws - done)
        total += float(np.sum(support_function(body, rng.standard_normal((b, d)))))
        done += b
    return total / n_draws


def l1l2_width_bound_shape(rho, r, d):
    """min_k { r sqrt((k-1) ln(ed/(k-1))) + rho sqrt(ln(ed/k)) }, k = 1..d.

    Upper-bound shape for the width of the l1/l2 intersection; the absolute
    constant in front is unknown.
    """
    k = np.arange(1, d + 1, dtype=np.float64)
    km1 = k - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(km1 > 0, np.sqrt(km1 * np.log(math.e * d / km1)), 0.0)
    return float(np.min(r * first + rho * np.sqrt(np.log(math.e * d / k))))


# ------------------------------------------------------------- eta, rates

def estimate_eta(samples: SampleSet, truth: GroundTruth, sigma) -> float:
    """(1/N) sum y_i <x_i, theta*> / (theta*^T Sigma theta*).

    Warns with ``DegenerateEtaWarning`` when the estimate is within four
    standard errors of zero (e.g. an even link).
    """
    theta = truth.theta_star.ravel()
    if theta.size != samples.dim:
        raise DimensionError("theta* does not match design")
    denom = float(theta @ np.asarray(sigma, dtype=np.float64) @ theta)
    if denom == 0:
        raise ValueError("theta*^T Sigma theta* is zero")
    prod = samples.response * (samples.design @ theta)
    eta = float(np.mean(prod)) / denom
    se = float(np.std(prod)) / math.sqrt(samples.n_samples) / abs(denom)
    if abs(eta) <= 4.0 * se:
        warnings.warn(f"eta estimate {eta:.3g} is indistinguishable from zero (se {se:.2g})",
                      DegenerateEtaWarning, stacklevel=2)
    return eta


SPARSE_L2 = "SparseL2"
SPARSE_L1 = "SparseL1"
LOW_RANK_L2 = "LowRankL2"
LOW_RANK_NUCLEAR = "LowRankNuclear"


def theoretical_rate(mode: str, s, dims, N) -> float:
    """Up-to-constant error rate; ``dims`` is d, or (m, n) for low rank."""
    if mode in (SPARSE_L2, SPARSE_L1):
        base = math.sqrt((1.0 + math.log(dims)) / N)
        return math.sqrt(s) * base if mode == SPARSE_L2 else s * base
    if mode in (LOW_RANK_L2, LOW_RANK_NUCLEAR):
        m, n = dims
        base = math.sqrt((m + n) / N)
        return math.sqrt(s) * base if mode == LOW_RANK_L2 else s * base
    raise ValueError(f"unknown rate mode {mode!r}")


def error_metrics(theta_hat, truth: GroundTruth) -> dict:
    """l2 (Frobenius) and l1/nuclear distance to eta*theta*, plus cosine."""
    target = truth.target
    th = np.asarray(theta_hat, dtype=np.float64).reshape(target.shape)
    diff = th - target
    reg = truth.regularizer if truth.is_matrix else Regularizer.l1()
    nh = float(np.linalg.norm(th))
    ns = float(np.linalg.norm(truth.theta_star))
    cosine = 0.0 if nh == 0 or ns == 0 else float(np.sum(th * truth.theta_star)) / (nh * ns)
    return {
        "l2": float(np.linalg.norm(diff)),
        "l1_or_nuclear": reg.value(diff),
        "cosine": max(-1.0, min(1.0, cosine)),
    }
