"""Monotone accelerated proximal gradient for truncated least squares.

Minimizes (1/N) * ||X~ theta - y~||^2 + lam * Psi(theta), where (X~, y~) are
the truncated measurements, and wraps the two thresholded estimators.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProblemError, DimensionError, NumericalError
from .model import L1, EstimatorConfig, RecoveryResult, Regularizer, SampleSet
from .truncation import TruncationScheme, clip_response, tau_elliptical, tau_sparse

# floor for the relative objective change, so exact fits (objective -> 0) can converge
_REL_FLOOR = 1e-12
_POWER_ITERS = 50
_MAX_HALVINGS = 100


@dataclass(frozen=True, eq=False)
class FitReport:
    result: RecoveryResult
    lambda_used: float
    tau_used: float
    truncation_kind: str
    wall_time: float

    @property
    def theta_hat(self):
        return self.result.theta_hat


def truncate_samples(samples: SampleSet, config: EstimatorConfig):
    """Apply the configured truncation; returns (truncated samples, tau)."""
    scheme = config.truncation
    tau = scheme.resolve_tau(samples.n_samples, samples.dim)
    X = scheme.apply(samples.design, tau)
    y = samples.response
    clip = config.response_clip
    if clip == "auto":
        clip = tau
    if clip is not None and math.isfinite(clip):
        y = clip_response(y, clip)
    return SampleSet(X, y), tau


def _gradient(X, y, theta):
    r = X @ theta - y
    return (2.0 / X.shape[0]) * (X.T @ r)


def kkt_residual(samples: SampleSet, theta, config: EstimatorConfig) -> float:
    """Distance-type certificate that -grad lies in lam * subdifferential(Psi).

    ``samples`` must already be truncated. Zero exactly at a minimizer.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != samples.dim:
        raise DimensionError("theta does not match design")
    g = _gradient(samples.design, samples.response, theta)
    lam = config.lam
    reg = config.regularizer
    if reg.kind == L1:
        zero = theta == 0
        res = 0.0
        if np.any(zero):
            res = max(res, float(np.max(np.abs(g[zero]))) - lam)
        if not np.all(zero):
            res = max(res, float(np.max(np.abs(g[~zero] + lam * np.sign(theta[~zero])))))
        return max(res, 0.0)
    return _nuclear_kkt(theta.reshape(reg.m, reg.n), g.reshape(reg.m, reg.n), lam)


def _nuclear_kkt(Theta, G, lam):
    # subdifferential at U S V^T: U V^T + W with W orthogonal to both
    # factor spaces and ||W||_op <= 1
    U, s, Vt = np.linalg.svd(Theta, full_matrices=False)
    r = int(np.sum(s > 1e-9 * max(1.0, s[0] if s.size else 0.0)))
    U, V = U[:, :r], Vt[:r].T
    PU = U @ U.T
    PV = V @ V.T
    G_perp = G - PU @ G - G @ PV + PU @ G @ PV
    tangent = G - G_perp + lam * (U @ V.T)
    res_t = float(np.linalg.norm(tangent, 2)) if r else 0.0
    res_p = float(np.linalg.norm(G_perp, 2)) - lam
    return max(res_t, res_p, 0.0)


def _lipschitz_estimate(X):
    # top eigenvalue of (2/N) X^T X by power iteration from a fixed start
    N, d = X.shape
    v = np.random.default_rng(0).standard_normal(d)
    v /= np.linalg.norm(v)
    L = 0.0
    for _ in range(_POWER_ITERS):
        w = (2.0 / N) * (X.T @ (X @ v))
        L = float(np.linalg.norm(w))
        if L == 0.0:
            break
        v = w / L
    return L


def minimize(samples: SampleSet, config: EstimatorConfig, theta0=None) -> RecoveryResult:
    """Run the solver on already-truncated samples."""
    X, y = samples.design, samples.response
    N, d = X.shape
    reg = config.regularizer
    lam = config.lam
    if reg.kind != L1 and reg.m * reg.n != d:
        raise DimensionError(f"nuclear({reg.m},{reg.n}) does not match {d} columns")
    if not np.any(X):
        raise DegenerateProblemError("truncated design is identically zero")

    if config.step_init is not None:
        step = float(config.step_init)
    else:
        L = _lipschitz_estimate(X)
        if L <= 0.0:
            raise DegenerateProblemError("Gram matrix has zero spectral norm")
        step = 1.0 / L

    def smooth(Xt):
        r = Xt - y
        return float(r @ r) / N

    x = np.zeros(d) if theta0 is None else np.array(theta0, dtype=np.float64).ravel()
    if x.size != d:
        raise DimensionError("theta0 does not match design")
    Xx = X @ x
    F = smooth(Xx) + lam * reg.value(x)
    if not math.isfinite(F):
        raise NumericalError("non-finite objective at start", 0)
    trace = [F]
    yv, Xy, t = x, Xx, 1.0
    small = 0
    converged = False
    kkt = math.inf
    it = 0
    eps = np.finfo(float).eps
    while it < config.max_iters:
        it += 1
        r = Xy - y
        f_y = float(r @ r) / N
        g = (2.0 / N) * (X.T @ r)
        for _ in range(_MAX_HALVINGS):
            z = reg.prox(yv - step * g, step * lam)
            Xz = X @ z
            f_z = smooth(Xz)
            dz = z - yv
            bound = f_y + float(g @ dz) + float(dz @ dz) / (2.0 * step)
            if f_z <= bound + 10 * eps * abs(f_y):
                break
            step *= 0.5
        F_z = f_z + lam * reg.value(z)
        if not math.isfinite(F_z):
            raise NumericalError(f"non-finite objective at iteration {it}", it)
        if F_z <= F:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            yv = z + beta * (z - x)
            Xy = Xz + beta * (Xz - Xx)
            x, Xx, t = z, Xz, t_next
            F_new = F_z
        else:
            # momentum overshot: restart from the last accepted point
            yv, Xy, t = x, Xx, 1.0
            F_new = F
        rel = abs(F - F_new) / max(abs(F), _REL_FLOOR)
        F = F_new
        trace.append(F)
        small = small + 1 if rel < config.rel_tol else 0
        if small >= 2:
            kkt = kkt_residual(samples, x, config)
            if kkt < config.kkt_tol:
                converged = True
                break
    if not converged:
        kkt = kkt_residual(samples, x, config)
    return RecoveryResult(
        theta_hat=x,
        objective_trace=np.asarray(trace),
        iterations=it,
        converged=converged,
        kkt_residual=kkt,
    )


def fit(samples: SampleSet, config: EstimatorConfig, theta0=None) -> FitReport:
    """Truncate per ``config`` and minimize the regularized least squares."""
    start = time.perf_counter()
    truncated, tau = truncate_samples(samples, config)
    result = minimize(truncated, config, theta0=theta0)
    return FitReport(
        result=result,
        lambda_used=config.lam,
        tau_used=tau,
        truncation_kind=config.truncation.kind,
        wall_time=time.perf_counter() - start,
    )


def sparse_lambda(N, d, lambda_scale=1.0):
    return lambda_scale * math.sqrt((1.0 + math.log(d)) / N)


def single_index_lambda(N, d, regularizer: Regularizer, lambda_scale=1.0, s_hint=1):
    if regularizer.kind == L1:
        return lambda_scale * math.sqrt(math.log(math.e * d / s_hint) / N)
    return lambda_scale * math.sqrt(regularizer.m + regularizer.n) / math.sqrt(N)


def fit_thresholded_lasso(raw: SampleSet, lambda_scale=1.0, **solver_opts) -> FitReport:
    """Entrywise-truncated LASSO for general heavy-tailed sparse recovery.

    Design and response are both clipped at ``(N / ln(e d))**(1/4)`` and
    lam = lambda_scale * sqrt(ln(e d) / N).
    """
    N, d = raw.n_samples, raw.dim
    tau = tau_sparse(N, d)
    config = EstimatorConfig(
        lam=sparse_lambda(N, d, lambda_scale),
        truncation=TruncationScheme.entrywise(tau),
        response_clip=tau,
        regularizer=Regularizer.l1(),
        **solver_opts,
    )
    return fit(raw, config)


def fit_single_index(raw: SampleSet, q: float, regularizer: Regularizer = None,
                     lambda_scale=1.0, s_hint=1, **solver_opts) -> FitReport:
    """Norm-truncated estimator for single-index models with elliptical design.

    ``q`` is the moment order believed to hold (q > 4); it sets the
    threshold N**(2/(q+4)) for both the design radius and the response.
    """
    regularizer = regularizer or Regularizer.l1()
    N, d = raw.n_samples, raw.dim
    if not 1 <= s_hint <= d:
        raise ValueError("s_hint must lie in [1, d]")
    tau = tau_elliptical(N, q)
    config = EstimatorConfig(
        lam=single_index_lambda(N, d, regularizer, lambda_scale, s_hint),
        truncation=TruncationScheme.norm_based(tau),
        response_clip=tau,
        regularizer=regularizer,
        **solver_opts,
    )
    return fit(raw, config)
