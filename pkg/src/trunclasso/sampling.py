"""Heavy-tailed dataset synthesis.

Elliptical designs are drawn through the radial decomposition x = mu * B * U
with U uniform on the sphere; general designs draw i.i.d. entries. All
randomness flows from ``make_rng(seed, *keys)``: a PCG64 stream keyed by a
``SeedSequence`` spawn key, so (seed, keys) names an independent stream.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateLinkError, DimensionError
from .model import GroundTruth, SampleSet

# radial laws
GAUSSIAN_CHI = "gaussian_chi"
STUDENT = "student"
PARETO = "pareto"
CONSTANT = "constant"

# i.i.d. entry laws
GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
SYMMETRIC_PARETO = "symmetric_pareto"

# stream keys inside one dataset seed
_DESIGN, _NOISE, _ETA = 0, 1, 2
ETA_MC_DRAWS = 1_000_000


def make_rng(seed, *keys) -> np.random.Generator:
    """Independent generator for stream ``keys`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def _stream(seed, key):
    # seed may be an int or a tuple (master, *keys) naming a parent stream
    if isinstance(seed, tuple):
        return make_rng(seed[0], *seed[1:], key)
    return make_rng(seed, key)


def _as_rng(seed, *keys):
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("stream keys need an integer seed")
        return seed
    return make_rng(seed, *keys)


def _lomax(rng, alpha, size):
    # Pareto II on [0, inf): P(X > x) = (1 + x)^-alpha
    return rng.pareto(alpha, size)


def _lomax_second_moment(alpha):
    return 2.0 / ((alpha - 1.0) * (alpha - 2.0))


@dataclass(frozen=True, eq=False)
class EllipticalSpec:
    """Elliptical law E(0, B B^T, F_mu).

    With ``normalize_radial`` the radius is rescaled so E[mu^2] = d, making
    the covariance exactly B B^T.
    """

    sigma_factor: np.ndarray
    radial: str = GAUSSIAN_CHI
    df: Optional[float] = None
    alpha: Optional[float] = None
    normalize_radial: bool = True

    def __post_init__(self):
        B = np.array(self.sigma_factor, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionError("sigma_factor must be square")
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise ValueError("sigma_factor is rank deficient")
        B.setflags(write=False)
        object.__setattr__(self, "sigma_factor", B)
        if self.radial == STUDENT:
            if self.df is None or not self.df > 4:
                raise ValueError("student radial law needs df > 4")
        elif self.radial == PARETO:
            if self.alpha is None or not self.alpha > 4:
                raise ValueError("pareto radial law needs alpha > 4")
        elif self.radial not in (GAUSSIAN_CHI, CONSTANT):
            raise ValueError(f"unknown radial law {self.radial!r}")

    @classmethod
    def identity(cls, d, radial=GAUSSIAN_CHI, **kw):
        return cls(np.eye(d), radial, **kw)

    @property
    def dim(self):
        return self.sigma_factor.shape[0]

    @property
    def covariance(self):
        B = self.sigma_factor
        return B @ B.T * (self.radial_second_moment() / self.dim)

    def radial_second_moment(self):
        """E[mu^2] of the radius actually drawn."""
        d = self.dim
        if self.normalize_radial:
            return float(d)
        if self.radial == STUDENT:
            return d * self.df / (self.df - 2.0)
        if self.radial == PARETO:
            return d * _lomax_second_moment(self.alpha)
        return float(d)

    def sample_radius(self, rng, n):
        d = self.dim
        if self.radial == GAUSSIAN_CHI:
            return np.sqrt(rng.chisquare(d, n))
        if self.radial == CONSTANT:
            return np.full(n, math.sqrt(d))
        if self.radial == STUDENT:
            # radius of a multivariate t: ||z|| * sqrt(df / chi2_df)
            mu = np.sqrt(rng.chisquare(d, n) * self.df / rng.chisquare(self.df, n))
            if self.normalize_radial:
                mu *= math.sqrt((self.df - 2.0) / self.df)
            return mu
        mu = math.sqrt(d) * _lomax(rng, self.alpha, n)
        if self.normalize_radial:
            mu /= math.sqrt(_lomax_second_moment(self.alpha))
        return mu

    def sample(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        U = g / np.linalg.norm(g, axis=1, keepdims=True)
        mu = self.sample_radius(rng, n)
        return (mu[:, None] * U) @ self.sigma_factor.T

    def sample_index(self, rng, theta, n):
        """Draws of <x, theta> without materializing x.

        <x, theta> = mu * <U, B^T theta> and, for U uniform on the sphere,
        <U, e> has the law of g_1 / sqrt(g_1^2 + chi2_{d-1}).
        """
        a = float(np.linalg.norm(self.sigma_factor.T @ theta))
        d = self.dim
        g1 = rng.standard_normal(n)
        rest = rng.chisquare(d - 1, n) if d > 1 else np.zeros(n)
        return self.sample_radius(rng, n) * a * g1 / np.sqrt(g1 * g1 + rest)


@dataclass(frozen=True)
class IidEntrySpec:
    """Design with i.i.d. entries, standardized to unit variance by default."""

    dim: int
    dist: str = STUDENT_T
    df: Optional[float] = None
    alpha: Optional[float] = None
    standardize: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.dist == STUDENT_T:
            if self.df is None or not self.df > 2:
                raise ValueError("student_t entries need df > 2")
        elif self.dist == SYMMETRIC_PARETO:
            if self.alpha is None or not self.alpha > 2:
                raise ValueError("symmetric_pareto entries need alpha > 2")
        elif self.dist != GAUSSIAN:
            raise ValueError(f"unknown entry law {self.dist!r}")

    def entry_variance(self):
        if self.standardize or self.dist == GAUSSIAN:
            return 1.0
        if self.dist == STUDENT_T:
            return self.df / (self.df - 2.0)
        return _lomax_second_moment(self.alpha)

    @property
    def covariance(self):
        return np.eye(self.dim) * self.entry_variance()

    def _draw(self, rng, shape):
        if self.dist == GAUSSIAN:
            return rng.standard_normal(shape)
        if self.dist == STUDENT_T:
            x = rng.standard_t(self.df, shape)
            if self.standardize:
                x *= math.sqrt((self.df - 2.0) / self.df)
            return x
        x = _lomax(rng, self.alpha, shape) * rng.choice((-1.0, 1.0), shape)
        if self.standardize:
            x /= math.sqrt(_lomax_second_moment(self.alpha))
        return x

    def sample(self, rng, n):
        return self._draw(rng, (n, self.dim))

    def sample_index(self, rng, theta, n):
        support = np.flatnonzero(theta)
        return self._draw(rng, (n, support.size)) @ theta[support]


def sample_elliptical(spec: EllipticalSpec, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    return spec.sample(_as_rng(seed), n)


def sample_design(spec, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    return spec.sample(_as_rng(seed), n)


# ---------------------------------------------------------------- noise, links

@dataclass(frozen=True)
class Noise:
    kind: str = "none"
    sd: float = 1.0
    df: Optional[float] = None
    alpha: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "student":
            if self.df is None or not self.df > 1:
                raise ValueError("student noise needs df > 1")
        elif self.kind == "pareto":
            if self.alpha is None or not self.alpha > 1:
                raise ValueError("pareto noise needs alpha > 1")
        elif self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sd):
        return cls("gaussian", sd=sd)

    @classmethod
    def student(cls, df, scale=1.0):
        return cls("student", df=df, scale=scale)

    @classmethod
    def pareto(cls, alpha, scale=1.0):
        return cls("pareto", alpha=alpha, scale=scale)

    def sample(self, rng, n):
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "gaussian":
            return self.sd * rng.standard_normal(n)
        if self.kind == "student":
            return self.scale * rng.standard_t(self.df, n)
        return self.scale * _lomax(rng, self.alpha, n) * rng.choice((-1.0, 1.0), n)


def _sign_link(u, xi):
    return np.sign(u + xi)


CUSTOM_LINKS: dict[str, Callable] = {
    "square": lambda u, xi: u * u + xi,
    "relu": lambda u, xi: np.maximum(u, 0.0) + xi,
    "tanh": lambda u, xi: np.tanh(u) + xi,
}
_BUILTIN = {
    "linear": lambda u, xi: u + xi,
    "sign": _sign_link,
    "cubic": lambda u, xi: u ** 3 + xi,
}


@dataclass(frozen=True)
class LinkFunction:
    """y = f(<x, theta*>, xi). Sign puts the noise inside: sign(u + xi).

    ``kind="custom"`` looks ``tag`` up in ``CUSTOM_LINKS``.
    """

    kind: str = "linear"
    noise: Noise = field(default_factory=Noise)
    tag: Optional[str] = None

    def __post_init__(self):
        if self.kind == "custom":
            if self.tag not in CUSTOM_LINKS:
                raise ValueError(f"unregistered custom link {self.tag!r}")
        elif self.kind not in _BUILTIN:
            raise ValueError(f"unknown link {self.kind!r}")

    @property
    def name(self):
        return self.tag if self.kind == "custom" else self.kind

    def __call__(self, u, xi):
        f = CUSTOM_LINKS[self.tag] if self.kind == "custom" else _BUILTIN[self.kind]
        return f(u, xi)


# --------------------------------------------------------------------- signals

def make_sparse_signal(d: int, s: int, mode: str = "unit", seed=0) -> np.ndarray:
    """s-sparse vector of unit l2 norm.

    ``mode="unit"`` puts 1/sqrt(s) on the first s coordinates; ``"random"``
    draws a uniform support with Gaussian magnitudes.
    """
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    theta = np.zeros(d)
    if mode == "unit":
        theta[:s] = 1.0 / math.sqrt(s)
        return theta
    if mode != "random":
        raise ValueError(f"unknown signal mode {mode!r}")
    rng = _as_rng(seed)
    support = rng.choice(d, size=s, replace=False)
    vals = rng.standard_normal(s)
    while not np.all(vals):
        vals = rng.standard_normal(s)
    theta[support] = vals
    return theta / np.linalg.norm(theta)


def make_low_rank_signal(m: int, n: int, rank: int, seed=0) -> np.ndarray:
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must lie in [1, {min(m, n)}]")
    rng = _as_rng(seed)
    M = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    return M / np.linalg.norm(M)


# ------------------------------------------------------------------- datasets

def analytic_eta(design, link: LinkFunction):
    """Closed-form scaling constant when known, for unit-variance index."""
    if link.kind == "linear":
        return 1.0
    gaussian_index = (
        isinstance(design, EllipticalSpec) and design.radial == GAUSSIAN_CHI
    ) or (isinstance(design, IidEntrySpec) and design.dist == GAUSSIAN)
    if not gaussian_index:
        return None
    noise = link.noise
    if link.kind == "sign" and noise.kind in ("none", "gaussian"):
        sd = noise.sd if noise.kind == "gaussian" else 0.0
        return math.sqrt(2.0 / math.pi) / math.sqrt(1.0 + sd * sd)
    if link.kind == "cubic":
        return 3.0
    return None


def monte_carlo_eta(design, theta, link: LinkFunction, rng, n_draws=ETA_MC_DRAWS):
    """E[f(<x,theta>, xi) <x,theta>] by simulation; returns (eta, std error)."""
    u = design.sample_index(rng, theta, n_draws)
    yu = link(u, link.noise.sample(rng, n_draws)) * u
    return float(np.mean(yu)), float(np.std(yu) / math.sqrt(n_draws))


def synthesize_dataset(design, truth: GroundTruth, N: int, seed):
    """Draw N samples y = f(<x, theta*>, xi) and fill in the scaling constant.

    theta* is rescaled so that theta*^T Sigma theta* = 1 for the design
    covariance Sigma. ``seed`` is an int or a tuple of stream keys.
    Returns ``(SampleSet, GroundTruth)``.
    """
    link = truth.link or LinkFunction()
    theta_shape = truth.theta_star.shape
    theta = truth.theta_star.ravel()
    if theta.size != design.dim:
        raise DimensionError(f"theta* has {theta.size} entries, design dim is {design.dim}")
    Sigma = design.covariance
    quad = float(theta @ Sigma @ theta)
    if quad <= 0:
        raise ValueError("theta* must be nonzero")
    theta = theta / math.sqrt(quad)

    X = design.sample(_stream(seed, _DESIGN), N)
    xi = link.noise.sample(_stream(seed, _NOISE), N)
    y = link(X @ theta, xi)

    eta = analytic_eta(design, link)
    if eta is None:
        eta, se = monte_carlo_eta(design, theta, link, _stream(seed, _ETA))
        if abs(eta) <= 4.0 * se:
            raise DegenerateLinkError(
                f"link {link.name!r} gives eta = {eta:.3g} +/- {se:.2g}, indistinguishable from 0")
    filled = GroundTruth(theta.reshape(theta_shape), eta, truth.sparsity_s, link)
    return SampleSet(X, y), filled


def write_dataset_csv(samples: SampleSet, path):
    """Header ``x1,...,xd,y``; full-precision decimals, LF line endings."""
    header = [f"x{j + 1}" for j in range(samples.dim)] + ["y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, yi in zip(samples.design, samples.response):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


def read_dataset_csv(path) -> SampleSet:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 1
        if d < 1 or header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(d)]:
            raise ValueError(f"unexpected dataset header {header}")
        data = np.array([[float(v) for v in row] for row in r], dtype=np.float64)
    if data.size == 0:
        raise ValueError("dataset has no rows")
    return SampleSet(data[:, :d], data[:, d])
