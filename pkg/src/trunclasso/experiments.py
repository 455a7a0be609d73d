"""Seeded recovery sweeps over (N, d, s) grids with CSV reporting.

Every (cell, trial) task is a pure function of its ExperimentSpec. Its dataset draws
from ``make_rng(master_seed, 0, cell_index, trial, stream)``; the ground-truth
signal from ``make_rng(master_seed, 1, d_or_m, n_or_0, s, trial)``, so the
same trial reuses one signal across sample sizes. Rows are sorted before
emission, which makes output independent of the worker count.
"""
from __future__ import annotations

import copy
import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import diagnostics as diag
from .errors import ConfigError, DegenerateProblemError, NumericalError
from .model import EstimatorConfig, GroundTruth, Regularizer, SampleSet
from .sampling import (EllipticalSpec, IidEntrySpec, LinkFunction, Noise,
                       make_low_rank_signal, make_rng, make_sparse_signal,
                       synthesize_dataset)
from .solver import (fit, fit_single_index, fit_thresholded_lasso, single_index_lambda,
                     sparse_lambda)

SPARSE_GENERAL = "SparseGeneral"
SINGLE_INDEX_SPARSE = "SingleIndexSparse"
SINGLE_INDEX_LOW_RANK = "SingleIndexLowRank"
MODES = (SPARSE_GENERAL, SINGLE_INDEX_SPARSE, SINGLE_INDEX_LOW_RANK)

THRESHOLDED = "thresholded"
VANILLA = "vanilla_lasso"
ORACLE_OLS = "oracle_ols"

CSV_HEADER = ("mode,N,d,s,trial,estimator,l2,psi_err,cosine,iters,converged,"
              "kkt,wall_ms,pred_rate").split(",")
WORKERS_ENV = "TRUNCLASSO_WORKERS"
_SOLVER_KEYS = ("max_iters", "rel_tol", "kkt_tol")


@dataclass
class ExperimentSpec:
    mode: str
    N: list
    dims: list
    s: list
    design: dict = field(default_factory=dict)
    link: dict = field(default_factory=dict)
    lambda_scale: float = 1.0
    q: float = 8.0
    solver: dict = field(default_factory=dict)
    trials: int = 1
    master_seed: int = 0
    vanilla_lasso: bool = False
    oracle_ols: bool = False
    signal: str = "random"
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not (self.N and self.dims and self.s):
            raise ConfigError("grid needs nonempty N, d (or shape) and s lists")
        for v in list(self.N) + list(self.s):
            if not (isinstance(v, int) and v > 0):
                raise ConfigError(f"grid values must be positive integers, got {v!r}")
        low_rank = self.mode == SINGLE_INDEX_LOW_RANK
        for dim in self.dims:
            ok = (isinstance(dim, tuple) and len(dim) == 2 and min(dim) > 0) if low_rank \
                else (isinstance(dim, int) and dim > 0)
            if not ok:
                raise ConfigError(f"bad grid dimension {dim!r} for mode {self.mode}")
            limit = min(dim) if low_rank else dim
            if max(self.s) > limit:
                raise ConfigError(f"s={max(self.s)} exceeds {'rank limit' if low_rank else 'd'} {limit}")
        if not self.q > 4:
            raise ConfigError("q must exceed 4")
        if not self.lambda_scale > 0:
            raise ConfigError("lambda_scale must be positive")
        unknown = set(self.solver) - set(_SOLVER_KEYS)
        if unknown:
            raise ConfigError(f"unknown solver options {sorted(unknown)}")
        # fail early on bad design/link sections
        build_design(self.design, self.dims[0], self.mode)
        build_link(self.link)

    @property
    def estimators(self):
        tags = [THRESHOLDED]
        if self.vanilla_lasso:
            tags.append(VANILLA)
        if self.oracle_ols:
            tags.append(ORACLE_OLS)
        return sorted(tags)

    def cells(self):
        return list(itertools.product(self.N, self.dims, self.s))


def spec_from_dict(cfg: dict) -> ExperimentSpec:
    """Build a spec from the JSON layout (mode/grid/design/link/solver/output)."""
    cfg = copy.deepcopy(cfg)
    try:
        grid = cfg.pop("grid")
        mode = cfg.pop("mode")
    except KeyError as exc:
        raise ConfigError(f"missing top-level key {exc}") from None
    solver = dict(cfg.pop("solver", {}))
    baselines = cfg.pop("baselines", {})
    if mode == SINGLE_INDEX_LOW_RANK:
        dims = [tuple(int(v) for v in shape) for shape in grid.get("shape", [])]
    else:
        dims = grid.get("d", [])
    kwargs = dict(
        mode=mode, N=list(grid.get("N", [])), dims=list(dims), s=list(grid.get("s", [])),
        design=cfg.pop("design", {}), link=cfg.pop("link", {}),
        lambda_scale=float(solver.pop("lambda_scale", 1.0)), q=float(solver.pop("q", 8.0)),
        solver=solver, trials=int(cfg.pop("trials", 1)),
        master_seed=int(cfg.pop("master_seed", 0)),
        vanilla_lasso=bool(baselines.get("vanilla_lasso", False)),
        oracle_ols=bool(baselines.get("oracle_ols_on_support", False)),
        signal=cfg.pop("signal", "random"), output=cfg.pop("output", {}),
    )
    if cfg:
        raise ConfigError(f"unknown top-level keys {sorted(cfg)}")
    return ExperimentSpec(**kwargs)


def _sigma_factor(section, d):
    sigma = section.get("sigma", "identity")
    if sigma == "identity":
        return np.eye(d)
    if isinstance(sigma, dict) and "toeplitz" in sigma:
        rho = float(sigma["toeplitz"])
        idx = np.arange(d)
        return np.linalg.cholesky(rho ** np.abs(idx[:, None] - idx[None, :]))
    raise ConfigError(f"unsupported sigma {sigma!r}")


def build_design(section: dict, dim, mode: str):
    d = dim[0] * dim[1] if isinstance(dim, tuple) else dim
    kind = section.get("kind", "elliptical" if mode != SPARSE_GENERAL else "iid")
    try:
        if kind == "iid":
            if mode != SPARSE_GENERAL:
                raise ConfigError("single-index modes need an elliptical design")
            return IidEntrySpec(d, section.get("dist", "student_t"), section.get("df"),
                                section.get("alpha"), section.get("standardize", True))
        if kind == "elliptical":
            return EllipticalSpec(_sigma_factor(section, d), section.get("radial", "gaussian_chi"),
                                  section.get("df"), section.get("alpha"),
                                  section.get("normalize_radial", True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad design section: {exc}") from None
    raise ConfigError(f"unknown design kind {kind!r}")


def build_link(section: dict) -> LinkFunction:
    noise = dict(section.get("noise", {"kind": "none"}))
    try:
        return LinkFunction(section.get("kind", "linear"), Noise(**noise), section.get("tag"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad link section: {exc}") from None


@dataclass
class MetricRow:
    mode: str
    N: int
    d: object
    s: int
    trial: int
    estimator: str
    l2: float
    psi_err: float
    cosine: float
    iters: int
    converged: bool
    kkt: float
    wall_ms: float
    pred_rate: float

    def sort_key(self, cell_order):
        return (cell_order[(self.N, self.d, self.s)], self.trial, self.estimator)


def dim_label(dim):
    return f"{dim[0]}x{dim[1]}" if isinstance(dim, tuple) else dim


def predicted_rate(mode, N, dim, s):
    if mode == SINGLE_INDEX_LOW_RANK:
        return diag.theoretical_rate(diag.LOW_RANK_L2, s, dim, N)
    return diag.theoretical_rate(diag.SPARSE_L2, s, dim, N)


def _signal(spec, dim, s, trial):
    if isinstance(dim, tuple):
        rng = make_rng(spec.master_seed, 1, dim[0], dim[1], s, trial)
        return make_low_rank_signal(dim[0], dim[1], s, seed=rng)
    rng = make_rng(spec.master_seed, 1, dim, 0, s, trial)
    return make_sparse_signal(dim, s, spec.signal, seed=rng)


def _oracle_ols(raw: SampleSet, truth: GroundTruth):
    theta = truth.theta_star
    X = raw.design
    if truth.is_matrix:
        m, n = theta.shape
        r = truth.sparsity_s
        U, _, Vt = np.linalg.svd(theta)
        U, V = U[:, :r], Vt[:r].T
        Z = np.einsum("ia,nab,bj->nij", U.T, X.reshape(-1, m, n), V).reshape(len(X), -1)
        coef = np.linalg.lstsq(Z, raw.response, rcond=None)[0]
        est = (U @ coef.reshape(r, r) @ V.T).ravel()
    else:
        support = np.flatnonzero(theta)
        Z = X[:, support]
        coef = np.linalg.lstsq(Z, raw.response, rcond=None)[0]
        est = np.zeros(X.shape[1])
        est[support] = coef
    g = (2.0 / len(X)) * (Z.T @ (Z @ coef - raw.response))
    return est, float(np.max(np.abs(g)))


def _run_estimator(tag, spec, raw, truth, dim, s):
    opts = {k: spec.solver[k] for k in _SOLVER_KEYS if k in spec.solver}
    N, d = raw.n_samples, raw.dim
    if tag == ORACLE_OLS:
        est, kkt = _oracle_ols(raw, truth)
        return est, 0, True, kkt
    if spec.mode == SPARSE_GENERAL:
        reg = Regularizer.l1()
        lam = sparse_lambda(N, d, spec.lambda_scale)
    elif spec.mode == SINGLE_INDEX_SPARSE:
        reg = Regularizer.l1()
        lam = single_index_lambda(N, d, reg, spec.lambda_scale, s)
    else:
        reg = Regularizer.nuclear(*dim)
        lam = single_index_lambda(N, d, reg, spec.lambda_scale, s)
    if tag == THRESHOLDED:
        if spec.mode == SPARSE_GENERAL:
            report = fit_thresholded_lasso(raw, spec.lambda_scale, **opts)
        else:
            report = fit_single_index(raw, spec.q, reg, spec.lambda_scale, s, **opts)
    else:
        report = fit(raw, EstimatorConfig(lam=lam, regularizer=reg, **opts))
    res = report.result
    return res.theta_hat, res.iterations, res.converged, res.kkt_residual


def run_task(spec: ExperimentSpec, cell_index: int, trial: int, timing: bool = False):
    """All estimator rows for one (cell, trial)."""
    N, dim, s = spec.cells()[cell_index]
    with threadpool_limits(limits=1):
        design = build_design(spec.design, dim, spec.mode)
        truth = GroundTruth(_signal(spec, dim, s, trial), 1.0, s, build_link(spec.link))
        raw, truth = synthesize_dataset(design, truth, N, (spec.master_seed, 0, cell_index, trial))
        rate = predicted_rate(spec.mode, N, dim, s)
        rows = []
        for tag in spec.estimators:
            start = time.perf_counter()
            try:
                est, iters, converged, kkt = _run_estimator(tag, spec, raw, truth, dim, s)
            except (DegenerateProblemError, NumericalError):
                est, iters, converged, kkt = np.zeros(raw.dim), 0, False, math.nan
            wall = (time.perf_counter() - start) * 1e3 if timing else math.nan
            m = diag.error_metrics(est, truth)
            rows.append(MetricRow(spec.mode, N, dim, s, trial, tag, m["l2"], m["l1_or_nuclear"],
                                  m["cosine"], iters, converged, kkt, wall, rate))
    return rows


def _task_star(args):
    return run_task(*args)


def default_workers():
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None, timing=False):
    """Run every (cell, trial) task; rows come back in canonical order."""
    workers = default_workers() if workers is None else workers
    tasks = [(spec, c, k, timing) for c in range(len(spec.cells())) for k in range(spec.trials)]
    if workers <= 1:
        chunks = [_task_star(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task_star, tasks))
    order = {cell: i for i, cell in enumerate(spec.cells())}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: r.sort_key(order))
    return rows


# ------------------------------------------------------------------ CSV I/O

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, tuple):
        return dim_label(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def emit_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, f.name)) for f in fields(MetricRow)])


def _parse_dim(text):
    if "x" in text:
        m, n = text.split("x")
        return (int(m), int(n))
    return int(text)


def read_metrics_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        rows = []
        for rec in reader:
            rows.append(MetricRow(
                rec[0], int(rec[1]), _parse_dim(rec[2]), int(rec[3]), int(rec[4]), rec[5],
                float(rec[6]), float(rec[7]), float(rec[8]), int(rec[9]), rec[10] == "true",
                float(rec[11]), float(rec[12]), float(rec[13])))
    return rows


# ---------------------------------------------------------------- summaries

SUMMARY_METRICS = ("l2", "psi_err", "cosine", "iters")


def order_stats(values):
    """(median, q25, q75) as order statistics; the lower value on ties."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size

    def pick(p):
        return float(v[int(math.floor(p * (n - 1)))])

    return pick(0.5), pick(0.25), pick(0.75)


@dataclass
class CellSummary:
    mode: str
    N: int
    d: object
    s: int
    estimator: str
    n_used: int
    n_excluded: int
    stats: dict
    pred_rate: float
    c_hat: float = math.nan


def summarize(rows):
    """Per-(cell, estimator) quartiles of converged rows plus a fitted constant.

    ``c_hat`` minimizes sum (median_l2 - c * pred_rate)^2 over the cells of
    each estimator.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to summarize")
    groups = {}
    for r in rows:
        groups.setdefault((r.mode, r.N, r.d, r.s, r.estimator), []).append(r)
    out = []
    for (mode, N, d, s, est), grp in groups.items():
        used = [r for r in grp if r.converged]
        stats = {m: order_stats([getattr(r, m) for r in used]) if used else (math.nan,) * 3
                 for m in SUMMARY_METRICS}
        out.append(CellSummary(mode, N, d, s, est, len(used), len(grp) - len(used), stats,
                               grp[0].pred_rate))
    for est in {c.estimator for c in out}:
        cells = [c for c in out if c.estimator == est and c.n_used]
        num = sum(c.stats["l2"][0] * c.pred_rate for c in cells)
        den = sum(c.pred_rate ** 2 for c in cells)
        c_hat = num / den if den > 0 else math.nan
        for c in out:
            if c.estimator == est:
                c.c_hat = c_hat
    return out


def summary_header():
    cols = ["mode", "N", "d", "s", "estimator", "n_used", "n_excluded"]
    for m in SUMMARY_METRICS:
        cols += [f"{m}_median", f"{m}_q25", f"{m}_q75"]
    return cols + ["pred_rate", "c_hat"]


def emit_summary_csv(summary, fh_or_path):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_header())
        for c in summary:
            vals = [c.mode, c.N, c.d, c.s, c.estimator, c.n_used, c.n_excluded]
            for m in SUMMARY_METRICS:
                vals += list(c.stats[m])
            vals += [c.pred_rate, c.c_hat]
            w.writerow([_fmt(v) for v in vals])

    if hasattr(fh_or_path, "write"):
        write(fh_or_path)
    else:
        with open(fh_or_path, "w", newline="", encoding="utf-8") as fh:
            write(fh)


# -------------------------------------------------------------- built-ins

DEMOS = {
    "sparse": {
        "mode": SPARSE_GENERAL,
        "grid": {"N": [500, 2000], "d": [100], "s": [5]},
        "design": {"kind": "iid", "dist": "student_t", "df": 25},
        "link": {"kind": "linear", "noise": {"kind": "student", "df": 6, "scale": 0.5}},
        "solver": {"lambda_scale": 1.0},
        "trials": 4,
        "master_seed": 2022,
        "baselines": {"vanilla_lasso": True, "oracle_ols_on_support": True},
    },
    "single-index": {
        "mode": SINGLE_INDEX_SPARSE,
        "grid": {"N": [1000, 4000], "d": [100], "s": [5]},
        "design": {"kind": "elliptical", "radial": "student", "df": 6},
        "link": {"kind": "sign"},
        "solver": {"lambda_scale": 1.0, "q": 5},
        "trials": 4,
        "master_seed": 2023,
        "baselines": {"vanilla_lasso": True},
    },
    "low-rank": {
        "mode": SINGLE_INDEX_LOW_RANK,
        "grid": {"N": [600, 2400], "shape": [[10, 10]], "s": [2]},
        "design": {"kind": "elliptical", "radial": "student", "df": 12},
        "link": {"kind": "linear", "noise": {"kind": "student", "df": 6, "scale": 0.5}},
        "solver": {"lambda_scale": 1.0, "q": 8},
        "trials": 3,
        "master_seed": 2024,
        "baselines": {"oracle_ols_on_support": True},
    },
}


def demo_spec(name: str) -> ExperimentSpec:
    if name not in DEMOS:
        raise ConfigError(f"unknown demo {name!r}; choose from {sorted(DEMOS)}")
    return spec_from_dict(DEMOS[name])
