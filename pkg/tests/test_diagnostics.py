import math
import warnings

import numpy as np
import pytest

from trunclasso.diagnostics import (DegenerateEtaWarning, L1Ball, L1L2Intersection, L2Ball,
                                    MomentProfile, NuclearBall, empirical_small_ball,
                                    error_metrics, estimate_eta, estimate_moments,
                                    gaussian_mean_width, intersection_support,
                                    l1l2_width_bound_shape, small_ball_params,
                                    support_function, theoretical_rate)
from trunclasso.model import GroundTruth, SampleSet
from trunclasso.sampling import (EllipticalSpec, LinkFunction, make_sparse_signal,
                                 synthesize_dataset)

cp = pytest.importorskip("cvxpy")

SQRT_2_OVER_PI = 0.797884560802865
GAMMA_WIDTH_D50 = 7.03580305816677  # sqrt(2) Gamma(25.5) / Gamma(25), mpmath
# E max(|g1|, |g2|) = 2/sqrt(pi); quadrature and 1e6-draw brute force agree
L1_WIDTH_D2 = 1.12837916709551


def test_gaussian_moments(rng):
    X = rng.standard_normal((100000, 4))
    p = estimate_moments(X, rng.standard_normal(100000), q=6, n_dirs=64, seed=1)
    assert p.kappa_hat == pytest.approx(1.0, rel=0.05)
    assert p.nu_hat == pytest.approx(3.0, rel=0.05)
    # E|g|^6 = 15
    assert p.nu_q_hat == pytest.approx(15 ** (1 / 6), rel=0.05)
    assert p.nu_hat >= 0.9 * p.kappa_hat ** 2


def test_rank_one_design_is_degenerate():
    v = np.array([1.0, 2.0, -1.0])
    X = np.tile(2.0 * v, (50, 1))
    p = estimate_moments(X, np.zeros(50), q=4)
    assert p.kappa_hat == 0.0 and p.degenerate
    with pytest.raises(ValueError):
        small_ball_params(p)


def test_moment_homogeneity(rng):
    X, y = rng.standard_t(6, size=(5000, 3)), rng.standard_normal(5000)
    a = estimate_moments(X, y, q=4, seed=2)
    b = estimate_moments(2 * X, y, q=4, seed=2)
    assert b.kappa_hat == pytest.approx(4 * a.kappa_hat, rel=1e-10)
    assert b.nu_hat == pytest.approx(16 * a.nu_hat, rel=1e-10)


def test_small_ball_params_examples():
    assert small_ball_params(MomentProfile(2.0, 8.0, 1.0, 4)) == pytest.approx((0.5, 0.0625))
    d, Q = small_ball_params(MomentProfile(1.0, 1.0, 1.0, 4))
    assert d == pytest.approx(0.5 * math.sqrt(0.5)) and Q == pytest.approx(0.125)
    _, Q1 = small_ball_params(MomentProfile(1.3, 4.1, 1.0, 4))
    _, Q2 = small_ball_params(MomentProfile(4 * 1.3, 16 * 4.1, 1.0, 4))
    assert Q1 == pytest.approx(Q2)


def test_small_ball_q_bounded_and_permutation_invariant(rng):
    X = rng.standard_t(5, size=(20000, 5))
    p = estimate_moments(X, np.zeros(20000), q=4, seed=3)
    perm = estimate_moments(X[:, ::-1], np.zeros(20000), q=4, seed=3)
    assert small_ball_params(p)[1] <= 0.125
    assert p.kappa_hat == pytest.approx(perm.kappa_hat, rel=1e-10)


def test_empirical_small_ball(rng):
    X = rng.standard_normal((100000, 3))
    v = np.array([1.0, 0.0, 0.0])
    assert empirical_small_ball(X, v, 0.0) == 1.0
    assert empirical_small_ball(X, v, 0.6745) == pytest.approx(0.5, abs=0.01)
    u = np.array([0.6, 0.8, 0.0])
    assert empirical_small_ball(np.tile(u, (10, 1)), u, 1.0) == 1.0
    probs = [empirical_small_ball(X, v, t) for t in np.linspace(0, 3, 25)]
    assert all(a >= b for a, b in zip(probs, probs[1:]))
    with pytest.raises(ValueError):
        empirical_small_ball(X, np.ones(3), 0.5)


def test_truncated_small_ball_companion(rng):
    from trunclasso.truncation import entrywise_truncate
    X = rng.standard_t(5, size=(50000, 10)) * math.sqrt(3 / 5)
    p = estimate_moments(X, np.zeros(len(X)), q=4, seed=4)
    delta, Q = small_ball_params(p)
    tau = 1.5
    Xt = entrywise_truncate(X, tau)
    for v in np.eye(10)[:3]:
        tail = np.mean(np.abs(X @ v) > tau)
        assert empirical_small_ball(Xt, v, delta) >= empirical_small_ball(X, v, 2 * delta) - tail - 0.01


def cvx_support(g, rho, r):
    t = cp.Variable(len(g))
    prob = cp.Problem(cp.Maximize(g @ t), [cp.norm1(t) <= rho, cp.norm2(t) <= r])
    prob.solve()
    return prob.value


def test_intersection_support_matches_convex_solver(rng):
    for _ in range(25):
        d = int(rng.integers(1, 12))
        g = rng.standard_normal(d) * rng.uniform(0.1, 3)
        rho, r = rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        assert intersection_support(g, rho, r)[0] == pytest.approx(cvx_support(g, rho, r), rel=1e-5, abs=1e-6)


def test_intersection_limits(rng):
    G = rng.standard_normal((50, 8))
    np.testing.assert_allclose(intersection_support(G, 1.0, 1e9), np.abs(G).max(1))
    np.testing.assert_allclose(intersection_support(G, 1e9, 1.0), np.linalg.norm(G, axis=1))


def test_mean_width_examples():
    assert gaussian_mean_width(L2Ball(1), 1, 200000, seed=1) == pytest.approx(SQRT_2_OVER_PI, rel=0.01)
    a = gaussian_mean_width(L2Ball(1), 7, 3000, seed=2)
    assert gaussian_mean_width(L2Ball(2.5), 7, 3000, seed=2) == pytest.approx(2.5 * a, rel=1e-12)
    assert gaussian_mean_width(L1Ball(1), 2, 200000, seed=3) == pytest.approx(L1_WIDTH_D2, rel=0.01)
    assert gaussian_mean_width(L2Ball(1), 50, 2000, seed=4) == pytest.approx(GAMMA_WIDTH_D50, rel=0.03)


def test_intersection_width_below_both_balls():
    d = 30
    for rho, r in ((1.0, 1.0), (3.0, 0.5), (0.5, 3.0), (2.0, 2.0)):
        both = gaussian_mean_width(L1L2Intersection(rho, r), d, 2000, seed=5)
        assert both <= min(gaussian_mean_width(L1Ball(rho), d, 2000, seed=5),
                           gaussian_mean_width(L2Ball(r), d, 2000, seed=5)) + 1e-12


def test_intersection_width_tracks_bound_shape():
    # the ratio to the bound shape stays within a fixed band as (rho, r, d) vary
    ratios = []
    for d in (20, 100, 400):
        for rho, r in ((1.0, 1.0), (np.sqrt(5), 1.0), (1.0, 0.2), (4.0, 1.0)):
            w = gaussian_mean_width(L1L2Intersection(rho, r), d, 1000, seed=6)
            ratios.append(w / l1l2_width_bound_shape(rho, r, d))
    assert max(ratios) <= 1.5 and min(ratios) >= 0.2


def test_nuclear_ball_width(rng):
    G = rng.standard_normal((5, 12))
    sv = np.linalg.svd(G.reshape(5, 3, 4), compute_uv=False)
    np.testing.assert_allclose(support_function(NuclearBall(2.0, 3, 4), G), 2.0 * sv[:, 0])
    w = gaussian_mean_width(NuclearBall(1.0, 10, 10), 0, 500, seed=1)
    # spectral norm of a 10 x 10 Gaussian matrix is about 2 sqrt(10)
    assert 4.5 < w < 6.5


def test_estimate_eta():
    spec = EllipticalSpec.identity(10)
    theta = make_sparse_signal(10, 2, "unit")
    raw, t = synthesize_dataset(spec, GroundTruth(theta, sparsity_s=2, link=LinkFunction()), 200000, 1)
    assert estimate_eta(raw, t, np.eye(10)) == pytest.approx(1.0, abs=0.01)
    raw, t = synthesize_dataset(spec, GroundTruth(theta, sparsity_s=2, link=LinkFunction("sign")),
                                200000, 2)
    assert estimate_eta(raw, t, np.eye(10)) == pytest.approx(SQRT_2_OVER_PI, abs=0.01)
    u = raw.design @ t.theta_star
    even = SampleSet(raw.design, u * u)
    with pytest.warns(DegenerateEtaWarning):
        assert abs(estimate_eta(even, t, np.eye(10))) < 0.05
    doubled = GroundTruth(2 * t.theta_star, t.eta, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert estimate_eta(raw, doubled, np.eye(10)) == pytest.approx(
            estimate_eta(raw, t, np.eye(10)) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_eta(raw, t, np.zeros((10, 10)))


def test_theoretical_rate():
    assert theoretical_rate("SparseL2", 5, 200, 4000) == pytest.approx(0.0887293452482607, rel=1e-12)
    for mode, dims in (("SparseL2", 50), ("SparseL1", 50), ("LowRankL2", (4, 6)),
                       ("LowRankNuclear", (4, 6))):
        assert theoretical_rate(mode, 3, dims, 400) == pytest.approx(
            2 * theoretical_rate(mode, 3, dims, 1600), rel=1e-14)
    ratio = theoretical_rate("SparseL1", 9, 100, 500) / theoretical_rate("SparseL2", 9, 100, 500)
    assert ratio == pytest.approx(3.0)
    assert theoretical_rate("LowRankL2", 2, (20, 20), 1000) == pytest.approx(math.sqrt(80 / 1000))


def test_error_metrics():
    theta = make_sparse_signal(6, 2, "unit")
    t = GroundTruth(theta, eta=0.8, sparsity_s=2)
    assert error_metrics(0.8 * theta, t) == pytest.approx({"l2": 0, "l1_or_nuclear": 0, "cosine": 1})
    assert error_metrics(-0.8 * theta, t)["cosine"] == pytest.approx(-1)
    pert = 0.8 * theta + 0.3 * np.eye(6)[5]
    m = error_metrics(pert, t)
    assert m["l2"] == pytest.approx(0.3) and m["l1_or_nuclear"] == pytest.approx(0.3)
    assert error_metrics(np.zeros(6), t)["cosine"] == 0.0
    M = GroundTruth(np.diag([1.0, 0.0]), sparsity_s=1)
    mm = error_metrics(np.diag([1.0, 0.5]).ravel(), M)
    assert mm["l1_or_nuclear"] == pytest.approx(0.5) and mm["l2"] == pytest.approx(0.5)
