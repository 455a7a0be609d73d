import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trunclasso.truncation import (TruncationScheme, clip_response, entrywise_truncate,
                                   norm_truncate, tau_elliptical, tau_sparse)

mats = arrays(np.float64, (5, 4), elements=st.floats(-1e4, 1e4, allow_nan=False))
taus = st.floats(1e-3, 1e3)


def test_tau_sparse():
    # mpmath at 30 digits: 6.49909371141255...
    assert tau_sparse(10000, 100) == pytest.approx(6.49909371141255, rel=1e-13)
    # N = ln(e d) gives 1, N = 16 ln(e d) gives 2 (d = 1 makes ln(e d) = 1)
    assert tau_sparse(1, 1) == 1.0
    assert tau_sparse(16, 1) == 2.0
    for N, d in ((7, 3), (1000, 200), (5, 10**6)):
        assert tau_sparse(N, d) ** 4 * (1 + math.log(d)) == pytest.approx(N, rel=1e-13)


def test_tau_elliptical():
    assert tau_elliptical(4096, 4 + 1e-12) == pytest.approx(8.0, rel=1e-10)
    assert tau_elliptical(1, 7.5) == 1.0
    assert tau_elliptical(100000, 6) == pytest.approx(10.0, rel=1e-13)
    with pytest.raises(ValueError):
        tau_elliptical(100, 4)


def test_entrywise_examples():
    np.testing.assert_array_equal(entrywise_truncate([[3, -5, 0.5]], 2), [[2, -2, 0.5]])
    X = np.array([[0.3, -0.9], [1.0, 0.0]])
    np.testing.assert_array_equal(entrywise_truncate(X, 1.0), X)
    np.testing.assert_array_equal(entrywise_truncate([[-1, 1]], 1), [[-1, 1]])


def test_norm_examples():
    np.testing.assert_allclose(norm_truncate([[6, 0, 0, 8]], 3), [[3.6, 0, 0, 4.8]], atol=1e-14)
    X = np.array([[1.0, -1.0, 0.5, 0.2]])
    np.testing.assert_array_equal(norm_truncate(X, 1.0), X)
    np.testing.assert_array_equal(norm_truncate(np.zeros((2, 4)), 0.5), np.zeros((2, 4)))


def test_clip_response_examples():
    np.testing.assert_array_equal(clip_response([7, -0.5, -4], 3), [3, -0.5, -3])
    np.testing.assert_array_equal(clip_response([0.1, -2.0], 2.0), [0.1, -2.0])
    np.testing.assert_array_equal(clip_response([0.0], 0.1), [0.0])


def test_scheme_resolves_thresholds():
    assert TruncationScheme.entrywise().resolve_tau(10000, 100) == tau_sparse(10000, 100)
    assert TruncationScheme.norm_based(q=6).resolve_tau(100000, 3) == pytest.approx(10.0)
    assert TruncationScheme.none().resolve_tau(10, 2) == math.inf
    with pytest.raises(ValueError):
        TruncationScheme.norm_based()
    with pytest.raises(ValueError):
        TruncationScheme.entrywise(-1.0)


@settings(max_examples=200, deadline=None)
@given(mats, taus)
def test_idempotent(X, tau):
    once = entrywise_truncate(X, tau)
    np.testing.assert_array_equal(entrywise_truncate(once, tau), once)
    once = norm_truncate(X, tau)
    np.testing.assert_allclose(norm_truncate(once, tau), once, rtol=1e-10, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(mats, taus, taus)
def test_monotone_in_tau(X, t1, t2):
    t1, t2 = min(t1, t2), max(t1, t2)
    assert np.all(np.abs(entrywise_truncate(X, t1)) <= np.abs(entrywise_truncate(X, t2)))
    n1 = np.linalg.norm(norm_truncate(X, t1), axis=1)
    n2 = np.linalg.norm(norm_truncate(X, t2), axis=1)
    assert np.all(n1 <= n2 * (1 + 1e-12))


@settings(max_examples=200, deadline=None)
@given(mats, taus)
def test_norm_rule_keeps_direction_and_caps_norm(X, tau):
    Xt = norm_truncate(X, tau)
    nx, nt = np.linalg.norm(X, axis=1), np.linalg.norm(Xt, axis=1)
    inner = np.sum(X * Xt, axis=1)
    np.testing.assert_allclose(inner, nx * nt, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(nt, np.minimum(nx, 2.0 * tau), rtol=1e-12)


def test_bias_shrinks_as_tau_grows():
    rng = np.random.default_rng(3)
    # shifted heavy-tailed sample with a nonzero mean so the bias is visible
    X = 1.0 + rng.standard_t(3, size=(200000, 3))
    gaps = [np.abs(entrywise_truncate(X, t).mean(0) - X.mean(0)).max() for t in (1, 10, 100)]
    assert gaps[0] > gaps[1] > gaps[2]
    gaps = [np.abs(norm_truncate(X, t).mean(0) - X.mean(0)).max() for t in (1, 10, 100)]
    assert gaps[0] > gaps[1] > gaps[2]
