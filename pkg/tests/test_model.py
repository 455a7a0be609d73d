import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trunclasso.errors import DimensionError
from trunclasso.model import (EstimatorConfig, GroundTruth, Regularizer, SampleSet,
                              objective, psi_prox, psi_value)

L1 = Regularizer.l1()
NUC22 = Regularizer.nuclear(2, 2)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec6 = arrays(np.float64, 6, elements=finite)


def test_psi_value_examples():
    assert psi_value(L1, [3, -4, 0]) == 7
    assert psi_value(NUC22, np.diag([3.0, 1.0]).ravel()) == pytest.approx(4, abs=1e-12)
    assert psi_value(L1, np.zeros(5)) == 0


def test_psi_prox_examples():
    np.testing.assert_array_equal(psi_prox(L1, [3, -0.2, 0], 1.0), [2, 0, 0])
    v = np.array([1.5, -2.0, 0.3, 4.0])
    np.testing.assert_array_equal(psi_prox(L1, v, 0.0), v)
    np.testing.assert_allclose(psi_prox(NUC22, v, 0.0), v)
    out = psi_prox(NUC22, np.diag([3.0, 1.0]).ravel(), 2.0)
    np.testing.assert_allclose(out, np.diag([1.0, 0.0]).ravel(), atol=1e-12)


def test_nuclear_accepts_matrix_and_checks_size():
    M = np.diag([3.0, 1.0])
    assert psi_prox(NUC22, M, 2.0).shape == (2, 2)
    with pytest.raises(DimensionError):
        psi_value(NUC22, np.ones(5))


def test_prox_rejects_negative_parameter():
    with pytest.raises(ValueError):
        psi_prox(L1, [1.0], -0.1)


def test_objective_examples():
    cfg = EstimatorConfig(lam=1.0)
    s = SampleSet([[1.0]], [2.0])
    assert objective(s, [2.0], cfg) == 2.0
    assert objective(s, [1.5], cfg) == pytest.approx(1.75)
    s = SampleSet([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]], [1.0, -2.0, 0.5])
    assert objective(s, np.zeros(2), cfg) == pytest.approx(np.mean(np.array([1, -2, 0.5]) ** 2))
    with pytest.raises(DimensionError):
        objective(s, np.zeros(3), cfg)


def test_sample_set_invariants():
    with pytest.raises(DimensionError):
        SampleSet(np.ones((3, 2)), np.ones(4))
    with pytest.raises(ValueError):
        SampleSet([[np.nan]], [1.0])
    s = SampleSet(np.ones((3, 2)), np.ones(3))
    assert (s.n_samples, s.dim) == (3, 2)
    with pytest.raises(ValueError):
        s.design[0, 0] = 5.0


def test_config_and_truth_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(lam=-1.0)
    with pytest.raises(ValueError):
        EstimatorConfig(max_iters=0)
    with pytest.raises(ValueError):
        EstimatorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        GroundTruth(np.zeros(3), sparsity_s=4)
    assert GroundTruth(np.ones((2, 3)), eta=2.0, sparsity_s=2).regularizer == Regularizer.nuclear(2, 3)


@settings(max_examples=200, deadline=None)
@given(vec6, vec6, st.floats(-50, 50))
def test_norm_axioms_l1_and_nuclear(a, b, c):
    for reg in (L1, Regularizer.nuclear(2, 3)):
        va, vb = psi_value(reg, a), psi_value(reg, b)
        assert psi_value(reg, a + b) <= va + vb + 1e-9 * (1 + va + vb)
        assert psi_value(reg, c * a) == pytest.approx(abs(c) * va, rel=1e-9, abs=1e-9)
        assert va >= 0
    assert psi_value(L1, np.zeros(6)) == 0 and psi_value(Regularizer.nuclear(2, 3), np.zeros(6)) == 0


@settings(max_examples=200, deadline=None)
@given(vec6, vec6, st.floats(0, 100))
def test_prox_is_nonexpansive(a, b, t):
    for reg in (L1, Regularizer.nuclear(3, 2)):
        d = np.linalg.norm(psi_prox(reg, a, t) - psi_prox(reg, b, t))
        assert d <= np.linalg.norm(a - b) * (1 + 1e-10) + 1e-9


@settings(max_examples=200, deadline=None)
@given(vec6, st.floats(1e-3, 100))
def test_moreau_decomposition_l1(v, t):
    proj = np.clip(v / t, -1.0, 1.0)
    np.testing.assert_allclose(psi_prox(L1, v, t) + t * proj, v, atol=1e-10 * (1 + np.abs(v).max()))


def test_nuclear_equals_l1_of_singular_values(rng):
    for _ in range(50):
        m, n = rng.integers(1, 6, size=2)
        X = rng.standard_normal((m, n))
        sv = np.linalg.svd(X, compute_uv=False)
        assert psi_value(Regularizer.nuclear(m, n), X) == pytest.approx(psi_value(L1, sv), abs=1e-10)


def test_prox_minimizes_its_objective(rng):
    # compare against perturbed candidates
    for reg in (L1, Regularizer.nuclear(2, 3)):
        v, t = rng.standard_normal(6), 0.7
        u = psi_prox(reg, v, t)

        def h(w):
            return 0.5 * np.sum((w - v) ** 2) + t * psi_value(reg, w)

        for _ in range(200):
            assert h(u) <= h(u + 1e-2 * rng.standard_normal(6)) + 1e-12
