import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.optimize import minimize
from scipy.special import expit

from pathpolicy.errors import Separation, ShapeMismatch, Singular
from pathpolicy.models import (FeatureMap, FitConfig, FittedModel, fit_categorical, fit_columns, fit_linear,
                               fit_logistic, logistic_loglik, logistic_score, predict, unique_rows)
from pathpolicy.terms import design, parse_term


def _logit_data(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.normal(size=n), rng.integers(0, 2, n)])
    beta = np.array([-0.3, 0.8, 1.1])
    y = (rng.random(n) < expit(x @ beta)).astype(float)
    return x, y, beta


@given(st.integers(0, 10_000))
def test_score_matches_finite_difference(seed):
    x, y, _ = _logit_data(300, seed)
    rng = np.random.default_rng(seed)
    b = rng.normal(size=3)
    w = rng.uniform(0.5, 2.0, size=len(y))
    g = logistic_score(b, x, y, w)
    h = 1e-6
    fd = np.array([(logistic_loglik(b + h * e, x, y, w) - logistic_loglik(b - h * e, x, y, w)) / (2 * h)
                   for e in np.eye(3)])
    assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_logistic_matches_generic_optimizer():
    x, y, _ = _logit_data()
    m = fit_logistic(x, y)
    ref = minimize(lambda b: -logistic_loglik(b, x, y), np.zeros(3),
                   jac=lambda b: -logistic_score(b, x, y), method="BFGS", options={"gtol": 1e-10})
    np.testing.assert_allclose(m.coef, ref.x, atol=1e-5)
    assert np.max(np.abs(logistic_score(m.coef, x, y))) <= 1e-6


def test_logistic_recovers_truth():
    x, y, beta = _logit_data(200000, 3)
    m = fit_logistic(x, y)
    assert np.all(np.abs(m.coef - beta) <= 4 * m.se)


def test_separation():
    x = np.column_stack([np.ones(20), np.arange(20.0)])
    y = (np.arange(20) >= 10).astype(float)
    with pytest.raises(Separation):
        fit_logistic(x, y)


def test_ridge_handles_separation():
    x = np.column_stack([np.ones(20), np.arange(20.0)])
    y = (np.arange(20) >= 10).astype(float)
    m = fit_logistic(x, y, FitConfig(ridge=1.0))
    assert np.all(np.isfinite(m.coef))


def test_singular_designs():
    x = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(Singular):
        fit_logistic(x, np.r_[np.zeros(5), np.ones(5)])
    with pytest.raises(Singular):
        fit_linear(x, np.arange(10.0))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        fit_linear(np.ones((5, 2)), np.ones(4))
    m = FittedModel("linear", np.ones(2))
    with pytest.raises(ShapeMismatch):
        m.predict_design(np.ones((3, 3)))


def test_linear_normal_equations():
    rng = np.random.default_rng(1)
    x = np.column_stack([np.ones(500), rng.normal(size=(500, 2))])
    y = x @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=500)
    w = rng.uniform(0.2, 3, size=500)
    m = fit_linear(x, y, weights=w)
    xtw = x.T * w
    np.testing.assert_allclose(m.coef, np.linalg.solve(xtw @ x, xtw @ y), atol=1e-10)


@given(st.integers(0, 10_000), st.sampled_from(["linear", "logistic"]))
def test_aggregated_fit_equals_raw_fit(seed, kind):
    rng = np.random.default_rng(seed)
    n = 600
    cols = {"W0": rng.integers(0, 3, n), "A1": rng.integers(0, 2, n)}
    fmap = FeatureMap(("1", "A1", "[W0=1]", "[W0=2]", "A1*[W0=1]"))
    eta = 0.2 + 0.5 * cols["A1"] - 0.4 * (cols["W0"] == 2)
    y = (rng.random(n) < expit(eta)).astype(float) if kind == "logistic" else eta + rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)
    agg = fit_columns(kind, fmap, cols, y, weights=w)
    x = fmap.design(cols)
    raw = fit_logistic(x, y, weights=w) if kind == "logistic" else fit_linear(x, y, weights=w)
    np.testing.assert_allclose(agg.coef, raw.coef, atol=1e-8)
    np.testing.assert_allclose(agg.se, raw.se, rtol=1e-6)
    if kind == "linear":
        assert agg.sigma == pytest.approx(raw.sigma, rel=1e-10)
    np.testing.assert_allclose(agg.predict_columns(cols), raw.predict_design(x), atol=1e-8)


@given(hnp.arrays(np.int64, st.integers(1, 60), elements=st.integers(-3, 5)),
       hnp.arrays(np.int64, st.integers(1, 60), elements=st.integers(0, 1)))
def test_unique_rows(a, b):
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    f = np.linspace(0, 1, n).round(1)
    (ua, ub, uf), inv = unique_rows([a, b, f])
    np.testing.assert_array_equal(ua[inv], a)
    np.testing.assert_array_equal(ub[inv], b)
    np.testing.assert_array_equal(uf[inv], f)
    rows = set(zip(ua.tolist(), ub.tolist(), uf.tolist()))
    assert len(rows) == len(ua) == len(set(zip(a.tolist(), b.tolist(), f.tolist())))


def test_saturated_map():
    fm = FeatureMap.saturated(["W0", "A1"], {"W0": 3})
    assert len(fm) == 6
    grid = {"W0": np.repeat([0, 1, 2], 2), "A1": np.tile([0, 1], 3)}
    assert np.linalg.matrix_rank(fm.design(grid)) == 6


def test_main_effects_map():
    fm = FeatureMap.main_effects(["W0", "A1", "M1_1"], treatment="A1")
    assert fm.terms == ("1", "W0", "M1_1", "A1", "A1*W0", "A1*M1_1")


def test_terms():
    assert parse_term("1") == ()
    assert parse_term("A1*[W0=2]") == (("A1", None), ("W0", 2))
    with pytest.raises(ValueError):
        parse_term("A1+W0")
    x = design(["1", "A1*[W0=2]"], {"A1": np.array([1, 1, 0]), "W0": np.array([2, 1, 2])})
    np.testing.assert_array_equal(x, [[1, 1], [1, 0], [1, 0]])


def test_model_round_trip():
    x, y, _ = _logit_data(500)
    fm = FeatureMap(("1", "z", "b"))
    m = fit_logistic(x, y, feature_map=fm)
    back = FittedModel.from_dict(m.to_dict())
    np.testing.assert_allclose(back.predict_design(x), m.predict_design(x))
    assert predict(m, x[0]) == pytest.approx(float(m.predict_design(x[:1])[0]))


def test_categorical():
    m = fit_categorical(np.array([0, 1, 1, 2]), 4)
    np.testing.assert_allclose(m.coef, [0.25, 0.5, 0.25, 0.0])
