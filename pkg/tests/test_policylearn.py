import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathpolicy import ident, oracle, specs
from pathpolicy.errors import ConfigError, EmptyClass, NoRoot, PositivityFailure, Singular
from pathpolicy.policy import Policy, TableRule, ThresholdRule, is_constant
from pathpolicy.policylearn import (LEARNERS, Mode, ModelConfig, fit, fit_value_nuisance, g_estimate,
                                    optimize_law, policy_value, q_learn, solve_moments, value_ipw, value_robust,
                                    value_search)
from pathpolicy.policylearn.qlearn import stage_weights
from pathpolicy.scm import Dataset, simulate, tilde_spec

from conftest import make_random_spec

PATH0 = Mode.path([0])


@pytest.fixture(scope="module")
def toy1_data():
    return simulate(specs.toy1(), 50000, 11)


@pytest.fixture(scope="module")
def null_data():
    return simulate(specs.null(), 100000, 5)


class ExactNode:
    """Stand-in for a fitted binary model that reads the true table."""

    def __init__(self, spec, v):
        self.spec, self.v = spec, v

    def predict_columns(self, cols):
        return ident.spec_law(self.spec).prob1(self.v, cols)


class ColumnStub:
    """p(A=1 | ...) equal to the observed A itself."""

    def __init__(self, col):
        self.col = col

    def predict_columns(self, cols):
        return np.asarray(cols[self.col], dtype=float)


def scaled(data: Dataset, c: float) -> Dataset:
    cols = dict(data.columns)
    cols[data.layout.outcome] = data.outcome * c
    return Dataset(data.layout, cols)


# --- learners on TOY1 ------------------------------------------------------------

@pytest.mark.parametrize("learner", LEARNERS)
@pytest.mark.parametrize("mode,target", [(PATH0, 2.625), (Mode.overall(), 3.375)])
def test_toy1_learners(toy1_data, learner, mode, target):
    res = fit(learner, toy1_data, mode)
    assert is_constant(res.policy, toy1_data.layout, 1)
    assert abs(res.value_estimate - target) < 0.05
    json.loads(res.to_json())
    assert learner.split("[")[0] in res.learner


@pytest.mark.parametrize("learner", LEARNERS)
def test_deterministic(toy1_data, learner):
    a = fit(learner, toy1_data, PATH0).to_json()
    b = fit(learner, toy1_data, PATH0).to_json()
    assert a == b


@pytest.mark.parametrize("learner", LEARNERS)
def test_null_effect(null_data, learner):
    cfg = ModelConfig(tie_tol=0.05)
    res = fit(learner, null_data, Mode.overall(), cfg)
    assert is_constant(res.policy, null_data.layout, 0)
    assert abs(res.value_estimate - null_data.outcome.mean()) < 0.03


def test_null_blip_zero(null_data):
    res = g_estimate(null_data, mode=Mode.overall())
    psi, se = np.array(res.diagnostics["psi"]["stage1"]), np.array(res.diagnostics["se"]["stage1"])
    assert np.all(np.abs(psi) <= 3 * se)


# --- exact-law properties ------------------------------------------------------

@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]), st.booleans())
@settings(max_examples=25)
def test_plugin_on_true_law_is_optimal(seed, stages, path):
    spec = make_random_spec(seed, stages)
    law = ident.spec_law(spec)
    mode = Mode.path([0] * stages) if path else Mode.overall()
    pol, _ = optimize_law(law, spec.layout, mode)
    if path:
        _, best = oracle.exact_optimal_policy(spec, "path", [0] * stages)
    else:
        _, best = oracle.exact_optimal_policy(spec, "overall")
    assert abs(policy_value(law, pol, mode) - best) <= 1e-10


@given(st.floats(0.01, 100.0))
@settings(max_examples=10)
def test_argmax_invariance(c):
    data = simulate(specs.countervailing(), 4000, 3)
    for learner in ("plugin", "qlearn", "gest", "value_search"):
        for mode in (PATH0, Mode.overall()):
            a = fit(learner, data, mode).policy
            b = fit(learner, scaled(data, c), mode).policy
            grid = {"W0": np.arange(19)}
            np.testing.assert_array_equal(a.rule(1).decide(grid), b.rule(1).decide(grid))


# --- Q-learning weights ------------------------------------------------------------

def test_weight_example():
    spec = specs.toy1()
    data = Dataset(spec.layout, {"W0": [0], "A1": [1], "M1_1": [1], "W1": [0.0]})
    w, ntrunc = stage_weights(data, {"M1_1": ExactNode(spec, "M1_1")}, PATH0, 1, ModelConfig())
    assert w[0] == pytest.approx(0.2 / 0.7, abs=1e-12)
    assert ntrunc == 0


def test_weights_one_when_treatment_is_reference():
    spec = specs.toy1()
    d = simulate(spec, 2000, 1)
    cols = dict(d.columns)
    cols["A1"] = np.zeros(d.n, dtype=np.int64)
    d0 = Dataset(d.layout, cols)
    cfg = ModelConfig(overrides={"M1_1": ["1", "W0"]})
    from pathpolicy.policylearn import fit_nuisance
    meds = fit_nuisance(d0, cfg, ["M1_1"])
    w, _ = stage_weights(d0, meds, PATH0, 1, cfg)
    assert np.all(w == 1.0)


@pytest.mark.parametrize("name", ["toy1", "toy2"])
def test_tilde_reduction(name):
    spec = specs.packaged(name)
    ref = [0] * spec.stages
    data = simulate(tilde_spec(spec, ref), 20000, 2)
    cfg = ModelConfig(unit_weights=True)
    a = q_learn(data, mode=Mode.path(ref), config=cfg)
    b = q_learn(data, mode=Mode.overall(), config=cfg)
    for i in range(1, spec.stages + 1):
        np.testing.assert_allclose(a.nuisance[f"Q{i}"].coef, b.nuisance[f"Q{i}"].coef, atol=1e-10, rtol=0)
        w = a.diagnostics["weights"][f"stage{i}"]
        assert w["min"] == w["max"] == 1.0


def test_q_value_dominates(toy1_data):
    res = q_learn(toy1_data, mode=PATH0)
    qf = res.artifacts["qfunctions"]
    q = qf.both(1, toy1_data.columns)
    v = qf.value(1, toy1_data.columns)
    assert np.all(v >= q[:, 0]) and np.all(v >= q[:, 1])
    assert np.all((v == q[:, 0]) | (v == q[:, 1]))


def test_weighted_q_diagnostics(toy1_data):
    res = q_learn(toy1_data, mode=PATH0)
    w = res.diagnostics["weights"]["stage1"]
    assert 0 < w["min"] <= w["mean"] <= w["max"] < np.inf


# --- value estimators ----------------------------------------------------------------

def test_ipw_policy_matching_observed_action(toy1_data):
    # rows where A = W0, the rule f(W0) = W0, and a propensity stub equal to A:
    # every row follows the policy and every weight is 1
    cols = dict(toy1_data.columns)
    cols["A1"] = np.asarray(cols["W0"]).copy()
    d = Dataset(toy1_data.layout, cols)
    pol = Policy((TableRule(("W0",), (2,), (0, 1)),))
    est = value_ipw(d, pol, Mode.overall(), {"A1": ColumnStub("A1")}, ModelConfig())
    assert est.value == pytest.approx(float(np.mean(d.outcome)), abs=1e-12)


@pytest.mark.parametrize("fn", [value_ipw, value_robust])
def test_value_estimators_toy1(toy1_data, fn):
    est = fn(toy1_data, Policy.constant(1), PATH0)
    assert abs(est.value - 2.625) < 0.05
    est = fn(toy1_data, Policy.constant(1), Mode.overall())
    assert abs(est.value - 3.375) < 0.05


def test_robust_single_stage_only():
    d = simulate(specs.toy2(), 2000, 1)
    with pytest.raises(ConfigError):
        value_robust(d, Policy.constant(1, 2), Mode.path([0, 0]))


def test_partial_reference_value():
    # only the second mediator component referenced
    spec = specs.toy2()
    d = simulate(spec, 100000, 4).single_stage()
    s1 = d.layout
    assert s1.mediators == ("M1_1",)
    est = value_robust(d, Policy.constant(1), Mode.path([0], []))
    assert abs(est.value - value_robust(d, Policy.constant(1), Mode.overall()).value) < 0.02


# --- value search -------------------------------------------------------------------

FOUR = [Policy.constant(0), Policy.constant(1), Policy((ThresholdRule("W0", 1, "ge"),)),
        Policy((ThresholdRule("W0", 1, "lt"),))]


def test_value_search_four(toy1_data):
    res = value_search(toy1_data, FOUR, "robust", PATH0)
    assert res.diagnostics["selected_index"] == 1
    vals = [c["value"] for c in res.diagnostics["candidates"]]
    np.testing.assert_allclose(vals, [1.75, 2.625, 2.175, 2.2], atol=0.06)


def test_value_search_single_and_empty(toy1_data):
    res = value_search(toy1_data, [FOUR[2]], "ipw", PATH0)
    assert res.policy is FOUR[2]
    with pytest.raises(EmptyClass):
        value_search(toy1_data, [], "robust", PATH0)


def test_value_search_ties_to_first(toy1_data):
    res = value_search(toy1_data, [FOUR[1], FOUR[1]], "robust", PATH0)
    assert res.diagnostics["selected_index"] == 0


def test_value_search_unknown_estimator(toy1_data):
    with pytest.raises(ConfigError):
        value_search(toy1_data, FOUR, "magic", PATH0)


# --- G-estimation ---------------------------------------------------------------------

def test_gest_path_k2_rejected():
    d = simulate(specs.toy2(), 3000, 1)
    with pytest.raises(ConfigError, match="single decision"):
        g_estimate(d, mode=Mode.path([0, 0]))


def test_blip_needs_treatment_factor(toy1_data):
    cfg = ModelConfig(overrides={"blip1": ["A1", "W0"]})
    with pytest.raises(ConfigError):
        g_estimate(toy1_data, mode=Mode.overall(), config=cfg)


def test_blip_zero_at_reference(toy1_data):
    res = g_estimate(toy1_data, mode=PATH0)
    blip = res.nuisance["blip1"]
    cols = {"W0": np.array([0, 1]), "A1": np.array([0, 0])}
    np.testing.assert_array_equal(blip.feature_map.design(cols) @ blip.coef, [0.0, 0.0])


def test_gest_two_stage_overall():
    spec = specs.toy2()
    d = simulate(spec, 100000, 3)
    res = g_estimate(d, mode=Mode.overall())
    _, best = oracle.exact_optimal_policy(spec, "overall")
    from pathpolicy.scm import Intervention
    true = oracle.exact_value(spec, Intervention.overall(res.policy)).value
    assert best - true < 0.05


def test_solve_moments():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x, res, _ = solve_moments(lambda x: a @ x - b, lambda x: a, np.zeros(2))
    np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-10)
    with pytest.raises(NoRoot):
        solve_moments(lambda x: x ** 2 + 1.0, lambda x: np.diag(2 * x + 1e-3), np.array([1.0]), max_iter=20)
    with pytest.raises(Singular):
        solve_moments(lambda x: np.array([x[0] + x[1] - 1, x[0] + x[1] - 2]), lambda x: np.ones((2, 2)),
                      np.zeros(2))


# --- failures ----------------------------------------------------------------------------

def test_positivity_failure():
    d = simulate(specs.toy1(), 2000, 1)
    cols = dict(d.columns)
    cols["A1"] = np.where(d["W0"] == 1, 1, d["A1"])
    with pytest.raises(PositivityFailure):
        fit("plugin", Dataset(d.layout, cols), Mode.overall())


def test_unknown_learner(toy1_data):
    with pytest.raises(ConfigError, match="plugin, qlearn, value_search, gest"):
        fit("boosting", toy1_data)


def test_nuisance_keys(toy1_data):
    nuis = fit_value_nuisance(toy1_data, PATH0)
    assert set(nuis) == {"A1", "M1_1", "W1"}
    nuis = fit_value_nuisance(toy1_data, Mode.overall())
    assert set(nuis) == {"A1", "outcome_ha1"}
