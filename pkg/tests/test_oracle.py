import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathpolicy import ident, oracle, specs
from pathpolicy.errors import CardinalityOverflow
from pathpolicy.policy import is_constant, random_table_policy
from pathpolicy.scm import Intervention, ScmSpec

from conftest import make_random_spec


def test_toy1_golden(toy1):
    assert oracle.exact_value(toy1).value == pytest.approx(2.5575, abs=1e-12)
    assert float(oracle.exact_value(toy1, Intervention.nodes({"A1": 1}))) == pytest.approx(3.375, abs=1e-12)
    pol, v = oracle.exact_optimal_policy(toy1, "overall")
    assert is_constant(pol, toy1.layout, 1) and v == pytest.approx(3.375, abs=1e-12)
    pol, v = oracle.exact_optimal_policy(toy1, "path", [0])
    assert is_constant(pol, toy1.layout, 1) and v == pytest.approx(2.625, abs=1e-12)


def test_toy2_golden(toy2):
    _, v = oracle.exact_optimal_policy(toy2, "overall")
    assert v == pytest.approx(3.998375, abs=1e-12)
    _, v = oracle.exact_optimal_policy(toy2, "path", [0, 0])
    assert v == pytest.approx(4.619125, abs=1e-12)
    assert oracle.exact_value(toy2).value == pytest.approx(3.6150690625, abs=1e-12)


def test_countervailing_golden():
    spec = specs.countervailing()
    pol, v_over = oracle.exact_optimal_policy(spec, "overall")
    acts = pol.rule(1).actions
    assert acts == tuple(1 if w < 8 else 0 for w in range(19))
    pol, v_path = oracle.exact_optimal_policy(spec, "path", [0])
    assert pol.rule(1).actions == tuple(1 if w < 13 else 0 for w in range(19))
    assert v_path > v_over > oracle.exact_value(spec).value


@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]))
def test_optimum_dominates_random_policies(seed, stages):
    spec = make_random_spec(seed, stages, dims=(1,) * stages)
    rng = np.random.default_rng(seed)
    pol_o, v_o = oracle.exact_optimal_policy(spec, "overall")
    pol_p, v_p = oracle.exact_optimal_policy(spec, "path", [0] * stages)
    # the reported value is the value of the reported policy
    assert oracle.exact_value(spec, Intervention.overall(pol_o)).value == pytest.approx(v_o, abs=1e-10)
    assert oracle.exact_value(spec, Intervention.path(pol_p, [0] * stages)).value == pytest.approx(v_p, abs=1e-10)
    for _ in range(5):
        pol = random_table_policy(spec.layout, rng)
        assert oracle.exact_value(spec, Intervention.overall(pol)).value <= v_o + 1e-10
        assert oracle.exact_value(spec, Intervention.path(pol, [0] * stages)).value <= v_p + 1e-10


def _shift_outcome(spec: ScmSpec, delta: np.ndarray) -> ScmSpec:
    tables = dict(spec.tables)
    tables[spec.layout.outcome] = spec.tables[spec.layout.outcome] + delta
    return ScmSpec(spec.layout, tables, spec.outcome_sigma, spec.u_probs, spec.positivity_floor)


@given(st.integers(0, 2 ** 31), st.floats(0.0, 3.0))
def test_monotone_in_outcome(seed, bump):
    spec = make_random_spec(seed, 2)
    rng = np.random.default_rng(seed)
    delta = bump * rng.random(spec.tables["W2"].shape)
    up = _shift_outcome(spec, delta)
    pol = random_table_policy(spec.layout, rng)
    iv = Intervention.path(pol, [1, 0])
    assert oracle.exact_value(up, iv).value >= oracle.exact_value(spec, iv).value - 1e-12


@given(st.integers(0, 2 ** 31), st.floats(-5, 5))
def test_constant_shift(seed, c):
    spec = make_random_spec(seed, 1)
    iv = Intervention.nodes({"A1": 1})
    base = oracle.exact_value(spec, iv).value
    assert oracle.exact_value(_shift_outcome(spec, c), iv).value == pytest.approx(base + c, abs=1e-10)


@given(st.integers(0, 2 ** 31))
def test_baseline_relabel_invariance(seed):
    # permuting the levels of W0 (and every table indexed by it) leaves values unchanged
    spec = make_random_spec(seed, 1, card=3)
    lay = spec.layout
    perm = np.random.default_rng(seed).permutation(3)
    tables = {}
    for v in lay.vertices:
        t = spec.tables[v]
        if v == "W0":
            tables[v] = t[:, perm]
        else:
            ax = 1 + lay.parents(v).index("W0")
            tables[v] = np.take(t, perm, axis=ax)
    other = ScmSpec(lay, tables, spec.outcome_sigma, spec.u_probs, spec.positivity_floor)
    assert oracle.exact_value(other).value == pytest.approx(oracle.exact_value(spec).value, abs=1e-12)
    _, a = oracle.exact_optimal_policy(spec, "overall")
    _, b = oracle.exact_optimal_policy(other, "overall")
    assert a == pytest.approx(b, abs=1e-12)


def test_budget(toy2):
    with pytest.raises(CardinalityOverflow):
        oracle.exact_value(toy2, budget=8)
    with pytest.raises(CardinalityOverflow):
        oracle.exact_optimal_policy(toy2, "overall", limit=4)


def test_terms_count(toy1):
    rep = oracle.exact_value(toy1, Intervention.nodes({"A1": 1}))
    assert rep.terms_enumerated == 4     # W0 x M1_1
    assert oracle.exact_value(toy1).terms_enumerated == 8


def test_emit_golden(tmp_path, toy1):
    path = tmp_path / "golden.json"
    recs = oracle.emit_golden(toy1, [Intervention.nodes({"A1": 1}), Intervention.none()], path)
    loaded = json.loads(path.read_text())
    assert loaded == recs
    assert loaded[0]["value"] == pytest.approx(3.375, abs=1e-12)
    assert loaded[0]["spec_hash"] == toy1.hash()


def test_oracle_and_ident_agree_on_packaged():
    for name in specs.NAMES:
        spec = specs.packaged(name)
        law = ident.spec_law(spec)
        ref = [0] * spec.stages
        pol, v = oracle.exact_optimal_policy(spec, "path", ref)
        assert ident.path_policy_value(law, Intervention.path(pol, ref)) == pytest.approx(v, abs=1e-10)
