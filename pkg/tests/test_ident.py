import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathpolicy import ident, oracle
from pathpolicy.errors import CardinalityOverflow, InterventionMismatch
from pathpolicy.policy import Policy, TableRule, ThresholdRule, random_table_policy
from pathpolicy.scm import EdgeValue, Intervention

from conftest import make_random_spec


# --- hand-written TOY1 model, independent of the package --------------------------

def pw(w):
    return 0.5


def pa(a, w):
    p = 0.3 + 0.4 * w
    return p if a == 1 else 1 - p


def pm(m, a, w):
    p = 0.2 + 0.5 * a + 0.1 * w
    return p if m == 1 else 1 - p


def ey(a, m, w):
    return 1 + a + 2 * m + 0.5 * w - 0.5 * a * m


def toy1_sum(a_y, a_m, observational=False):
    """E[Y] with Y seeing a_y(w) and M seeing a_m(w); observational integrates A."""
    total = 0.0
    for w in (0, 1):
        if observational:
            for a in (0, 1):
                total += pw(w) * pa(a, w) * sum(pm(m, a, w) * ey(a, m, w) for m in (0, 1))
        else:
            ay, am = a_y(w), a_m(w)
            total += pw(w) * sum(pm(m, am, w) * ey(ay, m, w) for m in (0, 1))
    return total


TOY1_CASES = {
    "obs": (None, 2.5575),
    "node1": (Intervention.nodes({"A1": 1}), 3.375),
    "node0": (Intervention.nodes({"A1": 0}), 1.75),
    "edge": (Intervention.edge({("A1", "W1"): 1, ("A1", "M1_1"): 0}), 2.625),
    "f=W": (Intervention.overall(Policy((ThresholdRule("W0", 1, "ge"),))), 2.55),
    "path f=W": (Intervention.path(Policy((ThresholdRule("W0", 1, "ge"),)), [0]), 2.175),
    "path f=1-W": (Intervention.path(Policy((ThresholdRule("W0", 1, "lt"),)), [0]), 2.2),
}


def test_hand_sums_match_stated_values():
    assert toy1_sum(None, None, True) == pytest.approx(2.5575, abs=1e-12)
    assert toy1_sum(lambda w: 1, lambda w: 1) == pytest.approx(3.375, abs=1e-12)
    assert toy1_sum(lambda w: 0, lambda w: 0) == pytest.approx(1.75, abs=1e-12)
    assert toy1_sum(lambda w: 1, lambda w: 0) == pytest.approx(2.625, abs=1e-12)
    assert toy1_sum(lambda w: w, lambda w: w) == pytest.approx(2.55, abs=1e-12)
    assert toy1_sum(lambda w: w, lambda w: 0) == pytest.approx(2.175, abs=1e-12)
    assert toy1_sum(lambda w: 1 - w, lambda w: 0) == pytest.approx(2.2, abs=1e-12)


@pytest.mark.parametrize("case", sorted(TOY1_CASES))
def test_toy1_values(toy1, case):
    iv, expected = TOY1_CASES[case]
    law = ident.spec_law(toy1)
    got = ident.value(law, iv or Intervention.none())
    assert got == pytest.approx(expected, abs=1e-12)


def test_dispatchers(toy1):
    law = ident.spec_law(toy1)
    assert ident.g_value(law, {"A1": 1}) == pytest.approx(3.375, abs=1e-12)
    assert ident.g_value(law, None) == pytest.approx(2.5575, abs=1e-12)
    assert ident.edge_g_value(law, {("A1", "W1"): 1, ("A1", "M1_1"): 0}) == pytest.approx(2.625, abs=1e-12)
    with pytest.raises(InterventionMismatch):
        ident.g_value(law, Intervention.edge({("A1", "W1"): 1, ("A1", "M1_1"): 0}))
    with pytest.raises(InterventionMismatch):
        ident.path_policy_value(law, Intervention.nodes({"A1": 1}))


def test_tilde_toy1(toy1):
    law = ident.spec_law(toy1)
    t = ident.tilde_law(law, [0])
    assert ident.total_mass(t) == pytest.approx(1.0, abs=1e-12)
    assert ident.marginal(t, "M1_1")[1] == pytest.approx(0.25, abs=1e-12)
    # treatment law untouched
    ctx = {"W0": np.array([0, 1])}
    np.testing.assert_array_equal(t.prob1("A1", ctx), law.prob1("A1", ctx))


def test_collapse_toy1(toy1):
    law = ident.spec_law(toy1)
    pol = Policy((ThresholdRule("W0", 1, "ge"),))
    a = ident.path_policy_value(law, Intervention.path(pol, [0]))
    b = ident.g_value(ident.tilde_law(law, [0]), pol)
    assert a == pytest.approx(b, abs=1e-12)


def _random_iv(spec, rng, kind):
    lay = spec.layout
    K = lay.stages
    if kind == "node":
        return Intervention.nodes({lay.a(i): int(rng.integers(2)) for i in range(1, K + 1) if rng.random() < 0.7})
    if kind == "edge":
        # edges from A_i into W nodes share one value: the W nodes are linked
        # through U, and splitting them would make A_i a recanting witness
        edges = {}
        for i in range(1, K + 1):
            if rng.random() < 0.8:
                w_val = int(rng.integers(2))
                for c in lay.children(lay.a(i)):
                    edges[(lay.a(i), c)] = w_val if lay.kind(c) in ("intermediate", "outcome") \
                        else int(rng.integers(2))
        return Intervention.edge(edges)
    pol = random_table_policy(lay, rng)
    if kind == "policy":
        return Intervention.overall(pol)
    ref = [int(x) for x in rng.integers(0, 2, size=K)]
    refd = [m for m in lay.mediators if rng.random() < 0.6]
    return Intervention.path(pol, ref, refd if rng.random() < 0.7 else None)


@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]), st.sampled_from(["node", "edge", "policy", "path"]))
def test_ident_equals_oracle(seed, stages, kind):
    spec = make_random_spec(seed, stages, card=int(np.random.default_rng(seed).integers(2, 4)))
    rng = np.random.default_rng(seed + 1)
    iv = _random_iv(spec, rng, kind)
    got = ident.value(ident.spec_law(spec), iv)
    want = oracle.exact_value(spec, iv).value
    assert abs(got - want) <= 1e-10


@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]))
def test_collapse_equals_tilde_g(seed, stages):
    spec = make_random_spec(seed, stages)
    rng = np.random.default_rng(seed + 2)
    lay = spec.layout
    pol = random_table_policy(lay, rng)
    ref = [int(x) for x in rng.integers(0, 2, size=stages)]
    refd = [m for m in lay.mediators if rng.random() < 0.5]
    law = ident.spec_law(spec)
    a = ident.path_policy_value(law, Intervention.path(pol, ref, refd))
    b = ident.g_value(ident.tilde_law(law, ref, refd), pol)
    assert abs(a - b) <= 1e-10
    # and the dense tilde spec is the same law again
    c = ident.g_value(ident.spec_law(ident.tilde_law(law, ref, refd).to_spec()), pol)
    assert abs(a - c) <= 1e-10


@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]))
def test_tilde_normalized(seed, stages):
    spec = make_random_spec(seed, stages)
    lay = spec.layout
    ref = [1] * stages
    t = ident.tilde_law(ident.spec_law(spec), ref)
    assert abs(ident.total_mass(t) - 1.0) <= 1e-12
    for v in lay.vertices[:-1]:
        assert abs(ident.marginal(t, v).sum() - 1.0) <= 1e-12


@given(st.integers(0, 2 ** 31))
def test_consistent_path_policy_is_node(seed):
    # reference equal to a constant policy collapses to the node intervention
    spec = make_random_spec(seed, 2)
    law = ident.spec_law(spec)
    a = ident.path_policy_value(law, Intervention.path(Policy.constant([1, 0]), [1, 0]))
    b = ident.g_value(law, {"A1": 1, "A2": 0})
    assert abs(a - b) <= 1e-10


def test_split_w_edges_not_identified():
    # a model where U links W1 and W2: A1 -> W1 and A1 -> W2 at different values
    # is outside the identified class and the edge g-formula is off
    spec = make_random_spec(246, 2)
    lay = spec.layout
    edges = {(lay.a(1), c): (1 if c == "W1" else 0) for c in lay.children(lay.a(1))}
    iv = Intervention.edge(edges)
    got = ident.value(ident.spec_law(spec), iv)
    assert abs(got - oracle.exact_value(spec, iv).value) > 1e-6


def test_observed_law_marginalizes_u():
    spec = make_random_spec(3, 2, u_card=3)
    law = ident.spec_law(spec)
    assert ident.total_mass(law) == pytest.approx(1.0, abs=1e-12)
    assert ident.g_value(law, None) == pytest.approx(oracle.exact_value(spec).value, abs=1e-10)


def test_conditional_values_last_stage(toy1):
    law = ident.spec_law(toy1)
    q = ident.conditional_values(law, 1, {"W0": np.array([0, 1])}, None)
    for w in (0, 1):
        for a in (0, 1):
            want = sum(pm(m, a, w) * ey(a, m, w) for m in (0, 1))
            assert q[w, a] == pytest.approx(want, abs=1e-12)
    qp = ident.conditional_values(law, 1, {"W0": np.array([0, 1])}, None, [0])
    for w in (0, 1):
        for a in (0, 1):
            want = sum(pm(m, 0, w) * ey(a, m, w) for m in (0, 1))
            assert qp[w, a] == pytest.approx(want, abs=1e-12)


def test_conditional_values_average_to_value(toy2):
    # E_H[ Q_1(H, f(H)) ] equals the policy value
    law = ident.spec_law(toy2)
    pol = Policy((TableRule(("W0",), (2,), (1, 0)), TableRule((), (), (1,))))
    q = ident.conditional_values(law, 1, {"W0": np.array([0, 1])}, pol)
    pw0 = law.w0_probs()
    v = pw0[0] * q[0, 1] + pw0[1] * q[1, 0]
    assert v == pytest.approx(ident.g_value(law, pol), abs=1e-12)


def test_budget_overflow(toy2):
    with pytest.raises(CardinalityOverflow):
        ident.g_value(ident.spec_law(toy2), None, budget=4)


def test_enumeration_weights_are_probabilities(toy2):
    law = ident.spec_law(toy2)
    e = ident.enumerate_law(law, Intervention.nodes({"A1": 1, "A2": 1}).assignments(toy2.layout))
    assert np.all(e.weight >= 0)
    assert e.weight.sum() == pytest.approx(1.0, abs=1e-12)


def test_stage_assignments_shape(toy2):
    lay = toy2.layout
    sa = ident.stage_assignments(lay, 2, EdgeValue("const", 1), None, [0, 0])
    assert sa[1].default.kind == "column"
    assert sa[2].for_target("W2").value == 1
    assert sa[2].for_target("M2_1").value == 0


def test_all_policies_brute_force_small():
    # the best of all table policies equals the oracle optimum
    spec = make_random_spec(21, 1, dims=(1,))
    law = ident.spec_law(spec)
    best = max(ident.g_value(law, Policy((TableRule(("W0",), (2,), acts),)))
               for acts in itertools.product((0, 1), repeat=2))
    _, v = oracle.exact_optimal_policy(spec, "overall")
    assert best == pytest.approx(v, abs=1e-10)
