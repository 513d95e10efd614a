import numpy as np
import pytest

from pathpolicy import specs
from pathpolicy.errors import ConfigError, NumericalError, ReplicateFailure
from pathpolicy.evalboot import (CiReport, bootstrap_ci, compare_policies, format_cell, learner_pipeline,
                                 replicate_seeds, worker_count)
from pathpolicy.policy import Policy, ThresholdRule
from pathpolicy.policylearn import Mode
from pathpolicy.scm import simulate


def test_gaussian_mean_half_width():
    x = np.random.default_rng(0).normal(size=1000)
    rep = bootstrap_ci(x, np.mean, B=1000, seed=1)
    assert abs(rep.half_width - 0.062) <= 0.25 * 0.062
    assert rep.lower < rep.point < rep.upper and not rep.flagged


def test_constant_data_zero_width():
    rep = bootstrap_ci(np.full(50, 3.0), np.mean, B=100)
    assert rep.lower == rep.upper == rep.point == 3.0


def test_b2_gives_min_and_max():
    x = np.random.default_rng(2).normal(size=30)
    rep = bootstrap_ci(x, np.mean, B=2, seed=3, threads=1)
    reps = [np.mean(x[np.random.default_rng(ss).integers(0, 30, size=30)]) for ss in replicate_seeds(3, 2)]
    assert rep.lower == min(reps) and rep.upper == max(reps)


def test_bad_arguments():
    with pytest.raises(ConfigError):
        bootstrap_ci(np.ones(5), np.mean, B=1)
    with pytest.raises(ConfigError):
        bootstrap_ci(np.ones(5), np.mean, B=10, level=1.5)


def test_deterministic_and_thread_invariant():
    x = np.random.default_rng(4).exponential(size=200)
    a = bootstrap_ci(x, np.median, B=200, seed=9, threads=1)
    b = bootstrap_ci(x, np.median, B=200, seed=9, threads=4)
    assert a == b
    assert bootstrap_ci(x, np.median, B=200, seed=10, threads=1) != a


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("PATHPOLICY_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("PATHPOLICY_THREADS", "two")
    with pytest.raises(ConfigError):
        worker_count()


def _flaky(every):
    calls = {"k": 0}

    def est(x):
        calls["k"] += 1
        if calls["k"] > 1 and calls["k"] % every == 0:
            raise NumericalError("boom")
        return float(np.mean(x))
    return est


def test_failures_counted():
    x = np.arange(40.0)
    rep = bootstrap_ci(x, _flaky(20), B=100, threads=1)
    assert rep.failures == 5
    with pytest.raises(ReplicateFailure):
        bootstrap_ci(x, _flaky(4), B=100, threads=1)
    rep = bootstrap_ci(x, lambda d: float("nan") if d[0] > 38 else float(np.mean(d)), B=50, threads=1)
    assert 0 <= rep.failures <= 5


def test_format_cell():
    assert format_cell(6.891, 5.756, 7.104) == "6.89 (5.76, 7.10)"
    assert format_cell(3.375) == "3.38"
    assert CiReport.exact(2.625).format(3) == "2.625 (2.625, 2.625)"


def test_one_by_one_grid():
    d = simulate(specs.toy1(), 3000, 1)
    t = compare_policies(d, [Policy.constant(1)], [Mode.overall()], B=20, seed=3, observational=False)
    assert t.shape() == (1, 1)
    rep = t.cell("f≡1", "overall")
    assert rep.B == 20 and rep.lower <= rep.upper


def test_spec_grid_is_exact():
    pols = [Policy.constant(0), Policy.constant(1), Policy((ThresholdRule("W0", 1, "ge"),), label="f=W")]
    t = compare_policies(specs.toy1(), pols, [Mode.path([0]), Mode.overall()], column_names=["path", "overall"])
    want = {("f≡0", "path"): 1.75, ("f≡1", "path"): 2.625, ("f=W", "path"): 2.175,
            ("f≡0", "overall"): 1.75, ("f≡1", "overall"): 3.375, ("f=W", "overall"): 2.55,
            ("observational", "path"): 2.5575}
    for k, v in want.items():
        assert t.cells[k].point == pytest.approx(v, abs=1e-12)
    text = t.render_text(3)
    assert "2.625" in text and text.splitlines()[0].split() == ["path", "overall"]
    csv_lines = t.to_csv().splitlines()
    assert csv_lines[0] == "row,column,point,lower,upper,level,B,failures,flagged"
    assert len(csv_lines) == 1 + 4 * 2


def test_learner_rows_need_data():
    with pytest.raises(ConfigError):
        compare_policies(specs.toy1(), [learner_pipeline("qlearn")], [Mode.overall()])


def test_learner_rows_simulated_and_reproducible():
    args = dict(B=5, seed=2, n=4000, threads=1, observational=True)
    a = compare_policies(specs.toy1(), [learner_pipeline("qlearn")], [Mode.path([0])], **args)
    b = compare_policies(specs.toy1(), [learner_pipeline("qlearn")], [Mode.path([0])], **args)
    assert a.to_csv() == b.to_csv()
    assert a.rows == ["qlearn", "observational"]
    assert abs(a.cell("qlearn", "path(a'=0)").point - 2.625) < 0.1
