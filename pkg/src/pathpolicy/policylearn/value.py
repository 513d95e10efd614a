"""Value estimation (IPW and augmented) and value search over finite policy classes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, EmptyClass
from ..policy import Policy
from ..scm import Dataset
from .common import (FitResult, Mode, ModelConfig, check_denominator, feature_map, fit_node, fit_nuisance,
                     propensity, truncate, weight_summary)
from ..models import fit_columns


@dataclass
class ValueEstimate:
    value: float
    diagnostics: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def fit_value_nuisance(data: Dataset, mode: Mode, config: ModelConfig | None = None,
                       estimator: str = "robust") -> dict:
    """Models needed by the value estimators.

    ``A_i`` propensities always; mediator models for the referenced
    components in path mode (every component for the augmented estimator,
    whose mediator sum also needs the unreferenced ones); the outcome regression ``E[Y | A, M, W]`` (path) or
    ``E[Y | H, A]`` (overall, key ``outcome_ha1``) for the augmented estimator.
    """
    cfg = config or ModelConfig()
    lay = data.layout
    out = fit_nuisance(data, cfg, [lay.a(i) for i in range(1, lay.stages + 1)])
    if mode.is_path:
        meds = lay.mediators if estimator == "robust" else mode.referenced_in(lay)
        out.update(fit_nuisance(data, cfg, list(meds)))
    if estimator == "robust":
        if mode.is_path:
            out[lay.outcome] = fit_node(data, lay.outcome, cfg)
        else:
            out["outcome_ha1"] = fit_columns("linear", feature_map(lay, "outcome_ha1", cfg), data.columns,
                                             data.outcome, config=cfg.fit_config)
    return out


def _actions(policy: Policy, data: Dataset) -> dict[str, np.ndarray]:
    lay = data.layout
    return {lay.a(i): policy.rule(i).decide(data.columns).astype(np.int64) for i in range(1, lay.stages + 1)}


def _mediator_probs(model, cols, val) -> np.ndarray:
    p1 = model.predict_columns(cols)
    return np.where(np.asarray(val) == 1, p1, 1.0 - p1)


def _with(cols: Mapping[str, np.ndarray], **over) -> dict:
    d = dict(cols)
    d.update(over)
    return d


def value_ipw(data: Dataset, policy: Policy, mode: Mode | None = None, nuisance: Mapping | None = None,
              config: ModelConfig | None = None) -> ValueEstimate:
    """Inverse probability weighted value.

    Overall: mean of ``Y · C_f / π_f``. Path: additionally times the mediator
    ratio ``p(M | ā', ·) / p(M | f, ·)`` over referenced components at each stage.
    """
    lay = data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    policy.check_layout(lay)
    nuis = nuisance if nuisance is not None else fit_value_nuisance(data, mode, cfg, "ipw")
    n = data.n
    f = _actions(policy, data)
    c = np.ones(n, dtype=bool)
    pi = np.ones(n)
    ratio = np.ones(n)
    refd = set(mode.referenced_in(lay))
    for i in range(1, lay.stages + 1):
        a = lay.a(i)
        c &= data[a] == f[a]
        pf = propensity(nuis[a], data.columns, f[a])
        check_denominator(pf, cfg.positivity_floor, f"propensity of {a}")
        pi *= pf
        if mode.is_path:
            ref_cols = _with(data.columns, **{lay.a(j): np.full(n, mode.reference[j - 1]) for j in range(1, i + 1)})
            act_cols = _with(data.columns, **{lay.a(j): f[lay.a(j)] for j in range(1, i + 1)})
            for m in lay.m(i):
                if m in refd:
                    den = _mediator_probs(nuis[m], act_cols, data[m])
                    check_denominator(den, cfg.positivity_floor, f"mediator model {m}")
                    ratio *= _mediator_probs(nuis[m], ref_cols, data[m]) / den
    w = np.where(c, ratio / pi, 0.0)
    w, ntrunc = truncate(w, cfg.weight_cap)
    est = float(np.mean(data.outcome * w))
    return ValueEstimate(est, {"weights": weight_summary(w[c], ntrunc), "followed": int(c.sum())})


def _mediator_configs(names: Sequence[str]) -> list[dict[str, int]]:
    return [dict(zip(names, bits)) for bits in itertools.product((0, 1), repeat=len(names))]


def value_robust(data: Dataset, policy: Policy, mode: Mode | None = None, nuisance: Mapping | None = None,
                 config: ModelConfig | None = None) -> ValueEstimate:
    """Augmented value estimator for a single decision.

    Overall: the doubly robust form with outcome regression ``E[Y | H, A]``.
    Path: the three-term estimator that stays consistent when any two of
    propensity, mediator and outcome models are right; the sum over mediator
    values is exact.
    """
    lay = data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    if lay.stages != 1:
        raise ConfigError("the augmented value estimators are single-stage; use the first-stage problem")
    policy.check_layout(lay)
    nuis = nuisance if nuisance is not None else fit_value_nuisance(data, mode, cfg, "robust")
    n = data.n
    a_name = lay.a(1)
    y = data.outcome
    a_obs = data[a_name]
    f = policy.rule(1).decide(data.columns).astype(np.int64)
    c = (a_obs == f).astype(float)
    pf = propensity(nuis[a_name], data.columns, f)
    check_denominator(pf, cfg.positivity_floor, "propensity")
    if not mode.is_path:
        mu = nuis["outcome_ha1"].predict_columns(_with(data.columns, **{a_name: f}))
        w, ntrunc = truncate(c / pf, cfg.weight_cap)
        terms = w * y - (c - pf) / pf * mu
        return ValueEstimate(float(np.mean(terms)), {"weights": weight_summary(w[c > 0], ntrunc)})

    ref = mode.reference[0]
    refd = [m for m in lay.m(1) if m in set(mode.referenced_in(lay))]
    other = [m for m in lay.m(1) if m not in refd]
    zeta = nuis[lay.outcome]
    fcols = _with(data.columns, **{a_name: f})
    rcols = _with(data.columns, **{a_name: np.full(n, ref, dtype=np.int64)})

    def med_prob(names, cols, values):
        out = np.ones(n)
        for m in names:
            out *= _mediator_probs(nuis[m], cols, values[m])
        return out

    mu_obs = zeta.predict_columns(fcols)
    obs_m = {m: data[m] for m in lay.m(1)}
    den = med_prob(refd, fcols, obs_m)
    check_denominator(den, cfg.positivity_floor, "mediator model")
    ratio = med_prob(refd, rcols, obs_m) / den
    # target mediator law: referenced components at a', the rest at f
    inner = np.zeros(n)
    for conf in _mediator_configs(list(lay.m(1))):
        vals = {m: np.full(n, v, dtype=np.int64) for m, v in conf.items()}
        p = med_prob(refd, rcols, vals) * med_prob(other, fcols, vals)
        inner += p * zeta.predict_columns(_with(fcols, **vals))
    pa = propensity(nuis[a_name], data.columns, np.full(n, ref))
    check_denominator(pa, cfg.positivity_floor, "propensity at the reference")
    is_ref = (a_obs == ref).astype(float)
    if other:
        # non-referenced components must follow f, not a', in the second term
        r2 = med_prob(other, fcols, obs_m) / med_prob(other, rcols, obs_m)
    else:
        r2 = np.ones(n)
    w1, t1 = truncate(c / pf * ratio, cfg.weight_cap)
    w2, t2 = truncate(is_ref / pa * r2, cfg.weight_cap)
    terms = w1 * (y - mu_obs) + w2 * (mu_obs - inner) + inner
    diag = {"weights": weight_summary(w1[c > 0], t1), "reference_weights": weight_summary(w2[is_ref > 0], t2)}
    return ValueEstimate(float(np.mean(terms)), diag)


ESTIMATORS = {"ipw": value_ipw, "robust": value_robust}


def value_search(data: Dataset, policy_class: Sequence[Policy], estimator: str = "robust",
                 mode: Mode | None = None, config: ModelConfig | None = None,
                 nuisance: Mapping | None = None) -> FitResult:
    """Evaluate every candidate; the first maximizer wins."""
    lay = data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    cands = list(policy_class)
    if not cands:
        raise EmptyClass("policy class is empty")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
    if estimator == "robust" and lay.stages != 1:
        raise ConfigError("the augmented value estimators are single-stage; use the first-stage problem")
    nuis = nuisance if nuisance is not None else fit_value_nuisance(data, mode, cfg, estimator)
    fn = ESTIMATORS[estimator]
    values = [fn(data, pol, mode, nuis, cfg).value for pol in cands]
    # candidates within tie_tol of the maximum count as ties; the earliest wins
    top = max(values)
    best = next(k for k, v in enumerate(values) if v >= top - cfg.tie_tol)
    diag = {"estimator": estimator,
            "candidates": [{"policy": p.describe(), "value": v} for p, v in zip(cands, values)],
            "selected_index": best}
    return FitResult(cands[best], dict(nuis), values[best], diag, f"value_search[{estimator}]", mode)
