"""G-estimation of optimal blip-to-zero functions.

Blips are linear, ``γ_i(H_i, a; ψ_i) = a · x_i(H_i) ψ_i``, where ``x_i`` is the
blip feature map evaluated at ``A_i = 1`` (every blip term carries a factor
of ``A_i`` so ``γ_i(·, 0) = 0``). Both estimating equations are linear in
ψ; they are still solved with the generic damped Newton routine so that
nonlinear moment functions can reuse it.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ConfigError, NoRoot, Singular
from ..models import FeatureMap, FittedModel, fit_columns
from ..policy import Policy, TableRule, history_grid, history_space
from ..scm import Dataset
from .backward import policy_value
from .common import (FitResult, FittedLaw, Mode, ModelConfig, argmax_action, check_denominator, feature_map,
                     fit_nuisance, truncate, weight_summary)
from .value import fit_value_nuisance, value_robust


def solve_moments(moment: Callable[[np.ndarray], np.ndarray], jacobian: Callable[[np.ndarray], np.ndarray],
                  x0: np.ndarray, tol: float = 1e-8, max_iter: int = 50, residual_limit: float = 1e-6):
    """Damped Newton for ``moment(x) = 0``; returns ``(x, residual, iterations)``."""
    x = np.asarray(x0, dtype=float)
    r = moment(x)
    norm = float(np.max(np.abs(r))) if len(r) else 0.0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return x, norm, it - 1
        jac = jacobian(x)
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e12:
            raise Singular("estimating-equation Jacobian is singular")
        step = np.linalg.solve(jac, -r)
        t = 1.0
        for _ in range(30):
            cand = x + t * step
            rc = moment(cand)
            nc = float(np.max(np.abs(rc)))
            if nc < norm or t < 1e-8:
                break
            t *= 0.5
        x, r, norm = cand, rc, nc
    if norm > residual_limit:
        raise NoRoot(f"estimating equations not solved: residual {norm:.2e} after {max_iter} iterations")
    return x, norm, max_iter


def _blip_design(layout, i: int, cfg: ModelConfig, cols) -> tuple[FeatureMap, np.ndarray]:
    fmap = feature_map(layout, f"blip{i}", cfg)
    a = layout.a(i)
    for t in fmap.terms:
        if a not in t.split("*"):
            raise ConfigError(f"blip term {t!r} lacks the treatment factor {a}")
    n = len(next(iter(cols.values())))
    c = dict(cols)
    c[a] = np.ones(n, dtype=np.int64)
    return fmap, fmap.design(c, n)


def _h_design(layout, i: int, cfg: ModelConfig, cols) -> np.ndarray:
    key = f"d{i}"
    if key not in cfg.overrides:
        return _blip_design(layout, i, cfg, cols)[1]
    fmap = FeatureMap(cfg.overrides[key])
    n = len(next(iter(cols.values())))
    c = dict(cols)
    c[layout.a(i)] = np.ones(n, dtype=np.int64)
    return fmap.design(c, n)


def _sandwich(u: np.ndarray, jac: np.ndarray) -> np.ndarray:
    n = u.shape[0]
    s = u.T @ u / n
    jinv = np.linalg.inv(jac)
    return jinv @ s @ jinv.T / n


def _blip_rule(layout, i: int, fmap: FeatureMap, psi: np.ndarray, tie_tol: float) -> TableRule:
    grid = history_grid(layout, i)
    if not grid:
        grid = {"W0": np.arange(layout.baseline_card)}
    n = len(next(iter(grid.values())))
    c = dict(grid)
    c[layout.a(i)] = np.ones(n, dtype=np.int64)
    gain = fmap.design(c, n) @ psi
    cols, cards = history_space(layout, i)
    return TableRule(cols, cards, tuple(int(a) for a in argmax_action(np.zeros(n), gain, tie_tol)))


def g_estimate(data: Dataset, layout=None, mode: Mode | None = None, config: ModelConfig | None = None,
               nuisance: dict | None = None) -> FitResult:
    lay = layout or data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    if mode.is_path:
        return _g_path(data, mode, cfg, nuisance)
    return _g_overall(data, mode, cfg, nuisance)


def _g_path(data: Dataset, mode: Mode, cfg: ModelConfig, nuisance) -> FitResult:
    lay = data.layout
    if lay.stages != 1:
        raise ConfigError("path-specific G-estimation is defined for a single decision (K = 1) only")
    if set(mode.referenced_in(lay)) != set(lay.mediators):
        raise ConfigError("path-specific G-estimation needs every mediator component referenced")
    nuis = dict(nuisance) if nuisance is not None else fit_value_nuisance(data, mode, cfg, "robust")
    n = data.n
    a_name = lay.a(1)
    ref = mode.reference[0]
    y = data.outcome
    a_obs = data[a_name]
    cols = data.columns

    def with_a(v):
        c = dict(cols)
        c[a_name] = np.full(n, v, dtype=np.int64)
        return c

    p1 = nuis[a_name].predict_columns(cols)
    check_denominator(np.minimum(p1, 1 - p1), cfg.positivity_floor, "propensity")

    def med(cset):
        out = np.ones(n)
        for m in lay.m(1):
            pm = nuis[m].predict_columns(cset)
            out *= np.where(data[m] == 1, pm, 1 - pm)
        return out

    m_ref = med(with_a(ref))
    m1 = med(with_a(1))
    m0 = med(with_a(0))
    check_denominator(np.minimum(m1, m0), cfg.positivity_floor, "mediator model")
    mu1 = nuis[lay.outcome].predict_columns(with_a(1))
    t1, tr1 = truncate((a_obs == 1) * m_ref / (p1 * m1), cfg.weight_cap)
    t0, tr0 = truncate((a_obs == 0) * m_ref / ((1 - p1) * m0), cfg.weight_cap)
    fmap, x = _blip_design(lay, 1, cfg, cols)
    h = _h_design(lay, 1, cfg, cols)
    if h.shape[1] != x.shape[1]:
        raise ConfigError("h(W) must have one column per blip parameter")
    resid = y - mu1

    def rows(psi):
        return ((t1 * resid - t0 * (resid + x @ psi))[:, None]) * h

    def moment(psi):
        return rows(psi).mean(axis=0)

    jac = -(h * t0[:, None]).T @ x / n
    psi, res, its = solve_moments(moment, lambda _p: jac, np.zeros(x.shape[1]))
    cov = _sandwich(rows(psi), jac)
    blip = FittedModel("linear", psi, fmap, its, res, None, cov, float(n))
    rule = _blip_rule(lay, 1, fmap, psi, cfg.tie_tol)
    policy = Policy((rule,), label="gest")
    value = value_robust(data, policy, mode, nuis, cfg).value
    nuis = dict(nuis)
    nuis["blip1"] = blip
    diag = {"psi": {"stage1": psi.tolist()}, "se": {"stage1": blip.se.tolist()}, "residual": res, "iterations": its,
            "weights": {"treated": weight_summary(t1[a_obs == 1], tr1),
                        "untreated": weight_summary(t0[a_obs == 0], tr0)}}
    return FitResult(policy, nuis, value, diag, "gest", mode)


def _g_overall(data: Dataset, mode: Mode, cfg: ModelConfig, nuisance) -> FitResult:
    lay = data.layout
    K = lay.stages
    n = data.n
    cols = data.columns
    nuis = dict(nuisance) if nuisance is not None else fit_nuisance(data, cfg, [lay.a(i) for i in range(1, K + 1)])
    y_adj = data.outcome.astype(float).copy()
    rules: list = [None] * K
    diag: dict = {"psi": {}, "se": {}, "residual": {}, "iterations": {}}
    for i in range(K, 0, -1):
        a_name = lay.a(i)
        a = data[a_name].astype(float)
        fmap, x = _blip_design(lay, i, cfg, cols)
        d_feat = _h_design(lay, i, cfg, cols)
        p1 = nuis[a_name].predict_columns(cols)
        check_denominator(np.minimum(p1, 1 - p1), cfg.positivity_floor, f"propensity of {a_name}")
        d_c = (a - p1)[:, None] * d_feat
        gmap = feature_map(lay, f"gres{i}", cfg)

        def project(t):
            return fit_columns("linear", gmap, cols, t, config=cfg.fit_config).predict_columns(cols)

        ax = a[:, None] * x
        y_t = y_adj - project(y_adj)
        x_t = ax - np.column_stack([project(ax[:, k]) for k in range(ax.shape[1])])
        if d_c.shape[1] != x.shape[1]:
            raise ConfigError("d_i must have one column per blip parameter")

        def rows(psi, y_t=y_t, x_t=x_t, d_c=d_c):
            return (y_t - x_t @ psi)[:, None] * d_c

        def moment(psi, rows=rows):
            return rows(psi).mean(axis=0)

        jac = -(d_c.T @ x_t) / n
        psi, res, its = solve_moments(moment, lambda _p, jac=jac: jac, np.zeros(x.shape[1]))
        cov = _sandwich(rows(psi), jac)
        blip = FittedModel("linear", psi, fmap, its, res, None, cov, float(n))
        nuis[f"blip{i}"] = blip
        rules[i - 1] = _blip_rule(lay, i, fmap, psi, cfg.tie_tol)
        diag["psi"][f"stage{i}"] = psi.tolist()
        diag["se"][f"stage{i}"] = blip.se.tolist()
        diag["residual"][f"stage{i}"] = res
        diag["iterations"][f"stage{i}"] = its
        gain = x @ psi
        y_adj = y_adj + np.maximum(gain, 0.0) - a * gain
    policy = Policy(tuple(rules), label="gest")
    if K == 1:
        vn = fit_value_nuisance(data, mode, cfg, "robust")
        value = value_robust(data, policy, mode, vn, cfg).value
    else:
        law = FittedLaw(lay, fit_nuisance(data, cfg))
        value = policy_value(law, policy, mode)
    return FitResult(policy, nuis, value, diag, "gest", mode)
