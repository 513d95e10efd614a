"""Q-learning by recursive least squares, with mediator density-ratio weights in path mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..layout import Layout
from ..models import FittedModel, fit_columns
from ..policy import Policy, TableRule, history_grid, history_space
from ..scm import Dataset
from .common import (FitResult, Mode, ModelConfig, argmax_action, check_denominator, feature_map, fit_nuisance,
                     truncate, weight_summary)


@dataclass(frozen=True)
class QFunctions:
    """Per-stage Q models; ``value(i, cols)`` is max over the two actions."""

    layout: Layout
    models: tuple[FittedModel, ...]

    def q(self, i: int, cols, a: int) -> np.ndarray:
        c = dict(cols)
        n = len(next(iter(c.values()))) if c else 1
        c[self.layout.a(i)] = np.full(n, a, dtype=np.int64)
        return self.models[i - 1].predict_columns(c)

    def both(self, i: int, cols) -> np.ndarray:
        return np.stack([self.q(i, cols, 0), self.q(i, cols, 1)], axis=1)

    def value(self, i: int, cols) -> np.ndarray:
        return self.both(i, cols).max(axis=1)


def stage_weights(data: Dataset, mediators: dict, mode: Mode, i: int, cfg: ModelConfig):
    """Mediator density-ratio weights ``p(M_i | ā'_i, H_i) / p(M_i | Ā_i, H_i)`` for stage ``i``."""
    lay = data.layout
    n = data.n
    refd = set(mode.referenced_in(lay))
    comps = [m for m in lay.m(i) if m in refd]
    if not mode.is_path or cfg.unit_weights or not comps:
        return np.ones(n), 0
    num_cols = dict(data.columns)
    for j in range(1, i + 1):
        num_cols[lay.a(j)] = np.full(n, mode.reference[j - 1], dtype=np.int64)
    w = np.ones(n)
    for m in comps:
        val = data[m]
        pn = mediators[m].predict_columns(num_cols)
        pd = mediators[m].predict_columns(data.columns)
        dens = np.where(val == 1, pd, 1 - pd)
        check_denominator(dens, cfg.positivity_floor, f"mediator weight for {m}")
        w *= np.where(val == 1, pn, 1 - pn) / dens
    return truncate(w, cfg.weight_cap)


def q_learn(data: Dataset, layout: Layout | None = None, mode: Mode | None = None,
            config: ModelConfig | None = None) -> FitResult:
    """Backward recursive regression; weighted by mediator density ratios in path mode."""
    lay = layout or data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    K = lay.stages
    mediators = fit_nuisance(data, cfg, [m for m in mode.referenced_in(lay)]) if mode.is_path else {}
    models: list = [None] * K
    target = data.outcome.astype(float)
    diag: dict = {"weights": {}, "converged": {}}
    for i in range(K, 0, -1):
        w, ntrunc = stage_weights(data, mediators, mode, i, cfg)
        diag["weights"][f"stage{i}"] = weight_summary(w, ntrunc)
        fmap = feature_map(lay, f"Q{i}", cfg)
        models[i - 1] = fit_columns("linear", fmap, data.columns, target, weights=w, config=cfg.fit_config)
        diag["converged"][f"Q{i}"] = True
        if i > 1:
            target = QFunctions(lay, tuple(models)).value(i, data.columns)
    qf = QFunctions(lay, tuple(models))
    rules = []
    for i in range(1, K + 1):
        grid = history_grid(lay, i)
        if not grid:
            grid = {"W0": np.arange(lay.baseline_card)}
        q = qf.both(i, grid)
        cols, cards = history_space(lay, i)
        rules.append(TableRule(cols, cards, tuple(int(a) for a in argmax_action(q[:, 0], q[:, 1], cfg.tie_tol))))
    policy = Policy(tuple(rules), label="qlearn")
    value = float(np.mean(qf.value(1, data.columns)))
    nuis = {f"Q{i}": models[i - 1] for i in range(1, K + 1)}
    nuis.update(mediators)
    return FitResult(policy, nuis, value, diag, "qlearn", mode, {"qfunctions": qf})
