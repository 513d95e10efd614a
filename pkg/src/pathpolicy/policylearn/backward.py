"""Parametric backward induction: fit every conditional law, then optimize exactly."""
from __future__ import annotations

from .. import ident
from ..layout import Layout
from ..policy import Policy, TableRule, constant_rule, history_grid, history_space
from ..scm import Dataset, Intervention
from .common import FitResult, FittedLaw, Mode, ModelConfig, argmax_action, check_positivity_strata, fit_nuisance


def optimize_law(law, layout: Layout, mode: Mode, tie_tol: float = 0.0) -> tuple[Policy, dict]:
    """Backward induction on a law provider over the full history grid of each stage.

    Stage ``i`` compares ``E[Y | H_i, A_i := a]`` for a = 0, 1 with later stages
    following the rules already chosen; in path mode the expectation is taken
    under the tilde law of the mode's reference.
    """
    K = layout.stages
    rules = [constant_rule(0) for _ in range(K)]
    gaps = {}
    ref = mode.reference if mode.is_path else None
    refd = mode.referenced_in(layout) if mode.is_path else None
    for i in range(K, 0, -1):
        grid = history_grid(layout, i)
        future = Policy(tuple(rules))
        q = ident.conditional_values(law, i, grid, future, ref, refd)
        acts = argmax_action(q[:, 0], q[:, 1], tie_tol)
        cols, cards = history_space(layout, i)
        rules[i - 1] = TableRule(cols, cards, tuple(int(a) for a in acts))
        gaps[f"stage{i}"] = (q[:, 1] - q[:, 0]).tolist()
    return Policy(tuple(rules), label="plugin"), gaps


def policy_value(law, policy: Policy, mode: Mode) -> float:
    if mode.is_path:
        return ident.path_policy_value(law, Intervention.path(policy, mode.reference, mode.referenced))
    return ident.g_value(law, policy)


def backward_induction_plugin(data: Dataset, layout: Layout | None = None, mode: Mode | None = None,
                              config: ModelConfig | None = None) -> FitResult:
    """Plug-in backward induction with maximum-likelihood conditional models."""
    lay = layout or data.layout
    mode = (mode or Mode.overall()).check(lay)
    cfg = config or ModelConfig()
    for i in range(1, lay.stages + 1):
        check_positivity_strata(data, i)
    models = fit_nuisance(data, cfg)
    law = FittedLaw(lay, models)
    policy, gaps = optimize_law(law, lay, mode, cfg.tie_tol)
    value = policy_value(law, policy, mode)
    diag = {"q_gaps": gaps, "converged": {k: True for k in models},
            "iterations": {k: m.iterations for k, m in models.items()}}
    return FitResult(policy, models, value, diag, "plugin", mode)
