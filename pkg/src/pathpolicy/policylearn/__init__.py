"""The four policy learners, each in overall or path-specific mode."""
from __future__ import annotations

from ..errors import ConfigError
from ..layout import Layout
from ..policy import Policy, all_table_policies, threshold_class
from .backward import backward_induction_plugin, optimize_law, policy_value
from .common import FitResult, FittedLaw, Mode, ModelConfig, feature_map, fit_nuisance
from .gest import g_estimate, solve_moments
from .qlearn import QFunctions, q_learn
from .value import ValueEstimate, fit_value_nuisance, value_ipw, value_robust, value_search

LEARNERS = ("plugin", "qlearn", "value_search", "gest")


def default_policy_class(layout: Layout) -> list[Policy]:
    """Thresholds on an ordinal baseline, otherwise every table rule on H_1."""
    if layout.stages != 1:
        raise ConfigError("value search classes are single-stage")
    if layout.baseline_card > 2:
        return threshold_class("W0", range(layout.baseline_card + 1))
    return all_table_policies(layout)


def fit(learner: str, data, mode: Mode | None = None, config: ModelConfig | None = None,
        policy_class=None, estimator: str = "robust") -> FitResult:
    """Run a learner by name."""
    if learner == "plugin":
        return backward_induction_plugin(data, data.layout, mode, config)
    if learner == "qlearn":
        return q_learn(data, data.layout, mode, config)
    if learner == "gest":
        return g_estimate(data, data.layout, mode, config)
    if learner == "value_search":
        cls = policy_class if policy_class is not None else default_policy_class(data.layout)
        return value_search(data, cls, estimator, mode, config)
    raise ConfigError(f"unknown learner {learner!r}; valid learners: {', '.join(LEARNERS)}")


__all__ = ["LEARNERS", "FitResult", "FittedLaw", "Mode", "ModelConfig", "QFunctions", "ValueEstimate",
           "backward_induction_plugin", "default_policy_class", "feature_map", "fit", "fit_nuisance",
           "fit_value_nuisance", "g_estimate", "optimize_law", "policy_value", "q_learn", "solve_moments",
           "value_ipw", "value_robust", "value_search"]
