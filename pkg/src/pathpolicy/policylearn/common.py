"""Shared pieces of the learners: modes, model configuration, nuisance fits, results."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, PositivityFailure
from ..layout import Layout
from ..models import FeatureMap, FitConfig, FittedModel, fit_categorical, fit_columns
from ..policy import Policy
from ..scm import Dataset


# ---------------------------------------------------------------------------
# modes

@dataclass(frozen=True)
class Mode:
    """``overall`` or ``path`` with per-stage reference values and referenced mediators."""

    kind: str = "overall"
    reference: tuple[int, ...] = ()
    referenced: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("overall", "path"):
            raise ConfigError(f"mode must be 'overall' or 'path', got {self.kind!r}")
        object.__setattr__(self, "reference", tuple(int(a) for a in self.reference))
        if self.referenced is not None:
            object.__setattr__(self, "referenced", tuple(self.referenced))

    @classmethod
    def overall(cls):
        return cls("overall")

    @classmethod
    def path(cls, reference: Sequence[int], referenced: Sequence[str] | None = None):
        return cls("path", tuple(reference), None if referenced is None else tuple(referenced))

    @property
    def is_path(self) -> bool:
        return self.kind == "path"

    def check(self, layout: Layout) -> "Mode":
        if self.is_path:
            if len(self.reference) != layout.stages or any(a not in (0, 1) for a in self.reference):
                raise ConfigError(f"path mode needs {layout.stages} binary reference value(s)")
            bad = [m for m in self.referenced_in(layout) if m not in layout.mediators]
            if bad:
                raise ConfigError(f"referenced components {bad} are not mediators of this layout")
        return self

    def referenced_in(self, layout: Layout) -> tuple[str, ...]:
        if not self.is_path:
            return ()
        return tuple(layout.mediators) if self.referenced is None else self.referenced

    def label(self) -> str:
        if not self.is_path:
            return "overall"
        ref = ",".join(map(str, self.reference))
        return f"path(a'={ref})" if self.referenced is None else f"path(a'={ref}; {','.join(self.referenced)})"

    def to_dict(self):
        d = {"kind": self.kind}
        if self.is_path:
            d["reference"] = list(self.reference)
            d["referenced"] = None if self.referenced is None else list(self.referenced)
        return d

    @classmethod
    def from_dict(cls, d: Mapping):
        return cls(d.get("kind", "overall"), tuple(d.get("reference", ())), d.get("referenced"))


# ---------------------------------------------------------------------------
# model configuration

PRESETS = ("saturated", "c1")


@dataclass(frozen=True)
class ModelConfig:
    """How nuisance models and learners are set up.

    ``preset`` picks the default feature maps (``saturated`` or the
    ``c1`` main-effects-plus-treatment-interactions family); ``overrides`` maps a
    node key (``A1``, ``M1_1``, ``W1``, ``Q1``, ``outcome_ha1``, ``blip1``,
    ``gres1``, ``d1``) to an explicit term list.
    """

    preset: str = "saturated"
    overrides: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    ridge: float = 0.0
    max_iter: int = 100
    weight_cap: float = 50.0
    positivity_floor: float = 0.01
    tie_tol: float = 0.0
    unit_weights: bool = False

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown model preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        object.__setattr__(self, "overrides", {k: tuple(v) for k, v in dict(self.overrides).items()})
        if self.weight_cap <= 0:
            raise ConfigError("weight_cap must be positive")

    @property
    def fit_config(self) -> FitConfig:
        return FitConfig(max_iter=self.max_iter, ridge=self.ridge)

    def with_(self, **kw) -> "ModelConfig":
        d = self.to_dict()
        d.update(kw)
        return ModelConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {"preset": self.preset, "overrides": {k: list(v) for k, v in self.overrides.items()},
                "ridge": self.ridge, "max_iter": self.max_iter, "weight_cap": self.weight_cap,
                "positivity_floor": self.positivity_floor, "tie_tol": self.tie_tol,
                "unit_weights": self.unit_weights}

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "ModelConfig":
        d = dict(d or {})
        unknown = set(d) - {"preset", "overrides", "ridge", "max_iter", "weight_cap", "positivity_floor",
                            "tie_tol", "unit_weights"}
        if unknown:
            raise ConfigError(f"unknown model_config keys {sorted(unknown)}")
        return cls(**d)


def _cards(layout: Layout) -> dict[str, int]:
    return {"W0": layout.baseline_card}


def _suffix(key: str) -> int:
    m = re.search(r"(\d+)$", key)
    if not m:
        raise ConfigError(f"model key {key!r} lacks a stage number")
    return int(m.group(1))


def feature_map(layout: Layout, key: str, config: ModelConfig) -> FeatureMap:
    """Feature map for a nuisance/learner model identified by ``key``."""
    if key in config.overrides:
        return FeatureMap(config.overrides[key])
    sat = config.preset == "saturated"
    cards = _cards(layout)
    if key.startswith("Q") or key.startswith("outcome_ha"):
        i = _suffix(key)
        hist = list(layout.history(i))
        a = layout.a(i)
        if sat:
            return FeatureMap.saturated(hist + [a], cards)
        return FeatureMap.main_effects(hist + [a], treatment=a, interact=hist)
    if key.startswith("gres"):
        hist = list(layout.history(_suffix(key)))
        return FeatureMap.saturated(hist, cards) if sat else FeatureMap.main_effects(hist)
    if key.startswith("blip") or key.startswith("d"):
        i = _suffix(key)
        a = layout.a(i)
        return FeatureMap((a, *(f"{a}*{h}" for h in layout.history(i))))
    v = key
    if v not in layout.vertices or v == "W0":
        raise ConfigError(f"no feature map for {key!r}")
    parents = list(layout.parents(v))
    kind = layout.kind(v)
    i = layout.stage_of(v)
    if sat:
        return FeatureMap.saturated(parents, cards)
    if kind == "treatment":
        return FeatureMap.main_effects(parents)
    a = layout.a(i)
    if kind == "outcome":
        return FeatureMap.main_effects(parents, treatment=a, interact=list(layout.history(i)))
    return FeatureMap.main_effects(parents, treatment=a)


# ---------------------------------------------------------------------------
# nuisance fitting

def fit_node(data: Dataset, v: str, config: ModelConfig) -> FittedModel:
    lay = data.layout
    if v == "W0":
        return fit_categorical(data["W0"], lay.baseline_card)
    kind = "linear" if v == lay.outcome else "logistic"
    return fit_columns(kind, feature_map(lay, v, config), data.columns, data[v], config=config.fit_config)


def fit_nuisance(data: Dataset, config: ModelConfig, nodes: Sequence[str] | None = None) -> dict[str, FittedModel]:
    """Fit conditional models for the requested vertices (default: all)."""
    lay = data.layout
    names = lay.vertices if nodes is None else nodes
    return {v: fit_node(data, v, config) for v in names}


class FittedLaw:
    """Law provider over fitted models (see :mod:`pathpolicy.ident`)."""

    exact = False

    def __init__(self, layout: Layout, models: Mapping):
        self.layout = layout
        self.models = dict(models)

    def w0_probs(self):
        return np.asarray(self.models["W0"].coef)

    def prob1(self, v, ctx):
        return self.models[v].predict_columns(ctx)

    def outcome_mean(self, ctx):
        return self.models[self.layout.outcome].predict_columns(ctx)


# ---------------------------------------------------------------------------
# weights and checks

def propensity(model, data_cols: Mapping[str, np.ndarray], action: np.ndarray) -> np.ndarray:
    """``p(A = action | H)`` from a fitted ``p(A = 1 | H)`` model."""
    p1 = np.asarray(model.predict_columns(data_cols), dtype=float)
    return np.where(np.asarray(action) == 1, p1, 1.0 - p1)


def mediator_ratio(models: Mapping, layout: Layout, cols: Mapping[str, np.ndarray], stage: int,
                   reference: Sequence[int], referenced: Sequence[str], active: Mapping[str, np.ndarray] | None = None
                   ) -> np.ndarray:
    """``Π_j p(M_ij | ā'_i, ·) / p(M_ij | Ā_i = active, ·)`` over referenced components of stage ``i``.

    ``active`` overrides treatment columns in the denominator (default: observed).
    """
    n = len(next(iter(cols.values())))
    num_cols = dict(cols)
    for j in range(1, stage + 1):
        num_cols[layout.a(j)] = np.full(n, int(reference[j - 1]), dtype=np.int64)
    den_cols = dict(cols)
    if active:
        den_cols.update(active)
    out = np.ones(n)
    for m in layout.m(stage):
        if m not in referenced:
            continue
        val = np.asarray(cols[m])
        pn = models[m].predict_columns(num_cols)
        pd = models[m].predict_columns(den_cols)
        out *= np.where(val == 1, pn, 1 - pn) / np.where(val == 1, pd, 1 - pd)
    return out


def check_denominator(p: np.ndarray, floor: float, what: str) -> None:
    lo = float(np.min(p)) if len(p) else 1.0
    if lo < floor:
        raise PositivityFailure(f"{what}: smallest denominator {lo:.3g} is below the positivity floor {floor}")


def truncate(w: np.ndarray, cap: float) -> tuple[np.ndarray, int]:
    over = w > cap
    return (np.where(over, cap, w), int(over.sum()))


def weight_summary(w: np.ndarray, truncated: int = 0) -> dict:
    if len(w) == 0:
        return {"min": None, "max": None, "mean": None, "truncated": truncated}
    return {"min": float(np.min(w)), "max": float(np.max(w)), "mean": float(np.mean(w)), "truncated": truncated}


def check_positivity_strata(data: Dataset, stage: int) -> None:
    """Every observed H_i stratum must show both treatment values."""
    lay = data.layout
    hist = lay.history(stage)
    a = data[lay.a(stage)]
    if not hist:
        return
    raw = np.column_stack([data[h] for h in hist])
    _, inv = np.unique(raw, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    tot = np.bincount(inv)
    ones = np.bincount(inv, weights=a)
    bad = (ones == 0) | (ones == tot)
    if np.any(bad):
        raise PositivityFailure(f"stage {stage}: {int(bad.sum())} observed history strata have only one "
                                f"treatment value")


def argmax_action(q0: np.ndarray, q1: np.ndarray, tie_tol: float = 0.0) -> np.ndarray:
    """1 where ``q1`` beats ``q0`` by more than ``tie_tol``; ties go to 0."""
    return (np.asarray(q1) - np.asarray(q0) > tie_tol).astype(np.int64)


# ---------------------------------------------------------------------------
# results

@dataclass
class FitResult:
    policy: Policy
    nuisance: dict
    value_estimate: float
    diagnostics: dict
    learner: str = ""
    mode: Mode = field(default_factory=Mode)
    artifacts: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"learner": self.learner, "mode": self.mode.to_dict(), "policy": self.policy.to_dict(),
                "policy_summary": self.policy.describe(), "value": self.value_estimate,
                "nuisance": {k: _model_dict(m) for k, m in sorted(self.nuisance.items())},
                "diagnostics": _jsonable(self.diagnostics)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        return f"{self.learner} [{self.mode.label()}]: policy {self.policy.describe()}, value {self.value_estimate:.4f}"


def _model_dict(m):
    if hasattr(m, "to_dict"):
        return m.to_dict()
    return {"kind": type(m).__name__}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x
