"""Per-stage decision rules and the multi-stage :class:`Policy`.

Rules read named history columns. ``decide`` works on column arrays,
``decide_one`` on a single history mapping; both return 0/1.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .layout import Layout
from .terms import design, term_columns


@dataclass(frozen=True)
class TableRule:
    """Lookup table over a discrete history; ``actions`` is in C order over ``cards``."""

    columns: tuple[str, ...]
    cards: tuple[int, ...]
    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.columns) != len(self.cards):
            raise ValueError("columns and cards differ in length")
        if len(self.actions) != int(np.prod(self.cards, dtype=np.int64)):
            raise ValueError("table is not total over the declared history space")
        if any(a not in (0, 1) for a in self.actions):
            raise ValueError("actions must be 0/1")

    def decide(self, ctx: Mapping[str, np.ndarray]) -> np.ndarray:
        acts = np.asarray(self.actions, dtype=np.int64)
        if not self.columns:
            n = len(next(iter(ctx.values()))) if ctx else 1
            return np.full(n, acts[0], dtype=np.int64)
        idx = np.ravel_multi_index(tuple(np.asarray(ctx[c], dtype=np.int64) for c in self.columns), self.cards)
        return acts[idx]

    def decide_one(self, hist: Mapping[str, int]) -> int:
        if not self.columns:
            return self.actions[0]
        return self.actions[int(np.ravel_multi_index(tuple(int(hist[c]) for c in self.columns), self.cards))]

    @property
    def constant(self) -> int | None:
        return self.actions[0] if len(set(self.actions)) == 1 else None

    def to_dict(self) -> dict:
        return {"kind": "table", "columns": list(self.columns), "cards": list(self.cards),
                "actions": list(self.actions)}


@dataclass(frozen=True)
class ThresholdRule:
    """``1{column < cutoff}`` (direction ``lt``) or ``1{column >= cutoff}`` (``ge``)."""

    column: str
    cutoff: float
    direction: str = "lt"

    def __post_init__(self):
        if self.direction not in ("lt", "ge"):
            raise ValueError("direction must be 'lt' or 'ge'")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.column,)

    def decide(self, ctx):
        v = np.asarray(ctx[self.column])
        out = v < self.cutoff if self.direction == "lt" else v >= self.cutoff
        return out.astype(np.int64)

    def decide_one(self, hist):
        v = hist[self.column]
        return int(v < self.cutoff) if self.direction == "lt" else int(v >= self.cutoff)

    constant = None

    def to_dict(self):
        return {"kind": "threshold", "column": self.column, "cutoff": self.cutoff,
                "direction": self.direction}


@dataclass(frozen=True)
class LinearScoreRule:
    """``1{score > offset}`` with ``score = design(terms) @ weights``."""

    terms: tuple[str, ...]
    weights: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.terms) != len(self.weights):
            raise ValueError("terms and weights differ in length")

    @property
    def columns(self):
        return term_columns(self.terms)

    def score(self, ctx):
        n = len(next(iter(ctx.values()))) if ctx else 1
        return design(self.terms, ctx, n) @ np.asarray(self.weights)

    def decide(self, ctx):
        return (self.score(ctx) > self.offset).astype(np.int64)

    def decide_one(self, hist):
        ctx = {c: np.array([hist[c]]) for c in self.columns}
        return int(self.decide(ctx)[0]) if self.columns else int(sum(self.weights) > self.offset)

    @property
    def constant(self):
        if all(t == "1" for t in self.terms):
            return int(sum(self.weights) > self.offset)
        return None

    def to_dict(self):
        return {"kind": "linear_score", "terms": list(self.terms), "weights": list(self.weights),
                "offset": self.offset}


Rule = TableRule | ThresholdRule | LinearScoreRule


def rule_from_dict(d: Mapping) -> Rule:
    kind = d["kind"]
    if kind == "table":
        return TableRule(tuple(d["columns"]), tuple(d["cards"]), tuple(d["actions"]))
    if kind == "threshold":
        return ThresholdRule(d["column"], float(d["cutoff"]), d.get("direction", "lt"))
    if kind == "linear_score":
        return LinearScoreRule(tuple(d["terms"]), tuple(d["weights"]), float(d.get("offset", 0.0)))
    raise ValueError(f"unknown rule kind {kind!r}")


def constant_rule(a: int) -> TableRule:
    return TableRule((), (), (int(a),))


@dataclass(frozen=True)
class Policy:
    rules: tuple[Rule, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @property
    def stages(self) -> int:
        return len(self.rules)

    def rule(self, i: int) -> Rule:
        """Rule for stage ``i`` (1-based)."""
        return self.rules[i - 1]

    def check_layout(self, layout: Layout) -> None:
        if self.stages != layout.stages:
            raise ValueError(f"policy has {self.stages} stages, layout has {layout.stages}")
        for i, r in enumerate(self.rules, start=1):
            bad = set(r.columns) - set(layout.history(i))
            if bad:
                raise ValueError(f"stage {i} rule reads {sorted(bad)} outside H_{i}")

    def describe(self) -> str:
        parts = []
        for r in self.rules:
            c = r.constant
            if c is not None:
                parts.append(f"f≡{c}")
            elif isinstance(r, ThresholdRule):
                op = "<" if r.direction == "lt" else ">="
                parts.append(f"1{{{r.column} {op} {r.cutoff:g}}}")
            elif isinstance(r, TableRule):
                parts.append("table[" + "".join(str(a) for a in r.actions) + "]")
            else:
                parts.append("linear[" + ", ".join(f"{w:.3g}·{t}" for t, w in zip(r.terms, r.weights)) + "]")
        return parts[0] if len(parts) == 1 else "(" + ", ".join(parts) + ")"

    def to_dict(self) -> dict:
        d = {"stages": [r.to_dict() for r in self.rules]}
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Policy":
        return cls(tuple(rule_from_dict(r) for r in d["stages"]), d.get("label", ""))

    @classmethod
    def constant(cls, actions: Sequence[int] | int, stages: int | None = None) -> "Policy":
        if isinstance(actions, (int, np.integer)):
            actions = [int(actions)] * (stages or 1)
        return cls(tuple(constant_rule(a) for a in actions))


# history grids ---------------------------------------------------------------

def history_space(layout: Layout, i: int) -> tuple[tuple[str, ...], tuple[int, ...]]:
    cols = layout.history(i)
    return cols, tuple(layout.card(c) for c in cols)


def history_grid(layout: Layout, i: int) -> dict[str, np.ndarray]:
    """Every configuration of H_i as columns, in C order."""
    cols, cards = history_space(layout, i)
    if not cols:
        return {}
    grids = np.indices(cards).reshape(len(cards), -1)
    return {c: grids[k].astype(np.int64) for k, c in enumerate(cols)}


def action_map(policy: Policy, layout: Layout, i: int) -> np.ndarray:
    """Actions of stage ``i`` on the full history grid."""
    grid = history_grid(layout, i)
    if not grid:
        grid = {"W0": np.arange(layout.baseline_card)}
    return policy.rule(i).decide(grid)


def tabulate(policy: Policy, layout: Layout) -> Policy:
    """Equivalent policy made only of lookup tables over the full histories."""
    rules = []
    for i in range(1, layout.stages + 1):
        cols, cards = history_space(layout, i)
        rules.append(TableRule(cols, cards, tuple(action_map(policy, layout, i))))
    return Policy(tuple(rules), policy.label)


def is_constant(policy: Policy, layout: Layout, value: int) -> bool:
    return all(np.all(action_map(policy, layout, i) == value) for i in range(1, layout.stages + 1))


# policy classes ----------------------------------------------------------------

def threshold_class(column: str, cutoffs: Sequence[float], stages: int = 1, direction: str = "lt") -> list[Policy]:
    """Single-stage threshold policies ``1{column < cutoff}``, one per cutoff."""
    if stages != 1:
        raise ValueError("threshold classes are single-stage")
    return [Policy((ThresholdRule(column, float(c), direction),), label=f"{column}<{c:g}") for c in cutoffs]


def all_table_policies(layout: Layout, columns: Sequence[str] | None = None, limit: int = 1 << 12) -> list[Policy]:
    """Every deterministic single-stage rule on the given columns of H_1."""
    if layout.stages != 1:
        raise ValueError("table families are enumerated for single-stage problems")
    cols = tuple(columns) if columns is not None else layout.history(1)
    cards = tuple(layout.card(c) for c in cols)
    cells = int(np.prod(cards, dtype=np.int64))
    if 2 ** cells > limit:
        raise ValueError(f"{2 ** cells} candidate tables exceed limit {limit}")
    out = []
    for bits in itertools.product((0, 1), repeat=cells):
        out.append(Policy((TableRule(cols, cards, bits),), label="table[" + "".join(map(str, bits)) + "]"))
    return out


def random_table_policy(layout: Layout, rng: np.random.Generator) -> Policy:
    rules = []
    for i in range(1, layout.stages + 1):
        cols, cards = history_space(layout, i)
        n = int(np.prod(cards, dtype=np.int64))
        rules.append(TableRule(cols, cards, tuple(int(x) for x in rng.integers(0, 2, size=n))))
    return Policy(tuple(rules))
