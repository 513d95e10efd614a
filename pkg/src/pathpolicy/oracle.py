"""Brute-force ground truth on finite specs.

Walks the structural equations directly, one configuration at a time, with
the hidden confounder enumerated explicitly. Nothing here touches the
observed-data conditionals or :mod:`pathpolicy.ident`; the two only agree
when the identification theory holds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CardinalityOverflow, InterventionMismatch
from .policy import Policy, TableRule, history_space
from .scm import Intervention, ScmSpec

DEFAULT_BUDGET = 1 << 24
POLICY_LIMIT = 1 << 16


@dataclass(frozen=True)
class ExactValueReport:
    value: float
    terms_enumerated: int
    spec_hash: str

    def __float__(self):
        return self.value

    def to_dict(self):
        return {"value": self.value, "terms_enumerated": self.terms_enumerated, "spec_hash": self.spec_hash}


def _seen_value(spec: ScmSpec, iv: Intervention, i: int, target: str, world: dict) -> int | None:
    """Value of ``A_i`` as seen by ``target``; None if ``A_i`` is left random."""
    lay = spec.layout
    a_name = f"A{i}"
    if iv.kind == "none":
        return None
    if iv.kind == "node":
        return int(iv.node[a_name]) if a_name in iv.node else None
    if iv.kind == "edge":
        if not any(s == a_name for s, _ in iv.edges):
            return None
        return int(iv.edges[(a_name, target)])
    if iv.kind == "path_policy":
        refd = lay.mediators if iv.referenced is None else iv.referenced
        if target in refd and lay.stage_of(target) >= i:
            return int(iv.reference[i - 1])
    # policy value from the counterfactual history, computed when A_i was reached
    return world[a_name]


def _decide(rule, hist: dict) -> int:
    return int(rule.decide_one(hist))


def exact_value(spec: ScmSpec, iv: Intervention | None = None, budget: int = DEFAULT_BUDGET) -> ExactValueReport:
    """Counterfactual mean of the final outcome by recursive substitution."""
    iv = iv or Intervention.none()
    lay = spec.layout
    iv.check(lay)
    order = lay.vertices
    u_probs = [1.0] if spec.u_probs is None else [float(p) for p in spec.u_probs]

    assigned = set()
    for i in range(1, lay.stages + 1):
        if iv.kind in ("policy", "path_policy"):
            assigned.add(i)
        elif iv.kind == "node" and f"A{i}" in iv.node:
            assigned.add(i)
        elif iv.kind == "edge" and any(s == f"A{i}" for s, _ in iv.edges):
            assigned.add(i)

    terms = len(u_probs)
    for v in order[:-1]:
        if lay.kind(v) == "treatment" and lay.stage_of(v) in assigned:
            continue
        terms *= lay.card(v)
    if terms > budget:
        raise CardinalityOverflow(f"{terms} configurations exceed the budget {budget}")

    leaves: list[float] = []

    def parent_value(p: str, target: str, world: dict) -> int:
        if p[0] == "A" and int(p[1:]) in assigned:
            return _seen_value(spec, iv, int(p[1:]), target, world)
        return world[p]

    def table_row(v: str, u: int, world: dict):
        t = spec.tables[v]
        key = [u if t.shape[0] > 1 else 0]
        key += [parent_value(p, v, world) for p in lay.parents(v)]
        return t[tuple(key)]

    def walk(k: int, u: int, prob: float, world: dict):
        v = order[k]
        kind = lay.kind(v)
        if kind == "outcome":
            leaves.append(prob * float(table_row(v, u, world)))
            return
        if kind == "treatment" and int(v[1:]) in assigned:
            i = int(v[1:])
            if iv.kind in ("policy", "path_policy"):
                hist = {h: world[h] for h in lay.history(i)}
                world[v] = _decide(iv.policy.rule(i), hist)
            elif iv.kind == "node":
                world[v] = int(iv.node[v])
            else:
                world[v] = int(iv.edges[(v, lay.w(i))])
            walk(k + 1, u, prob, world)
            del world[v]
            return
        row = table_row(v, u, world)
        for val in range(len(row)):
            p = float(row[val])
            if p == 0.0:
                continue
            world[v] = val
            walk(k + 1, u, prob * p, world)
        world.pop(v, None)

    for u, pu in enumerate(u_probs):
        walk(0, u, pu, {})
    return ExactValueReport(math.fsum(leaves), terms, spec.hash())


# ---------------------------------------------------------------------------
# exhaustive optimal policy

def exact_optimal_policy(spec: ScmSpec, mode: str = "overall", reference: Sequence[int] | None = None,
                         referenced: Sequence[str] | None = None, limit: int = POLICY_LIMIT,
                         tol: float = 0.0) -> tuple[Policy, float]:
    """Best history-measurable deterministic policy and its exact value.

    Backward induction over history strata: each stratum of H_i carries an
    unnormalized weight vector over the hidden confounder, so the choice at
    a stratum compares ``Σ_u weight(u) · value(u, a)`` for a = 0, 1. Ties
    (within ``tol`` relative to the stratum mass) go to 0.
    """
    lay = spec.layout
    if mode not in ("overall", "path"):
        raise ValueError("mode must be 'overall' or 'path'")
    if mode == "path":
        if reference is None or len(reference) != lay.stages:
            raise InterventionMismatch("path mode needs one reference value per stage")
        refd = set(lay.mediators if referenced is None else referenced)
    else:
        refd = set()
    strata = 0
    for i in range(1, lay.stages + 1):
        _, cards = history_space(lay, i)
        strata += int(np.prod(cards, dtype=np.int64))
    if strata > limit:
        raise CardinalityOverflow(f"{strata} history strata exceed the limit {limit}")
    order = lay.vertices
    u_probs = np.array([1.0] if spec.u_probs is None else spec.u_probs, dtype=float)
    nu = len(u_probs)
    tables: dict[int, dict] = {i: {} for i in range(1, lay.stages + 1)}

    def lookup(v: str, world: dict) -> np.ndarray:
        """Per-u table rows for vertex v, shape (nu, card) or (nu,) for the outcome."""
        t = spec.tables[v]
        key = []
        for p in lay.parents(v):
            if mode == "path" and p[0] == "A" and v in refd and lay.stage_of(v) >= int(p[1:]):
                key.append(int(reference[int(p[1:]) - 1]))
            else:
                key.append(world[p])
        rows = t[(slice(None), *key)]
        if rows.shape[0] == 1 and nu > 1:
            rows = np.repeat(rows, nu, axis=0)
        return rows

    def walk(k: int, uw: np.ndarray, world: dict) -> float:
        v = order[k]
        kind = lay.kind(v)
        if kind == "outcome":
            return math.fsum((uw * lookup(v, world)).tolist())
        if kind == "treatment":
            i = int(v[1:])
            vals = []
            for a in (0, 1):
                world[v] = a
                vals.append(walk(k + 1, uw, world))
            del world[v]
            mass = float(uw.sum())
            best = 1 if vals[1] - vals[0] > tol * mass else 0
            key = tuple(world[h] for h in lay.history(i))
            tables[i][key] = best
            return vals[best]
        rows = lookup(v, world)
        acc = []
        for val in range(rows.shape[-1]):
            w = uw * rows[:, val]
            if not np.any(w):
                continue
            world[v] = val
            acc.append(walk(k + 1, w, world))
        world.pop(v, None)
        return math.fsum(acc)

    value = walk(0, u_probs.copy(), {})
    rules = []
    for i in range(1, lay.stages + 1):
        cols, cards = history_space(lay, i)
        acts = [0] * int(np.prod(cards, dtype=np.int64))
        for key, a in tables[i].items():
            acts[int(np.ravel_multi_index(key, cards))] = a
        rules.append(TableRule(cols, cards, tuple(acts)))
    return Policy(tuple(rules), label=f"oracle-{mode}"), value


def emit_golden(spec: ScmSpec, interventions: Sequence[Intervention], path=None) -> list[dict]:
    """Golden records of (spec hash, intervention, exact value)."""
    recs = []
    for iv in interventions:
        rep = exact_value(spec, iv)
        recs.append({"spec_hash": rep.spec_hash, "intervention": iv.describe(), "value": rep.value,
                     "terms_enumerated": rep.terms_enumerated})
    if path is not None:
        with open(path, "w") as fh:
            json.dump(recs, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return recs
