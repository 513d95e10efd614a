"""Identification functionals evaluated by exact enumeration.

Every functional here is a sum over the discrete configurations of the
non-treatment vertices of a product of conditional laws, with treatment
arguments replaced edge by edge according to an intervention. The work is
done by :func:`enumerate_law`, which expands a table of partial
configurations one vertex at a time (rows carry a weight) and drops rows whose
weight is exactly zero.

Conditional laws come from a *law provider*: any object with ``layout``,
``exact``, ``w0_probs()``, ``prob1(vertex, ctx)`` and ``outcome_mean(ctx)``.
``ctx`` maps every parent name to an integer array; providers read the
columns they need.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CardinalityOverflow, InterventionMismatch
from .layout import Layout
from .policy import Policy
from .scm import EdgeValue, Intervention, ScmSpec, StageAssign, recorded_value

DEFAULT_BUDGET = 1 << 24


# ---------------------------------------------------------------------------
# providers

class TableLaw:
    """Exact provider backed by U-free dense tables (see :func:`observed_spec`)."""

    exact = True

    def __init__(self, spec: ScmSpec):
        if spec.u_probs is not None and spec.u_card > 1:
            spec = observed_spec(spec)
        self.spec = spec
        self.layout = spec.layout

    def w0_probs(self) -> np.ndarray:
        return self.spec.tables["W0"][0]

    def _lookup(self, v: str, ctx: Mapping[str, np.ndarray]) -> np.ndarray:
        t = self.spec.tables[v][0]
        parents = self.layout.parents(v)
        if not parents:
            return t
        return t[tuple(np.asarray(ctx[p], dtype=np.int64) for p in parents)]

    def prob1(self, v: str, ctx: Mapping[str, np.ndarray]) -> np.ndarray:
        return self._lookup(v, ctx)[..., 1]

    def outcome_mean(self, ctx: Mapping[str, np.ndarray]) -> np.ndarray:
        return self._lookup(self.layout.outcome, ctx)


def spec_law(spec: ScmSpec) -> TableLaw:
    """Observed-data law of a spec (hidden confounder integrated out)."""
    return TableLaw(spec)


def observed_spec(spec: ScmSpec, budget: int = 1 << 22) -> ScmSpec:
    """U-free spec whose tables are the observed conditionals ``p(V | pa(V))``.

    Treatments and mediators do not depend on ``U`` so their tables carry
    over. For a W node the confounder is averaged over its posterior given
    the parent configuration, ``p(u | pa) ∝ p(u) Π_{j} p(W_j | u, pa_j)``
    over the earlier W nodes.
    """
    if spec.u_probs is None or spec.u_card == 1:
        return spec
    lay = spec.layout
    tables = {}
    for v in lay.vertices:
        t = spec.tables[v]
        if lay.kind(v) in ("treatment", "mediator"):
            tables[v] = t
            continue
        parents = lay.parents(v)
        pc = tuple(lay.card(p) for p in parents)
        size = int(np.prod(pc, dtype=np.int64)) if pc else 1
        if size * spec.u_card > budget:
            raise CardinalityOverflow(f"{v}: {size} parent configurations exceed the budget")
        grid = np.indices(pc).reshape(len(pc), -1) if pc else np.zeros((0, 1), dtype=np.int64)
        pos = {p: k for k, p in enumerate(parents)}
        logpost = np.tile(np.log(spec.u_probs)[:, None], (1, size))
        for wj in parents:
            if lay.kind(wj) not in ("baseline", "intermediate"):
                continue
            tj = spec.tables[wj]
            key = tuple(grid[pos[p]] for p in lay.parents(wj))
            for u in range(spec.u_card):
                logpost[u] += np.log(tj[(u, *key, grid[pos[wj]])])
        logpost -= logpost.max(axis=0, keepdims=True)
        post = np.exp(logpost)
        post /= post.sum(axis=0, keepdims=True)
        if v == lay.outcome:
            vals = t[(slice(None), *grid)] if pc else t[:, None]
            obs = (post * vals).sum(axis=0).reshape((1, *pc))
        else:
            vals = t[(slice(None), *grid)] if pc else t[:, None, :]
            obs = np.einsum("us,usk->sk", post, vals).reshape((1, *pc, t.shape[-1]))
        tables[v] = obs
    return ScmSpec(lay, tables, spec.outcome_sigma, None, spec.positivity_floor,
                   (spec.name + "~observed") if spec.name else "")


class TildeLaw:
    """Law with mediators evaluated at reference treatments on referenced components.

    Treatment and W laws are the source provider's. For each referenced
    mediator component at stage ``j`` the treatment arguments ``A_1..A_j`` are
    replaced by ``a'_1..a'_j`` before delegating.
    """

    def __init__(self, base, reference: Sequence[int], referenced: Sequence[str] | None = None):
        self.base = base
        self.layout: Layout = base.layout
        self.exact = getattr(base, "exact", False)
        self.reference = tuple(int(a) for a in reference)
        if len(self.reference) != self.layout.stages:
            raise InterventionMismatch("reference needs one value per stage")
        self.referenced = tuple(self.layout.mediators) if referenced is None else tuple(referenced)

    def w0_probs(self):
        return self.base.w0_probs()

    def prob1(self, v, ctx):
        if v in self.referenced:
            ctx = dict(ctx)
            n = _ctx_len(ctx)
            for j in range(1, self.layout.stage_of(v) + 1):
                ctx[self.layout.a(j)] = np.full(n, self.reference[j - 1], dtype=np.int64)
        return self.base.prob1(v, ctx)

    def outcome_mean(self, ctx):
        return self.base.outcome_mean(ctx)

    def to_spec(self) -> ScmSpec:
        """Dense spec of this law (only when the source is a :class:`TableLaw`)."""
        from .scm import tilde_spec
        if not isinstance(self.base, TableLaw):
            raise TypeError("to_spec needs an exact table-backed source law")
        return tilde_spec(self.base.spec, self.reference, self.referenced)


def tilde_law(provider, reference: Sequence[int], referenced: Sequence[str] | None = None) -> TildeLaw:
    return TildeLaw(provider, reference, referenced)


def _ctx_len(ctx) -> int:
    for v in ctx.values():
        return len(v)
    return 1


# ---------------------------------------------------------------------------
# enumeration engine

@dataclass
class Enumeration:
    """Partial configurations reached just before the final outcome."""

    columns: dict[str, np.ndarray]
    active: dict[int, np.ndarray]
    weight: np.ndarray
    origin: np.ndarray
    outcome_ctx: dict[str, np.ndarray]
    terms: int


def enumerate_law(law, assign: Mapping[int, StageAssign], start: Mapping[str, np.ndarray] | None = None,
                  budget: int = DEFAULT_BUDGET) -> Enumeration:
    """Expand every configuration of the vertices not fixed by ``start``.

    ``start`` holds columns for a prefix of the vertex order (a conditioning
    history); each of its rows is tracked through ``origin``. Treatments in
    ``start`` may be given stage assignments of kind ``column``: their value
    is read from the history but mediator overrides still apply.
    """
    lay: Layout = law.layout
    if start:
        n0 = _ctx_len(start)
        cols = {k: np.asarray(v, dtype=np.int64) for k, v in start.items()}
    else:
        n0 = 1
        cols = {}
    weight = np.ones(n0)
    origin = np.arange(n0)
    active: dict[int, np.ndarray] = {}
    terms = 1

    def edge(i: int, target: str) -> np.ndarray:
        ev = assign[i].for_target(target)
        if ev.kind == "const":
            return np.full(len(weight), ev.value, dtype=np.int64)
        return active[i]

    def view(v: str) -> dict[str, np.ndarray]:
        out = {}
        for p in lay.parents(v):
            if lay.kind(p) == "treatment" and int(p[1:]) in assign:
                out[p] = edge(int(p[1:]), v)
            else:
                out[p] = cols[p]
        return out

    def expand(card: int):
        nonlocal weight, origin, active, cols, terms
        n = len(weight)
        if n * card > budget:
            raise CardinalityOverflow(f"enumeration needs {n * card} rows, budget is {budget}")
        idx = np.repeat(np.arange(n), card)
        cols = {k: v[idx] for k, v in cols.items()}
        active = {k: v[idx] for k, v in active.items()}
        weight = weight[idx]
        origin = origin[idx]
        terms *= card
        return np.tile(np.arange(card, dtype=np.int64), n)

    def prune():
        nonlocal weight, origin, active, cols
        keep = weight != 0
        if not keep.all():
            cols = {k: v[keep] for k, v in cols.items()}
            active = {k: v[keep] for k, v in active.items()}
            weight = weight[keep]
            origin = origin[keep]

    for v in lay.vertices[:-1]:
        kind = lay.kind(v)
        i = lay.stage_of(v)
        if kind == "treatment" and i in assign:
            sa = assign[i]
            d = sa.default
            if d is not None:
                if d.kind == "policy":
                    active[i] = d.rule.decide(view(v)).astype(np.int64)
                elif d.kind == "const":
                    active[i] = np.full(len(weight), d.value, dtype=np.int64)
                else:
                    active[i] = cols[v]
            if v not in cols:
                rec = recorded_value(lay, i, sa)
                cols[v] = active[i] if rec.kind != "const" else np.full(len(weight), rec.value, dtype=np.int64)
            continue
        if v in cols:
            continue
        if kind == "baseline":
            vals = expand(lay.baseline_card)
            weight = weight * np.asarray(law.w0_probs())[vals]
        else:
            ctx = view(v)
            vals = expand(2)
            ctx = {k: np.repeat(x, 2) for k, x in ctx.items()}
            p1 = np.asarray(law.prob1(v, ctx), dtype=float)
            weight = weight * np.where(vals == 1, p1, 1.0 - p1)
        cols[v] = vals
        prune()
    return Enumeration(cols, active, weight, origin, view(lay.outcome), terms)


def functional(law, assign: Mapping[int, StageAssign], start=None, target: str = "mean",
               budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Per-start-row value of the functional: ``mean`` of W_K or total ``mass``."""
    e = enumerate_law(law, assign, start, budget)
    n0 = _ctx_len(start) if start else 1
    if target == "mass":
        vals = e.weight
    elif target == "mean":
        vals = e.weight * np.asarray(law.outcome_mean(e.outcome_ctx), dtype=float)
    else:
        raise ValueError(f"unknown target {target!r}")
    return np.bincount(e.origin, weights=vals, minlength=n0)


def _as_intervention(iv) -> Intervention:
    if isinstance(iv, Intervention):
        return iv
    if isinstance(iv, Policy):
        return Intervention.overall(iv)
    if iv is None:
        return Intervention.none()
    if isinstance(iv, Mapping):
        return Intervention.nodes(iv)
    raise TypeError(f"cannot interpret {iv!r} as an intervention")


# ---------------------------------------------------------------------------
# public functionals

def g_value(provider, node_iv=None, budget: int = DEFAULT_BUDGET) -> float:
    """Node or overall-policy g-formula (``{"A1": 1}``, a :class:`Policy`, or None)."""
    iv = _as_intervention(node_iv)
    if iv.kind not in ("none", "node", "policy"):
        raise InterventionMismatch("g_value takes node assignments or overall policies")
    return float(functional(provider, iv.assignments(provider.layout), budget=budget)[0])


def edge_g_value(provider, edge_iv, budget: int = DEFAULT_BUDGET) -> float:
    """Edge g-formula. ``edge_iv`` maps ``(source, target)`` to a value (empty: observational)."""
    iv = edge_iv if isinstance(edge_iv, Intervention) else (
        Intervention.edge(edge_iv) if edge_iv else Intervention.none())
    if iv.kind not in ("none", "edge"):
        raise InterventionMismatch("edge_g_value takes edge assignments")
    return float(functional(provider, iv.assignments(provider.layout), budget=budget)[0])


def path_policy_value(provider, iv: Intervention, budget: int = DEFAULT_BUDGET) -> float:
    """Value of a path-specific policy: policy on every edge except referenced mediator edges."""
    if iv.kind != "path_policy":
        raise InterventionMismatch("path_policy_value takes a path_policy intervention")
    return float(functional(provider, iv.assignments(provider.layout), budget=budget)[0])


def value(provider, iv: Intervention, budget: int = DEFAULT_BUDGET) -> float:
    """Dispatch on the intervention kind."""
    return float(functional(provider, iv.assignments(provider.layout), budget=budget)[0])


def total_mass(provider, iv: Intervention | None = None) -> float:
    iv = iv or Intervention.none()
    return float(functional(provider, iv.assignments(provider.layout), target="mass")[0])


def marginal(provider, column: str, iv: Intervention | None = None) -> np.ndarray:
    """Distribution of one discrete column under ``iv`` (default: no intervention)."""
    iv = iv or Intervention.none()
    lay = provider.layout
    e = enumerate_law(provider, iv.assignments(lay))
    card = lay.card(column)
    return np.bincount(e.columns[column], weights=e.weight, minlength=card)


# ---------------------------------------------------------------------------
# conditional values (backward induction)

def stage_assignments(layout: Layout, stage: int, action: EdgeValue, future: Policy | None,
                      reference: Sequence[int] | None = None,
                      referenced: Sequence[str] | None = None) -> dict[int, StageAssign]:
    """Assignments for ``E[Y(f_{>i}) | H_i, A_i := action]``.

    Earlier treatments are read from the history (``column``); stage
    ``stage`` takes ``action``; later stages follow ``future``. In path mode
    (``reference`` given) every referenced mediator at or after a treatment's
    stage sees that treatment at its reference value.
    """
    K = layout.stages
    refd = () if reference is None else (tuple(layout.mediators) if referenced is None else tuple(referenced))
    out = {}
    for j in range(1, K + 1):
        if j < stage:
            d = EdgeValue("column")
        elif j == stage:
            d = action
        else:
            if future is None:
                raise ValueError("future stages need a policy")
            d = EdgeValue("policy", rule=future.rule(j))
        ov = {m: EdgeValue("const", int(reference[j - 1])) for m in refd
              if layout.stage_of(m) >= max(j, stage)}
        out[j] = StageAssign(d, ov)
    return out


def conditional_values(provider, stage: int, histories: Mapping[str, np.ndarray], future: Policy | None,
                       reference: Sequence[int] | None = None, referenced: Sequence[str] | None = None,
                       budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """``(n, 2)`` array of ``E[Y | H_i = h, A_i := a]`` with later stages following ``future``.

    ``histories`` holds the H_i columns. In path mode the expectation is under
    the tilde law (referenced mediators see reference treatments), which is
    the conditional form of the collapsed path functional.
    """
    lay = provider.layout
    out = []
    for a in (0, 1):
        assign = stage_assignments(lay, stage, EdgeValue("const", a), future, reference, referenced)
        out.append(functional(provider, assign, start=histories, budget=budget))
    return np.stack(out, axis=1)
