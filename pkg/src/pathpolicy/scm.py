"""Finite discrete structural causal models and their simulation.

A :class:`ScmSpec` stores one dense conditional table per vertex, indexed by
``(u, *parent values)`` with parents in topological order (C order, so the
last parent varies fastest). The leading ``u`` axis has length 1 unless the
vertex is a W-node and the model carries a hidden confounder ``U``.
Binary and categorical tables end in a value axis whose rows sum to one; the
final outcome stores its Gaussian mean (its standard deviation is
``outcome_sigma``).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import rng as _rng
from .errors import BadShape, InterventionMismatch, MalformedCpt, PositivityViolation, SpecError
from .layout import Layout
from .policy import Policy, Rule
from .terms import design, term_columns

DEFAULT_FLOOR = 0.01


# ---------------------------------------------------------------------------
# spec

@dataclass(frozen=True, eq=False)
class ScmSpec:
    layout: Layout
    tables: dict[str, np.ndarray]
    outcome_sigma: float = 1.0
    u_probs: np.ndarray | None = None
    positivity_floor: float = DEFAULT_FLOOR
    name: str = field(default="", compare=False)

    @property
    def stages(self) -> int:
        return self.layout.stages

    @property
    def u_card(self) -> int:
        return 1 if self.u_probs is None else len(self.u_probs)

    def u_dim(self, v: str) -> int:
        return self.tables[v].shape[0]

    def parent_cards(self, v: str) -> tuple[int, ...]:
        return tuple(self.layout.card(p) for p in self.layout.parents(v))

    def expected_shape(self, v: str) -> tuple[int, ...]:
        lay = self.layout
        u = self.u_card if lay.kind(v) in ("baseline", "intermediate", "outcome") else 1
        tail = () if v == lay.outcome else (lay.card(v),)
        return (u, *self.parent_cards(v), *tail)

    def p1(self, v: str) -> np.ndarray:
        """``p(v = 1 | u, parents)`` for a binary vertex."""
        return self.tables[v][..., 1]

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = {"stages": self.layout.stages, "baseline_card": self.layout.baseline_card,
             "mediator_dims": list(self.layout.mediator_dims),
             "positivity_floor": self.positivity_floor, "outcome_sigma": self.outcome_sigma,
             "nodes": {v: {"table": self.tables[v].tolist()} if v != self.layout.outcome
                       else {"mean": self.tables[v].tolist()} for v in self.layout.vertices}}
        if self.u_probs is not None:
            d["confounder"] = {"probs": [float(p) for p in self.u_probs]}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScmSpec":
        """Build a spec from its JSON form.

        Node entries take one of: ``table`` (full rows), ``p1`` (probability of
        1 for binary nodes), ``probs`` or ``uniform`` (W0 only), ``mean`` (outcome table),
        ``logistic`` or ``linear`` (mapping term -> coefficient over parent
        names and ``U``). Missing leading ``u`` axes are broadcast.
        """
        allowed = {"stages", "baseline_card", "mediator_dims", "positivity_floor", "outcome_sigma",
                   "nodes", "confounder", "name", "description"}
        unknown = set(d) - allowed
        if unknown:
            raise BadShape(f"unknown spec keys {sorted(unknown)}", [("BadShape", f"unknown keys {sorted(unknown)}")])
        try:
            layout = Layout(int(d["stages"]), tuple(d["mediator_dims"]), int(d.get("baseline_card", 2)))
        except (KeyError, ValueError, TypeError) as e:
            raise BadShape(f"bad layout: {e}", [("BadShape", str(e))]) from None
        conf = d.get("confounder")
        u_probs = None
        if conf is not None:
            if "probs" in conf:
                u_probs = np.asarray(conf["probs"], dtype=float)
            else:
                k = int(conf["card"])
                u_probs = np.full(k, 1.0 / k)
        u_card = 1 if u_probs is None else len(u_probs)
        nodes = d.get("nodes", {})
        missing = [v for v in layout.vertices if v not in nodes]
        extra = [v for v in nodes if v not in layout.vertices]
        if missing or extra:
            msgs = [f"missing node model for {v}" for v in missing] + [f"unknown node {v}" for v in extra]
            raise BadShape("; ".join(msgs), [("BadShape", m) for m in msgs])
        tables = {}
        for v in layout.vertices:
            tables[v] = _node_table(layout, v, nodes[v], u_card)
        sigma = float(d.get("outcome_sigma", nodes[layout.outcome].get("sigma", 1.0)))
        return cls(layout, tables, sigma, u_probs, float(d.get("positivity_floor", DEFAULT_FLOOR)),
                   d.get("name", ""))


def _grid(layout: Layout, v: str, u_card: int) -> tuple[tuple[int, ...], dict[str, np.ndarray]]:
    parents = layout.parents(v)
    shape = (u_card, *(layout.card(p) for p in parents))
    idx = np.indices(shape).reshape(len(shape), -1)
    cols = {"U": idx[0]}
    cols.update({p: idx[k + 1] for k, p in enumerate(parents)})
    return shape, cols


def _node_table(layout: Layout, v: str, node: Mapping, u_card: int) -> np.ndarray:
    kind = layout.kind(v)
    parents = layout.parents(v)
    pc = tuple(layout.card(p) for p in parents)
    u_ok = kind in ("baseline", "intermediate", "outcome")
    if "logistic" in node or "linear" in node:
        link = "logistic" if "logistic" in node else "linear"
        coefs = node[link]
        terms = list(coefs)
        cols = term_columns(terms)
        bad = [c for c in cols if c not in parents and c != "U"]
        if bad:
            raise BadShape(f"{v}: expression uses non-parents {bad}", [("BadShape", f"{v} uses {bad}")])
        uses_u = "U" in cols
        if uses_u and not u_ok:
            raise BadShape(f"{v}: the hidden confounder only enters W nodes",
                           [("BadShape", f"U -> {v} not allowed")])
        uc = u_card if uses_u else 1
        shape, grid = _grid(layout, v, uc)
        eta = design(terms, grid) @ np.array([float(coefs[t]) for t in terms])
        eta = eta.reshape(shape)
        if v == layout.outcome:
            if link != "linear":
                raise BadShape(f"{v}: outcome mean must be linear", [("BadShape", "outcome link")])
            out = eta
        elif v == "W0" and layout.baseline_card > 2:
            raise BadShape("W0 with more than two levels needs 'probs'", [("BadShape", "W0 expression")])
        else:
            p1 = expit(eta) if link == "logistic" else eta
            out = np.stack([1.0 - p1, p1], axis=-1)
        if uc == 1 and u_ok and u_card > 1:
            out = np.repeat(out, u_card, axis=0)
        return out
    if v == layout.outcome:
        if "mean" not in node:
            raise BadShape(f"{v}: outcome needs 'mean' or 'linear'", [("BadShape", "outcome table")])
        arr = np.asarray(node["mean"], dtype=float)
        return _with_u(arr, len(pc), u_card if u_ok else 1, v)
    if node.get("uniform"):
        if v != "W0":
            raise BadShape(f"{v}: 'uniform' is only for W0", [("BadShape", "uniform")])
        return np.full((u_card, layout.baseline_card), 1.0 / layout.baseline_card)
    if "probs" in node:
        arr = np.asarray(node["probs"], dtype=float)
        if v != "W0":
            raise BadShape(f"{v}: 'probs' is only for W0", [("BadShape", "probs")])
        return _with_u(arr, 1, u_card, v)
    if "p1" in node:
        arr = np.asarray(node["p1"], dtype=float)
        full = _with_u(arr, len(pc), u_card if u_ok else 1, v)
        return np.stack([1.0 - full, full], axis=-1)
    if "table" in node:
        arr = np.asarray(node["table"], dtype=float)
        return _with_u(arr, len(pc) + 1, u_card if u_ok else 1, v)
    raise BadShape(f"{v}: no recognised model entry", [("BadShape", f"{v} model")])


def _with_u(arr: np.ndarray, core_ndim: int, u_card: int, v: str) -> np.ndarray:
    if arr.ndim == core_ndim:
        return np.repeat(arr[None, ...], u_card, axis=0) if u_card > 1 else arr[None, ...]
    if arr.ndim == core_ndim + 1:
        return arr
    raise BadShape(f"{v}: table has {arr.ndim} axes, expected {core_ndim} (+1 for U)",
                   [("BadShape", f"{v} ndim")])


def validate_spec(spec: ScmSpec) -> ScmSpec:
    """Return ``spec`` if every invariant holds, else raise listing all violations."""
    lay = spec.layout
    viol: list[tuple[str, str]] = []
    floor = spec.positivity_floor
    if spec.u_probs is not None:
        up = spec.u_probs
        if np.any(up < 0) or abs(up.sum() - 1.0) > 1e-12:
            viol.append(("MalformedCpt", "confounder probabilities do not form a distribution"))
    if not (0 <= floor < 0.5):
        viol.append(("BadShape", f"positivity floor {floor} outside [0, 0.5)"))
    if not (spec.outcome_sigma > 0 and np.isfinite(spec.outcome_sigma)):
        viol.append(("BadShape", "outcome sigma must be positive"))
    for v in lay.vertices:
        t = spec.tables.get(v)
        if t is None:
            viol.append(("BadShape", f"no table for {v}"))
            continue
        exp = spec.expected_shape(v)
        if t.shape != exp:
            if t.shape[1:] == exp[1:] and t.shape[0] > 1 and exp[0] == 1:
                viol.append(("BadShape", f"{v}: the hidden confounder only enters W nodes"))
            else:
                viol.append(("BadShape", f"{v}: table shape {t.shape}, expected {exp}"))
            continue
        if not np.all(np.isfinite(t)):
            viol.append(("MalformedCpt", f"{v}: non-finite entries"))
            continue
        if v == lay.outcome:
            continue
        if np.any(t < 0) or np.any(t > 1):
            viol.append(("MalformedCpt", f"{v}: probabilities outside [0, 1]"))
        sums = t.sum(axis=-1)
        bad = np.abs(sums - 1.0) > 1e-12
        if np.any(bad):
            viol.append(("MalformedCpt", f"{v}: {int(bad.sum())} row(s) do not sum to 1 "
                                         f"(e.g. {sums[bad].flat[0]:.6g})"))
        if lay.kind(v) in ("treatment", "mediator"):
            lo, hi = float(t.min()), float(t.max())
            if lo < floor - 1e-15 or hi > 1 - floor + 1e-15:
                viol.append(("PositivityViolation",
                             f"{v}: probabilities span [{lo:.4g}, {hi:.4g}], floor is {floor}"))
    if viol:
        kinds = {k for k, _ in viol}
        cls = {"PositivityViolation": PositivityViolation, "MalformedCpt": MalformedCpt,
               "BadShape": BadShape}[viol[0][0]] if len(kinds) == 1 else SpecError
        raise cls("invalid spec: " + "; ".join(m for _, m in viol), viol)
    return spec


def load_spec(source) -> ScmSpec:
    """Read and validate a spec from a path, JSON string or mapping."""
    if isinstance(source, Mapping):
        d = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            d = json.loads(text)
        else:
            with open(text) as fh:
                d = json.load(fh)
    return validate_spec(ScmSpec.from_dict(d))


def random_spec(rng: np.random.Generator, layout: Layout, u_card: int = 2, floor: float = 0.05,
                outcome_scale: float = 1.0, name: str = "") -> ScmSpec:
    """Random spec with A/M probabilities in [floor, 1-floor] and U into every W."""
    tables = {}
    u_probs = rng.dirichlet(np.ones(u_card)) if u_card > 1 else None
    uc = u_card if u_card > 1 else 1
    for v in layout.vertices:
        kind = layout.kind(v)
        pc = tuple(layout.card(p) for p in layout.parents(v))
        if kind == "baseline":
            tables[v] = rng.dirichlet(np.ones(layout.baseline_card), size=uc)
        elif kind == "outcome":
            tables[v] = rng.normal(0.0, outcome_scale, size=(uc, *pc))
        else:
            u = uc if kind == "intermediate" else 1
            lo = floor if kind in ("treatment", "mediator") else 0.05
            p1 = rng.uniform(lo, 1 - lo, size=(u, *pc))
            tables[v] = np.stack([1.0 - p1, p1], axis=-1)
    return ScmSpec(layout, tables, 1.0, u_probs, floor, name)


def tilde_spec(spec: ScmSpec, reference: Sequence[int], referenced: Sequence[str] | None = None) -> ScmSpec:
    """Spec of the world where referenced mediators see treatments at ``reference``.

    Treatments keep their observational mechanism for every other edge.
    """
    lay = spec.layout
    refd = tuple(lay.mediators) if referenced is None else tuple(referenced)
    tables = dict(spec.tables)
    for mname in refd:
        t = spec.tables[mname]
        parents = lay.parents(mname)
        for k, p in enumerate(parents):
            if lay.kind(p) == "treatment":
                a = int(reference[int(p[1:]) - 1])
                ax = k + 1
                sl = np.take(t, [a], axis=ax)
                t = np.repeat(sl, lay.card(p), axis=ax)
        tables[mname] = t
    return ScmSpec(lay, tables, spec.outcome_sigma, spec.u_probs, spec.positivity_floor,
                   (spec.name + "~tilde") if spec.name else "")


# ---------------------------------------------------------------------------
# interventions

@dataclass(frozen=True)
class EdgeValue:
    """What a child sees on an edge out of a treatment.

    ``const``: a fixed value; ``policy``: the stage rule applied to the
    (counterfactual) history; ``column``: the value already present in the
    history (used when conditioning on an observed history).
    """

    kind: str
    value: int | None = None
    rule: Rule | None = None


@dataclass(frozen=True)
class StageAssign:
    default: EdgeValue | None
    overrides: Mapping[str, EdgeValue] = field(default_factory=dict)

    def for_target(self, target: str) -> EdgeValue:
        ev = self.overrides.get(target, self.default)
        if ev is None:
            raise InterventionMismatch(f"no value for edge into {target}")
        return ev


@dataclass(frozen=True)
class Intervention:
    """Node, edge or path-policy intervention.

    * ``node``: ``{"A1": 1}``; unassigned stages stay observational.
    * ``edge``: ``{("A1", "W1"): 1, ("A1", "M1_1"): 0}``; every edge out of an
      assigned treatment must be present.
    * ``policy``: overall policy, every edge out of ``A_i`` follows stage rule ``i``.
    * ``path_policy``: edges into the ``referenced`` mediator components take
      the reference values, all other out-edges follow the policy.
    """

    kind: str = "none"
    node: Mapping[str, int] = field(default_factory=dict)
    edges: Mapping[tuple[str, str], int] = field(default_factory=dict)
    policy: Policy | None = None
    reference: tuple[int, ...] = ()
    referenced: tuple[str, ...] | None = None

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def nodes(cls, assign: Mapping[str, int]):
        return cls("node", node=dict(assign))

    @classmethod
    def edge(cls, assign: Mapping[tuple[str, str], int]):
        return cls("edge", edges=dict(assign))

    @classmethod
    def overall(cls, policy: Policy):
        return cls("policy", policy=policy)

    @classmethod
    def path(cls, policy: Policy, reference: Sequence[int], referenced: Sequence[str] | None = None):
        return cls("path_policy", policy=policy, reference=tuple(int(a) for a in reference),
                   referenced=None if referenced is None else tuple(referenced))

    def referenced_in(self, layout: Layout) -> tuple[str, ...]:
        return tuple(layout.mediators) if self.referenced is None else self.referenced

    def check(self, layout: Layout) -> None:
        if self.kind not in ("none", "node", "edge", "policy", "path_policy"):
            raise InterventionMismatch(f"unknown intervention kind {self.kind!r}")
        if self.kind == "node":
            for a, val in self.node.items():
                if a not in layout.vertices or layout.kind(a) != "treatment":
                    raise InterventionMismatch(f"{a} is not a treatment of this model")
                if val not in (0, 1):
                    raise InterventionMismatch(f"{a} := {val} is not binary")
        elif self.kind == "edge":
            sources = {s for s, _ in self.edges}
            for (s, t), val in self.edges.items():
                if s not in layout.vertices or layout.kind(s) != "treatment":
                    raise InterventionMismatch(f"edge source {s} is not a treatment")
                if t not in layout.vertices or s not in layout.parents(t):
                    raise InterventionMismatch(f"edge ({s}{t})-> is not in the graph")
                if val not in (0, 1):
                    raise InterventionMismatch(f"edge ({s}{t})-> value {val} is not binary")
            for s in sources:
                missing = [c for c in layout.children(s) if (s, c) not in self.edges]
                if missing:
                    raise InterventionMismatch(f"closure rule: edges from {s} into {missing} are unassigned")
        elif self.kind in ("policy", "path_policy"):
            if self.policy is None:
                raise InterventionMismatch("policy intervention without a policy")
            try:
                self.policy.check_layout(layout)
            except ValueError as e:
                raise InterventionMismatch(str(e)) from None
            if self.kind == "path_policy":
                if len(self.reference) != layout.stages or any(a not in (0, 1) for a in self.reference):
                    raise InterventionMismatch("reference needs one binary value per stage")
                bad = [m for m in self.referenced_in(layout) if m not in layout.mediators]
                if bad:
                    raise InterventionMismatch(f"referenced edges must point into mediators, got {bad}")

    def assignments(self, layout: Layout) -> dict[int, StageAssign]:
        """Per-stage edge semantics; stages absent from the result are observational."""
        self.check(layout)
        out: dict[int, StageAssign] = {}
        K = layout.stages
        if self.kind == "node":
            for a, val in self.node.items():
                out[int(a[1:])] = StageAssign(EdgeValue("const", int(val)))
        elif self.kind == "edge":
            by_src: dict[int, dict[str, EdgeValue]] = {}
            for (s, t), val in self.edges.items():
                by_src.setdefault(int(s[1:]), {})[t] = EdgeValue("const", int(val))
            for i, ov in by_src.items():
                out[i] = StageAssign(None, ov)
        elif self.kind == "policy":
            for i in range(1, K + 1):
                out[i] = StageAssign(EdgeValue("policy", rule=self.policy.rule(i)))
        elif self.kind == "path_policy":
            refd = self.referenced_in(layout)
            for i in range(1, K + 1):
                ov = {m: EdgeValue("const", self.reference[i - 1]) for m in refd
                      if layout.stage_of(m) >= i}
                out[i] = StageAssign(EdgeValue("policy", rule=self.policy.rule(i)), ov)
        return out

    def describe(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "node":
            d["node"] = dict(self.node)
        elif self.kind == "edge":
            d["edges"] = {f"{s}->{t}": v for (s, t), v in sorted(self.edges.items())}
        elif self.kind in ("policy", "path_policy"):
            d["policy"] = self.policy.to_dict()
            if self.kind == "path_policy":
                d["reference"] = list(self.reference)
                d["referenced"] = None if self.referenced is None else list(self.referenced)
        return d


def recorded_value(layout: Layout, i: int, sa: StageAssign) -> EdgeValue:
    """Which edge value the dataset reports in column ``A_i``: the one into ``W_i``."""
    if sa.default is not None:
        return sa.default
    return sa.for_target(layout.w(i))


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True, eq=False)
class Dataset:
    layout: Layout
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        cols = {}
        lay = self.layout
        for v in lay.vertices:
            if v not in self.columns:
                raise BadShape(f"dataset lacks column {v}")
            arr = np.asarray(self.columns[v])
            arr = arr.astype(np.float64) if v == lay.outcome else arr.astype(np.int64)
            arr.setflags(write=False)
            cols[v] = arr
        lens = {len(a) for a in cols.values()}
        if len(lens) != 1:
            raise BadShape("columns differ in length")
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return len(self.columns["W0"])

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def outcome(self) -> np.ndarray:
        return self.columns[self.layout.outcome]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.layout, {k: v[idx] for k, v in self.columns.items()})

    def check(self) -> "Dataset":
        lay = self.layout
        for v, a in self.columns.items():
            if v == lay.outcome:
                if not np.all(np.isfinite(a)):
                    raise BadShape(f"{v} has missing or non-finite values")
            elif a.min(initial=0) < 0 or a.max(initial=0) >= lay.card(v):
                raise BadShape(f"{v} has values outside 0..{lay.card(v) - 1}")
        return self

    def single_stage(self) -> "Dataset":
        """First-stage problem: (W0, A1, M1, W1) with W1 as the outcome."""
        lay = self.layout
        sub = Layout(1, lay.mediator_dims[:1], lay.baseline_card)
        return Dataset(sub, {v: self.columns[v].astype(float) if v == sub.outcome else self.columns[v]
                             for v in sub.vertices})

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        lay = self.layout
        w.writerow(lay.vertices)
        cols = [self.columns[v] for v in lay.vertices]
        last = len(cols) - 1
        for r in range(self.n):
            row = [str(int(c[r])) for c in cols[:last]]
            row.append(repr(float(cols[last][r])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, baseline_card: int | None = None) -> "Dataset":
        with open(path, newline="") as fh:
            rdr = csv.reader(fh)
            header = next(rdr)
            rows = list(rdr)
        arr = np.array(rows, dtype=object) if rows else np.empty((0, len(header)), dtype=object)
        cols = {}
        for k, name in enumerate(header):
            raw = arr[:, k] if len(rows) else np.array([])
            if k == len(header) - 1:
                cols[name] = raw.astype(np.float64)
            else:
                cols[name] = raw.astype(np.int64)
        card = baseline_card or max(2, int(cols["W0"].max()) + 1 if len(rows) else 2)
        lay = Layout.from_columns(header, card)
        return cls(lay, cols).check()

    def digest(self) -> str:
        h = hashlib.sha256()
        for v in self.layout.vertices:
            h.update(v.encode())
            h.update(np.ascontiguousarray(self.columns[v]).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# simulation

_U_STREAM = 0


def _stream(layout: Layout, v: str) -> int:
    return layout.index[v] + 1


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise categorical draw; ``probs`` has shape (n, card)."""
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


def simulate(spec: ScmSpec, n: int, seed: int) -> Dataset:
    """``n`` iid draws from the observational law; ``U`` is never emitted."""
    return simulate_counterfactual(spec, Intervention.none(), n, seed)


def simulate_counterfactual(spec: ScmSpec, iv: Intervention, n: int, seed: int) -> Dataset:
    """Draws from the counterfactual law by recursive substitution.

    Each vertex is generated from its structural table with every treatment
    parent replaced by the value assigned on the edge into that vertex.
    Noise is shared with :func:`simulate` per ``(seed, row, vertex)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    lay = spec.layout
    assign = iv.assignments(lay)
    rows = np.arange(n, dtype=np.uint64)
    if spec.u_probs is not None:
        u = _inverse_cdf(np.broadcast_to(spec.u_probs, (n, spec.u_card)), _rng.uniforms(seed, _U_STREAM, rows))
    else:
        u = np.zeros(n, dtype=np.int64)
    vals: dict[str, np.ndarray] = {}
    active: dict[int, np.ndarray] = {}

    def edge_array(i: int, target: str) -> np.ndarray:
        ev = assign[i].for_target(target)
        if ev.kind == "const":
            return np.full(n, ev.value, dtype=np.int64)
        return active[i]

    def view(v: str) -> dict[str, np.ndarray]:
        out = {}
        for p in lay.parents(v):
            if lay.kind(p) == "treatment" and int(p[1:]) in assign:
                out[p] = edge_array(int(p[1:]), v)
            else:
                out[p] = vals[p]
        return out

    for v in lay.vertices:
        kind = lay.kind(v)
        if kind == "treatment" and int(v[1:]) in assign:
            i = int(v[1:])
            sa = assign[i]
            if sa.default is not None and sa.default.kind == "policy":
                active[i] = sa.default.rule.decide(view(v)).astype(np.int64)
            elif sa.default is not None:
                active[i] = np.full(n, sa.default.value, dtype=np.int64)
            rec = recorded_value(lay, i, sa)
            vals[v] = active[i] if rec.kind == "policy" else np.full(n, rec.value, dtype=np.int64)
            continue
        ctx = view(v)
        t = spec.tables[v]
        uidx = u if t.shape[0] > 1 else np.zeros(n, dtype=np.int64)
        key = (uidx, *(ctx[p] for p in lay.parents(v)))
        if kind == "outcome":
            vals[v] = t[key] + spec.outcome_sigma * _rng.normals(seed, _stream(lay, v), rows)
        elif kind == "baseline":
            vals[v] = _inverse_cdf(t[key], _rng.uniforms(seed, _stream(lay, v), rows))
        else:
            p1 = t[key][:, 1]
            vals[v] = (_rng.uniforms(seed, _stream(lay, v), rows) < p1).astype(np.int64)
    return Dataset(lay, vals)
