"""Variable layout of the longitudinal model W0, A1, M1, W1, ..., AK, MK, WK."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property


@dataclass(frozen=True)
class Layout:
    stages: int
    mediator_dims: tuple[int, ...]
    baseline_card: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mediator_dims", tuple(int(m) for m in self.mediator_dims))
        if self.stages < 1:
            raise ValueError("need at least one stage")
        if len(self.mediator_dims) != self.stages:
            raise ValueError("mediator_dims must have one entry per stage")
        if any(m < 0 for m in self.mediator_dims):
            raise ValueError("mediator dims must be non-negative")
        if self.baseline_card < 2:
            raise ValueError("baseline_card must be >= 2")

    # names -----------------------------------------------------------------
    @staticmethod
    def a(i: int) -> str:
        return f"A{i}"

    @staticmethod
    def w(i: int) -> str:
        return f"W{i}"

    def m(self, i: int) -> tuple[str, ...]:
        return tuple(f"M{i}_{j}" for j in range(1, self.mediator_dims[i - 1] + 1))

    @property
    def outcome(self) -> str:
        return self.w(self.stages)

    @cached_property
    def vertices(self) -> tuple[str, ...]:
        """Topological order; mediator components of one stage are siblings."""
        out = ["W0"]
        for i in range(1, self.stages + 1):
            out += [self.a(i), *self.m(i), self.w(i)]
        return tuple(out)

    @cached_property
    def index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def _stage_of(self) -> dict[str, int]:
        out = {"W0": 0}
        for i in range(1, self.stages + 1):
            for v in (self.a(i), *self.m(i), self.w(i)):
                out[v] = i
        return out

    def stage_of(self, v: str) -> int:
        return self._stage_of[v]

    def kind(self, v: str) -> str:
        """One of ``baseline``, ``treatment``, ``mediator``, ``intermediate``, ``outcome``."""
        if v == "W0":
            return "baseline"
        if v[0] == "A":
            return "treatment"
        if v[0] == "M":
            return "mediator"
        return "outcome" if v == self.outcome else "intermediate"

    def card(self, v: str) -> int:
        if v == "W0":
            return self.baseline_card
        if v == self.outcome:
            raise ValueError("final outcome is continuous")
        return 2

    def parents(self, v: str) -> tuple[str, ...]:
        """Complete-DAG parents: every earlier vertex except same-stage mediator siblings."""
        k = self.index[v]
        earlier = self.vertices[:k]
        if self.kind(v) == "mediator":
            return tuple(p for p in earlier if not (p[0] == "M" and self.stage_of(p) == self.stage_of(v)))
        return earlier

    def history(self, i: int) -> tuple[str, ...]:
        """H_i: every vertex preceding A_i."""
        return self.vertices[: self.index[self.a(i)]]

    def children(self, v: str) -> tuple[str, ...]:
        return tuple(c for c in self.vertices if v in self.parents(c))

    @cached_property
    def mediators(self) -> tuple[str, ...]:
        return tuple(x for i in range(1, self.stages + 1) for x in self.m(i))

    @property
    def columns(self) -> tuple[str, ...]:
        return self.vertices

    def to_dict(self) -> dict:
        return {"stages": self.stages, "mediator_dims": list(self.mediator_dims),
                "baseline_card": self.baseline_card}

    @classmethod
    def from_dict(cls, d: dict) -> "Layout":
        return cls(int(d["stages"]), tuple(d["mediator_dims"]), int(d.get("baseline_card", 2)))

    @classmethod
    def from_columns(cls, names, baseline_card: int = 2) -> "Layout":
        names = list(names)
        stages = sum(1 for c in names if c.startswith("A"))
        dims = [sum(1 for c in names if c.startswith(f"M{i}_")) for i in range(1, stages + 1)]
        lay = cls(stages, tuple(dims), baseline_card)
        if tuple(names) != lay.vertices:
            raise ValueError(f"columns {names} do not follow the W0,A1,M1_*,W1,... layout")
        return lay
