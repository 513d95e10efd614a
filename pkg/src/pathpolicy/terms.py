"""Tiny term language shared by node expressions and regression feature maps.

A term is a product of factors joined by ``*``. A factor is ``1``, a column
name (used numerically) or an indicator ``[name=k]``. ``"A1*[W0=2]"`` is the
treatment column times the indicator that ``W0`` equals 2.
"""
from __future__ import annotations

import re
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

_INDICATOR = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_]*)=(-?\d+)\]$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@lru_cache(maxsize=4096)
def parse_term(term: str) -> tuple[tuple[str, int | None], ...]:
    """Return the factors of ``term`` as ``(column, level-or-None)`` pairs.

    The intercept parses to an empty tuple.
    """
    factors = []
    for raw in term.replace(" ", "").split("*"):
        if raw == "1":
            continue
        m = _INDICATOR.match(raw)
        if m:
            factors.append((m.group(1), int(m.group(2))))
        elif _NAME.match(raw):
            factors.append((raw, None))
        else:
            raise ValueError(f"cannot parse factor {raw!r} in term {term!r}")
    return tuple(factors)


def term_columns(terms: Sequence[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for t in terms:
        for col, _ in parse_term(t):
            seen.setdefault(col, None)
    return tuple(seen)


def design(terms: Sequence[str], columns: Mapping[str, np.ndarray], n: int | None = None) -> np.ndarray:
    """Evaluate ``terms`` row-wise; returns an ``(n, len(terms))`` float array."""
    if n is None:
        n = len(next(iter(columns.values()))) if columns else 1
    out = np.ones((n, len(terms)), dtype=float)
    for j, t in enumerate(terms):
        for col, level in parse_term(t):
            try:
                v = np.asarray(columns[col])
            except KeyError:
                raise KeyError(f"term {t!r} needs column {col!r}") from None
            if level is None:
                out[:, j] *= v
            else:
                out[:, j] *= (v == level)
    return out


def product_terms(groups: Sequence[Sequence[str]]) -> list[str]:
    """All products picking one factor from each group (``"1"`` means skip)."""
    combos: list[list[str]] = [[]]
    for g in groups:
        combos = [c + ([] if f == "1" else [f]) for c in combos for f in g]
    return ["*".join(c) if c else "1" for c in combos]
