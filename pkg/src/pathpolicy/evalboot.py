"""Bootstrap confidence intervals and policy comparison tables."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ident
from .errors import ConfigError, PathPolicyError, ReplicateFailure
from .policy import Policy
from .policylearn import Mode, fit, value_robust
from .scm import Dataset, Intervention, ScmSpec, simulate

MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class CiReport:
    point: float
    lower: float
    upper: float
    level: float = 0.95
    B: int = 0
    seed: int = 0
    failures: int = 0
    # set when the percentile interval does not contain the point estimate
    flagged: bool = False

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return asdict(self)

    def format(self, digits: int = 2) -> str:
        return format_cell(self.point, self.lower, self.upper, digits)

    @classmethod
    def exact(cls, value: float) -> "CiReport":
        """A degenerate report for a value known without sampling error."""
        return cls(float(value), float(value), float(value), B=0)


def format_cell(point: float, lower: float | None = None, upper: float | None = None, digits: int = 2) -> str:
    """``6.89 (5.76, 7.10)``; just the point when no interval is given."""
    if lower is None or upper is None:
        return f"{point:.{digits}f}"
    return f"{point:.{digits}f} ({lower:.{digits}f}, {upper:.{digits}f})"


def worker_count(requested: int | None = None) -> int:
    """Thread count for replicates, capped by ``PATHPOLICY_THREADS``."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("PATHPOLICY_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigError(f"PATHPOLICY_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _nrows(data) -> int:
    if isinstance(data, Dataset):
        return data.n
    return len(data)


def _take(data, idx):
    if isinstance(data, Dataset):
        return data.take(idx)
    return np.asarray(data)[idx]


def replicate_seeds(seed: int, B: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(B)


def bootstrap_ci(data, estimator: Callable, B: int = 1000, level: float = 0.95, seed: int = 0,
                 threads: int | None = None) -> CiReport:
    """Nonparametric percentile bootstrap.

    ``estimator(data) -> float`` is rerun in full on each resample, so any
    nuisance fitting inside it is redone per replicate. Replicate ``b`` draws
    its row indices from the ``b``-th child of ``SeedSequence(seed)``; results
    are collected in replicate order, so threading does not change the output.
    Replicates that raise a library error or return a non-finite value are
    skipped and counted.
    """
    if B < 2:
        raise ConfigError("bootstrap needs B >= 2")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    n = _nrows(data)
    point = float(estimator(data))
    seeds = replicate_seeds(seed, B)

    def one(ss):
        idx = np.random.default_rng(ss).integers(0, n, size=n)
        try:
            v = float(estimator(_take(data, idx)))
        except (PathPolicyError, np.linalg.LinAlgError):
            return None
        return v if math.isfinite(v) else None

    workers = worker_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, seeds))
    else:
        results = [one(ss) for ss in seeds]
    reps = np.array([r for r in results if r is not None], dtype=float)
    failures = B - len(reps)
    if failures > MAX_FAILURE_FRACTION * B or len(reps) == 0:
        raise ReplicateFailure(f"{failures} of {B} bootstrap replicates failed")
    alpha = 1.0 - level
    lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2], method="inverted_cdf")
    lo, hi = float(lo), float(hi)
    return CiReport(point, lo, hi, level, B, seed, failures, not (lo <= point <= hi))


# ---------------------------------------------------------------------------
# comparison tables

@dataclass
class ComparisonTable:
    rows: list[str]
    columns: list[str]
    cells: dict = field(default_factory=dict)   # (row, column) -> CiReport
    notes: dict = field(default_factory=dict)

    def cell(self, row: str, column: str) -> CiReport | None:
        return self.cells.get((row, column))

    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.columns)

    def render_text(self, digits: int = 2) -> str:
        head = [""] + list(self.columns)
        body = []
        for r in self.rows:
            line = [r]
            for c in self.columns:
                rep = self.cells.get((r, c))
                if rep is None:
                    line.append("-")
                elif rep.B == 0:
                    line.append(format_cell(rep.point, digits=digits))
                else:
                    line.append(rep.format(digits))
            body.append(line)
        widths = [max(len(x[k]) for x in [head] + body) for k in range(len(head))]
        out = []
        for k, line in enumerate([head] + body):
            out.append("  ".join(s.ljust(widths[j]) if j == 0 else s.rjust(widths[j]) for j, s in enumerate(line)).rstrip())
            if k == 0:
                out.append("  ".join("-" * w for w in widths))
        return "\n".join(out) + "\n"

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "column", "point", "lower", "upper", "level", "B", "failures", "flagged"])
        for r in self.rows:
            for c in self.columns:
                rep = self.cells.get((r, c))
                if rep is None:
                    continue
                w.writerow([r, c, repr(rep.point), repr(rep.lower), repr(rep.upper), repr(rep.level), rep.B,
                            rep.failures, int(rep.flagged)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _exact_value(spec: ScmSpec, policy: Policy, evaluator) -> float:
    law = ident.spec_law(spec)
    mode = evaluator if isinstance(evaluator, Mode) else None
    if mode is not None and mode.is_path:
        return ident.path_policy_value(law, Intervention.path(policy, mode.reference, mode.referenced))
    return ident.g_value(law, policy)


def _label(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, Policy):
        return x.label or x.describe()
    if hasattr(x, "label") and callable(x.label):
        return x.label()
    return getattr(x, "label", None) or repr(x)


def compare_policies(data_or_spec, policies: Sequence, evaluators: Sequence, *, B: int = 0, level: float = 0.95,
                     seed: int = 0, n: int | None = None, observational: bool = True,
                     row_names: Sequence[str] | None = None, column_names: Sequence[str] | None = None,
                     threads: int | None = None) -> ComparisonTable:
    """Grid of values: one row per policy or learner, one column per evaluator.

    A row entry is a fixed :class:`Policy` or a callable ``row(data, evaluator)
    -> float`` (typically a learner pipeline that refits and returns its value
    estimate). An evaluator is a :class:`Mode` or a callable ``(data, policy)
    -> float``. On a dataset every cell gets a percentile bootstrap interval
    when ``B >= 2``; on a spec, fixed policies are valued exactly and
    learners need ``n`` to simulate a dataset first. The last row holds the
    observational mean of the outcome.
    """
    rows = list(row_names) if row_names is not None else [_label(p) if not callable(p) or isinstance(p, Policy)
                                                          else getattr(p, "__name__", f"row{k}")
                                                          for k, p in enumerate(policies)]
    cols = list(column_names) if column_names is not None else [_label(e) for e in evaluators]
    if len(rows) != len(policies) or len(cols) != len(evaluators):
        raise ConfigError("row/column names do not match the policies/evaluators")
    table = ComparisonTable(rows, cols)
    spec = data_or_spec if isinstance(data_or_spec, ScmSpec) else None
    data = data_or_spec if isinstance(data_or_spec, Dataset) else None
    if spec is not None and n is not None:
        data = simulate(spec, n, seed)
        table.notes["simulated"] = {"n": n, "seed": seed, "spec": spec.hash()}

    def cell_fn(p, e):
        if isinstance(p, Policy):
            if isinstance(e, Mode):
                return lambda d: value_robust(d, p, e).value
            return lambda d: float(e(d, p))
        return lambda d: float(p(d, e))

    for r, (name, p) in enumerate(zip(rows, policies)):
        for c, (cname, e) in enumerate(zip(cols, evaluators)):
            if data is None:
                if spec is None or not isinstance(p, Policy):
                    raise ConfigError("learner rows need a dataset; pass n to simulate from the model")
                table.cells[(name, cname)] = CiReport.exact(_exact_value(spec, p, e))
                continue
            fn = cell_fn(p, e)
            sub = int(np.random.SeedSequence([seed, r, c]).generate_state(1)[0])
            if B >= 2:
                table.cells[(name, cname)] = bootstrap_ci(data, fn, B, level, sub, threads)
            else:
                table.cells[(name, cname)] = CiReport.exact(fn(data))
    if observational:
        obs = "observational"
        table.rows.append(obs)
        if data is None:
            rep = CiReport.exact(ident.value(ident.spec_law(spec), Intervention.none()))
        elif B >= 2:
            sub = int(np.random.SeedSequence([seed, len(policies)]).generate_state(1)[0])
            rep = bootstrap_ci(data, lambda d: float(np.mean(d.outcome)), B, level, sub, threads)
        else:
            rep = CiReport.exact(float(np.mean(data.outcome)))
        for cname in cols:
            table.cells[(obs, cname)] = rep
    return table


def learner_pipeline(learner: str, config=None, policy_class=None, estimator: str = "robust") -> Callable:
    """``row(data, mode) -> value`` that refits ``learner`` and returns its value estimate."""
    def row(data, mode):
        return fit(learner, data, mode, config, policy_class, estimator).value_estimate

    row.__name__ = learner
    return row


__all__ = ["CiReport", "ComparisonTable", "bootstrap_ci", "compare_policies", "format_cell", "learner_pipeline",
           "replicate_seeds", "worker_count"]
