"""Packaged synthetic studies: simulate, fit every learner in both modes, bootstrap, compare.

A study writes its outputs into one directory:

- ``data.csv``: the simulated observational sample
- ``fits/<learner>_<mode>.json``: one FitResult per learner and mode, written as soon as it exists
- ``table.csv`` and ``table.txt``: the comparison grid with bootstrap intervals
- ``golden.json``: oracle values (optimal policies, the learned policies' true values, observational mean)
- ``study.json``: the resolved run description and the study checks

Nothing in the outputs depends on wall-clock time or thread count, so two
runs with the same configuration produce identical files.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from . import oracle, specs
from .errors import ConfigError
from .evalboot import ComparisonTable, compare_policies
from .policy import Policy, ThresholdRule
from .policylearn import LEARNERS, Mode, ModelConfig, default_policy_class, fit
from .scm import Dataset, Intervention, ScmSpec, simulate

STAGEWISE = ("value_search", "gest")   # learners run on the first-stage problem when K > 1


@dataclass
class StudyConfig:
    name: str = "toy1"
    n: int = 5000
    B: int = 200
    level: float = 0.95
    seed: int = 7
    reference: list | None = None       # default: 0 at every stage
    referenced: list | None = None      # default: every mediator component
    learners: list = field(default_factory=lambda: list(LEARNERS))
    estimator: str = "robust"
    model_config: ModelConfig = field(default_factory=ModelConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model_config"] = self.model_config.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "StudyConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown study settings: {', '.join(sorted(unknown))}")
        if "model_config" in d:
            d["model_config"] = ModelConfig.from_dict(d["model_config"])
        return cls(**d)


@dataclass
class StudyResult:
    config: StudyConfig
    spec: ScmSpec
    data: Dataset
    fits: dict
    table: ComparisonTable
    golden: dict
    checks: dict


def _stage_mode(mode: Mode, data: Dataset) -> Mode:
    """Restrict a mode to the first decision."""
    if not mode.is_path:
        return mode
    m1 = set(data.layout.m(1))
    refd = None if mode.referenced is None else [m for m in mode.referenced if m in m1]
    return Mode.path([mode.reference[0]], refd)


def _runner(learner: str, cfg: StudyConfig):
    """``row(data, mode)`` refitting the learner; stagewise learners see the first-stage problem."""

    def prepare(data: Dataset, mode: Mode):
        if data.layout.stages > 1 and learner in STAGEWISE:
            d = data.single_stage()
            return d, _stage_mode(mode, data)
        return data, mode

    def run(data: Dataset, mode: Mode):
        d, m = prepare(data, mode)
        cls = default_policy_class(d.layout) if learner == "value_search" else None
        return fit(learner, d, m, cfg.model_config, cls, cfg.estimator)

    def row(data, mode):
        return run(data, mode).value_estimate

    row.__name__ = learner
    row.run = run
    return row


def row_label(learner: str, stages: int) -> str:
    return f"{learner} (stage 1)" if stages > 1 and learner in STAGEWISE else learner


def _mode_key(mode: Mode) -> str:
    return "path" if mode.is_path else "overall"


def _threshold(policy: Policy):
    r = policy.rule(1)
    return r.cutoff if isinstance(r, ThresholdRule) else None


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_study(config: StudyConfig | None = None, out_dir: str | None = None, spec: ScmSpec | None = None,
              threads: int | None = None) -> StudyResult:
    cfg = config or StudyConfig()
    spec = spec or specs.packaged(cfg.name)
    lay = spec.layout
    ref = list(cfg.reference) if cfg.reference is not None else [0] * lay.stages
    modes = [Mode.path(ref, cfg.referenced).check(lay), Mode.overall()]
    unknown = [x for x in cfg.learners if x not in LEARNERS]
    if unknown:
        raise ConfigError(f"unknown learner {unknown[0]!r}; valid learners: {', '.join(LEARNERS)}")
    if out_dir:
        os.makedirs(os.path.join(out_dir, "fits"), exist_ok=True)
        _write(os.path.join(out_dir, "study.json"), _dump({"config": cfg.to_dict(), "spec_hash": spec.hash()}))
    data = simulate(spec, cfg.n, cfg.seed)
    if out_dir:
        data.to_csv(os.path.join(out_dir, "data.csv"))

    runners = [_runner(x, cfg) for x in cfg.learners]
    fits = {}
    for learner, row in zip(cfg.learners, runners):
        for mode in modes:
            res = row.run(data, mode)
            fits[(learner, _mode_key(mode))] = res
            if out_dir:
                _write(os.path.join(out_dir, "fits", f"{learner}_{_mode_key(mode)}.json"), res.to_json())

    table = compare_policies(data, runners, modes, B=cfg.B, level=cfg.level, seed=cfg.seed,
                             row_names=[row_label(x, lay.stages) for x in cfg.learners], column_names=[_mode_key(m) for m in modes],
                             threads=threads)
    golden = study_golden(spec, modes, fits)
    checks = study_checks(table, fits, golden, lay.stages)
    if out_dir:
        table.to_csv(os.path.join(out_dir, "table.csv"))
        _write(os.path.join(out_dir, "table.txt"), table.render_text())
        _write(os.path.join(out_dir, "golden.json"), _dump(golden))
        _write(os.path.join(out_dir, "study.json"),
               _dump({"config": cfg.to_dict(), "spec_hash": spec.hash(), "checks": checks}))
    return StudyResult(cfg, spec, data, fits, table, golden, checks)


def study_golden(spec: ScmSpec, modes, fits: dict) -> dict:
    """Oracle values for the study: optimal policies, learned policies' true values, observational mean."""
    out = {"spec_hash": spec.hash(), "observational_mean": oracle.exact_value(spec).value, "optimal": {},
           "learned": {}}
    for mode in modes:
        key = _mode_key(mode)
        if mode.is_path:
            pol, val = oracle.exact_optimal_policy(spec, "path", mode.reference, mode.referenced)
        else:
            pol, val = oracle.exact_optimal_policy(spec, "overall")
        out["optimal"][key] = {"policy": pol.to_dict(), "summary": pol.describe(), "value": val}
    for (learner, key), res in sorted(fits.items()):
        if res.policy.stages != spec.layout.stages:
            # first-stage fits answer a different problem; no full-model value to report
            continue
        mode = res.mode
        iv = Intervention.path(res.policy, mode.reference, mode.referenced) if mode.is_path \
            else Intervention.overall(res.policy)
        out["learned"].setdefault(learner, {})[key] = oracle.exact_value(spec, iv).value
    return out


def study_checks(table: ComparisonTable, fits: dict, golden: dict, stages: int = 1) -> dict:
    """Direction checks comparing path and overall results."""
    obs = table.cell("observational", "path").point
    checks = {"observational_mean_estimate": obs, "rows": {}}
    for (learner, key), res in sorted(fits.items()):
        if key != "path":
            continue
        other = fits.get((learner, "overall"))
        if other is None:
            continue
        label = row_label(learner, stages)
        p, o = table.cell(label, "path"), table.cell(label, "overall")
        width = (p.upper - p.lower) if p.B else 0.0
        row = {"path_value": p.point, "overall_value": o.point,
               "path_ge_overall_within_ci": bool(p.point >= o.point - width),
               "both_exceed_observational": bool(p.point > obs and o.point > obs)}
        tp, to = _threshold(res.policy), _threshold(other.policy)
        if tp is not None and to is not None:
            row["path_threshold"] = tp
            row["overall_threshold"] = to
            row["path_threshold_ge_overall"] = bool(tp >= to)
        checks["rows"][learner] = row
    checks["oracle_path_ge_overall"] = bool(
        golden["optimal"]["path"]["value"] >= golden["optimal"]["overall"]["value"])
    return checks


def headline(result: StudyResult) -> str:
    lines = [f"study {result.config.name}: n={result.config.n}, B={result.config.B}, seed={result.config.seed}",
             result.table.render_text().rstrip("\n")]
    opt = result.golden["optimal"]
    lines.append("oracle optimum: " + ", ".join(f"{k} {v['value']:.4f} ({v['summary']})" for k, v in opt.items()))
    return "\n".join(lines) + "\n"

