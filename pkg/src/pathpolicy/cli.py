"""``pathpolicy`` command line.

Every command reads an optional JSON run description (``--config``); flags
override the matching config fields. Exit codes: 0 success, 2 usage or
configuration problems, 3 numerical or learner failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__, ident, oracle, specs
from .errors import (CardinalityOverflow, ConfigError, InterventionMismatch, NumericalError, PathPolicyError,
                     SpecError)
from .evalboot import CiReport, bootstrap_ci
from .policy import Policy, all_table_policies, threshold_class
from .policylearn import LEARNERS, Mode, ModelConfig, default_policy_class, fit, value_search
from .policylearn.value import ESTIMATORS
from .scm import Dataset, Intervention, ScmSpec, load_spec, simulate, simulate_counterfactual
from .studies import StudyConfig, headline, run_study

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3

# ---------------------------------------------------------------------------
# config schemas

_BIT = {"type": "integer", "enum": [0, 1]}
_COMMON = {
    "spec": {"type": ["string", "object"]},
    "data": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "n": {"type": "integer", "minimum": 1},
    "out": {"type": "string"},
}
_MODE = {
    "mode": {"enum": ["overall", "path"]},
    "reference": {"type": "array", "items": _BIT},
    "edges": {"anyOf": [{"const": "all-mediators"}, {"type": "array", "items": {"type": "string"}}]},
}
_MODEL = {
    "model_config": {"type": "object"},
    "estimator": {"enum": sorted(ESTIMATORS)},
    "first_stage": {"type": "boolean"},
}
_POLICY_CLASS = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["threshold", "table"]},
        "column": {"type": "string"},
        "cutoffs": {"type": "array", "items": {"type": "number"}},
        "direction": {"enum": ["lt", "ge"]},
        "columns": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_INTERVENTION = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["none", "node", "edge", "policy", "path_policy"]},
        "node": {"type": "object", "additionalProperties": _BIT},
        "edges": {"type": "object", "additionalProperties": _BIT},
        "policy": {"type": "object"},
        "reference": {"type": "array", "items": _BIT},
        "referenced": {"type": ["array", "null"], "items": {"type": "string"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_BOOT = {
    "type": "object",
    "properties": {"B": {"type": "integer", "minimum": 2}, "level": {"type": "number", "exclusiveMinimum": 0,
                                                                      "exclusiveMaximum": 1},
                   "seed": {"type": "integer", "minimum": 0}},
    "additionalProperties": False,
}


def _schema(**props) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMAS = {
    "simulate": _schema(**_COMMON, intervention=_INTERVENTION),
    "fit": _schema(**_COMMON, **_MODE, **_MODEL, learner={"type": "string"}, policy_class=_POLICY_CLASS),
    "search": _schema(**_COMMON, **_MODE, **_MODEL, policy_class=_POLICY_CLASS),
    "evaluate": _schema(**_COMMON, **_MODE, **_MODEL, policy={"type": ["object", "string"]},
                        intervention=_INTERVENTION, bootstrap=_BOOT),
    "study": _schema(name={"enum": list(specs.NAMES)}, n=_COMMON["n"], seed=_COMMON["seed"], out=_COMMON["out"],
                     B={"type": "integer", "minimum": 2}, level={"type": "number"},
                     learners={"type": "array", "items": {"type": "string"}}, reference=_MODE["reference"],
                     edges=_MODE["edges"], estimator=_MODEL["estimator"], model_config=_MODEL["model_config"]),
    "oracle": _schema(spec=_COMMON["spec"], out=_COMMON["out"], **_MODE, intervention=_INTERVENTION),
}


def load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "nodes" in cfg:
        # a bare model description stands for {"spec": ...}
        cfg = {"spec": cfg}
    validate_config(cfg, command, path)
    return cfg


def validate_config(cfg: dict, command: str, where: str = "config") -> None:
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "(top level)"
        raise ConfigError(f"{where}: {loc}: {e.message}") from None


# ---------------------------------------------------------------------------
# helpers

def _parse_bits(text: str) -> list[int]:
    try:
        bits = [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"--reference expects comma-separated 0/1 values, got {text!r}") from None
    if any(b not in (0, 1) for b in bits):
        raise ConfigError(f"--reference values must be 0 or 1, got {text!r}")
    return bits


def _parse_edges(text: str):
    if text == "all-mediators":
        return text
    return [x.strip() for x in text.split(",") if x.strip()]


def merge(cfg: dict, args: argparse.Namespace, command: str) -> dict:
    """Flags override config fields."""
    out = dict(cfg)
    for key in ("seed", "n", "out", "mode", "learner", "data", "name", "B", "estimator"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    if getattr(args, "reference", None) is not None:
        out["reference"] = _parse_bits(args.reference)
    if getattr(args, "edges", None) is not None:
        out["edges"] = _parse_edges(args.edges)
    if getattr(args, "spec", None) is not None:
        out["spec"] = args.spec
    if getattr(args, "first_stage", False):
        out["first_stage"] = True
    validate_config(out, command, "run description")
    return out


def resolve_spec(value) -> ScmSpec:
    if isinstance(value, dict):
        return load_spec(value)
    if value in specs.NAMES:
        return specs.packaged(value)
    if not os.path.exists(value):
        raise ConfigError(f"spec file not found: {value}")
    return load_spec(value)


def resolve_data(cfg: dict) -> Dataset:
    if "data" in cfg:
        if not os.path.exists(cfg["data"]):
            raise ConfigError(f"data file not found: {cfg['data']}")
        data = Dataset.from_csv(cfg["data"])
    elif "spec" in cfg:
        data = simulate(resolve_spec(cfg["spec"]), cfg.get("n", 1000), cfg.get("seed", 0))
    else:
        raise ConfigError("need a dataset (data) or a model to simulate from (spec)")
    if cfg.get("first_stage"):
        data = data.single_stage()
    return data


def resolve_mode(cfg: dict, layout) -> Mode:
    if cfg.get("mode", "overall") == "overall":
        return Mode.overall()
    ref = cfg.get("reference", [0] * layout.stages)
    edges = cfg.get("edges", "all-mediators")
    refd = None if edges == "all-mediators" else list(edges)
    if len(ref) != layout.stages:
        raise ConfigError(f"reference needs {layout.stages} values, got {len(ref)}")
    try:
        return Mode.path(ref, refd).check(layout)
    except (ValueError, InterventionMismatch) as e:
        raise ConfigError(str(e)) from None


def resolve_policy_class(cfg: dict, layout) -> list[Policy]:
    pc = cfg.get("policy_class")
    if pc is None:
        return default_policy_class(layout)
    if pc["kind"] == "threshold":
        cutoffs = pc.get("cutoffs", list(range(layout.baseline_card + 1)))
        return threshold_class(pc.get("column", "W0"), cutoffs, 1, pc.get("direction", "lt"))
    try:
        return all_table_policies(layout, pc.get("columns"))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def resolve_policy(value) -> Policy:
    if isinstance(value, str):
        if not os.path.exists(value):
            raise ConfigError(f"policy file not found: {value}")
        with open(value) as fh:
            value = json.load(fh)
    if "policy" in value and "stages" not in value:
        value = value["policy"]   # a FitResult JSON
    try:
        return Policy.from_dict(value)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"malformed policy: {e}") from None


def resolve_intervention(d: dict) -> Intervention:
    kind = d["kind"]
    if kind == "none":
        return Intervention.none()
    if kind == "node":
        return Intervention.nodes(d.get("node", {}))
    if kind == "edge":
        edges = {}
        for key, val in d.get("edges", {}).items():
            if "->" not in key:
                raise ConfigError(f"edge keys look like 'A1->W1', got {key!r}")
            s, t = key.split("->", 1)
            edges[(s.strip(), t.strip())] = val
        return Intervention.edge(edges)
    if "policy" not in d:
        raise ConfigError(f"{kind} intervention needs a policy")
    pol = resolve_policy(d["policy"])
    if kind == "policy":
        return Intervention.overall(pol)
    return Intervention.path(pol, d.get("reference", []), d.get("referenced"))


def _emit(text: str, path: str | None) -> None:
    if path:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: dict) -> int:
    if "spec" not in cfg:
        raise ConfigError("simulate needs a model (--config model.json, --spec or --name)")
    spec = resolve_spec(cfg["spec"])
    n, seed = cfg.get("n", 1000), cfg.get("seed", 0)
    if "intervention" in cfg:
        data = simulate_counterfactual(spec, resolve_intervention(cfg["intervention"]), n, seed)
    else:
        data = simulate(spec, n, seed)
    text = data.to_csv()
    if cfg.get("out"):
        _emit(text, cfg["out"])
    else:
        sys.stdout.write(text)
        return EXIT_OK
    print(f"wrote {data.n} rows to {cfg['out']}")
    for c in data.layout.vertices:
        col = data[c]
        print(f"  {c:<6} mean {float(np.mean(col)):.4f}  sd {float(np.std(col)):.4f}")
    return EXIT_OK


def cmd_fit(cfg: dict) -> int:
    learner = cfg.get("learner")
    if learner is None:
        raise ConfigError(f"fit needs a learner; valid learners: {', '.join(LEARNERS)}")
    if learner not in LEARNERS:
        raise ConfigError(f"unknown learner {learner!r}; valid learners: {', '.join(LEARNERS)}")
    data = resolve_data(cfg)
    mode = resolve_mode(cfg, data.layout)
    mc = ModelConfig.from_dict(cfg.get("model_config"))
    pc = resolve_policy_class(cfg, data.layout) if learner == "value_search" else None
    res = fit(learner, data, mode, mc, pc, cfg.get("estimator", "robust"))
    _emit(res.to_json(), cfg.get("out"))
    print(res.summary())
    return EXIT_OK


def cmd_search(cfg: dict) -> int:
    data = resolve_data(cfg)
    mode = resolve_mode(cfg, data.layout)
    mc = ModelConfig.from_dict(cfg.get("model_config"))
    res = value_search(data, resolve_policy_class(cfg, data.layout), cfg.get("estimator", "robust"), mode, mc)
    _emit(res.to_json(), cfg.get("out"))
    for k, c in enumerate(res.diagnostics["candidates"]):
        mark = "*" if k == res.diagnostics["selected_index"] else " "
        print(f"{mark} {c['policy']:<30} {c['value']:.4f}")
    print(res.summary())
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    if "policy" not in cfg and "intervention" not in cfg:
        raise ConfigError("evaluate needs a policy or an intervention")
    if "data" not in cfg and "n" not in cfg:
        # exact evaluation under the model
        if "spec" not in cfg:
            raise ConfigError("evaluate needs data or a model")
        spec = resolve_spec(cfg["spec"])
        if "intervention" in cfg:
            iv = resolve_intervention(cfg["intervention"])
        else:
            mode = resolve_mode(cfg, spec.layout)
            pol = resolve_policy(cfg["policy"])
            iv = Intervention.path(pol, mode.reference, mode.referenced) if mode.is_path \
                else Intervention.overall(pol)
        if cfg.get("bootstrap"):
            print("note: no data given; the exact value has no sampling error, bootstrap skipped", file=sys.stderr)
        val = ident.value(ident.spec_law(spec), iv)
        rep = {"exact": True, "value": val, "intervention": iv.describe(), "spec_hash": spec.hash()}
        _emit(_dump(rep), cfg.get("out"))
        print(f"exact value {val:.6f}")
        return EXIT_OK
    data = resolve_data(cfg)
    mode = resolve_mode(cfg, data.layout)
    pol = resolve_policy(cfg["policy"]) if "policy" in cfg else None
    if pol is None:
        raise ConfigError("evaluating on data needs a policy")
    mc = ModelConfig.from_dict(cfg.get("model_config"))
    est = ESTIMATORS[cfg.get("estimator", "robust")]
    boot = cfg.get("bootstrap")

    def estimator(d):
        return est(d, pol, mode, None, mc).value

    if boot:
        rep = bootstrap_ci(data, estimator, boot.get("B", 1000), boot.get("level", 0.95),
                           boot.get("seed", cfg.get("seed", 0)))
    else:
        rep = CiReport.exact(estimator(data))
    _emit(_dump({"exact": False, "mode": mode.to_dict(), "policy": pol.to_dict(), "report": rep.to_dict()}),
          cfg.get("out"))
    print(f"{pol.describe()} [{mode.label()}]: {rep.format(4) if rep.B else f'{rep.point:.4f}'}")
    return EXIT_OK


def cmd_study(cfg: dict) -> int:
    name = cfg.get("name", "toy1")
    kw = {k: cfg[k] for k in ("n", "B", "level", "seed", "learners", "estimator", "reference") if k in cfg}
    if "edges" in cfg and cfg["edges"] != "all-mediators":
        kw["referenced"] = list(cfg["edges"])
    if "model_config" in cfg:
        kw["model_config"] = ModelConfig.from_dict(cfg["model_config"])
    sc = StudyConfig(name=name, **kw)
    out = cfg.get("out") or os.path.join("study_out", f"{name}_seed{sc.seed}")
    res = run_study(sc, out)
    sys.stdout.write(headline(res))
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    if "spec" not in cfg:
        raise ConfigError("oracle needs a model (--config model.json, --spec or --name)")
    spec = resolve_spec(cfg["spec"])
    if "intervention" in cfg:
        iv = resolve_intervention(cfg["intervention"])
        recs = oracle.emit_golden(spec, [iv])
        _emit(_dump(recs), cfg.get("out"))
        print(f"exact value {recs[0]['value']:.10f} ({recs[0]['terms_enumerated']} terms)")
        return EXIT_OK
    mode = resolve_mode(cfg, spec.layout)
    if mode.is_path:
        pol, val = oracle.exact_optimal_policy(spec, "path", mode.reference, mode.referenced)
    else:
        pol, val = oracle.exact_optimal_policy(spec, "overall")
    rec = {"spec_hash": spec.hash(), "mode": mode.to_dict(), "policy": pol.to_dict(), "value": val,
           "observational_mean": oracle.exact_value(spec).value}
    _emit(_dump(rec), cfg.get("out"))
    print(f"optimal [{mode.label()}]: {pol.describe()}, value {val:.10f}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "search": cmd_search, "evaluate": cmd_evaluate,
            "study": cmd_study, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathpolicy", description="Path-specific and overall policy learning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True, sample=True):
        sp.add_argument("--config", help="JSON run description (or a bare model file)")
        sp.add_argument("--out", help="output path")
        if sample:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--n", type=int, help="rows to simulate")
        if model:
            sp.add_argument("--spec", help="model JSON file or packaged model name")
            sp.add_argument("--name", dest="spec_name", choices=specs.NAMES, help="packaged model")

    def mode_flags(sp, choose=True):
        if choose:
            sp.add_argument("--mode", choices=["overall", "path"])
        sp.add_argument("--reference", help="reference treatments a1,...,aK")
        sp.add_argument("--edges", help="'all-mediators' or comma-separated mediator components to reference")

    def model_flags(sp):
        sp.add_argument("--data", help="dataset CSV")
        sp.add_argument("--estimator", choices=sorted(ESTIMATORS))
        sp.add_argument("--first-stage", action="store_true", help="use the first-decision problem")

    sp = sub.add_parser("simulate", help="simulate observational or counterfactual data")
    common(sp)
    sp = sub.add_parser("fit", help="fit a learner")
    common(sp)
    mode_flags(sp)
    model_flags(sp)
    sp.add_argument("--learner", help=f"one of {', '.join(LEARNERS)}")
    sp = sub.add_parser("search", help="value search over a policy class")
    common(sp)
    mode_flags(sp)
    model_flags(sp)
    sp = sub.add_parser("evaluate", help="evaluate a policy (estimated on data, or exact under a model)")
    common(sp)
    mode_flags(sp)
    model_flags(sp)
    sp.add_argument("--policy", help="policy JSON file (a FitResult JSON also works)")
    sp.add_argument("--B", type=int, help="bootstrap replicates")
    sp = sub.add_parser("study", help="run a packaged synthetic study")
    common(sp, model=False)
    mode_flags(sp, choose=False)
    sp.add_argument("--name", choices=specs.NAMES)
    sp.add_argument("--B", type=int, help="bootstrap replicates")
    sp = sub.add_parser("oracle", help="exact values and optimal policies by enumeration")
    common(sp, sample=False)
    mode_flags(sp)
    return p


def _args_to_config(args, command: str) -> dict:
    cfg = load_config(args.config, command)
    if command != "study" and getattr(args, "spec_name", None):
        cfg["spec"] = args.spec_name
    if command == "evaluate":
        if args.policy:
            cfg["policy"] = args.policy
        if args.B is not None:
            cfg["bootstrap"] = dict(cfg.get("bootstrap", {}), B=args.B)
        args.B = None
    return merge(cfg, args, command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        cfg = _args_to_config(args, args.command)
        return COMMANDS[args.command](cfg)
    except (ConfigError, SpecError, InterventionMismatch, CardinalityOverflow) as e:
        print(f"pathpolicy {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"pathpolicy {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except PathPolicyError as e:
        print(f"pathpolicy {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        print(f"pathpolicy {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
