"""Command-line runner: named experiment presets, config files, output
directories."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import typing
from typing import Any, Optional, Sequence, Union

from . import engine, theory
from .adversary import AdversaryConfig
from .engine import ConfigError, ExperimentConfig

FULL_SCALE_N = 16384

BASELINE_TRIO = ("honeybee", "gossipsub", "kademlia")

# name -> (base config fields, sweep axes).  A sweep axis overridden on the
# command line collapses to the given value.
PRESETS: dict[str, tuple[dict, dict]] = {
    "uniformity": (
        {"horizon_epochs": 20000},
        {"protocol": ("honeybee", "kademlia", "gossipsub"), "f": (0.0,)},
    ),
    "attack-single": (
        {"horizon_epochs": 1000},
        {"protocol": BASELINE_TRIO, "f": (0.1, 0.3, 0.5)},
    ),
    "attack-all": (
        {"horizon_epochs": 1000, "victims": "all_honest"},
        {"protocol": BASELINE_TRIO, "f": (0.5,)},
    ),
    "bad-start": (
        {"horizon_epochs": 200, "bad_start": 0.875},
        {"protocol": ("honeybee",), "f": (0.5,)},
    ),
    "ablation": (
        {"horizon_epochs": 1000},
        {"protocol": ("honeybee", "honeybee_no_vrw", "honeybee_no_tcc"), "f": (0.3,)},
    ),
    "cluster": (
        {"horizon_epochs": 1000, "layout": "clustered", "victim_honest_slots": 1},
        {"protocol": ("honeybee",), "f": (0.5,)},
    ),
    "theory": ({}, {}),
}

OVERRIDE_KEYS = ("seed", "n", "f", "protocol", "epochs")


def preset_configs(name: str, overrides: Optional[dict] = None) -> list[tuple[str, ExperimentConfig]]:
    """Expand a preset into tagged configs, one per sweep point."""
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    if name == "theory":
        return []
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(OVERRIDE_KEYS))
    if unknown:
        raise ConfigError([f"{k}: not a preset override" for k in unknown])
    base, axes = PRESETS[name]
    protocols = (overrides["protocol"],) if "protocol" in overrides else axes["protocol"]
    fractions = (overrides["f"],) if "f" in overrides else axes["f"]
    out = []
    for f in fractions:
        for p in protocols:
            doc = _config_doc(base, p, f, overrides)
            cfg = validate_config(doc)
            if isinstance(cfg, list):
                raise ConfigError(cfg)
            out.append((f"{p}_f{f:g}", cfg))
    return out


def _config_doc(base: dict, protocol: str, f: float, overrides: dict) -> dict:
    adv = {"fraction": f}
    doc: dict[str, Any] = {"protocol": protocol, "adversary": adv}
    for key, val in base.items():
        if key in ("victims", "layout"):
            adv[key] = val
        else:
            doc[key] = val
    if "epochs" in overrides:
        doc["horizon_epochs"] = overrides["epochs"]
    for key in ("seed", "n"):
        if key in overrides:
            doc[key] = overrides[key]
    return doc


# --------------------------------------------------------------------------
# validation


def _accepts(tp, value) -> bool:
    if tp is Any:
        return True
    origin = typing.get_origin(tp)
    if origin is Union:
        return any(_accepts(a, value) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is str:
        return isinstance(value, str)
    if origin is tuple:
        return isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)
    return True


def _type_errors(cls, doc: dict, prefix: str = "") -> list[str]:
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    errs = [f"{prefix}{k}: unknown field" for k in sorted(set(doc) - known)]
    for k in sorted(set(doc) & known):
        if k == "adversary":
            continue
        if not _accepts(hints[k], doc[k]):
            errs.append(f"{prefix}{k}: wrong type {type(doc[k]).__name__}")
    return errs


def validate_config(document: dict) -> Union[ExperimentConfig, list[str]]:
    """An ``ExperimentConfig`` built from a JSON-style document, or every
    problem found, each naming its field."""
    if not isinstance(document, dict):
        return ["config: expected a JSON object"]
    errs = _type_errors(ExperimentConfig, document)
    adv = document.get("adversary", {})
    if adv is None:
        adv = {}
    if not isinstance(adv, dict):
        errs.append("adversary: expected an object")
        adv = {}
    else:
        errs += _type_errors(AdversaryConfig, adv, "adversary.")
    if errs:
        return errs
    cfg = ExperimentConfig.from_dict({**document, "adversary": adv})
    errs = cfg.errors()
    return errs if errs else cfg


# --------------------------------------------------------------------------
# running


def _headline(summary: dict) -> dict:
    keys = ("protocol", "fraction", "seed", "epochs", "victim_ratio_mean", "victim_ratio_final",
            "victim_eclipsed_epochs", "mean_ratio", "eclipsed_final", "eclipsed_cumulative",
            "eclipsed_fraction", "valid_proofs", "slashed", "slashed_honest")
    head = {k: summary[k] for k in keys if k in summary}
    uni = summary.get("uniformity", {})
    rej = [v["rejections"] for v in uni.values() if isinstance(v, dict) and "rejections" in v]
    if rej:
        head["chi_square_rejections"] = rej
    if "mean_tvd_checkpoints" in uni:
        head["mean_tvd_checkpoints"] = uni["mean_tvd_checkpoints"]
    return head


def _warn_scale(configs: Sequence[ExperimentConfig], err) -> None:
    if any(c.n >= FULL_SCALE_N for c in configs):
        print(f"warning: n >= {FULL_SCALE_N} runs at full scale; expect hours per run "
              "and several GB of memory", file=err)


def run_preset(name: str, overrides: Optional[dict] = None, out_dir: str = "out",
               workers: int = 1, out=None, err=None) -> int:
    """Run a preset and write its artifacts under ``out_dir``.  Returns the
    process exit status."""
    out, err = out or sys.stdout, err or sys.stderr
    try:
        runs = preset_configs(name, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=err)
        return 2
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out_dir}: {exc}", file=err)
        return 2
    if name == "theory":
        seed = int((overrides or {}).get("seed", 0))
        return _run_theory(seed, out_dir, out, err)
    return _run_configs(runs, out_dir, workers, out, err, preset=name)


def _run_theory(seed: int, out_dir: str, out, err) -> int:
    rows = theory.theory_checks(seed)
    with open(os.path.join(out_dir, "theory.csv"), "w", newline="") as fh:
        fh.write(theory.checks_csv(rows))
    worst = max(abs(r.z) for r in rows)
    summary = {"preset": "theory", "seed": seed, "checks": len(rows), "max_abs_z": worst,
               "passed": bool(worst < 3)}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"{r.check:26s} {r.params:22s} formula={r.formula:.6g} oracle={r.oracle:.6g} |z|={abs(r.z):.2f}",
              file=out)
    if worst >= 3:
        print(f"error: a theory check deviates by |z|={worst:.2f}", file=err)
        return 1
    return 0


def _run_configs(runs, out_dir: str, workers: int, out, err, preset: Optional[str] = None) -> int:
    configs = [c for _, c in runs]
    _warn_scale(configs, err)
    start = time.time()
    try:
        bundles = engine.run_many(configs, workers)
    except Exception as exc:  # report, do not dump a trace at the user
        print(f"error: run failed: {exc}", file=err)
        return 1
    table = []
    for (tag, _), b in zip(runs, bundles):
        b.write(os.path.join(out_dir, tag))
        head = _headline(b.summary)
        head["run"] = tag
        table.append(head)
        print(json.dumps(engine._clean(head), sort_keys=True), file=out)
    summary = {"preset": preset, "runs": table, "seconds": round(time.time() - start, 1)}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(json.dumps(engine._clean(summary), indent=2, sort_keys=True) + "\n")
    return 0


def run_config_file(path: str, overrides: dict, out_dir: str, workers: int = 1,
                    out=None, err=None) -> int:
    """Run one experiment described by a JSON file, with flag overrides on
    top."""
    out, err = out or sys.stdout, err or sys.stderr
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=err)
        return 2
    if isinstance(doc, dict):
        doc = dict(doc)
        adv = dict(doc.get("adversary") or {})
        if "f" in overrides:
            adv["fraction"] = overrides["f"]
        doc["adversary"] = adv
        for flag, field in (("seed", "seed"), ("n", "n"), ("protocol", "protocol"), ("epochs", "horizon_epochs")):
            if flag in overrides:
                doc[field] = overrides[flag]
    cfg = validate_config(doc)
    if isinstance(cfg, list):
        print("error: invalid config:\n  " + "\n  ".join(cfg), file=err)
        return 2
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out_dir}: {exc}", file=err)
        return 2
    return _run_configs([("run", cfg)], out_dir, workers, out, err)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="honeysim", description="Peer-sampling attack and uniformity experiments.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=float, help="dishonest fraction")
    p.add_argument("--protocol", choices=engine.PROTOCOLS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel runs; results do not depend on this")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS if getattr(args, k) is not None}
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    if args.config:
        return run_config_file(args.config, overrides, args.out, args.workers)
    return run_preset(args.preset, overrides, args.out, args.workers)
