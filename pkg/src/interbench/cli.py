"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 one or more runs diverged
(everything else succeeded), 4 unreadable or corrupt data file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import warnings
from pathlib import Path

from .datagen import SyntheticSpec, default_spec, generate, read_dataset, write_dataset
from .errors import ConfigError, DataError
from .harness import (
    BASELINE_STD_THRESHOLD,
    ExperimentConfig,
    MetricsReport,
    apply_baseline,
    join_reports,
    read_json_reports,
    reproducibility,
    run_sweep,
    to_csv,
    to_markdown,
    write_reports,
    write_repro,
)
from .model import ModelConfig, RunConfig
from .presets import PRESETS, expand_sweep, get_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_DATA = 4

EXPERIMENT_KEYS = {"dataset", "data_seed", "model", "preset", "run", "baseline", "budget_bytes", "output", "name"}


# ---------------------------------------------------------------- helpers


def _budget(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get("IB_BUDGET_BYTES")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"IB_BUDGET_BYTES must be an integer, got {env!r}") from None
    return None


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds: expected '0,1,2' or '0..4', got {text!r}") from None


def load_spec(path: str | None) -> SyntheticSpec:
    if path is None:
        return default_spec()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec file {path}: {exc}") from None
    try:
        spec = SyntheticSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed spec file {path}: {exc}") from None
    return spec.validate()


def _load_dataset(source, seed: int):
    """``source`` is a dataset path, an inline spec dict, or None for the default spec."""
    if isinstance(source, str):
        return read_dataset(source)
    spec = default_spec() if source is None else SyntheticSpec.from_dict(source).validate()
    return generate(spec, seed)


@dataclasses.dataclass
class ExperimentFile:
    experiments: list[ExperimentConfig]
    seeds: list[int]
    dataset: object
    data_seed: int
    baseline: str | None
    output: str | None


def parse_experiment_file(path: str, overrides: argparse.Namespace | None = None) -> ExperimentFile:
    """Parse and validate, collecting every problem before raising."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment file {path}: {exc}") from None
    errs: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError("experiment file must hold a JSON object")
    unknown = sorted(set(doc) - EXPERIMENT_KEYS)
    if unknown:
        errs.append(f"unknown experiment field(s): {', '.join(unknown)}")
    if ("model" in doc) == ("preset" in doc):
        errs.append("exactly one of 'model' or 'preset' is required")
    if "dataset" not in doc:
        errs.append("'dataset' is required (a dataset path or an inline spec object)")
    elif not isinstance(doc["dataset"], (str, dict)):
        errs.append("'dataset' must be a path string or an inline spec object")
    elif isinstance(doc["dataset"], dict):
        try:
            errs += SyntheticSpec.from_dict(doc["dataset"]).problems()
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"dataset spec: {exc}")
    run = dict(doc.get("run", {}))
    seeds = run.pop("seeds", None)
    unknown_run = sorted(set(run) - {"steps", "batch_size", "seed"})
    if unknown_run:
        errs.append(f"unknown run field(s): {', '.join(unknown_run)}")
        run = {k: v for k, v in run.items() if k not in unknown_run}
    if seeds is None:
        seeds = [run.get("seed", 0)]
    run_cfg = RunConfig(**run)
    model = None
    name = doc.get("name")
    try:
        if "preset" in doc:
            preset = get_preset(doc["preset"])
            name = name or preset.name
            model = preset.model_config()
        elif "model" in doc:
            model = ModelConfig.from_dict(doc["model"])
            name = name or "custom"
    except (ConfigError, KeyError, TypeError) as exc:
        errs.append(f"model: {exc}")
    baseline = doc.get("baseline")
    if isinstance(baseline, str) and baseline not in ("self",) and baseline not in PRESETS and not Path(baseline).exists():
        errs.append(f"baseline {baseline!r} is neither 'self', a preset, nor an existing report file")
    budget = doc.get("budget_bytes")
    if overrides is not None:
        budget = overrides.budget_bytes if overrides.budget_bytes is not None else budget
        if overrides.seeds:
            seeds = _parse_seeds(overrides.seeds)
        if getattr(overrides, "precision", None) and model is not None:
            model.precision = overrides.precision
    budget = _budget(budget)
    if budget is None:
        errs.append("budget_bytes unset (experiment file, --budget-bytes or IB_BUDGET_BYTES)")
    exps = []
    if model is not None:
        for s in seeds:
            exp = ExperimentConfig(name, model, dataclasses.replace(run_cfg, seed=s), budget,
                                   baseline="self" if baseline == "self" else baseline)
            exps.append(exp)
        errs += exps[0].problems() if exps else []
    if errs:
        raise ConfigError("invalid experiment file:\n  " + "\n  ".join(errs))
    return ExperimentFile(exps, seeds, doc["dataset"], int(doc.get("data_seed", 0)), baseline, doc.get("output"))


def _resolve_baseline(baseline, template: ExperimentConfig):
    """Return an ExperimentConfig, a MetricsReport, or None."""
    if baseline in (None, "none", "self"):
        return None
    if baseline in PRESETS:
        p = PRESETS[baseline]
        return dataclasses.replace(template, name=p.name, model=p.model_config(precision=template.model.precision),
                                   hyperparams=dict(p.hyperparams), baseline=None)
    try:
        reports, _ = read_json_reports(baseline)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read baseline report {baseline}: {exc}") from None
    if not reports:
        raise ConfigError(f"baseline report {baseline} holds no rows")
    return reports[0]


def _finish(reports: list[MetricsReport], configs: list[dict], out: str | None) -> int:
    if out:
        for p in write_reports(out, reports, configs):
            print(f"wrote {p}")
    print(to_markdown(reports), end="")
    return EXIT_DIVERGED if any(r.diverged for r in reports) else EXIT_OK


# ---------------------------------------------------------------- commands


def cmd_generate_data(args) -> int:
    spec = load_spec(args.spec)
    ds = generate(spec, args.seed)
    write_dataset(args.out, ds)
    print(f"wrote {args.out}: {len(ds)} rows, spec {spec.spec_hash()[:12]}, oracle AUC {ds.meta.get('oracle_auc_save')}")
    return EXIT_OK


def _bench_experiments(args) -> tuple[list[ExperimentConfig], object, int, str | None, str | None]:
    if args.experiment:
        ef = parse_experiment_file(args.experiment, args)
        return ef.experiments, ef.dataset, ef.data_seed, args.baseline or ef.baseline, args.out or ef.output
    if not (args.preset or args.sweep):
        raise ConfigError("bench needs an experiment file, --preset or --sweep")
    names = []
    if args.preset:
        names += [n.strip() for n in args.preset.split(",") if n.strip()]
    if args.sweep:
        names += expand_sweep(args.sweep)
    errs = [f"unknown preset {n!r}" for n in names if n not in PRESETS]
    budget = _budget(args.budget_bytes)
    if budget is None:
        errs.append("memory budget unset: pass --budget-bytes or set IB_BUDGET_BYTES")
    seeds = _parse_seeds(args.seeds) or [0]
    if errs:
        raise ConfigError("invalid bench request:\n  " + "\n  ".join(errs))
    exps = []
    for n in names:
        p = PRESETS[n]
        for s in seeds:
            exps.append(ExperimentConfig(
                n, p.model_config(precision=args.precision), RunConfig(args.steps, args.batch_size, s), budget,
                hyperparams=dict(p.hyperparams), latency_batch=args.latency_batch, latency_reps=args.latency_reps,
                hit_mode=args.hit_mode,
            ))
    problems = [e for exp in exps for e in exp.problems()]
    if problems:
        raise ConfigError("invalid bench request:\n  " + "\n  ".join(problems))
    return exps, args.data, args.data_seed, args.baseline, args.out


def cmd_bench(args) -> int:
    exps, source, data_seed, baseline, out = _bench_experiments(args)
    dataset = _load_dataset(source, data_seed)
    if baseline == "self":
        exps = [dataclasses.replace(e, baseline="self") for e in exps]
    in_sweep = baseline in PRESETS and any(e.name == baseline for e in exps)
    base = None if in_sweep else _resolve_baseline(baseline, exps[0])
    reports, _ = run_sweep(exps, dataset, base, workers=args.threads)
    if in_sweep:
        ref = next(r for r in reports if r.name == baseline)
        for r in reports:
            apply_baseline(r, ref)
    return _finish(reports, [e.to_dict() for e in exps], out)


def cmd_train(args) -> int:
    return cmd_bench(args)


def cmd_repro(args) -> int:
    if args.experiment:
        ef = parse_experiment_file(args.experiment, args)
        exps = ef.experiments[:1]
        seeds = ef.seeds
        source, data_seed = ef.dataset, ef.data_seed
    else:
        if not (args.preset or args.sweep):
            raise ConfigError("repro needs an experiment file, --preset or --sweep")
        names = []
        if args.preset:
            names += [n.strip() for n in args.preset.split(",") if n.strip()]
        if args.sweep:
            names += expand_sweep(args.sweep)
        for n in names:
            get_preset(n)
        seeds = _parse_seeds(args.seeds) or [0, 1, 2, 3, 4]
        exps = [
            ExperimentConfig(n, PRESETS[n].model_config(precision=args.precision),
                             RunConfig(args.steps, args.batch_size, 0), hyperparams=dict(PRESETS[n].hyperparams),
                             hit_mode=args.hit_mode)
            for n in names
        ]
        source, data_seed = args.data, args.data_seed
    if len(seeds) < 3:
        raise ConfigError(f"repro needs at least 3 seeds, got {len(seeds)}")
    dataset = _load_dataset(source, data_seed)
    reps = []
    baseline_std = None
    baseline = args.baseline if args.baseline is not None else "baseline-dcnv2x4"
    if baseline not in ("none", "self"):
        get_preset(baseline)
        already = [e for e in exps if e.name == baseline]
        if not already:
            bexp = ExperimentConfig(baseline, PRESETS[baseline].model_config(precision=args.precision),
                                    exps[0].run, hit_mode=exps[0].hit_mode)
            reps.append(reproducibility(bexp, dataset, seeds))
            baseline_std = reps[-1].std_dev
        else:
            exps = already + [e for e in exps if e.name != baseline]
    for exp in exps:
        rep = reproducibility(exp, dataset, seeds, baseline_std=baseline_std)
        if exp.name == baseline:
            baseline_std = rep.std_dev
        reps.append(rep)
    out = args.out or "repro"
    for p in write_repro(out, reps):
        print(f"wrote {p}")
    for r in reps:
        print(f"{r.name}: mean={r.mean} std={r.std_dev} excluded={r.excluded_seeds} "
              f"below_threshold({BASELINE_STD_THRESHOLD})={r.below_threshold} flagged={r.flagged}")
    return EXIT_DIVERGED if any(r.excluded_seeds for r in reps) else EXIT_OK


def cmd_report(args) -> int:
    reports, configs = join_reports(args.reports)
    if args.out:
        for p in write_reports(args.out, reports, configs):
            print(f"wrote {p}")
    print(to_markdown(reports) if args.format == "md" else to_csv(reports), end="")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("experiment", nargs="?", help="experiment JSON file")
    p.add_argument("--preset", help="preset name (comma-separated for several)")
    p.add_argument("--sweep", help="sweep such as stack-d5..d8, gdcn-3..6 or table1")
    p.add_argument("--seeds", help="seed list '0,1,2' or range '0..4'")
    p.add_argument("--budget-bytes", type=int, default=None, help="memory budget (fallback: IB_BUDGET_BYTES)")
    p.add_argument("--out", help="output path stem for report files")
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the training phases of a sweep")
    p.add_argument("--data", help="dataset file (default: generate the default spec)")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--baseline", help="'self', a preset name, a report JSON, or 'none'")
    p.add_argument("--hit-mode", choices=("per-session", "global-ratio", "capped"), default="per-session")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interbench", description="Feature-interaction benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="generate a synthetic dataset file")
    g.add_argument("--spec", help="SyntheticSpec JSON (default: built-in planted spec)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_data)

    for name, func, text in (
        ("train", cmd_train, "train and evaluate an experiment"),
        ("bench", cmd_bench, "run presets or sweeps and emit report tables"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--latency-batch", type=int, default=1024)
        p.add_argument("--latency-reps", type=int, default=100)
        p.set_defaults(func=func)

    r = sub.add_parser("repro", help="seed-to-seed std-dev of HIT@3/save")
    _common(r)
    r.set_defaults(func=cmd_repro)

    j = sub.add_parser("report", help="join JSON reports into one table")
    j.add_argument("reports", nargs="+")
    j.add_argument("--out")
    j.add_argument("--format", choices=("md", "csv"), default="md")
    j.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
