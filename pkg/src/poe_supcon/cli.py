"""Command-line entry point.

Subcommands: ``synth`` (generate a synthetic corpus), ``train`` (cross-
validated run -> report + checkpoints), ``eval`` (inspect a report),
``ablate`` (the {concat,poe} x {+-CL} x {+-IE} grid), ``gradcheck``
(finite-difference verification), ``convert`` (CSV -> binary containers).

Config files (JSON or TOML) provide defaults; flags of the same name win.
Exit codes: 0 success, 1 verification failure, 2 input error. The
POE_SUPCON_JOBS environment variable mirrors ``--jobs``.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .dataset import DatasetError, import_csv, load_dataset, write_dataset
from .evaluation import (SUBGROUP_NAMES, disparity, report_from_json,
                         report_to_json, write_fold_uar_tsv, write_report_csv)
from .gradcheck import FAIL_THRESHOLD, run_gradient_checks
from .synthetic import SynthConfig, corpus_summary, generate_synthetic
from .training import ExperimentConfig, ablation_grid, load_config, run_experiment

BASELINE_CELL = "concat/-CL/-IE"


def _add_dataclass_flags(parser, cls, skip=()):
    """One optional flag per dataclass field (same name); None = not given."""
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        if f.type in ("bool", bool):
            parser.add_argument(f"--{f.name}", action=argparse.BooleanOptionalAction,
                                default=None, help=f"override {f.name}")
        elif f.name == "modalities":
            parser.add_argument("--modalities", nargs="+", default=None,
                                choices=["speech", "acoustic", "text", "image"],
                                help="override the modality subset")
        elif f.type in ("int", int):
            parser.add_argument(f"--{f.name}", type=int, default=None,
                                help=f"override {f.name}")
        elif f.type in ("float", float):
            parser.add_argument(f"--{f.name}", type=float, default=None,
                                help=f"override {f.name}")
        elif f.type in ("str", str):
            parser.add_argument(f"--{f.name}", type=str, default=None,
                                help=f"override {f.name}")
        # dict-valued fields (dims, signal_profile) are config-file only


def _apply_overrides(cfg, args, cls):
    for f in dataclasses.fields(cls):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, list(value) if f.name == "modalities" else value)
    return cfg


def _load_json_or_toml(path):
    path = str(path)
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _experiment_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    _apply_overrides(cfg, args, ExperimentConfig)
    cfg.validate()
    return cfg


def _jobs(args, cfg):
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("POE_SUPCON_JOBS")
    if env:
        return max(1, int(env))
    return cfg.k_folds


def _metric_table(agg, title):
    lines = [title, f"{'subgroup':<10}{'UAR':>10}{'F1':>10}{'sens':>10}{'spec':>10}{'prec':>10}"]
    for name in SUBGROUP_NAMES:
        ms = agg[name]
        cells = [ms.uar, ms.f1, ms.sensitivity, ms.specificity, ms.precision]
        rendered = "".join(f"{v:>10.4f}" if v is not None else f"{'n/a':>10}" for v in cells)
        lines.append(f"{name:<10}{rendered}")
    return "\n".join(lines)


def cmd_synth(args):
    cfg = SynthConfig.from_dict(_load_json_or_toml(args.config)) if args.config else SynthConfig()
    _apply_overrides(cfg, args, SynthConfig)
    cfg.validate()
    ds = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_dataset(ds, out)
    (out / "synth_config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    counts = corpus_summary(ds)
    print(f"wrote {manifest}")
    print(f"samples: {counts['samples']}  participants: {counts['participants']}")
    print(f"labels:  MCI={counts['by_label']['MCI']}  NC={counts['by_label']['NC']}")
    print(f"language: En={counts['by_language']['En']}  Zh={counts['by_language']['Zh']}")
    print(f"gender:   M={counts['by_gender']['M']}  F={counts['by_gender']['F']}")
    for key, n in counts["by_label_language"].items():
        print(f"  {key}: {n}")
    return 0


def cmd_train(args):
    cfg = _experiment_config(args)
    ds = load_dataset(Path(args.data) / "manifest.json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = None if args.no_checkpoints else out / "checkpoints"
    report = run_experiment(ds, cfg, jobs=_jobs(args, cfg), checkpoint_dir=checkpoint_dir)
    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    write_report_csv([("run", report)], out / "report.csv", pooled=args.pooled)
    write_fold_uar_tsv(report, out / "folds_uar.tsv")
    agg = report.aggregate_pooled if args.pooled else report.aggregate
    print(_metric_table(agg, f"aggregate ({'pooled' if args.pooled else 'mean over folds'})"))
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_eval(args):
    report = report_from_json(Path(args.report).read_text(encoding="utf-8"))
    agg = report.aggregate_pooled if args.pooled else report.aggregate
    print(_metric_table(agg, f"aggregate ({'pooled' if args.pooled else 'mean over folds'})"))
    for axis in (["language", "gender"] if args.axis == "both" else [args.axis]):
        try:
            print(f"{axis} UAR disparity: {disparity(report, axis):.4f}")
        except ValueError as exc:
            print(f"{axis} UAR disparity: n/a ({exc})")
    if args.csv:
        write_report_csv([("run", report)], args.csv, pooled=args.pooled)
        print(f"csv written to {args.csv}")
    return 0


def cmd_ablate(args):
    cfg = _experiment_config(args)
    ds = load_dataset(Path(args.data) / "manifest.json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if len(cfg.effective_modalities()) == 1 and not cfg.use_image:
        print("note: single modality selected; poe and concat cells coincide")
    cells = ablation_grid(ds, cfg, jobs=_jobs(args, cfg))
    for label, report in cells:
        safe = label.replace("/", "_").replace("+", "p").replace("-", "m")
        (out / f"report_{safe}.json").write_text(report_to_json(report), encoding="utf-8")
    baseline = dict(cells)[BASELINE_CELL]
    agg_of = lambda rep: rep.aggregate_pooled if args.pooled else rep.aggregate
    import csv as _csv
    with open(out / "ablate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["config", "subgroup", "uar", "f1", "delta_uar", "delta_f1"])
        for label, report in cells:
            for name in SUBGROUP_NAMES:
                ms = agg_of(report)[name]
                base = agg_of(baseline)[name]
                d_uar = (ms.uar - base.uar) if ms.uar is not None and base.uar is not None else None
                d_f1 = (ms.f1 - base.f1) if ms.f1 is not None and base.f1 is not None else None
                fmt = lambda v: "n/a" if v is None else f"{v:.6f}"
                writer.writerow([label, name, fmt(ms.uar), fmt(ms.f1), fmt(d_uar), fmt(d_f1)])
    print(f"ablation grid written to {out / 'ablate.csv'} "
          f"(deltas vs {BASELINE_CELL})")
    return 0


def cmd_gradcheck(args):
    rows = run_gradient_checks(seed=args.seed, points=args.points)
    width = max(len(name) for name, _, _ in rows)
    print(f"{'objective':<{width}}  {'max rel err':>12}  status")
    ok = True
    for name, err, passed in rows:
        ok &= passed
        print(f"{name:<{width}}  {err:>12.3e}  {'pass' if passed else 'FAIL'}")
    if not ok:
        print(f"gradient check failed (threshold {FAIL_THRESHOLD:g})", file=sys.stderr)
        return 1
    return 0


def cmd_convert(args):
    embeddings = {}
    for spec in args.embedding:
        if "=" not in spec:
            raise DatasetError(f"--embedding expects name=path, got {spec!r}")
        name, _, path = spec.partition("=")
        embeddings[name] = path
    ds = import_csv(args.samples, embeddings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_dataset(ds, out)
    print(f"converted {len(ds)} samples, {len(ds.blocks)} modalities -> {manifest}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poe-supcon",
        description="Multimodal MCI-detection training toolkit on precomputed embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus with planted structure")
    p_synth.add_argument("--config", help="SynthConfig JSON/TOML file")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    _add_dataclass_flags(p_synth, SynthConfig)
    p_synth.set_defaults(fn=cmd_synth)

    p_train = sub.add_parser("train", help="cross-validated training run")
    p_train.add_argument("--config", help="ExperimentConfig JSON/TOML file")
    p_train.add_argument("--data", required=True, help="dataset directory (with manifest.json)")
    p_train.add_argument("--out", required=True, help="output directory for reports/checkpoints")
    p_train.add_argument("--jobs", type=int, default=None,
                         help="parallel folds (default: k_folds; env POE_SUPCON_JOBS)")
    p_train.add_argument("--pooled", action="store_true",
                         help="aggregate by pooling confusion counts instead of averaging folds")
    p_train.add_argument("--no-checkpoints", action="store_true", dest="no_checkpoints",
                         help="skip writing per-fold checkpoints")
    _add_dataclass_flags(p_train, ExperimentConfig)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="summarize a run report")
    p_eval.add_argument("--report", required=True, help="report.json from a training run")
    p_eval.add_argument("--axis", choices=["language", "gender", "both"], default="both")
    p_eval.add_argument("--pooled", action="store_true")
    p_eval.add_argument("--csv", help="also write the flat CSV here")
    p_eval.set_defaults(fn=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="run the {concat,poe} x {+-CL} x {+-IE} grid")
    p_ablate.add_argument("--config", help="base ExperimentConfig JSON/TOML file")
    p_ablate.add_argument("--data", required=True)
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--jobs", type=int, default=None)
    p_ablate.add_argument("--pooled", action="store_true")
    _add_dataclass_flags(p_ablate, ExperimentConfig)
    p_ablate.set_defaults(fn=cmd_ablate)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--points", type=int, default=5)
    p_grad.set_defaults(fn=cmd_gradcheck)

    p_conv = sub.add_parser("convert", help="convert CSV embeddings to binary containers")
    p_conv.add_argument("--samples", required=True, help="samples CSV")
    p_conv.add_argument("--embedding", action="append", required=True,
                        metavar="NAME=PATH", help="modality CSV (repeatable)")
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(fn=cmd_convert)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.fn(args)
    except (DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
