"""Command-line front end: ``run``, ``scale`` and ``synth``.

Exit codes: 0 success, 2 bad arguments or config, 3 data errors,
4 pipeline failure (the failing stage is named on stderr).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DataError, Dataset, load_arff, load_csv, synthesize, write_csv, write_truth
from .evaluation import RunReport, environment, repeated_runs, roc_points
from .parallel import ENV_VAR, available_cores
from .pipeline import PipelineConfig, StageError, config_fingerprint, load_config, override
from .pso import PsoConfig
from .rfe import RfeConfig

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_PIPELINE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="milliseconds")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _flag(name: str) -> str:
    return name.replace("_", "-")


def _tunable_fields(cls):
    return [f for f in dataclasses.fields(cls) if not dataclasses.is_dataclass(f.default)]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or TOML pipeline config")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="base seed; run r uses seed + r")
    p.add_argument("--folds", type=int, help="also run the k-fold protocol with this k")
    p.add_argument("--threads", type=int, help=f"worker processes (default ${ENV_VAR} or 1)")
    p.add_argument("--vote", choices=("hard", "weighted"))
    p.add_argument("--global-selection", action="store_true", default=None,
                   help="select features once on all rows (leaky, for comparison only)")
    for prefix, cls in (("pso", PsoConfig), ("rfe", RfeConfig)):
        g = p.add_argument_group(f"{prefix} overrides")
        for f in _tunable_fields(cls):
            g.add_argument(f"--{prefix}-{_flag(f.name)}", dest=f"{prefix}__{f.name}", metavar="V")
    p.add_argument("--rfe-keep", dest="top__rfe_keep", metavar="V")
    p.add_argument("--pool-cap", dest="top__pool_cap", metavar="V")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field by dotted path, e.g. gbt.n_rounds=50")


def build_config(args) -> PipelineConfig:
    try:
        return _build_config(args)
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(f"config: {exc}") from None


def _build_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for key, value in vars(args).items():
        if value is None or "__" not in key:
            continue
        head, name = key.split("__", 1)
        cfg = override(cfg, name if head == "top" else f"{head}.{name}", value)
    if args.vote is not None:
        cfg = dataclasses.replace(cfg, vote=args.vote)
    if args.global_selection:
        cfg = dataclasses.replace(cfg, global_selection=True)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        cfg = override(cfg, key.strip(), value.strip())
    return cfg


def resolve_threads(requested: int | None) -> int:
    if requested is None:
        env = os.environ.get(ENV_VAR)
        try:
            requested = int(env) if env else 1
        except ValueError:
            raise UsageError(f"${ENV_VAR} must be an integer, got {env!r}") from None
    if requested < 1:
        raise UsageError(f"thread count must be >= 1, got {requested}")
    cores = available_cores()
    if requested > cores:
        warnings.warn(f"thread cap {requested} exceeds the {cores} available cores; proceeding",
                      RuntimeWarning, stacklevel=2)
    return requested


def load_dataset(path: str, fmt: str | None, label) -> Dataset:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"data file not found: {p}")
    fmt = fmt or ("arff" if p.suffix.lower() == ".arff" else "csv")
    try:
        if fmt == "arff":
            return load_arff(p)
        lab = -1 if label is None else (int(label) if str(label).lstrip("-").isdigit() else label)
        return load_csv(p, lab)
    except DataError as exc:
        raise DataError(f"{p}: {exc}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{p}: {exc}") from exc


def _plot_csvs(report: RunReport, data: Dataset) -> tuple[str, str]:
    roc = io.StringIO()
    w = csv.writer(roc, lineterminator="\n")
    w.writerow(["run", "class", "fpr", "tpr"])
    conv = io.StringIO()
    wc = csv.writer(conv, lineterminator="\n")
    wc.writerow(["run", "iteration", "best_fitness"])
    for r, res in enumerate(report.results, start=1):
        test = data.subset_rows(res.test_indices)
        proba = res.fitted.predict_proba(test.features)
        for c in np.unique(test.labels):
            for fpr, tpr in roc_points(test.labels, proba, int(c)):
                w.writerow([r, data.class_names[c], repr(float(fpr)), repr(float(tpr))])
        for i, f in enumerate(res.pso_history):
            wc.writerow([r, i, repr(float(f))])
    return roc.getvalue(), conv.getvalue()


def _manifest(argv, cfg, seeds, data_path, start, end, threads, report: RunReport, extra=None) -> dict:
    env = environment()
    return {
        "command": ["genefuse", *argv],
        "tool_version": __version__,
        "config_fingerprint": config_fingerprint(cfg),
        "config": dataclasses.asdict(cfg),
        "dataset": str(data_path) if data_path else None,
        "dataset_sha256": _sha256(Path(data_path)) if data_path else None,
        "seeds": seeds,
        "start": start,
        "end": end,
        "environment": {"core_count": env["logical_cores"], "usable_cores": env["usable_cores"],
                        "total_memory_bytes": env["memory_bytes"], "thread_cap": threads},
        "run_wall_times": [m.wall_time for m in report.per_run],
        "stage_times": report.stage_times,
        **(extra or {}),
    }


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def cmd_run(args, argv) -> int:
    cfg = build_config(args)
    threads = resolve_threads(args.threads)
    data = load_dataset(args.data, args.format, args.label)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = _now()
    name = args.name or Path(args.data).stem

    def progress(r, m):
        if not args.quiet:
            print(f"run {r + 1}/{args.runs}: accuracy {100 * m.accuracy:.2f}% "
                  f"({m.wall_time:.1f}s)", file=sys.stderr, flush=True)

    report = repeated_runs(data, cfg, args.runs, args.seed, threads, "split",
                           dataset_name=name, progress=progress)
    _write(out, "report.json", report.to_json() + "\n")
    _write(out, "report.csv", report.to_csv())
    roc, conv = _plot_csvs(report, data)
    _write(out, "roc_points.csv", roc)
    _write(out, "convergence.csv", conv)
    extra = {}
    if args.folds:
        cv = repeated_runs(data, cfg, args.runs, args.seed, threads, "cv", folds=args.folds,
                           dataset_name=name, progress=progress)
        _write(out, "report_cv.json", cv.to_json() + "\n")
        _write(out, "report_cv.csv", cv.to_csv())
        extra["cv_run_wall_times"] = [m.wall_time for m in cv.per_run]
    manifest = _manifest(argv, cfg, report.seeds, args.data, start, _now(), threads, report, extra)
    _write(out, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        print(report.to_csv(), end="")
    return EXIT_OK


def _synthetic_for(args) -> tuple[Dataset, str]:
    if args.data:
        return load_dataset(args.data, args.format, args.label), args.data
    ds, _ = synthesize(args.n, args.p, args.informative, args.classes, seed=args.data_seed)
    return ds, ""


def cmd_scale(args, argv) -> int:
    cfg = build_config(args)
    try:
        caps = [int(t) for t in args.thread_list.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--thread-list must be comma-separated integers, got {args.thread_list!r}") from None
    if not caps or min(caps) < 1:
        raise UsageError("--thread-list needs positive integers")
    for c in caps:
        resolve_threads(c)
    data, path = _synthetic_for(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    start = _now()
    for cap in caps:
        t0 = time.perf_counter()
        rep = repeated_runs(data, cfg, args.runs, args.seed, cap, "split", dataset_name="scale")
        wall = time.perf_counter() - t0
        pso = sum(t.get("pso", 0.0) for t in rep.stage_times)
        rows.append((cap, wall, pso))
        reports.append(rep.to_json())
        _write(out, f"report_t{cap}.json", reports[-1] + "\n")
        if not args.quiet:
            print(f"threads {cap}: {wall:.2f}s total, {pso:.2f}s swarm search", file=sys.stderr, flush=True)
    base_wall, base_pso = rows[0][1], rows[0][2]
    table = io.StringIO()
    w = csv.writer(table, lineterminator="\n")
    w.writerow(["threads", "wall_seconds", "speedup", "pso_seconds", "pso_speedup", "identical"])
    for (cap, wall, pso), rep in zip(rows, reports):
        w.writerow([cap, f"{wall:.3f}", f"{base_wall / wall:.3f}", f"{pso:.3f}",
                    f"{base_pso / pso:.3f}" if pso > 0 else "", rep == reports[0]])
    _write(out, "scale.csv", table.getvalue())
    identical = all(r == reports[0] for r in reports)
    manifest = {
        "command": ["genefuse", *argv], "tool_version": __version__,
        "config_fingerprint": config_fingerprint(cfg), "start": start, "end": _now(),
        "dataset": path or None, "dataset_sha256": _sha256(Path(path)) if path else None,
        "environment": environment(), "thread_caps": caps, "identical_reports": identical,
    }
    _write(out, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        print(table.getvalue(), end="")
    if not identical:
        print("error: metrics differ across thread caps", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    try:
        ds, truth = synthesize(args.n, args.p, args.informative, args.classes, seed=args.seed,
                               separation=args.separation)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.txt")
    write_truth(truth, truth_path)
    if not args.quiet:
        print(f"wrote {out} ({ds.n_samples}x{ds.n_features + 1}) and {truth_path}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genefuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="repeated seeded runs on one dataset")
    run.add_argument("--data", required=True)
    run.add_argument("--format", choices=("arff", "csv"))
    run.add_argument("--label", help="CSV label column name or index (default: last)")
    run.add_argument("--out", required=True)
    run.add_argument("--name", help="dataset name stored in the report")
    run.add_argument("--quiet", action="store_true")
    _add_config_flags(run)

    scale = sub.add_parser("scale", help="same workload at several thread caps")
    scale.add_argument("--data", help="dataset (default: synthetic benchmark)")
    scale.add_argument("--format", choices=("arff", "csv"))
    scale.add_argument("--label")
    scale.add_argument("--thread-list", default="1,2,4,8")
    scale.add_argument("-n", type=int, default=80)
    scale.add_argument("-p", type=int, default=2000)
    scale.add_argument("--informative", type=int, default=20)
    scale.add_argument("-C", "--classes", type=int, default=2)
    scale.add_argument("--data-seed", type=int, default=0)
    scale.add_argument("--out", required=True)
    scale.add_argument("--quiet", action="store_true")
    _add_config_flags(scale)
    scale.set_defaults(runs=1)

    synth = sub.add_parser("synth", help="write a synthetic dataset and its truth file")
    synth.add_argument("-n", type=int, default=80)
    synth.add_argument("-p", type=int, default=2000)
    synth.add_argument("--informative", type=int, default=20)
    synth.add_argument("-C", "--classes", type=int, default=2)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--separation", type=float, default=2.0)
    synth.add_argument("--out", required=True, help="CSV path")
    synth.add_argument("--truth", help="truth file (default: <out>.truth.txt)")
    synth.add_argument("--quiet", action="store_true")
    return parser


COMMANDS = {"run": cmd_run, "scale": cmd_scale, "synth": cmd_synth}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)     # exits 2 on bad arguments
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"pipeline failure in stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except Exception as exc:
        print(f"pipeline failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
