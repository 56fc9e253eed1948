"""Command-line entry points.

Three subcommands: ``run`` executes one refinement pipeline, ``benchmark``
sweeps a (dataset x evaluator x seed) grid, ``ablate`` compares the full
attention evaluator against its -PT / -IT / -FC variants. All of them
write a JSON report (validated against the shipped schema), an aligned
text summary, a CSV of the summary table, and matplotlib figures.

Exit codes: 0 success, 1 runtime failure (load or training), 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import FeatOptError
from .dataio import load_csv
from .pipeline import EVALUATOR_CHOICES, PipelineConfig, run_pipeline
from .report import (
    dataset_fingerprint,
    finalize_report,
    render_text,
    timestamp_basename,
    write_report_files,
)
from .training import TrainConfig
from . import __version__

_COMMON_DEFAULTS = {
    "task": "auto",
    "target_k": None,
    "seed": 0,
    "out": "reports",
    "max_iters": 100,
    "ewc_lambda": 10.0,
    "heads": 16,
    "dim": 32,
    "drop_fraction": 0.1,
    "subspaces": None,
    "target_col": None,
    "forest_trees": 100,
    "split": "0.6,0.2,0.2",
    "figures": True,
}

_ARMS = (
    ("ease", {}),
    ("ease-pt", {"skip_pretrain": True}),
    ("ease-it", {"from_scratch": True}),
    ("ease-fc", {"uniform_subspaces": True}),
)


def _add_shared_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--task", choices=["auto", "classification", "regression"], default=None)
    parser.add_argument("--target-k", type=int, default=None, dest="target_k")
    parser.add_argument("--config", default=None, help="flat JSON config file; flags override it")
    parser.add_argument("--out", default=None, help="output directory for reports")
    parser.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    parser.add_argument("--lambda", type=float, default=None, dest="ewc_lambda",
                        help="drift-penalty strength")
    parser.add_argument("--heads", type=int, default=None)
    parser.add_argument("--dim", type=int, default=None,
                        help="embedding dim = samples per subspace")
    parser.add_argument("--drop-fraction", type=float, default=None, dest="drop_fraction")
    parser.add_argument("--subspaces", type=int, default=None,
                        help="subspaces per training round (default: one epoch-equivalent)")
    parser.add_argument("--target-col", default=None, dest="target_col")
    parser.add_argument("--forest-trees", type=int, default=None, dest="forest_trees")
    parser.add_argument("--split", default=None, help="train,val,test ratios")
    parser.add_argument("--no-figures", action="store_const", const=False,
                        default=None, dest="figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featopt",
        description="Iterative feature-space refinement with an incrementally "
        "updated attention evaluator.",
    )
    parser.add_argument("--version", action="version", version=f"featopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one refinement pipeline")
    run_p.add_argument("--data", required=True, help="input CSV (target in last column)")
    run_p.add_argument("--evaluator", choices=list(EVALUATOR_CHOICES), default=None)
    run_p.add_argument("--seed", type=int, default=None)
    _add_shared_options(run_p)

    bench_p = sub.add_parser("benchmark", help="sweep datasets x evaluators x seeds")
    bench_p.add_argument("--data", action="append", required=True,
                         help="input CSV; repeat for several datasets")
    bench_p.add_argument("--evaluators", default=None,
                         help="comma list from: " + ",".join(EVALUATOR_CHOICES))
    bench_p.add_argument("--seeds", default=None, help="comma list of seeds")
    bench_p.add_argument("--jobs", type=int, default=None)
    _add_shared_options(bench_p)

    abl_p = sub.add_parser("ablate", help="compare the full evaluator with -PT/-IT/-FC")
    abl_p.add_argument("--data", required=True)
    abl_p.add_argument("--seeds", default=None, help="comma list of seeds")
    abl_p.add_argument("--seed", type=int, default=None, help="single-seed shorthand")
    abl_p.add_argument("--jobs", type=int, default=None)
    _add_shared_options(abl_p)

    return parser


class UsageError(Exception):
    pass


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a flat JSON object")
    return data


def _resolve_options(args, extra_defaults: dict) -> dict:
    defaults = {**_COMMON_DEFAULTS, **extra_defaults}
    merged = dict(defaults)
    if getattr(args, "config", None):
        for key, value in _load_config_file(args.config).items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "ewc_lambda"
            if key not in defaults:
                raise UsageError(f"unknown config key {key!r}")
            merged[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged["task"] not in ("auto", "classification", "regression"):
        raise UsageError(f"task must be auto, classification or regression, got {merged['task']!r}")
    return merged


def _parse_ratios(text) -> tuple:
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise UsageError("--split needs exactly three comma-separated ratios")
    return tuple(parts)


def _parse_int_list(text, what: str) -> list[int]:
    try:
        values = [int(p) for p in str(text).split(",") if p.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad {what} list {text!r}") from exc
    if not values:
        raise UsageError(f"{what} list is empty")
    return values


def _pipeline_config(opts: dict, n_features: int, evaluator: str, seed: int, **arm_flags) -> PipelineConfig:
    target_k = opts["target_k"]
    if target_k is None:
        target_k = max(1, n_features // 2)
    if not 1 <= target_k < n_features:
        raise UsageError(
            f"--target-k must be in [1, {n_features - 1}] for this dataset, got {target_k}"
        )
    return PipelineConfig(
        target_k=target_k,
        max_iters=opts["max_iters"],
        rfe_drop_fraction=opts["drop_fraction"],
        evaluator=evaluator,
        seed=seed,
        dim=opts["dim"],
        heads=opts["heads"],
        subspace_count=opts["subspaces"],
        split_ratios=_parse_ratios(opts["split"]),
        train=TrainConfig(ewc_lambda=opts["ewc_lambda"]),
        forest_trees=opts["forest_trees"],
        **arm_flags,
    )


def _execute_cell(payload: dict) -> dict:
    """Run one pipeline cell; never raises (failures are recorded)."""
    base = {
        "dataset": payload["data"],
        "evaluator": payload["evaluator"],
        "seed": payload["seed"],
        "status": "error",
        "error": None,
        "downstream_metrics": None,
        "best_feature_ids": None,
        "cumulative_time_ms": None,
        "wall_time_ms": None,
        "pretrain_epochs": None,
        "iteration_epochs": None,
        "mean_iteration_train_ms": None,
    }
    try:
        dataset = load_csv(payload["data"], payload["target_col"], payload["task"])
        cfg = _pipeline_config(
            payload["opts"],
            dataset.n_features,
            payload["evaluator"],
            payload["seed"],
            **payload.get("arm_flags", {}),
        )
        report = run_pipeline(dataset, cfg)
    except Exception as exc:  # a failed cell must not abort the grid
        base["error"] = f"{type(exc).__name__}: {exc}"
        return base
    iterations = report["iterations"]
    iter_ms = [it["train_record"]["duration_ms"] for it in iterations[1:]]
    base.update(
        status="ok",
        downstream_metrics=report["downstream"]["metrics"],
        best_feature_ids=report["best"]["feature_ids"],
        cumulative_time_ms=report["cumulative_time_ms"],
        wall_time_ms=report["wall_time_ms"],
        pretrain_epochs=iterations[0]["train_record"]["epochs"],
        iteration_epochs=[it["train_record"]["epochs"] for it in iterations[1:]],
        mean_iteration_train_ms=sum(iter_ms) / len(iter_ms) if iter_ms else None,
    )
    return base


def _run_cells(payloads: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1:
        return [_execute_cell(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute_cell, payloads))


def _mean_std(values) -> tuple:
    clean = [v for v in values if v is not None and math.isfinite(v)]
    if not clean:
        return None, None
    mean = sum(clean) / len(clean)
    var = sum((v - mean) ** 2 for v in clean) / len(clean)
    return mean, math.sqrt(var)


def _metrics_mean_std(cells: list[dict]) -> tuple[dict, dict]:
    keys: list[str] = []
    for cell in cells:
        if cell["downstream_metrics"]:
            for key in cell["downstream_metrics"]:
                if key not in keys:
                    keys.append(key)
    means, stds = {}, {}
    for key in keys:
        values = [
            cell["downstream_metrics"].get(key)
            for cell in cells
            if cell["downstream_metrics"]
        ]
        means[key], stds[key] = _mean_std(values)
    return means, stds


def _grid_manifest(opts: dict, paths: list[str], seeds: list[int]) -> dict:
    datasets = []
    for path in paths:
        try:
            digest = dataset_fingerprint(path)
        except OSError:
            digest = ""
        datasets.append({"path": str(path), "sha256": digest})
    config = {k: v for k, v in opts.items()}
    config["split"] = str(config["split"])
    return {
        "tool_version": __version__,
        "seed": None,
        "dataset_path": None,
        "dataset_sha256": None,
        "config": config,
        "datasets": datasets,
        "seeds": seeds,
    }


def cmd_run(args) -> int:
    opts = _resolve_options(args, {"evaluator": "ease", "seed": 0})
    try:
        dataset = load_csv(args.data, opts["target_col"], opts["task"])
    except FeatOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cfg = _pipeline_config(opts, dataset.n_features, opts["evaluator"], opts["seed"])
    try:
        report = run_pipeline(dataset, cfg)
    except FeatOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report["manifest"]["dataset_path"] = str(args.data)
    report["manifest"]["dataset_sha256"] = dataset_fingerprint(args.data)
    report = finalize_report(report)
    paths = write_report_files(
        report, opts["out"], timestamp_basename(opts["seed"]), figures=opts["figures"]
    )
    sys.stdout.write(render_text(report))
    _print_outputs(paths)
    return 0


def cmd_benchmark(args) -> int:
    opts = _resolve_options(args, {"evaluators": "ease,linear,tree,forest",
                                   "seeds": "0", "jobs": 1})
    evaluators = [e.strip() for e in str(opts["evaluators"]).split(",") if e.strip()]
    for evaluator in evaluators:
        if evaluator not in EVALUATOR_CHOICES:
            raise UsageError(f"unknown evaluator {evaluator!r}")
    seeds = _parse_int_list(opts["seeds"], "seed")
    payloads = [
        {
            "data": path,
            "target_col": opts["target_col"],
            "task": opts["task"],
            "evaluator": evaluator,
            "seed": seed,
            "opts": opts,
        }
        for path in args.data
        for evaluator in evaluators
        for seed in seeds
    ]
    cells = _run_cells(payloads, int(opts["jobs"]))

    aggregates = []
    for path in args.data:
        for evaluator in evaluators:
            group = [c for c in cells if c["dataset"] == path and c["evaluator"] == evaluator]
            ok = [c for c in group if c["status"] == "ok"]
            means, stds = _metrics_mean_std(ok)
            time_mean, time_std = _mean_std([c["cumulative_time_ms"] for c in ok])
            aggregates.append(
                {
                    "dataset": str(path),
                    "evaluator": evaluator,
                    "n_ok": len(ok),
                    "metrics_mean": means,
                    "metrics_std": stds,
                    "cumulative_time_ms_mean": time_mean,
                    "cumulative_time_ms_std": time_std,
                }
            )

    report = {
        "schema_version": 1,
        "kind": "benchmark",
        "manifest": _grid_manifest(opts, list(args.data), seeds),
        "cells": [{k: v for k, v in c.items()
                   if k not in ("pretrain_epochs", "iteration_epochs", "mean_iteration_train_ms")}
                  for c in cells],
        "aggregates": aggregates,
    }
    report = finalize_report(report)
    paths = write_report_files(
        report, opts["out"], timestamp_basename(seeds[0]), figures=opts["figures"]
    )
    sys.stdout.write(render_text(report))
    _print_outputs(paths)
    return 0


def cmd_ablate(args) -> int:
    opts = _resolve_options(args, {"seeds": "0", "jobs": 1})
    if getattr(args, "seed", None) is not None and args.seeds is None:
        opts["seeds"] = str(args.seed)
    seeds = _parse_int_list(opts["seeds"], "seed")

    payloads = [
        {
            "data": args.data,
            "target_col": opts["target_col"],
            "task": opts["task"],
            "evaluator": "ease",
            "seed": seed,
            "opts": opts,
            "arm_flags": dict(flags),
            "arm": arm,
        }
        for arm, flags in _ARMS
        for seed in seeds
    ]
    cells = _run_cells(payloads, int(opts["jobs"]))

    arms = {}
    for arm, _flags in _ARMS:
        arm_cells = [
            {k: v for k, v in cell.items() if k not in ("dataset", "evaluator", "best_feature_ids")}
            for cell, payload in zip(cells, payloads)
            if payload["arm"] == arm
        ]
        ok = [c for c in arm_cells if c["status"] == "ok"]
        means, stds = _metrics_mean_std(ok)
        time_mean, _ = _mean_std([c["cumulative_time_ms"] for c in ok])
        iter_mean, _ = _mean_std([c["mean_iteration_train_ms"] for c in ok])
        arms[arm] = {
            "cells": arm_cells,
            "aggregates": {
                "metrics_mean": means,
                "metrics_std": stds,
                "cumulative_time_ms_mean": time_mean,
                "mean_iteration_train_ms_mean": iter_mean,
            },
        }

    report = {
        "schema_version": 1,
        "kind": "ablate",
        "manifest": _grid_manifest(opts, [args.data], seeds),
        "arms": arms,
    }
    report = finalize_report(report)
    paths = write_report_files(
        report, opts["out"], timestamp_basename(seeds[0]), figures=opts["figures"]
    )
    sys.stdout.write(render_text(report))
    _print_outputs(paths)
    return 0


def _print_outputs(paths: dict) -> None:
    print(f"report json: {paths['json']}")
    print(f"report text: {paths['txt']}")
    print(f"report csv:  {paths['csv']}")
    for figure in paths["figures"]:
        print(f"figure:      {figure}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    handlers = {"run": cmd_run, "benchmark": cmd_benchmark, "ablate": cmd_ablate}
    try:
        return handlers[args.command](args)
    except (UsageError, FeatOptError) as exc:
        # Config-level problems are usage errors; anything raised past the
        # explicit load/train handling above is a misconfiguration.
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
