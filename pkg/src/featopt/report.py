"""Report finalization, validation, and text/CSV rendering.

Every report is validated against the JSON schema shipped next to this
module before it is written. Fields named ``created_at`` or containing
``_ms`` are timing fields: two runs with identical seed, config and data
produce reports identical everywhere else.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from functools import lru_cache
from importlib import resources

import jsonschema

TIMING_KEY_MARKER = "_ms"


def sanitize(obj):
    """Replace non-finite floats with None, recursively (JSON has no NaN)."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def strip_timing(obj):
    """Drop timing fields; used to compare reports for determinism."""
    if isinstance(obj, dict):
        return {
            k: strip_timing(v)
            for k, v in obj.items()
            if k != "created_at" and TIMING_KEY_MARKER not in k
        }
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def dataset_fingerprint(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@lru_cache(maxsize=1)
def report_schema() -> dict:
    text = resources.files("featopt").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(instance=report, schema=report_schema())


def finalize_report(report: dict) -> dict:
    """Add the creation timestamp, sanitize floats, and validate."""
    report = sanitize(report)
    report.setdefault("created_at", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    validate_report(report)
    return report


def timestamp_basename(seed: int) -> str:
    now = time.time()
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(now))
    micros = int((now % 1.0) * 1e6)
    return f"report-{stamp}{micros:06d}-{seed}"


# ---------------------------------------------------------------------------
# table rendering (shared by the .txt and .csv outputs)
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _aligned(headers, rows) -> str:
    table = [headers] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines)


def _csv_text(headers, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _run_table(report):
    headers = [
        "iteration",
        "features",
        "validation_metric",
        "epochs",
        "stop_reason",
        "train_ms",
    ]
    rows = [
        [
            it["iteration"],
            len(it["feature_ids"]),
            it["validation_metric"],
            it["train_record"]["epochs"],
            it["train_record"]["stop_reason"],
            it["train_record"]["duration_ms"],
        ]
        for it in report["iterations"]
    ]
    return headers, rows


def _metric_keys(metrics: dict) -> list[str]:
    preferred = ["mae", "rmse", "r2", "accuracy", "precision_macro", "recall_macro", "f1_macro", "precision_positive"]
    keys = [k for k in preferred if k in metrics]
    keys += [k for k in sorted(metrics) if k not in keys]
    return keys


def _benchmark_table(report):
    agg = report["aggregates"]
    metric_keys = _metric_keys(agg[0]["metrics_mean"]) if agg else []
    headers = ["dataset", "evaluator", "n_ok"]
    for key in metric_keys:
        headers += [f"{key}_mean", f"{key}_std"]
    headers += ["cumulative_time_ms_mean", "cumulative_time_ms_std"]
    rows = []
    for a in agg:
        row = [a["dataset"], a["evaluator"], a["n_ok"]]
        for key in metric_keys:
            row += [a["metrics_mean"].get(key), a["metrics_std"].get(key)]
        row += [a["cumulative_time_ms_mean"], a["cumulative_time_ms_std"]]
        rows.append(row)
    return headers, rows


def _ablate_table(report):
    arms = report["arms"]
    first = next(iter(arms.values()))
    metric_keys = _metric_keys(first["aggregates"]["metrics_mean"])
    headers = ["arm"]
    for key in metric_keys:
        headers += [f"{key}_mean", f"{key}_std"]
    headers += ["cumulative_time_ms_mean", "mean_iteration_train_ms"]
    rows = []
    for arm_name in ("ease", "ease-pt", "ease-it", "ease-fc"):
        agg = arms[arm_name]["aggregates"]
        row = [arm_name]
        for key in metric_keys:
            row += [agg["metrics_mean"].get(key), agg["metrics_std"].get(key)]
        row += [
            agg.get("cumulative_time_ms_mean"),
            agg.get("mean_iteration_train_ms_mean"),
        ]
        rows.append(row)
    return headers, rows


def summary_table(report):
    kind = report["kind"]
    if kind == "run":
        return _run_table(report)
    if kind == "benchmark":
        return _benchmark_table(report)
    return _ablate_table(report)


def render_text(report: dict) -> str:
    lines = [f"featopt {report['kind']} report", f"created: {report['created_at']}"]
    manifest = report["manifest"]
    if manifest.get("dataset_path"):
        lines.append(f"data: {manifest['dataset_path']}")
    if report["kind"] == "run":
        ds = report["dataset"]
        lines.append(
            f"dataset: {ds['name']} ({ds['rows']} rows, {ds['features']} features, {ds['task']})"
        )
        lines.append(
            f"evaluator: {manifest['config'].get('evaluator')}  seed: {manifest.get('seed')}"
        )
    lines.append("")
    headers, rows = summary_table(report)
    lines.append(_aligned(headers, rows))
    if report["kind"] == "run":
        best = report["best"]
        lines.append("")
        lines.append(
            f"best iteration: {best['iteration']} "
            f"(validation metric {_fmt(best['validation_metric'])})"
        )
        lines.append(f"best feature ids: {best['feature_ids']}")
        lines.append("")
        lines.append("downstream random-forest metrics (test split):")
        for key in _metric_keys(report["downstream"]["metrics"]):
            lines.append(f"  {key}: {_fmt(report['downstream']['metrics'][key])}")
        lines.append("")
        lines.append(
            f"cumulative evaluator training time: {_fmt(report['cumulative_time_ms'])} ms"
        )
    return "\n".join(lines) + "\n"


def render_csv(report: dict) -> str:
    headers, rows = summary_table(report)
    return _csv_text(headers, rows)


def write_report_files(report: dict, out_dir, basename: str, figures: bool = True) -> dict:
    """Write <basename>.json/.txt/.csv (plus figures) under ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = finalize_report(report)
    paths = {
        "json": out / f"{basename}.json",
        "txt": out / f"{basename}.txt",
        "csv": out / f"{basename}.csv",
    }
    paths["json"].write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    paths["txt"].write_text(render_text(report))
    paths["csv"].write_text(render_csv(report))
    if figures:
        from .figures import render_figures

        paths["figures"] = render_figures(report, out / basename)
    else:
        paths["figures"] = []
    return paths
