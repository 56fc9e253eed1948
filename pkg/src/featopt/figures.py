"""Figure rendering for the report path.

Each report kind gets a small set of PNGs written next to the delimited
output: refinement progress for single runs, metric and cumulative-time
comparisons for benchmark grids, and per-arm comparisons for ablations.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _primary_metric(metrics: dict) -> str | None:
    for key in ("mae", "accuracy"):
        if key in metrics:
            return key
    return next(iter(metrics), None)


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def run_figures(report: dict, base) -> list[str]:
    iterations = report["iterations"]
    steps = [it["iteration"] for it in iterations]
    metric = [it["validation_metric"] for it in iterations]
    counts = [len(it["feature_ids"]) for it in iterations]
    epochs = [it["train_record"]["epochs"] for it in iterations]
    train_ms = [it["train_record"]["duration_ms"] for it in iterations]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, metric, marker="o", color="tab:blue", label="validation metric")
    ax.set_xlabel("iteration")
    ax.set_ylabel("validation metric (higher is better)", color="tab:blue")
    twin = ax.twinx()
    twin.plot(steps, counts, marker="s", color="tab:orange", label="active features")
    twin.set_ylabel("active features", color="tab:orange")
    ax.set_title("refinement progress")
    progress = _save(fig, f"{base}-progress.png")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(steps, epochs, color="tab:blue", alpha=0.7)
    ax.set_xlabel("iteration")
    ax.set_ylabel("training epochs", color="tab:blue")
    twin = ax.twinx()
    twin.plot(steps, np.cumsum(train_ms), color="tab:red", marker=".")
    twin.set_ylabel("cumulative training time (ms)", color="tab:red")
    ax.set_title("training effort per iteration")
    effort = _save(fig, f"{base}-training.png")
    return [progress, effort]


def benchmark_figures(report: dict, base) -> list[str]:
    aggregates = report["aggregates"]
    if not aggregates:
        return []
    labels = [f"{a['dataset']}\n{a['evaluator']}" for a in aggregates]
    x = np.arange(len(aggregates))
    key = _primary_metric(aggregates[0]["metrics_mean"])

    paths = []
    if key is not None:
        means = [a["metrics_mean"].get(key) or 0.0 for a in aggregates]
        stds = [a["metrics_std"].get(key) or 0.0 for a in aggregates]
        fig, ax = plt.subplots(figsize=(max(6, len(x) * 1.2), 4))
        ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue", alpha=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_ylabel(f"{key} (mean over seeds)")
        ax.set_title("downstream metric by evaluator")
        paths.append(_save(fig, f"{base}-metric.png"))

    times = [a["cumulative_time_ms_mean"] or 0.0 for a in aggregates]
    stds = [a["cumulative_time_ms_std"] or 0.0 for a in aggregates]
    fig, ax = plt.subplots(figsize=(max(6, len(x) * 1.2), 4))
    ax.bar(x, times, yerr=stds, capsize=3, color="tab:orange", alpha=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("cumulative training time (ms)")
    ax.set_title("evaluator training cost")
    paths.append(_save(fig, f"{base}-time.png"))
    return paths


def ablate_figures(report: dict, base) -> list[str]:
    arm_names = ["ease", "ease-pt", "ease-it", "ease-fc"]
    arms = report["arms"]
    x = np.arange(len(arm_names))
    key = _primary_metric(arms["ease"]["aggregates"]["metrics_mean"])

    paths = []
    if key is not None:
        means = [arms[a]["aggregates"]["metrics_mean"].get(key) or 0.0 for a in arm_names]
        stds = [arms[a]["aggregates"]["metrics_std"].get(key) or 0.0 for a in arm_names]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue", alpha=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels(arm_names)
        ax.set_ylabel(f"{key} (mean over seeds)")
        ax.set_title("ablation arms: downstream metric")
        paths.append(_save(fig, f"{base}-arms.png"))

    times = [
        arms[a]["aggregates"].get("mean_iteration_train_ms_mean") or 0.0
        for a in arm_names
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x, times, color="tab:orange", alpha=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(arm_names)
    ax.set_ylabel("mean per-iteration training time (ms)")
    ax.set_title("ablation arms: training cost")
    paths.append(_save(fig, f"{base}-time.png"))
    return paths


def render_figures(report: dict, base) -> list[str]:
    kind = report["kind"]
    if kind == "run":
        return run_figures(report, base)
    if kind == "benchmark":
        return benchmark_figures(report, base)
    return ablate_figures(report, base)
