"""Render benchmark CSVs (dataset, generator, learner, metric, value, seed)
to figures. Which figures depends on the metrics present:

- nll            -> line plot over sample size (datasets named *_n<int>)
                    with standard-error bars, one series per generator, or a
                    bar chart when dataset names carry no size suffix
- disc_score     -> bar chart per dataset x generator
- oracle/synth_* -> grouped oracle-vs-synthetic bars per dataset+generator

Matplotlib runs on the Agg backend; files are written next to the CSV unless
an output directory is given.
"""

from __future__ import annotations

import csv
import math
import os
import re
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load_bench_csv(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"dataset", "generator", "learner", "metric", "value", "seed"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(required)}")
        for raw in reader:
            rows.append({"dataset": raw["dataset"], "generator": raw["generator"],
                         "learner": raw["learner"], "metric": raw["metric"],
                         "value": float(raw["value"]), "seed": int(raw["seed"])})
    return rows


def _mean_se(values) -> tuple[float, float]:
    v = [float(x) for x in values]
    m = sum(v) / len(v)
    if len(v) < 2:
        return m, 0.0
    var = sum((x - m) ** 2 for x in v) / (len(v) - 1)
    return m, math.sqrt(var / len(v))


def _group(rows, keys):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r["value"])
    return out


_SIZE_SUFFIX = re.compile(r"^(?P<base>.+)_n(?P<n>\d+)$")


def _nll_figure(rows, outdir) -> list[str]:
    sized = []
    flat = []
    for r in rows:
        m = _SIZE_SUFFIX.match(r["dataset"])
        (sized if m else flat).append((r, m))
    paths = []
    if sized:
        series = defaultdict(dict)  # generator -> n -> [values]
        for r, m in sized:
            series[r["generator"]].setdefault(int(m.group("n")), []).append(r["value"])
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for gen in sorted(series):
            ns = sorted(series[gen])
            stats = [_mean_se(series[gen][n]) for n in ns]
            ax.errorbar(ns, [s[0] for s in stats], yerr=[s[1] for s in stats],
                        marker="o", capsize=3, label=gen)
        ax.set_xscale("log")
        ax.set_xlabel("training rows")
        ax.set_ylabel("NLL (nats)")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(outdir, "nll_vs_n.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    if flat:
        groups = _group([r for r, _ in flat], ("dataset", "generator"))
        labels = sorted(groups)
        stats = [_mean_se(groups[k]) for k in labels]
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels)), 3.6))
        x = range(len(labels))
        ax.bar(x, [s[0] for s in stats], yerr=[s[1] for s in stats], capsize=3)
        ax.set_xticks(list(x))
        ax.set_xticklabels([f"{d}\n{g}" for d, g in labels], fontsize=7)
        ax.set_ylabel("NLL (nats)")
        fig.tight_layout()
        path = os.path.join(outdir, "nll_bars.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def _disc_figure(rows, outdir) -> list[str]:
    groups = _group(rows, ("dataset", "generator"))
    labels = sorted(groups)
    stats = [_mean_se(groups[k]) for k in labels]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels)), 3.6))
    x = range(len(labels))
    ax.bar(x, [s[0] for s in stats], yerr=[s[1] for s in stats], capsize=3)
    ax.axhline(0.5, color="grey", linestyle="--", linewidth=1)
    ax.set_xticks(list(x))
    ax.set_xticklabels([f"{d}\n{g}" for d, g in labels], fontsize=7)
    ax.set_ylabel("discriminator OOB accuracy")
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    path = os.path.join(outdir, "discriminator.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


_EFFICACY_METRICS = ("oracle_accuracy", "synth_accuracy", "oracle_f1", "synth_f1")


def _efficacy_figures(rows, outdir) -> list[str]:
    paths = []
    by_cell = defaultdict(list)
    for r in rows:
        by_cell[(r["dataset"], r["generator"])].append(r)
    for (dataset, generator), cell in sorted(by_cell.items()):
        learners = sorted({r["learner"] for r in cell if r["learner"] != "all"})
        groups = _group(cell, ("learner", "metric"))
        fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(learners)), 3.6))
        width = 0.8 / len(_EFFICACY_METRICS)
        for mi, metric in enumerate(_EFFICACY_METRICS):
            xs, ms, ses = [], [], []
            for li, learner in enumerate(learners):
                if (learner, metric) not in groups:
                    continue
                m, se = _mean_se(groups[(learner, metric)])
                xs.append(li + (mi - 1.5) * width)
                ms.append(m)
                ses.append(se)
            ax.bar(xs, ms, width=width, yerr=ses, capsize=2, label=metric)
        ax.set_xticks(range(len(learners)))
        ax.set_xticklabels(learners)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("score")
        ax.set_title(f"{dataset} / {generator}", fontsize=9)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(outdir, f"efficacy_{dataset}_{generator}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_report(csv_path, outdir=None) -> list[str]:
    """Write figures for every recognized metric in the CSV; returns the
    paths written. Unrecognized metrics are ignored."""
    rows = load_bench_csv(csv_path)
    if outdir is None:
        outdir = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(outdir, exist_ok=True)
    paths = []
    nll_rows = [r for r in rows if r["metric"] == "nll"]
    if nll_rows:
        paths += _nll_figure(nll_rows, outdir)
    disc_rows = [r for r in rows if r["metric"] == "disc_score"]
    if disc_rows:
        paths += _disc_figure(disc_rows, outdir)
    eff_rows = [r for r in rows if r["metric"] in _EFFICACY_METRICS]
    if eff_rows:
        paths += _efficacy_figures(eff_rows, outdir)
    return paths
