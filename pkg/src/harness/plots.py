"""SVG figures for sweep and misspecification reports"""
import logging
from pathlib import Path

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure

from src.common.config import load_config
from src.common.errors import PreconditionError
from src.harness.experiments import MISSPEC_PRESETS, ExperimentReport

logger = logging.getLogger(__name__)

PLOT_KINDS = ("sweep-lines", "misspec-bars")
METRICS = ("pehe", "ate_error")
METRIC_LABELS = {"pehe": "PEHE", "ate_error": "ATE error"}


def _test_records(report):
    return [r for r in report.records if r.split == "test"]


def sweep_axis(report: ExperimentReport) -> str:
    """'n_e' or 'n_o': the size that varies across the report"""
    experiment = report.config.get("experiment")
    if experiment in ("sweep-e", "sweep-o"):
        return "n_e" if experiment == "sweep-e" else "n_o"
    if experiment:
        raise PreconditionError(f"sweep-lines needs a sweep report, got '{experiment}'")
    records = _test_records(report)
    varying = [key for key in ("n_e", "n_o") if len({getattr(r, key) for r in records}) > 1]
    if len(varying) != 1:
        raise PreconditionError("sweep-lines needs records that vary exactly one sample size")
    return varying[0]


def _quartiles(values):
    return np.percentile(values, [25, 50, 75])


def _draw_sweep(ax, report, metric):
    key = sweep_axis(report)
    records = _test_records(report)
    for kind in sorted({r.estimator for r in records}):
        sizes = sorted({getattr(r, key) for r in records if r.estimator == kind})
        stats = np.array(
            [_quartiles([getattr(r, metric) for r in records if r.estimator == kind and getattr(r, key) == n]) for n in sizes]
        )
        ax.plot(sizes, stats[:, 1], marker="o", label=kind)
        ax.fill_between(sizes, stats[:, 0], stats[:, 2], alpha=0.2)
    ax.set_xscale("log")
    ax.set_xlabel(key)
    ax.legend(loc="upper right")


def _draw_misspec(ax, report, metric):
    experiment = report.config.get("experiment")
    if experiment and experiment != "misspec":
        raise PreconditionError(f"misspec-bars needs a misspecification report, got '{experiment}'")
    records = _test_records(report)
    known = report.config.get("presets") or list(MISSPEC_PRESETS)
    labels = [label for label in known if any(r.preset == label for r in records)]
    if not labels:
        raise PreconditionError("misspec-bars needs records labelled with misspecification presets")

    stats = np.array([_quartiles([getattr(r, metric) for r in records if r.preset == label]) for label in labels])
    positions = np.arange(len(labels))
    whiskers = np.vstack([stats[:, 1] - stats[:, 0], stats[:, 2] - stats[:, 1]])
    ax.bar(positions, stats[:, 1], yerr=whiskers, capsize=4, color="tab:blue", alpha=0.8)
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, rotation=30, ha="right")


def build_figure(report: ExperimentReport, kind: str, metric: str = "pehe", settings=None) -> Figure:
    """Figure for a report; raises PreconditionError when the report does not match the kind"""
    if kind not in PLOT_KINDS:
        raise PreconditionError(f"unknown plot kind '{kind}', expected one of {PLOT_KINDS}")
    if metric not in METRICS:
        raise PreconditionError(f"unknown metric '{metric}'")
    if not _test_records(report):
        raise PreconditionError("report has no test-split records to plot")

    plots = (settings if settings is not None else load_config()).get("plots", {})
    fig = Figure(figsize=(plots.get("width_inches", 6.4), plots.get("height_inches", 4.0)))
    ax = fig.add_subplot(1, 1, 1)
    if kind == "sweep-lines":
        _draw_sweep(ax, report, metric)
    else:
        _draw_misspec(ax, report, metric)
    ax.set_ylabel(METRIC_LABELS[metric])
    fig.tight_layout()
    return fig


def emit_plot(report: ExperimentReport, kind: str, path, metric: str = "pehe", settings=None) -> Path:
    """Write a standalone SVG; identical reports give identical bytes"""
    settings = settings if settings is not None else load_config()
    fig = build_figure(report, kind, metric, settings)
    path = Path(path)
    salt = settings.get("plots", {}).get("svg_hashsalt", "longterm-hlce")
    try:
        with rc_context({"svg.hashsalt": salt}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        logger.error(f"Failed to write plot to {path}: {e}")
        raise
    logger.info(f"Wrote {kind} plot ({metric}) to {path}")
    return path
