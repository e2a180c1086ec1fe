"""Report rendering: delimited series exports plus matplotlib figures.

Reads a completed run directory (model + report) and writes ``plots/``:
CSV files carrying the plotted series verbatim, and PNG figures for a
quick visual check.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import arrayio
from .errors import InvalidArgumentError


def _write_csv(path: Path, header: list, columns: list) -> None:
    columns = [np.asarray(c, dtype=float) for c in columns]
    rows = [",".join(header)]
    for values in zip(*columns):
        rows.append(",".join(repr(v) for v in values))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def emit_plots(run_dir) -> list:
    """Render all report artifacts; returns the list of files written."""
    run_dir = Path(run_dir)
    report_dir = run_dir / "report"
    if not (report_dir / "report.json").exists():
        raise InvalidArgumentError(f"no evaluation report under {report_dir}")
    report = arrayio.load_metadata(report_dir / "report.json")
    out_dir = run_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    time_grid = arrayio.load_array(report_dir / "exemplar_time")
    ref = arrayio.load_array(report_dir / "exemplar_reference")
    mean = arrayio.load_array(report_dir / "exemplar_mean")
    lower = arrayio.load_array(report_dir / "exemplar_lower")
    upper = arrayio.load_array(report_dir / "exemplar_upper")

    for d in report["monitored_dofs"]:
        stem = out_dir / f"exemplar_dof{d}"
        _write_csv(
            stem.with_suffix(".csv"),
            ["time_s", "reference", "mean", "lower", "upper"],
            [time_grid, ref[d], mean[d], lower[d], upper[d]],
        )
        fig, ax = plt.subplots(figsize=(9, 3.2))
        ax.fill_between(time_grid, lower[d], upper[d], alpha=0.3, lw=0, label="CI band")
        ax.plot(time_grid, ref[d], "k-", lw=0.9, label="reference")
        ax.plot(time_grid, mean[d], "r--", lw=0.9, label="surrogate mean")
        ax.set_xlabel("time [s]")
        ax.set_ylabel(f"displacement, DoF {d} [m]")
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        fig.savefig(stem.with_suffix(".png"), dpi=130)
        plt.close(fig)
        written += [stem.with_suffix(".csv"), stem.with_suffix(".png")]

    peaks = arrayio.load_array(report_dir / "peak_scatter")
    _write_csv(out_dir / "peak_scatter.csv", ["peak_reference", "peak_predicted"], list(peaks))
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.scatter(peaks[0], peaks[1], s=14, alpha=0.7)
    lim = [0.0, float(max(peaks.max(), 1e-12)) * 1.05]
    ax.plot(lim, lim, "k--", lw=0.8)
    ax.set_xlim(lim)
    ax.set_ylim(lim)
    ax.set_xlabel("reference peak [m]")
    ax.set_ylabel("predicted peak [m]")
    ax.set_title(f"peak correlation {report['peak_correlation_pooled']:.3f}", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_dir / "peak_scatter.png", dpi=130)
    plt.close(fig)
    written += [out_dir / "peak_scatter.csv", out_dir / "peak_scatter.png"]

    hyst_ref = arrayio.load_array(report_dir / "hysteresis_reference")
    hyst_pred = arrayio.load_array(report_dir / "hysteresis_predicted")
    _write_csv(
        out_dir / "hysteresis.csv",
        ["drift_ref", "force_ref", "drift_pred", "force_pred"],
        [hyst_ref[0], hyst_ref[1], hyst_pred[0], hyst_pred[1]],
    )
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    ax.plot(hyst_ref[0], hyst_ref[1], "k-", lw=0.8, label="reference")
    ax.plot(hyst_pred[0], hyst_pred[1], "r--", lw=0.8, label="surrogate")
    ax.set_xlabel("first-story drift [m]")
    ax.set_ylabel("restoring force")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "hysteresis.png", dpi=130)
    plt.close(fig)
    written += [out_dir / "hysteresis.csv", out_dir / "hysteresis.png"]

    loss_path = run_dir / "model" / "loss_history.csv"
    if loss_path.exists():
        hist = np.genfromtxt(loss_path, delimiter=",", names=True)
        hist = np.atleast_1d(hist)
        fig, ax = plt.subplots(figsize=(5.4, 3.4))
        ax.semilogy(hist["epoch"], hist["train_loss"], label="training")
        ax.semilogy(hist["epoch"], hist["val_loss"], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / "loss_history.png", dpi=130)
        plt.close(fig)
        written.append(out_dir / "loss_history.png")

    return [str(p) for p in written]
