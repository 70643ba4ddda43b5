"""Report writers: JSON and CSV per mode, plus a mode-comparison figure.

Outputs are deterministic for deterministic reports: JSON is key-sorted, CSV
rows follow the report's item order, and the PNG carries fixed metadata.
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import EvalReport

FIGURE_NAME = "accuracy_by_mode.png"
SUMMARY_NAME = "summary.csv"


def report_csv_bytes(report: EvalReport) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["item_id", "predicted", "matched_gold", "correct", "error"])
    for row in report.per_item:
        writer.writerow(
            [row.item_id, row.predicted, row.matched_gold, str(row.correct).lower(), row.error or ""]
        )
    return buf.getvalue().encode("utf-8")


def summary_csv_bytes(reports: list[EvalReport]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode", "n", "accuracy"])
    for report in reports:
        writer.writerow([report.mode, report.n, f"{report.accuracy:.6f}"])
    return buf.getvalue().encode("utf-8")


def render_accuracy_figure(reports: list[EvalReport], path: str) -> None:
    """Bar chart of accuracy per mode, written as a PNG."""
    modes = [r.mode for r in reports]
    accuracies = [r.accuracy for r in reports]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(modes)), 3.2))
    bars = ax.bar(modes, accuracies, color="#4878a8", width=0.55)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title("Accuracy by mode")
    for bar, acc in zip(bars, accuracies):
        ax.annotate(
            f"{acc:.2f}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=9,
        )
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": "kurag"})
    plt.close(fig)


def write_report_files(reports: list[EvalReport], out_dir: str) -> dict[str, str]:
    """Write per-mode JSON + CSV, a summary CSV, and the comparison figure.

    Returns a name -> path map of everything written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: dict[str, str] = {}
    for report in reports:
        json_path = os.path.join(out_dir, f"report_{report.mode}.json")
        with open(json_path, "wb") as fh:
            fh.write(report.to_json_bytes())
        written[f"report_{report.mode}.json"] = json_path
        csv_path = os.path.join(out_dir, f"report_{report.mode}.csv")
        with open(csv_path, "wb") as fh:
            fh.write(report_csv_bytes(report))
        written[f"report_{report.mode}.csv"] = csv_path
    summary_path = os.path.join(out_dir, SUMMARY_NAME)
    with open(summary_path, "wb") as fh:
        fh.write(summary_csv_bytes(reports))
    written[SUMMARY_NAME] = summary_path
    figure_path = os.path.join(out_dir, FIGURE_NAME)
    render_accuracy_figure(reports, figure_path)
    written[FIGURE_NAME] = figure_path
    return written
