"""Aggregate score CSVs across runs and render per-fold boxplot figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import DataError
from .metrics import REPORT_HEADER, read_report_csv

METRIC_COLUMNS = ("acc", "edit", "f1_10", "f1_25", "f1_50")
METRIC_TITLES = {
    "acc": "Accuracy",
    "edit": "Edit score",
    "f1_10": "F1@10",
    "f1_25": "F1@25",
    "f1_50": "F1@50",
}


def _load_run(run_dir: Path) -> list[dict]:
    scores = run_dir / "scores.csv"
    if not scores.exists():
        raise DataError(f"{run_dir}: no scores.csv to report on")
    rows = read_report_csv(scores)
    if not rows:
        raise DataError(f"{scores}: empty report")
    return rows


def run_report(run_dirs: list[Path | str], out_dir: Path | str) -> Path:
    """Combined CSV plus one boxplot figure of per-fold scores per metric."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = {Path(d).name or str(d): _load_run(Path(d)) for d in run_dirs}

    combined = out / "report.csv"
    with open(combined, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("run",) + REPORT_HEADER)
        for name, rows in runs.items():
            for row in rows:
                writer.writerow([name] + [row[col] for col in REPORT_HEADER])

    fig, axes = plt.subplots(1, len(METRIC_COLUMNS), figsize=(4 * len(METRIC_COLUMNS), 4))
    labels = list(runs)
    for ax, column in zip(axes, METRIC_COLUMNS):
        data = []
        for name in labels:
            folds = [float(r[column]) for r in runs[name] if r["split"] != "mean"]
            data.append(folds)
        ax.boxplot(data, tick_labels=labels)
        ax.set_title(METRIC_TITLES[column])
        ax.set_ylabel("%")
        ax.set_ylim(0, 105)
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(out / "metrics_boxplots.png", dpi=120)
    plt.close(fig)
    return combined
