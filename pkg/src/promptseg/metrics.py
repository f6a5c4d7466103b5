"""Frame accuracy, segmental edit score, and overlap F1 for label streams.

Edit distance operates on segment class sequences (durations ignored); F1@tau
matches predicted segments in order against unmatched same-class ground-truth
segments by best IoU. Placeholder frames are excluded by dropping positions
whose ground truth is ignored from both streams before scoring.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError, MetricError, ParameterError

F1_THRESHOLDS = (0.10, 0.25, 0.50)


@dataclass(frozen=True)
class Segment:
    label: object
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def segments(stream) -> list[Segment]:
    """Maximal same-label runs, in stream order."""
    stream = list(stream)
    if not stream:
        raise ContractError("cannot segment an empty stream")
    out = []
    start = 0
    for i in range(1, len(stream) + 1):
        if i == len(stream) or stream[i] != stream[start]:
            out.append(Segment(stream[start], start, i - 1))
            start = i
    return out


def frame_accuracy(pred, gt, ignore=frozenset()) -> float:
    pred, gt = list(pred), list(gt)
    if len(pred) != len(gt):
        raise DimensionError(f"stream lengths differ: {len(pred)} vs {len(gt)}")
    kept = [(p, g) for p, g in zip(pred, gt) if g not in ignore]
    if not kept:
        raise MetricError("accuracy undefined: every frame is ignored")
    return 100.0 * sum(p == g for p, g in kept) / len(kept)


def _levenshtein(a: list, b: list) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[len(b)]


def edit_score_from_classes(pred_classes: list, gt_classes: list) -> float:
    """Edit score on already-extracted segment class sequences."""
    if not pred_classes or not gt_classes:
        raise ContractError("edit score needs nonempty class sequences")
    distance = _levenshtein(pred_classes, gt_classes)
    return max(0.0, 100.0 * (1.0 - distance / max(len(pred_classes), len(gt_classes))))


def edit_score(pred, gt) -> float:
    return edit_score_from_classes(
        [s.label for s in segments(pred)], [s.label for s in segments(gt)]
    )


def _iou(a: Segment, b: Segment) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    return inter / (a.length + b.length - inter)


def _match_counts(pred_segs: list[Segment], gt_segs: list[Segment], tau: float):
    """Greedy in-order matching: each predicted segment may claim its
    best-IoU unmatched same-class ground-truth segment."""
    matched = [False] * len(gt_segs)
    tp = fp = 0
    for p in pred_segs:
        best_iou, best_j = -1.0, None
        for j, g in enumerate(gt_segs):
            if g.label != p.label:
                continue
            iou = _iou(p, g)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j is not None and best_iou >= tau and not matched[best_j]:
            matched[best_j] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, matched.count(False)


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp + fp + fn == 0:
        return 100.0
    return 100.0 * 2.0 * tp / (2.0 * tp + fp + fn)


def _check_tau(tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ParameterError(f"overlap threshold must be in (0, 1], got {tau}")


def f1_at(pred, gt, tau: float) -> float:
    _check_tau(tau)
    return _f1(*_match_counts(segments(pred), segments(gt), tau))


def per_class_f1(pred, gt, tau: float, label) -> float:
    """f1_at restricted to segments of one class on both sides (vacuously 100)."""
    _check_tau(tau)
    pred_segs = [s for s in segments(pred) if s.label == label]
    gt_segs = [s for s in segments(gt) if s.label == label]
    return _f1(*_match_counts(pred_segs, gt_segs, tau))


@dataclass
class ScoreReport:
    accuracy: float
    edit: float
    f1_10: float
    f1_25: float
    f1_50: float
    per_class: dict = field(default_factory=dict)  # label -> f1@10

    def row(self) -> tuple[float, float, float, float, float]:
        return (self.accuracy, self.edit, self.f1_10, self.f1_25, self.f1_50)


def _drop_ignored(pred, gt, ignore):
    pairs = [(p, g) for p, g in zip(pred, gt) if g not in ignore]
    return [p for p, _ in pairs], [g for _, g in pairs]


def score_streams(
    pairs: list[tuple[list, list]],
    ignore=frozenset(),
    per_class_labels=None,
) -> ScoreReport:
    """Fold-level report over (pred, gt) stream pairs.

    Accuracy counts frames across all videos, edit is the per-video mean, and
    F1 aggregates TP/FP/FN across videos, per the usual segmentation-benchmark
    conventions. Per-class F1@10 is aggregated the same way.
    """
    if not pairs:
        raise MetricError("no stream pairs to score")
    correct = total = 0
    edits = []
    counts = {tau: np.zeros(3, dtype=int) for tau in F1_THRESHOLDS}
    class_counts: dict[object, np.ndarray] = {}
    for pred, gt in pairs:
        if len(pred) != len(gt):
            raise DimensionError(f"stream lengths differ: {len(pred)} vs {len(gt)}")
        pred, gt = _drop_ignored(pred, gt, ignore)
        if not gt:
            raise MetricError("a video has every frame ignored")
        correct += sum(p == g for p, g in zip(pred, gt))
        total += len(gt)
        pred_segs, gt_segs = segments(pred), segments(gt)
        edits.append(
            max(
                0.0,
                100.0
                * (
                    1.0
                    - _levenshtein([s.label for s in pred_segs], [s.label for s in gt_segs])
                    / max(len(pred_segs), len(gt_segs))
                ),
            )
        )
        for tau in F1_THRESHOLDS:
            counts[tau] += _match_counts(pred_segs, gt_segs, tau)
        if per_class_labels is not None:
            for label in per_class_labels:
                tp, fp, fn = _match_counts(
                    [s for s in pred_segs if s.label == label],
                    [s for s in gt_segs if s.label == label],
                    F1_THRESHOLDS[0],
                )
                class_counts.setdefault(label, np.zeros(3, dtype=int))
                class_counts[label] += (tp, fp, fn)
    per_class = {label: _f1(*c) for label, c in class_counts.items()}
    return ScoreReport(
        accuracy=100.0 * correct / total,
        edit=float(np.mean(edits)),
        f1_10=_f1(*counts[0.10]),
        f1_25=_f1(*counts[0.25]),
        f1_50=_f1(*counts[0.50]),
        per_class=per_class,
    )


REPORT_HEADER = ("split", "task", "acc", "edit", "f1_10", "f1_25", "f1_50")


def write_report_csv(path: Path | str, rows: list[tuple[str, str, ScoreReport]]) -> None:
    """``split,task,acc,edit,f1_10,f1_25,f1_50`` with 2-decimal fixed values."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for split, task, report in rows:
            writer.writerow([split, task] + [f"{v:.2f}" for v in report.row()])


def read_report_csv(path: Path | str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_per_class_csv(path: Path | str, per_class: dict) -> None:
    def order(label):
        text = str(label)
        return (0, int(text[1:])) if text.startswith("G") and text[1:].isdigit() else (1, text)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("class", "f1_10"))
        for label in sorted(per_class, key=order):
            writer.writerow((label, f"{per_class[label]:.2f}"))
