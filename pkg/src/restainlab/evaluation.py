"""Center matching and detection metrics.

Ground-truth and predicted centers are matched one-to-one by minimum-cost
assignment on the micrometer distance matrix, with pairs farther than the
distance gate forbidden. Counts aggregate across FOVs by summing TP/FP/FN
before deriving ratios (micro-averaging).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

# Forbidden-assignment cost. With fewer than 1e5 points per side, one extra
# gated match always saves more than the sum of all feasible distances, so
# the optimum maximizes gated matches first, then total matched distance.
BIG_FACTOR = 1e6
MAX_POINTS = 100_000


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)


@dataclass
class MetricsReport:
    label: str
    tp: int = 0
    fp: int = 0
    fn: int = 0
    f1: float = 0.0
    sensitivity: float = 0.0
    precision: float = 0.0


def match_centers(
    gt,
    pred,
    max_distance_um: float = 1.5,
    microns_per_pixel: float = 0.5,
) -> MatchResult:
    """Optimal one-to-one matching of centers under a physical distance gate.

    Distances are pixel distances scaled to micrometers. Entries beyond the
    gate are replaced by a large forbidden cost and the matrix is padded
    square before the assignment solve; assigned pairs whose true distance
    exceeds the gate are discarded to unmatched. The result maximizes the
    number of gated matches and, among those, minimizes total distance.
    """
    if not max_distance_um > 0:
        raise ValueError("max_distance_um must be > 0")
    if not microns_per_pixel > 0:
        raise ValueError("microns_per_pixel must be > 0")
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    n, m = len(gt), len(pred)
    if max(n, m) >= MAX_POINTS:
        raise ValueError(f"instance too large for the forbidden-cost bound ({MAX_POINTS})")
    if n == 0 or m == 0:
        return MatchResult([], list(range(n)), list(range(m)))

    dist = np.linalg.norm(gt[:, None, :] - pred[None, :, :], axis=2) * microns_per_pixel
    big = BIG_FACTOR * max_distance_um
    size = max(n, m)
    cost = np.full((size, size), big, dtype=np.float64)
    cost[:n, :m] = np.where(dist <= max_distance_um, dist, big)
    rows, cols = linear_sum_assignment(cost)

    pairs = []
    matched_gt = set()
    matched_pred = set()
    for i, j in zip(rows, cols):
        if i < n and j < m and dist[i, j] <= max_distance_um:
            pairs.append((int(i), int(j), float(dist[i, j])))
            matched_gt.add(int(i))
            matched_pred.add(int(j))
    return MatchResult(
        pairs=pairs,
        unmatched_gt=[i for i in range(n) if i not in matched_gt],
        unmatched_pred=[j for j in range(m) if j not in matched_pred],
    )


def _metrics_from_counts(tp: int, fp: int, fn: int, label: str) -> MetricsReport:
    # 0/0 ratios are defined as 1.0: perfect agreement on nothing.
    sensitivity = tp / (tp + fn) if tp + fn > 0 else 1.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 1.0
    return MetricsReport(
        label=label, tp=tp, fp=fp, fn=fn,
        f1=f1, sensitivity=sensitivity, precision=precision,
    )


def compute_metrics(m: MatchResult, label: str = "") -> MetricsReport:
    return _metrics_from_counts(
        tp=len(m.pairs), fp=len(m.unmatched_pred), fn=len(m.unmatched_gt), label=label
    )


def micro_average(results, label: str = "micro-average") -> MetricsReport:
    """Aggregate match results across FOVs by summing counts, then derive ratios."""
    tp = fp = fn = 0
    for r in results:
        tp += len(r.pairs)
        fp += len(r.unmatched_pred)
        fn += len(r.unmatched_gt)
    return _metrics_from_counts(tp, fp, fn, label)


def render_report(reports, fmt: str = "text") -> str:
    """Render metric rows with columns label, F1 score, Sensitivity, Precision.

    Text and CSV round values to 3 decimals; JSON carries full precision
    plus the TP/FP/FN counts.
    """
    reports = list(reports)
    if fmt == "text":
        label_width = max([len("Model performance")] + [len(r.label) for r in reports])
        header = (
            f"{'Model performance':<{label_width}}  "
            f"{'F1 score':>8}  {'Sensitivity':>11}  {'Precision':>9}"
        )
        lines = [header]
        for r in reports:
            lines.append(
                f"{r.label:<{label_width}}  "
                f"{r.f1:>8.3f}  {r.sensitivity:>11.3f}  {r.precision:>9.3f}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "f1_score", "sensitivity", "precision"])
        for r in reports:
            writer.writerow(
                [r.label, f"{r.f1:.3f}", f"{r.sensitivity:.3f}", f"{r.precision:.3f}"]
            )
        return buf.getvalue()
    if fmt == "json":
        doc = [
            {
                "label": r.label,
                "f1_score": r.f1,
                "sensitivity": r.sensitivity,
                "precision": r.precision,
                "tp": r.tp,
                "fp": r.fp,
                "fn": r.fn,
            }
            for r in reports
        ]
        return json.dumps(doc, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r} (expected text, csv, or json)")


def read_centers_csv(path: str | Path) -> np.ndarray:
    """Read an x,y[,score] CSV into an (n, 2) array of centers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["x", "y"]:
            raise ValueError(f"{path}: expected header starting with x,y")
        points = [(float(row[0]), float(row[1])) for row in reader if row]
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)
