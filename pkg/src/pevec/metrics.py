"""ROC curves, AUC, and detection rate at a false-positive-rate budget."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RocCurve:
    """Curve points ordered by decreasing threshold.

    ``thresholds[0]`` is +inf (the classify-nothing endpoint at (0, 0));
    equal scores collapse into a single point, so fpr and tpr are
    non-decreasing along the arrays and end at (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int


def roc_curve(scores, labels) -> RocCurve:
    """ROC points for the rule "score >= threshold means malicious"."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.shape != s.shape:
        raise ValueError("scores and labels must be 1-D and the same length")
    values = set(np.unique(y).tolist())
    if not values <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, found {sorted(values - {0, 1})}")
    if len(values) < 2:
        raise ValueError("single-class labels: need at least one positive and one negative")

    order = np.argsort(-s, kind="stable")
    ss = s[order]
    ys = (y[order] == 1).astype(np.int64)
    # Tie groups end where the sorted score changes.
    group_end = np.flatnonzero(np.append(ss[1:] != ss[:-1], True))
    cum_pos = np.cumsum(ys)[group_end]
    taken = group_end + 1
    n_pos = int(ys.sum())
    n_neg = int(len(ys) - n_pos)

    thresholds = np.concatenate([[np.inf], ss[group_end]])
    tpr = np.concatenate([[0.0], cum_pos / n_pos])
    fpr = np.concatenate([[0.0], (taken - cum_pos) / n_neg])
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, n_pos=n_pos, n_neg=n_neg)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the (fpr, tpr) curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def tpr_at_fpr(curve: RocCurve, fpr_budget: float) -> tuple[float, float, float]:
    """Best detection rate with false-positive rate at or below the budget.

    Returns ``(threshold, tpr, achieved_fpr)``. Among points tied on tpr
    the highest threshold (lowest achieved fpr) is reported; when nothing
    but the (0, 0) endpoint qualifies, that endpoint is returned.
    """
    if not 0.0 < fpr_budget < 1.0:
        raise ValueError("fpr_budget must be in (0, 1)")
    last = int(np.searchsorted(curve.fpr, fpr_budget, side="right")) - 1
    first = int(np.searchsorted(curve.tpr, curve.tpr[last], side="left"))
    return (
        float(curve.thresholds[first]),
        float(curve.tpr[first]),
        float(curve.fpr[first]),
    )


def evaluation_report(scores, labels, budgets: Sequence[float]) -> dict[str, Any]:
    """JSON-ready summary: AUC, curve points, and per-budget detection rates."""
    curve = roc_curve(scores, labels)
    points = [
        {
            "threshold": None if math.isinf(t) else t,
            "fpr": f,
            "tpr": r,
        }
        for t, f, r in zip(
            curve.thresholds.tolist(), curve.fpr.tolist(), curve.tpr.tolist()
        )
    ]
    report: dict[str, Any] = {"auc": auc(curve), "points": points, "budgets": {}}
    for budget in budgets:
        threshold, rate, achieved = tpr_at_fpr(curve, budget)
        report["budgets"][repr(budget)] = {
            "threshold": None if math.isinf(threshold) else threshold,
            "tpr": rate,
            "fpr": achieved,
        }
    return report


def write_scores(path: str | Path, ids: Iterable[str], scores: Iterable[float]) -> None:
    """Write a two-column score file with header ``sha256,score``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sha256", "score"])
        for sid, score in zip(ids, scores):
            writer.writerow([sid, repr(float(score))])


def read_scores(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a ``sha256,score`` file back into ids and float64 scores."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sha256", "score"]:
            raise ValueError(f"{path}: expected header 'sha256,score', got {header}")
        ids: list[str] = []
        values: list[float] = []
        for row in reader:
            if len(row) != 2:
                raise ValueError(f"{path}: malformed row {row}")
            ids.append(row[0])
            values.append(float(row[1]))
    return ids, np.asarray(values, dtype=np.float64)
