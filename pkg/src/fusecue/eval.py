"""ROC-AUC, cross-dataset averaging and baseline deltas.

Averages are rounded half-up to four decimals, and a delta is the
difference of two rounded averages in AUC percentage points
(0.7858 vs 0.7475 -> +3.83).
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import UndefinedMetric


def rankdata_mid(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(xs)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(mid, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_fake > score_real) + P(tie) / 2.

    ``labels`` are 1 for fake (positive) and 0 for real.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs at least one real and one fake sample")
    r = rankdata_mid(s)
    # twice the U statistic is an exact integer, so the division is the only rounding
    u2 = 2.0 * r[pos].sum() - n_pos * (n_pos + 1)
    return float(u2 / (2.0 * n_pos * n_neg))


def frame_to_video_score(video_ids, scores, labels=None):
    """Mean frame score per video.

    Returns ``(ids, video_scores)`` or, with labels, ``(ids, video_scores,
    video_labels)``. Every frame of one video must carry the same label.
    """
    groups: dict[str, list[float]] = defaultdict(list)
    lab: dict[str, int] = {}
    for i, (v, s) in enumerate(zip(video_ids, scores)):
        groups[v].append(float(s))
        if labels is not None:
            prev = lab.setdefault(v, int(labels[i]))
            if prev != int(labels[i]):
                raise ValueError(f"video {v!r} mixes real and fake frames")
    ids = sorted(groups)
    vs = np.array([np.mean(groups[v]) for v in ids])
    if labels is None:
        return ids, vs
    return ids, vs, np.array([lab[v] for v in ids])


def round_half_up(x: float, places: int = 4) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def average_auc(per_dataset: dict[str, float]) -> float:
    """Unweighted mean over datasets, summed exactly in decimal."""
    if not per_dataset:
        raise UndefinedMetric("no datasets to average")
    total = sum((Decimal(repr(float(v))) for v in per_dataset.values()), Decimal(0))
    return float(total / len(per_dataset))


def delta_vs_baseline(avg: float, baseline_avg: float, places: int = 2) -> float:
    """Difference in AUC percentage points, rounded half-up to ``places``."""
    d = (Decimal(repr(float(avg))) - Decimal(repr(float(baseline_avg)))) * 100
    return float(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


@dataclass
class EvalReport:
    per_dataset: dict[str, float]
    baseline_name: str | None = None
    baseline_avg: float | None = None
    video_level: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def avg_auc(self) -> float:
        return average_auc(self.per_dataset)

    @property
    def avg_auc_rounded(self) -> float:
        return round_half_up(self.avg_auc, 4)

    @property
    def delta_points(self) -> float | None:
        if self.baseline_avg is None:
            return None
        return delta_vs_baseline(self.avg_auc_rounded, round_half_up(self.baseline_avg, 4))

    def to_dict(self) -> dict:
        out = {
            "version": 1,
            "per_dataset": dict(sorted(self.per_dataset.items())),
            "avg_auc": self.avg_auc,
            "avg_auc_rounded": self.avg_auc_rounded,
            "baseline_name": self.baseline_name,
            "baseline_avg": self.baseline_avg,
            "delta_points": self.delta_points,
            "video_level": dict(sorted(self.video_level.items())),
            "config": self.config,
        }
        if self.video_level:
            out["video_avg_auc"] = average_auc(self.video_level)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            per_dataset=dict(d["per_dataset"]),
            baseline_name=d.get("baseline_name"),
            baseline_avg=d.get("baseline_avg"),
            video_level=dict(d.get("video_level") or {}),
            config=dict(d.get("config") or {}),
        )

    def format_table(self) -> str:
        names = sorted(self.per_dataset)
        width = max([len("Avg AUC")] + [len(n) for n in names]) + 2
        lines = [f"{'Dataset':<{width}}{'frame AUC':>10}{'video AUC':>11}"]
        for n in names:
            v = self.video_level.get(n)
            vtxt = f"{v:.4f}" if v is not None else "-"
            lines.append(f"{n:<{width}}{self.per_dataset[n]:>10.4f}{vtxt:>11}")
        lines.append(f"{'Avg AUC':<{width}}{self.avg_auc_rounded:>10.4f}")
        if self.delta_points is not None:
            lines.append(f"{'Delta (pp)':<{width}}{self.delta_points:>+10.2f}  vs {self.baseline_name}")
        return "\n".join(lines)
