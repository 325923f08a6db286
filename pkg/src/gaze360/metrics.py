"""Saliency and segmentation metrics, and the joint training objective.

All saliency metrics take arrays (or :class:`AttentionMap`), use the
natural logarithm and population statistics over every pixel.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from .errors import (
    EmptyGroundTruth,
    NoFixations,
    NotAProbability,
    NotNormalized,
    ShapeMismatch,
    ZeroVariance,
)

KLD_EPS = 1e-7
NORM_TOL = 1e-4
PROB_TOL = 1e-5
LOG_CLAMP = 1e-12


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")


def _check_normalized(p, name):
    s = p.sum()
    if abs(s - 1.0) > NORM_TOL or np.any(p < 0):
        raise NotNormalized(f"{name} must be a nonnegative distribution summing to 1 (sum={s})")


def kld(p_gt, p_pred, eps: float = KLD_EPS) -> float:
    """sum_i P(i) * log(P(i) / (Q(i) + eps) + eps)."""
    p, q = _arr(p_gt), _arr(p_pred)
    _same_shape(p, q)
    _check_normalized(p, "ground truth")
    _check_normalized(q, "prediction")
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (q[nz] + eps) + eps)))


def cc(x, y) -> float:
    a, b = _arr(x), _arr(y)
    _same_shape(a, b)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ZeroVariance("correlation is undefined for a constant map")
    a = a - a.mean()
    b = b - b.mean()
    return float(np.sum(a * b) / math.sqrt(np.sum(a * a) * np.sum(b * b)))


def nss(pred, fix) -> float:
    """Mean z-scored prediction over fixated pixels; 0 for a constant prediction."""
    p, f = _arr(pred), _arr(fix)
    _same_shape(p, f)
    if not np.all((f == 0) | (f == 1)):
        raise ValueError("fixation map must be binary")
    n = int(f.sum())
    if n == 0:
        raise NoFixations("fixation map has no fixated pixels")
    std = p.std()
    if np.ptp(p) == 0 or std == 0:
        return 0.0
    z = (p - p.mean()) / std
    return float(z[f == 1].sum() / n)


def sim(p_gt, p_pred) -> float:
    p, q = _arr(p_gt), _arr(p_pred)
    _same_shape(p, q)
    _check_normalized(p, "ground truth")
    _check_normalized(q, "prediction")
    return float(np.minimum(p, q).sum())


def fixation_point_map(points, width: int, height: int) -> np.ndarray:
    """Binary map with ones at the pixels nearest to each (x, y) point inside the grid."""
    f = np.zeros((height, width), dtype=np.uint8)
    for x, y in np.asarray(points, dtype=float).reshape(-1, 2):
        c, r = int(math.floor(x + 0.5)), int(math.floor(y + 0.5))
        if 0 <= c < width and 0 <= r < height:
            f[r, c] = 1
    return f


# ---------------------------------------------------------------------------
# segmentation


def _labels(m) -> np.ndarray:
    return np.asarray(getattr(m, "class_id", m))


def segmentation_scores(x, y, classes: Optional[Iterable[int]] = None) -> Dict[int, tuple]:
    """Per-class (dice, iou) for every non-background class present in ground truth ``x``."""
    gt, pr = _labels(x), _labels(y)
    _same_shape(gt, pr)
    present = [int(c) for c in np.unique(gt) if c != 0]
    if classes is not None:
        wanted = set(int(c) for c in classes)
        present = [c for c in present if c in wanted]
    if not present:
        raise EmptyGroundTruth("ground truth contains no foreground class")
    out = {}
    for c in present:
        gx, py = gt == c, pr == c
        inter = int(np.count_nonzero(gx & py))
        nx, ny = int(np.count_nonzero(gx)), int(np.count_nonzero(py))
        out[c] = (2.0 * inter / (nx + ny), inter / (nx + ny - inter))
    return out


def dice(x, y, classes=None) -> float:
    scores = segmentation_scores(x, y, classes)
    return float(np.mean([d for d, _ in scores.values()]))


def iou(x, y, classes=None) -> float:
    scores = segmentation_scores(x, y, classes)
    return float(np.mean([j for _, j in scores.values()]))


# ---------------------------------------------------------------------------
# losses


def loss_sal(x_sal, y_sal, eps: float = KLD_EPS) -> float:
    return kld(x_sal, y_sal, eps) - cc(x_sal, y_sal)


def cross_entropy(x_seg, y_prob) -> float:
    """Pixel-mean cross entropy of class probabilities ``y_prob`` (H, W, C) against labels."""
    gt = _labels(x_seg).astype(np.intp)
    prob = np.asarray(y_prob, dtype=np.float64)
    _check_probabilities(gt, prob)
    h, w = gt.shape
    p_true = prob[np.arange(h)[:, None], np.arange(w)[None, :], gt]
    return float(-np.log(np.maximum(p_true, LOG_CLAMP)).mean())


def _check_probabilities(gt, prob):
    if prob.ndim != 3 or prob.shape[:2] != gt.shape:
        raise ShapeMismatch(f"probabilities {prob.shape} do not match labels {gt.shape} + (C,)")
    if gt.size and gt.max() >= prob.shape[2]:
        raise ShapeMismatch(f"label {gt.max()} has no probability channel")
    if np.any(prob < 0) or np.any(np.abs(prob.sum(axis=2) - 1.0) > PROB_TOL):
        raise NotAProbability("per-pixel class scores must be probability vectors")


def loss_seg(x_seg, y_prob) -> float:
    """-Dice - IoU (on the argmax labelling) + cross entropy."""
    gt = _labels(x_seg)
    prob = np.asarray(y_prob, dtype=np.float64)
    _check_probabilities(gt.astype(np.intp), prob)
    pred = np.argmax(prob, axis=2)
    scores = segmentation_scores(gt, pred)
    d = float(np.mean([s[0] for s in scores.values()]))
    j = float(np.mean([s[1] for s in scores.values()]))
    return -d - j + cross_entropy(gt, prob)


def loss_total(x_sal, x_seg, y_sal, y_prob, lambda_sal: float = 1.0, lambda_seg: float = 1.0,
               eps: float = KLD_EPS) -> float:
    total = 0.0
    if lambda_sal:
        total += lambda_sal * loss_sal(x_sal, y_sal, eps)
    if lambda_seg:
        total += lambda_seg * loss_seg(x_seg, y_prob)
    return total


# ---------------------------------------------------------------------------
# reports

METRIC_NAMES = ("kld", "cc", "nss", "sim", "dice", "iou")


@dataclass
class FrameScores:
    frame_id: int
    valid: bool
    values: Dict[str, Optional[float]] = field(default_factory=dict)
    reason: str = ""


@dataclass
class EvalReport:
    """Per-frame scores plus means over valid frames.

    Aggregation is a (sum, count) reduction per metric, so merging partial
    reports in any order gives identical results.
    """

    frames: List[FrameScores] = field(default_factory=list)

    def add(self, scores: FrameScores):
        self.frames.append(scores)

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(sorted(self.frames + other.frames, key=lambda f: f.frame_id))

    @property
    def valid_count(self) -> int:
        return sum(f.valid for f in self.frames)

    @property
    def skipped_count(self) -> int:
        return len(self.frames) - self.valid_count

    def aggregates(self) -> Dict[str, Optional[float]]:
        out = {}
        for name in METRIC_NAMES:
            vals = [f.values[name] for f in self.frames if f.valid and f.values.get(name) is not None]
            out[name] = math.fsum(vals) / len(vals) if vals else None
        return out
