"""Rank metrics for ordinal scores: ROC points, AUC, normalized partial AUC,
and the Jonckheere-Terpstra index. Ties get half credit throughout."""
from __future__ import annotations

import numpy as np


def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores for {len(y)} labels")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("ROC analysis needs both positive and negative samples")
    return s, y


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr) rows from sweeping every distinct threshold, high to low.

    Tied scores move the curve in one diagonal step. Starts at (0, 0) and
    ends at (1, 1).
    """
    s, y = _binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each block of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    fpr = np.r_[0.0, fp[ends] / fp[-1]]
    tpr = np.r_[0.0, tp[ends] / tp[-1]]
    return np.column_stack([fpr, tpr])


def _area(pts: np.ndarray, fpr_max: float) -> float:
    f, t = pts[:, 0], pts[:, 1]
    area = 0.0
    for i in range(len(f) - 1):
        f0, f1, t0, t1 = f[i], f[i + 1], t[i], t[i + 1]
        if f0 >= fpr_max:
            break
        if f1 > fpr_max:
            t1 = t0 + (t1 - t0) * (fpr_max - f0) / (f1 - f0)
            f1 = fpr_max
        area += (f1 - f0) * (t0 + t1) / 2.0
    return area


def auc(scores, labels) -> float:
    return _area(roc_points(scores, labels), 1.0)


def partial_auc(scores, labels, fpr_max: float = 0.30) -> float:
    """Area under the ROC over FPR in [0, fpr_max], divided by fpr_max."""
    if not 0 < fpr_max <= 1:
        raise ValueError(f"fpr_max must lie in (0, 1], got {fpr_max}")
    return _area(roc_points(scores, labels), fpr_max) / fpr_max


def _pair_credit(lo: np.ndarray, hi: np.ndarray) -> float:
    """Sum over pairs (a in lo, b in hi) of [b > a] + 0.5 [b == a]."""
    lo = np.sort(lo)
    below = np.searchsorted(lo, hi, side="left")
    at_or_below = np.searchsorted(lo, hi, side="right")
    return float(below.sum() + 0.5 * (at_or_below - below).sum())


def jt_index(scores, labels) -> float:
    """Fraction of cross-group pairs ordered like their labels (ties count 0.5)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores for {len(y)} labels")
    levels = np.unique(y)
    if len(levels) < 2:
        raise ValueError("JT index needs at least two label groups")
    credit = 0.0
    pairs = 0
    for i, a in enumerate(levels):
        lo = s[y == a]
        for b in levels[i + 1 :]:
            hi = s[y == b]
            credit += _pair_credit(lo, hi)
            pairs += len(lo) * len(hi)
    return credit / pairs
