"""Frank-Hall binary decomposition for K ordered classes.

Class ``y`` becomes K-1 binary targets ``t_k = [y > k]``. The loss is the sum of
the K-1 binary cross-entropies and the severity score is the sum of the K-1
predicted probabilities, so it lies in ``[0, K-1]``.
"""
from __future__ import annotations

import numpy as np

from addle import tensor as T


def encode_label(y: int, K: int) -> np.ndarray:
    if K < 2:
        raise ValueError(f"need at least two classes, got K={K}")
    if not 0 <= y < K:
        raise ValueError(f"label {y} out of range for K={K}")
    return (y > np.arange(K - 1)).astype(np.float64)


def encode_labels(y: np.ndarray, K: int) -> np.ndarray:
    """Vectorised :func:`encode_label`; returns shape (N, K-1)."""
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= K):
        raise ValueError(f"labels must lie in [0, {K - 1}], got range [{y.min()}, {y.max()}]")
    return (y[:, None] > np.arange(K - 1)[None, :]).astype(np.float64)


def fh_loss(logits, y: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    t = encode_label(y, logits.shape[0] + 1)
    return float(T.bce_with_logits(T.Tensor(logits), t).data.sum())


def fh_loss_batch(logits: T.Tensor, y: np.ndarray) -> T.Tensor:
    """Summed Frank-Hall loss over a (B, K-1) batch of logits (differentiable)."""
    targets = encode_labels(y, logits.shape[1] + 1)
    return T.total(T.bce_with_logits(logits, targets))


def score(logits) -> float:
    return float(T.stable_sigmoid(np.asarray(logits, dtype=np.float64)).sum())


def scores(logits: np.ndarray) -> np.ndarray:
    """Row-wise :func:`score` for a (B, K-1) array."""
    return T.stable_sigmoid(np.asarray(logits, dtype=np.float64)).sum(axis=1)
