"""Virtual-rater inference, study-level aggregation, and evaluation reports.

A "model" here is anything with ``n_raters`` and ``rater_scores(X, r)``:
:class:`addle.backbone.Model` or :class:`addle.backbone.Ensemble`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from addle import metrics


def predict_rater(model, X, r: int) -> np.ndarray:
    if not 0 <= r < model.n_raters:
        raise IndexError(f"unknown rater {r}; model has {model.n_raters}")
    return model.rater_scores(np.atleast_2d(X), r)


def rater_score_matrix(model, X) -> np.ndarray:
    """(R, N) scores, one row per virtual rater."""
    X = np.atleast_2d(X)
    return np.stack([model.rater_scores(X, r) for r in range(model.n_raters)])


def _average(S: np.ndarray, idx) -> np.ndarray:
    # sorted rows, fixed order: a full greedy set reproduces mean_rater bit for bit
    idx = np.sort(np.asarray(idx, dtype=np.int64))
    return S[idx].sum(axis=0) / len(idx)


def mean_rater(model, X) -> np.ndarray:
    return _average(rater_score_matrix(model, X), np.arange(model.n_raters))


def group_aggregate(groups, scores) -> tuple[np.ndarray, np.ndarray]:
    """Mean score per group, groups in order of first appearance."""
    groups = np.asarray(groups)
    scores = np.asarray(scores, dtype=np.float64)
    uniq, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    sums = np.zeros(len(uniq))
    counts = np.zeros(len(uniq))
    np.add.at(sums, inverse, scores)
    np.add.at(counts, inverse, 1.0)
    order = np.argsort(first, kind="stable")
    return uniq[order], (sums / counts)[order]


def group_labels(groups, labels) -> np.ndarray:
    """Label of each group's first sample, groups in order of first appearance."""
    groups = np.asarray(groups)
    _, first = np.unique(groups, return_index=True)
    return np.asarray(labels)[np.sort(first)]


METRICS = ("jt",) + tuple(f"{kind}{k}" for kind in ("auc", "pauc") for k in range(8))


def metric_value(name: str, scores, gold, fpr_max: float = 0.30) -> float:
    """``jt``, ``auc{k}`` or ``pauc{k}`` where cutoff k means gold > k."""
    if name == "jt":
        return metrics.jt_index(scores, gold)
    for prefix in ("pauc", "auc"):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            k = int(name[len(prefix):])
            positive = np.asarray(gold) > k
            if prefix == "auc":
                return metrics.auc(scores, positive)
            return metrics.partial_auc(scores, positive, fpr_max)
    raise ValueError(f"unknown metric {name!r}")


@dataclass
class VirtualRaterSet:
    raters: list[int]
    metric: str
    step_scores: list[float]

    @property
    def value(self) -> float:
        return self.step_scores[-1]


def greedy_select(model, X, gold, groups=None, metric: str = "jt", fpr_max: float = 0.30, max_size: int | None = None) -> VirtualRaterSet:
    """Forward selection of raters whose averaged score maximizes ``metric``.

    Scores are averaged per group before scoring when ``groups`` is given.
    Stops as soon as no candidate strictly improves the metric. Ties go to
    the lowest rater index.
    """
    X = np.atleast_2d(X)
    if len(X) == 0:
        raise ValueError("greedy selection needs a non-empty validation set")
    S = rater_score_matrix(model, X)
    gold = np.asarray(gold)
    if groups is not None:
        gold = group_labels(groups, gold)

    def evaluate(idx):
        avg = _average(S, idx)
        if groups is not None:
            avg = group_aggregate(groups, avg)[1]
        return metric_value(metric, avg, gold, fpr_max)

    chosen: list[int] = []
    steps: list[float] = []
    best = -np.inf
    limit = model.n_raters if max_size is None else min(max_size, model.n_raters)
    while len(chosen) < limit:
        cand_best, cand_val = None, -np.inf
        for r in range(model.n_raters):
            if r in chosen:
                continue
            v = evaluate(chosen + [r])
            if v > cand_val:
                cand_best, cand_val = r, v
        if cand_best is None or not cand_val > best:
            break
        chosen.append(cand_best)
        steps.append(cand_val)
        best = cand_val
    return VirtualRaterSet(chosen, metric, steps)


def greedy_predict(model, rset: VirtualRaterSet | list[int], X) -> np.ndarray:
    """Average of the selected raters' scores (divided by the set size)."""
    raters = rset.raters if isinstance(rset, VirtualRaterSet) else list(rset)
    if not raters:
        raise ValueError("greedy prediction needs at least one selected rater")
    S = np.stack([predict_rater(model, X, r) for r in sorted(raters)])
    return S.sum(axis=0) / len(raters)


@dataclass
class CutoffResult:
    cutoff: int
    auc: float
    partial_auc: float
    roc: list[list[float]] = field(repr=False)


@dataclass
class EvaluationReport:
    jt: float
    fpr_max: float
    cutoffs: list[CutoffResult]
    n: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(d["jt"], d["fpr_max"], [CutoffResult(**c) for c in d["cutoffs"]], d["n"])


def evaluate(scores, gold, groups=None, K: int = 4, fpr_max: float = 0.30, cutoffs=None) -> EvaluationReport:
    """JT index plus AUC / normalized partial AUC for each cutoff ``gold > k``.

    With ``groups`` the per-sample scores are first averaged per study.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold)
    if groups is not None:
        gold = group_labels(groups, gold)
        scores = group_aggregate(groups, scores)[1]
    cutoffs = range(K - 1) if cutoffs is None else cutoffs
    results = []
    for k in cutoffs:
        positive = gold > k
        results.append(
            CutoffResult(
                int(k),
                metrics.auc(scores, positive),
                metrics.partial_auc(scores, positive, fpr_max),
                metrics.roc_points(scores, positive).tolist(),
            )
        )
    return EvaluationReport(metrics.jt_index(scores, gold), fpr_max, results, int(len(scores)))
