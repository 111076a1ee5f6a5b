"""Single-rater ordinal datasets and their CSV form.

CSV header: ``sample_id,group_id,rater_id,label,true_label,f0,...,f{D-1}``.
``true_label`` is optional (empty cells or an absent column mean unknown);
training never reads it. Floats are written with 17 significant digits so a
write/read cycle is lossless.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    raters: np.ndarray
    groups: np.ndarray
    true_labels: np.ndarray | None = None
    sample_ids: np.ndarray | None = None
    n_raters: int | None = None
    num_classes: int = 4

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"features must be an N x D matrix, got shape {self.X.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.raters = np.asarray(self.raters, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        if self.sample_ids is None:
            self.sample_ids = np.arange(len(self.labels), dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.n_raters is None:
            self.n_raters = int(self.raters.max()) + 1 if len(self.raters) else 1
        n = len(self.labels)
        if self.X.shape[0] != n:
            raise ValueError(f"features have {self.X.shape[0]} rows for {n} samples")
        for name in ("raters", "groups", "sample_ids"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries for {n} samples")
        if self.true_labels is not None and len(self.true_labels) != n:
            raise ValueError(f"true_labels has {len(self.true_labels)} entries for {n} samples")
        if n and (self.raters.min() < 0 or self.raters.max() >= self.n_raters):
            raise ValueError(f"rater index outside [0, {self.n_raters - 1}]")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"label outside [0, {self.num_classes - 1}]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def rater_index(self, r: int) -> np.ndarray:
        """Positions of the samples labelled by rater ``r``."""
        return np.flatnonzero(self.raters == r)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.int64)
        return Dataset(
            self.X[idx],
            self.labels[idx],
            self.raters[idx],
            self.groups[idx],
            None if self.true_labels is None else self.true_labels[idx],
            self.sample_ids[idx],
            self.n_raters,
            self.num_classes,
        )

    def gold(self) -> np.ndarray:
        if self.true_labels is None:
            raise ValueError("dataset carries no gold labels")
        return self.true_labels


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(ds: Dataset, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "group_id", "rater_id", "label", "true_label"] + [f"f{j}" for j in range(ds.dim)])
            for i in range(len(ds)):
                tl = "" if ds.true_labels is None else str(int(ds.true_labels[i]))
                w.writerow(
                    [int(ds.sample_ids[i]), int(ds.groups[i]), int(ds.raters[i]), int(ds.labels[i]), tl]
                    + [_fmt(v) for v in ds.X[i]]
                )
    except OSError as exc:
        raise OSError(f"could not write dataset to {path}: {exc}") from exc
    return path


def read_csv(path, n_raters: int | None = None, num_classes: int = 4, dim: int | None = None) -> Dataset:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"could not read dataset from {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: missing header")
    header = rows[0]
    for col in ("sample_id", "group_id", "rater_id", "label"):
        if col not in header:
            raise ValueError(f"{path}: missing column {col!r}")
    feats = [j for j, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    D = len(feats) if dim is None else dim
    col = {h: j for j, h in enumerate(header)}
    body = rows[1:]
    has_truth = "true_label" in col and all(r[col["true_label"]] != "" for r in body)
    ds = Dataset(
        np.array([[float(r[j]) for j in feats] for r in body], dtype=np.float64).reshape(len(body), D),
        np.array([int(r[col["label"]]) for r in body], dtype=np.int64),
        np.array([int(r[col["rater_id"]]) for r in body], dtype=np.int64),
        np.array([int(r[col["group_id"]]) for r in body], dtype=np.int64),
        np.array([int(r[col["true_label"]]) for r in body], dtype=np.int64) if has_truth else None,
        np.array([int(r[col["sample_id"]]) for r in body], dtype=np.int64),
        n_raters,
        num_classes,
    )
    return ds


def write_metadata(meta: dict, path) -> Path:
    """Key-value text, one ``key = value`` per line, keys sorted."""
    path = Path(path)
    lines = [f"{k} = {meta[k]}" for k in sorted(meta)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_metadata(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def split_groups(ds: Dataset, fractions, seed: int) -> list[Dataset]:
    """Partition by group id (no study straddles two splits)."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be positive and sum to 1, got {fractions.tolist()}")
    uniq = np.unique(ds.groups)
    perm = np.random.default_rng(seed).permutation(uniq)
    bounds = np.round(np.cumsum(fractions) * len(uniq)).astype(int)
    bounds[-1] = len(uniq)
    parts, start = [], 0
    for stop in bounds:
        chosen = np.isin(ds.groups, perm[start:stop])
        parts.append(ds.subset(np.flatnonzero(chosen)))
        start = stop
    return parts
