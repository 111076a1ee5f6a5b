"""Latent-space probes: interpolation between virtual raters, PCA of the
codebook, sweeps along principal components, and code norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from addle import metrics
from addle.inference import group_aggregate, group_labels
from addle.latent import LatentCodebook


def interpolate(z0, z1, alpha: float) -> np.ndarray:
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValueError(f"endpoint shapes differ: {z0.shape} vs {z1.shape}")
    return z0 + alpha * (z1 - z0)


def _jt(model, z, X, gold, groups) -> float:
    s = model.code_scores(X, z)
    if groups is not None:
        s = group_aggregate(groups, s)[1]
    return metrics.jt_index(s, gold)


def performance_curve(model, codes, X, gold, groups=None) -> list[float]:
    """JT of the score produced by each code in ``codes`` on a gold-labelled set."""
    gold = np.asarray(gold)
    if groups is not None:
        gold = group_labels(groups, gold)
    return [_jt(model, z, X, gold, groups) for z in codes]


def interpolation_curve(model, z0, z1, alphas, X, gold, groups=None) -> list[tuple[float, float]]:
    codes = [interpolate(z0, z1, a) for a in alphas]
    return list(zip(map(float, alphas), performance_curve(model, codes, X, gold, groups)))


@dataclass
class PCABasis:
    mean: np.ndarray
    components: np.ndarray  # (M, M), one component per row
    eigenvalues: np.ndarray
    ratios: np.ndarray

    def project(self, Z) -> np.ndarray:
        return (np.atleast_2d(Z) - self.mean) @ self.components.T


def pca(Z) -> PCABasis:
    """Eigendecomposition of the (R-1)-normalised covariance of the code rows.

    Components are sorted by decreasing eigenvalue and signed so each one's
    largest-magnitude entry is positive.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError(f"PCA needs at least two code rows, got shape {Z.shape}")
    mean = Z.mean(axis=0)
    C = Z - mean
    cov = C.T @ C / (Z.shape[0] - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.clip(vals[order], 0.0, None)
    comps = vecs[:, order].T.copy()
    for i, c in enumerate(comps):
        if c[np.argmax(np.abs(c))] < 0:
            comps[i] = -c
    tot = vals.sum()
    ratios = vals / tot if tot > 0 else np.r_[1.0, np.zeros(len(vals) - 1)]
    return PCABasis(mean, comps, vals, ratios)


def projection_range(basis: PCABasis, Z, c: int) -> tuple[float, float]:
    proj = basis.project(Z)[:, c]
    return float(proj.min()), float(proj.max())


def component_sweep(model, basis: PCABasis, c: int, lambdas, X, gold, groups=None) -> list[tuple[float, float]]:
    """JT of codes ``mean + lambda * component_c`` over the ``lambdas`` grid."""
    if not 0 <= c < basis.components.shape[0]:
        raise IndexError(f"component {c} out of range for a {basis.components.shape[0]}-dim basis")
    codes = [basis.mean + lam * basis.components[c] for lam in lambdas]
    return list(zip(map(float, lambdas), performance_curve(model, codes, X, gold, groups)))


def default_lambda_grid(basis: PCABasis, Z, c: int, points: int = 11) -> np.ndarray:
    lo, hi = projection_range(basis, Z, c)
    return np.linspace(lo, hi, points)


def code_norms(cb: LatentCodebook) -> list[tuple[str, float]]:
    return [(rid, float(np.sqrt(z @ z))) for rid, z in zip(cb.rater_ids, cb.codes)]
