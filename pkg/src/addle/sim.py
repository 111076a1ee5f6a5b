"""Synthetic subjective raters.

Ground truth: ``x ~ N(0, I_D)``, severity ``s = u . x`` for a fixed unit vector
``u``, and true label ``y* = #{k : tau_k < s}`` with population thresholds at
the standard-normal quantiles ``k/K`` (balanced classes).

A rater perceives ``s' = s + w_r . x + eps`` with ``eps ~ N(0, s_r^2)`` and
reports ``#{k : tau_k + delta_rk < s'}``. ``delta_r`` is a label-dependent bias
and ``w_r`` an image-dependent one, so label noise depends on both the sample
and the true label.
"""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from addle.data import Dataset


@dataclass(frozen=True)
class SimHyper:
    sigma_delta: float = 0.5
    sigma_w: float = 0.3
    sigma_eps: float = 0.3
    plant_oracle: bool = True
    oracle_index: int = 0


@dataclass
class GroundTruth:
    X: np.ndarray
    severity: np.ndarray
    true_labels: np.ndarray
    groups: np.ndarray
    thresholds: np.ndarray

    def __len__(self) -> int:
        return len(self.true_labels)


@dataclass
class RaterProfile:
    delta: np.ndarray
    w: np.ndarray
    noise: float
    rater_id: int = 0

    def perceived_thresholds(self, thresholds: np.ndarray) -> np.ndarray:
        return np.asarray(thresholds) + self.delta


def population_thresholds(K: int) -> np.ndarray:
    nd = NormalDist()
    return np.array([nd.inv_cdf((k + 1) / K) for k in range(K - 1)])


def severity_direction(D: int) -> np.ndarray:
    return np.full(D, 1.0 / np.sqrt(D))


def gen_samples(
    N: int,
    D: int = 16,
    K: int = 4,
    group_size: int = 1,
    seed: int = 0,
    jitter: float = 0.1,
    nonlinear: float = 0.0,
) -> GroundTruth:
    """Draw ``N`` samples in groups (studies) of ``group_size`` sharing one severity.

    Within a group, features differ only by jitter orthogonal to the severity
    direction. ``nonlinear > 0`` mixes in a squared feature along a second
    direction (then rescaled to unit variance).
    """
    if N < 0 or D < 1 or group_size < 1 or K < 2:
        raise ValueError(f"invalid sizes N={N}, D={D}, K={K}, group_size={group_size}")
    if nonlinear and D < 2:
        raise ValueError("the nonlinear mix needs D >= 2")
    rng = np.random.default_rng(seed)
    u = severity_direction(D)
    n_groups = -(-N // group_size)
    base = rng.normal(size=(n_groups, D))
    groups = np.repeat(np.arange(n_groups), group_size)[:N]
    X = base[groups].copy()
    if group_size > 1:
        noise = rng.normal(size=(N, D)) * jitter
        X += noise - np.outer(noise @ u, u)
    s = base @ u
    if nonlinear:
        v = np.zeros(D)
        v[0], v[1] = 1.0, -1.0
        v /= np.sqrt(2.0)
        # jitter is kept orthogonal to u only, so use the group base for both terms
        s = (s + nonlinear * ((base @ v) ** 2 - 1.0)) / np.sqrt(1.0 + 2.0 * nonlinear**2)
    severity = s[groups]
    tau = population_thresholds(K)
    true_labels = (severity[:, None] > tau[None, :]).sum(axis=1)
    return GroundTruth(X, severity, true_labels, groups, tau)


def gen_population(R: int, D: int = 16, K: int = 4, hyper: SimHyper = SimHyper(), seed: int = 0) -> list[RaterProfile]:
    if R < 1:
        raise ValueError(f"need at least one rater, got R={R}")
    rng = np.random.default_rng(seed)
    tau = population_thresholds(K)
    out = []
    for r in range(R):
        delta = rng.normal(0.0, hyper.sigma_delta, size=K - 1)
        w = rng.normal(0.0, hyper.sigma_w / np.sqrt(D), size=D)
        noise = abs(rng.normal(0.0, hyper.sigma_eps))
        if hyper.plant_oracle and r == hyper.oracle_index:
            delta, w, noise = np.zeros(K - 1), np.zeros(D), 0.0
        # keep perceived thresholds strictly increasing
        delta = np.sort(tau + delta) - tau
        out.append(RaterProfile(delta, w, float(noise), r))
    return out


def rate(x: np.ndarray, severity: float, thresholds: np.ndarray, profile: RaterProfile, rng: np.random.Generator) -> int:
    eps = rng.normal(0.0, profile.noise) if profile.noise > 0 else 0.0
    perceived = severity + float(profile.w @ x) + eps
    return int((profile.perceived_thresholds(thresholds) < perceived).sum())


def rate_all(gt: GroundTruth, raters: np.ndarray, profiles: list[RaterProfile], seed: int) -> np.ndarray:
    """Label every sample with its assigned rater; one noise draw per sample in order."""
    rng = np.random.default_rng(seed)
    labels = np.empty(len(gt), dtype=np.int64)
    for i in range(len(gt)):
        labels[i] = rate(gt.X[i], gt.severity[i], gt.thresholds, profiles[raters[i]], rng)
    return labels


def assign_raters(n_groups: int, R: int, dist: str = "power-law", exponent: float = 1.0, seed: int = 0) -> np.ndarray:
    """One rater per group. Power-law shares follow ``rank^-exponent`` over a
    seeded random ranking of the raters."""
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        p = np.full(R, 1.0 / R)
    elif dist == "power-law":
        ranks = rng.permutation(R)
        p = (ranks + 1.0) ** -exponent
        p /= p.sum()
    else:
        raise ValueError(f"unknown assignment distribution {dist!r}")
    return rng.choice(R, size=n_groups, p=p)


def simulate(
    N: int = 4000,
    D: int = 16,
    K: int = 4,
    R: int = 8,
    hyper: SimHyper = SimHyper(),
    group_size: int = 1,
    assignment: str = "power-law",
    exponent: float = 1.0,
    seed: int = 0,
    nonlinear: float = 0.0,
) -> tuple[Dataset, list[RaterProfile]]:
    """Full generative pass: samples, raters, assignment, and subjective labels."""
    ss = np.random.SeedSequence(seed)
    s_samples, s_pop, s_assign, s_rate = (int(c.generate_state(1)[0]) for c in ss.spawn(4))
    gt = gen_samples(N, D, K, group_size, s_samples, nonlinear=nonlinear)
    profiles = gen_population(R, D, K, hyper, s_pop)
    n_groups = int(gt.groups.max()) + 1 if N else 0
    per_group = assign_raters(n_groups, R, assignment, exponent, s_assign)
    raters = per_group[gt.groups] if N else np.zeros(0, dtype=np.int64)
    labels = rate_all(gt, raters, profiles, s_rate)
    ds = Dataset(gt.X, labels, raters, gt.groups, gt.true_labels, n_raters=R, num_classes=K)
    return ds, profiles


def agreement(ds: Dataset) -> np.ndarray:
    """Per-rater fraction of labels equal to the gold label (NaN for unused raters)."""
    out = np.full(ds.n_raters, np.nan)
    for r in range(ds.n_raters):
        idx = ds.rater_index(r)
        if len(idx):
            out[r] = float(np.mean(ds.labels[idx] == ds.true_labels[idx]))
    return out
