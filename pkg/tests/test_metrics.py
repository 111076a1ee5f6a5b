import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import roc_auc_score

from addle import metrics


# ------------------------------------------------------------ brute force


def brute_jt(s, y):
    num = den = 0.0
    for i in range(len(s)):
        for j in range(len(s)):
            if y[i] < y[j]:
                den += 1
                num += 1.0 if s[j] > s[i] else 0.5 if s[j] == s[i] else 0.0
    return num / den


def brute_auc(s, y):
    pos, neg = s[y], s[~y]
    return sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg) / (len(pos) * len(neg))


def brute_roc(s, y):
    """One point per candidate threshold t: predict positive when score >= t."""
    pts = [(0.0, 0.0)]
    P, N = y.sum(), (~y).sum()
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        pts.append(((pred & ~y).sum() / N, (pred & y).sum() / P))
    return np.array(pts)


def dense_partial(s, y, fpr_max, grid=20001):
    """Midpoint rule over a dense FPR grid that includes every ROC knot.

    Between knots the curve is linear, so each midpoint sits strictly inside
    one non-vertical segment and the rule is exact up to rounding."""
    pts = brute_roc(s, y)
    f, t = pts[:, 0], pts[:, 1]
    xs = np.unique(np.r_[np.linspace(0.0, fpr_max, grid), f[f < fpr_max], fpr_max])
    mid = (xs[1:] + xs[:-1]) / 2
    i = np.searchsorted(f, mid, side="right") - 1
    tpr = t[i] + (t[i + 1] - t[i]) * (mid - f[i]) / (f[i + 1] - f[i])
    return float(np.sum(np.diff(xs) * tpr)) / fpr_max


def random_case(seed, n_max=200, ties=False):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    y = rng.integers(0, 4, size=n)
    y[:2] = [0, 3]
    s = y * rng.uniform(0, 1.5) + rng.normal(size=n)
    if ties or seed % 3 == 0:
        s = np.round(s, 0)
    return s, y


# ------------------------------------------------------------ examples


def test_jt_examples():
    y = np.array([0, 0, 1, 2, 3])
    assert metrics.jt_index(np.arange(5.0), y) == 1.0
    assert metrics.jt_index(-np.arange(5.0), y) == 0.0
    assert metrics.jt_index(np.ones(4), [0, 0, 1, 1]) == 0.5


def test_jt_single_group_rejected():
    with pytest.raises(ValueError, match="two label groups"):
        metrics.jt_index([1.0, 2.0], [1, 1])


def test_roc_single_class_rejected():
    with pytest.raises(ValueError, match="both positive and negative"):
        metrics.roc_points([1.0, 2.0], [True, True])


def test_roc_perfect_separation_passes_through_corner():
    pts = metrics.roc_points([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert [0.0, 1.0] in pts.tolist()
    assert pts[0].tolist() == [0.0, 0.0] and pts[-1].tolist() == [1.0, 1.0]


def test_roc_all_ties_is_one_diagonal_step():
    assert metrics.roc_points(np.zeros(6), [0, 1, 0, 1, 1, 0]).tolist() == [[0.0, 0.0], [1.0, 1.0]]
    assert metrics.auc(np.zeros(6), [0, 1, 0, 1, 1, 0]) == 0.5


def test_partial_auc_examples():
    for fpr_max in (0.05, 0.3, 0.77, 1.0):
        assert metrics.partial_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], fpr_max) == 1.0
    rng = np.random.default_rng(0)
    s, y = rng.normal(size=50), rng.integers(0, 2, size=50).astype(bool)
    assert metrics.partial_auc(s, y, 1.0) == metrics.auc(s, y)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            metrics.partial_auc(s, y, bad)


def test_partial_auc_all_ties_is_half_diagonal():
    # diagonal y = x over [0, m] normalized by m
    assert metrics.partial_auc(np.zeros(4), [0, 1, 0, 1], 0.3) == pytest.approx(0.15, abs=1e-15)


# ------------------------------------------------------------ oracles


def test_jt_matches_brute_force():
    for seed in range(50):
        s, y = random_case(seed)
        assert metrics.jt_index(s, y) == pytest.approx(brute_jt(s, y), abs=1e-9)


def test_auc_matches_brute_force_and_sklearn():
    for seed in range(50):
        s, y4 = random_case(seed)
        y = y4 > 1
        assert metrics.auc(s, y) == pytest.approx(brute_auc(s, y), abs=1e-9)
        assert metrics.auc(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-9)


def test_roc_points_match_threshold_sweep():
    for seed in range(50):
        s, y4 = random_case(seed)
        y = y4 > 0
        np.testing.assert_allclose(metrics.roc_points(s, y), brute_roc(s, y), rtol=0, atol=1e-9)


def test_partial_auc_matches_dense_grid():
    for seed in range(50):
        s, y4 = random_case(seed, n_max=60)
        y = y4 > 1
        for m in (0.1, 0.3, 0.55, 1.0):
            assert metrics.partial_auc(s, y, m) == pytest.approx(dense_partial(s, y, m, grid=2001), abs=1e-9), (seed, m)


def test_partial_auc_hand_case_n20():
    rng = np.random.default_rng(20)
    s = np.round(rng.normal(size=20), 1)
    y = np.array([0, 1] * 10, dtype=bool)
    assert metrics.partial_auc(s, y, 0.3) == pytest.approx(dense_partial(s, y, 0.3), abs=1e-9)


def test_partial_auc_matches_sklearn_mcclish_inverse():
    # sklearn reports 0.5 * (1 + (area - lo) / (hi - lo)); undo that to recover the raw area
    for seed in range(50):
        s, y4 = random_case(seed)
        y = y4 > 1
        for m in (0.1, 0.3, 0.5):
            lo, hi = 0.5 * m * m, m
            raw = lo + (2 * roc_auc_score(y, s, max_fpr=m) - 1) * (hi - lo)
            assert metrics.partial_auc(s, y, m) * m == pytest.approx(raw, abs=1e-9), (seed, m)


def test_degenerate_cases_against_oracles():
    y = np.array([0, 0, 1, 1, 2, 2])
    for s in (np.zeros(6), np.array([0, 0, 5, 5, 9, 9.0]), np.array([9, 9, 5, 5, 0, 0.0])):
        assert metrics.jt_index(s, y) == pytest.approx(brute_jt(s, y), abs=1e-12)
        b = y > 0
        assert metrics.auc(s, b) == pytest.approx(brute_auc(s, b), abs=1e-12)
        np.testing.assert_allclose(metrics.roc_points(s, b), brute_roc(s, b), atol=1e-12)
        assert metrics.partial_auc(s, b, 0.3) == pytest.approx(dense_partial(s, b, 0.3), abs=1e-9)


def test_two_group_jt_equals_auc():
    for seed in range(50):
        s, y4 = random_case(seed)
        y = (y4 > 1).astype(int)
        assert abs(metrics.jt_index(s, y) - metrics.auc(s, y)) < 1e-12


# ------------------------------------------------------------ properties

labels = st.lists(st.integers(0, 3), min_size=4, max_size=60).filter(lambda v: len(set(v)) >= 2)


@settings(max_examples=60, deadline=None)
@given(labels, st.integers(0, 2**31 - 1))
def test_metrics_invariant_to_sample_order(y, seed):
    rng = np.random.default_rng(seed)
    y = np.array(y)
    s = np.round(rng.normal(size=len(y)), 1)
    perm = rng.permutation(len(y))
    assert metrics.jt_index(s[perm], y[perm]) == metrics.jt_index(s, y)
    b = y >= np.median(y)
    if 0 < b.sum() < len(b):
        assert metrics.auc(s[perm], b[perm]) == metrics.auc(s, b)
        assert metrics.partial_auc(s[perm], b[perm]) == metrics.partial_auc(s, b)


@settings(max_examples=60, deadline=None)
@given(labels, st.integers(0, 2**31 - 1), st.floats(0.01, 1.0))
def test_partial_auc_bounded_and_rank_invariant(y, seed, m):
    rng = np.random.default_rng(seed)
    b = np.array(y) >= 2
    if not 0 < b.sum() < len(b):
        return
    s = np.round(rng.normal(size=len(b)), 1)
    p = metrics.partial_auc(s, b, m)
    assert 0.0 <= p <= 1.0 + 1e-12
    # exp is strictly increasing, so the ranking (and the ROC) is unchanged
    assert metrics.partial_auc(np.exp(s), b, m) == pytest.approx(p, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(labels, st.integers(0, 2**31 - 1))
def test_roc_points_monotone(y, seed):
    b = np.array(y) >= 2
    if not 0 < b.sum() < len(b):
        return
    pts = metrics.roc_points(np.random.default_rng(seed).normal(size=len(b)), b)
    assert np.all(np.diff(pts, axis=0) >= 0)
    assert np.all((pts >= 0) & (pts <= 1))
