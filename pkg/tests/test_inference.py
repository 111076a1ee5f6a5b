import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from addle import inference, metrics
from addle.latent import LatentCodebook

from conftest import random_model


def _X(n=40, seed=0):
    return np.random.default_rng(seed).normal(size=(n, 5))


def test_predict_rater_range_and_determinism(model):
    X = _X()
    s = inference.predict_rater(model, X, 1)
    assert np.all((s >= 0) & (s <= 3))
    assert np.array_equal(s, inference.predict_rater(model, X, 1))
    with pytest.raises(IndexError):
        inference.predict_rater(model, X, 4)


def test_mean_rater_matches_loop(model):
    X = _X()
    want = np.zeros(len(X))
    for r in range(model.n_raters):
        want += np.array([inference.predict_rater(model, x, r)[0] for x in X])
    np.testing.assert_allclose(inference.mean_rater(model, X), want / model.n_raters, rtol=0, atol=1e-12)


def test_mean_rater_degenerate_cases():
    one = random_model(2, R=1)
    X = _X()
    np.testing.assert_array_equal(inference.mean_rater(one, X), inference.predict_rater(one, X, 0))
    same = random_model(3, R=3)
    same.codebook = LatentCodebook(np.repeat(same.codebook.codes[:1], 3, 0))
    np.testing.assert_allclose(inference.mean_rater(same, X), inference.predict_rater(same, X, 2), rtol=0, atol=1e-15)


def test_greedy_predict_examples(model):
    X = _X()
    np.testing.assert_array_equal(inference.greedy_predict(model, [2], X), inference.predict_rater(model, X, 2))
    assert np.array_equal(inference.greedy_predict(model, [3, 0, 1, 2], X), inference.mean_rater(model, X))
    subset = [3, 1]
    loop = np.array([sum(inference.predict_rater(model, x, r)[0] for r in subset) / len(subset) for x in X])
    np.testing.assert_allclose(inference.greedy_predict(model, subset, X), loop, rtol=0, atol=1e-12)
    with pytest.raises(ValueError, match="at least one"):
        inference.greedy_predict(model, [], X)


def test_group_aggregate_examples():
    ids, means = inference.group_aggregate([7, 7], [1.0, 2.0])
    assert ids.tolist() == [7] and means.tolist() == [1.5]
    ids, means = inference.group_aggregate([3, 1, 2], [0.5, 0.25, 2.0])
    assert ids.tolist() == [3, 1, 2] and means.tolist() == [0.5, 0.25, 2.0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.floats(-5, 5)), min_size=1, max_size=40))
def test_group_aggregate_matches_loop(pairs):
    groups, scores = zip(*pairs)
    order, acc = [], {}
    for g, s in pairs:
        if g not in acc:
            order.append(g)
            acc[g] = []
        acc[g].append(s)
    ids, means = inference.group_aggregate(groups, scores)
    assert ids.tolist() == order
    np.testing.assert_allclose(means, [sum(acc[g]) / len(acc[g]) for g in order], rtol=1e-12, atol=1e-12)


def test_greedy_single_dominant_rater():
    """Rater 0 scores the gold ordering perfectly; every other rater inverts it."""
    m = random_model(4, R=3)
    X = _X(60, 4)
    gold = np.digitize(m.rater_scores(X, 0), [0.75, 1.5, 2.25])
    if len(np.unique(gold)) < 2:
        pytest.skip("degenerate draw")
    rset = inference.greedy_select(m, X, gold)
    assert metrics.jt_index(m.rater_scores(X, 0), gold) == 1.0
    assert rset.raters == [0]


def test_greedy_properties_on_random_models():
    for seed in range(10):
        m = random_model(seed, R=5, spread=2.0)
        X = _X(80, seed)
        gold = np.digitize(X.sum(axis=1) + np.random.default_rng(seed).normal(0, 1, 80), [-1, 0, 1])
        rset = inference.greedy_select(m, X, gold)
        assert len(rset.raters) == len(set(rset.raters)) >= 1
        assert all(b > a for a, b in zip(rset.step_scores, rset.step_scores[1:]))
        single = max(metrics.jt_index(m.rater_scores(X, r), gold) for r in range(m.n_raters))
        assert rset.value >= single
        assert rset.value == metrics.jt_index(inference.greedy_predict(m, rset, X), gold)
        # determinism
        assert inference.greedy_select(m, X, gold).raters == rset.raters


def test_greedy_size_two_representable_and_capped():
    m = random_model(5, R=6, spread=2.0)
    X = _X(80, 5)
    gold = np.digitize(X[:, 0] - X[:, 1], [-1, 0, 1])
    rset = inference.greedy_select(m, X, gold, max_size=2)
    assert len(rset.raters) <= 2
    assert len(inference.VirtualRaterSet([1, 4], "jt", [0.5, 0.6]).raters) == 2


def test_greedy_ties_go_to_lowest_index():
    m = random_model(6, R=3)
    m.codebook = LatentCodebook(np.repeat(m.codebook.codes[:1], 3, 0))
    X = _X(50, 6)
    gold = np.digitize(X[:, 0], [-1, 0, 1])
    assert inference.greedy_select(m, X, gold).raters == [0]


def test_greedy_empty_validation_rejected(model):
    with pytest.raises(ValueError, match="non-empty"):
        inference.greedy_select(model, np.zeros((0, 5)), np.zeros(0))


def test_greedy_with_groups_scores_study_means():
    m = random_model(7, R=4, spread=2.0)
    X = _X(60, 7)
    groups = np.repeat(np.arange(20), 3)
    gold = np.repeat(np.digitize(np.random.default_rng(7).normal(size=20), [-1, 0, 1]), 3)
    rset = inference.greedy_select(m, X, gold, groups)
    avg = inference.group_aggregate(groups, inference.greedy_predict(m, rset, X))[1]
    assert rset.value == metrics.jt_index(avg, gold[::3])


def test_metric_value_names():
    s = np.array([0.1, 0.4, 0.2, 0.9])
    g = np.array([0, 1, 1, 2])
    assert inference.metric_value("jt", s, g) == metrics.jt_index(s, g)
    assert inference.metric_value("auc0", s, g) == metrics.auc(s, g > 0)
    assert inference.metric_value("pauc1", s, g, 0.5) == metrics.partial_auc(s, g > 1, 0.5)
    with pytest.raises(ValueError):
        inference.metric_value("f1", s, g)


def test_evaluate_report_roundtrip():
    rng = np.random.default_rng(0)
    gold = np.repeat(np.arange(4), 5)
    s = gold + rng.normal(size=20)
    rep = inference.evaluate(s, gold, K=4)
    assert [c.cutoff for c in rep.cutoffs] == [0, 1, 2]
    assert rep.cutoffs[1].auc == metrics.auc(s, gold > 1)
    assert inference.EvaluationReport.from_dict(rep.to_dict()) == rep
