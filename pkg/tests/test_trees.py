import itertools
import json

import numpy as np
import pytest

from catrobust.trees import (
    BoostedEnsemble,
    Forest,
    Stump,
    Tree,
    fit_boosted_trees,
    fit_cart,
    fit_forest,
    fit_gbs,
    logistic_loss,
    model_from_dict,
    predict,
)


def brute_force_stump(X, y):
    """Best first-round split by trying every (feature, midpoint) pair."""
    p0 = y.mean()
    F = np.log(p0 / (1 - p0))
    pr = 1 / (1 + np.exp(-F))
    g, h = pr - y, np.full(len(y), pr * (1 - pr))
    best = (-np.inf, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = X[:, f] <= thr
            gain = (g[left].sum() ** 2 / h[left].sum() + g[~left].sum() ** 2 / h[~left].sum()
                    - g.sum() ** 2 / h.sum())
            if gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best


def test_first_stump_matches_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(8, 51))
        X = np.round(rng.normal(size=(n, 3)), 1)
        y = (X[:, 0] + X[:, 2] + rng.normal(0, 0.5, n) > 0).astype(float)
        if y.min() == y.max():
            continue
        _, f, thr = brute_force_stump(X, y)
        s = fit_gbs(X, y, n_estimators=1).trees[0]
        assert (s.feature, s.threshold) == pytest.approx((f, thr))


def test_separable_1d():
    X = np.array([[0.1], [0.2], [0.4], [0.6], [0.7], [0.9]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = fit_gbs(X, y, n_estimators=1, lr=1.0)
    assert model.trees[0].threshold == pytest.approx(0.5)
    assert np.array_equal(model.predict(X), y)


def test_xor_depth_two(rng):
    # continuous coordinates; an exactly balanced 0/1 grid has zero root gain for any greedy learner
    X = rng.uniform(-1, 1, size=(200, 2))
    y = ((X[:, 0] > 0) != (X[:, 1] > 0)).astype(float)
    assert np.array_equal(fit_boosted_trees(X, y, depth=2, n_estimators=30, lr=1.0).predict(X), y)
    assert np.mean(fit_gbs(X, y, 30, lr=1.0).predict(X) == y) < 0.9


def test_depth_one_equals_gbs(rng):
    X = rng.normal(size=(80, 4))
    y = (X[:, 1] > 0.2).astype(float)
    a = fit_boosted_trees(X, y, depth=1, n_estimators=15)
    b = fit_gbs(X, y, n_estimators=15)
    Z = rng.normal(size=(50, 4))
    assert np.array_equal(a.decision_function(Z), b.decision_function(Z))


@pytest.mark.parametrize("depth", [1, 3, 6])
def test_loss_non_increasing(rng, depth):
    X = rng.normal(size=(150, 5))
    y = (X[:, 0] * X[:, 1] + 0.3 * rng.normal(size=150) > 0).astype(float)
    hist: list = []
    fit_boosted_trees(X, y, depth=depth, n_estimators=30, history=hist)
    assert len(hist) == 31
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_deterministic(rng):
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(float)
    assert fit_gbs(X, y, 10).to_dict() == fit_gbs(X, y, 10).to_dict()
    assert fit_forest(X, y, 5, seed=3).to_dict() == fit_forest(X, y, 5, seed=3).to_dict()
    assert fit_forest(X, y, 5, seed=3).to_dict() != fit_forest(X, y, 5, seed=4).to_dict()


def test_constant_feature_skipped(rng):
    X = np.column_stack([np.ones(40), rng.normal(size=40)])
    y = (X[:, 1] > 0).astype(float)
    assert all(s.feature == 1 for s in fit_gbs(X, y, 5).trees)


def test_bad_input():
    with pytest.raises(ValueError):
        fit_gbs(np.zeros((0, 2)), np.zeros(0))


def test_single_tree_forest_is_cart(rng):
    X = rng.normal(size=(70, 4))
    y = (X[:, 0] + X[:, 3] > 0).astype(float)
    forest = fit_forest(X, y, n_trees=1, max_features=None, bootstrap=False)
    cart = fit_cart(X, y)
    assert forest.trees[0].to_dict() == cart.to_dict()
    assert np.array_equal(forest.predict(X), (cart.predict(X) > 0.5).astype(int))


def test_forest_beats_one_bootstrap_tree():
    for seed in range(10):
        r = np.random.default_rng(seed)
        X = r.normal(size=(120, 5))
        y = (X[:, 0] - X[:, 2] + 0.5 * r.normal(size=120) > 0).astype(float)
        many = np.mean(fit_forest(X, y, 50, seed=seed).predict(X) == y)
        one = np.mean(fit_forest(X, y, 1, seed=seed).predict(X) == y)
        assert many >= one


def test_hand_traced_two_stumps():
    model = BoostedEnsemble([Stump(0, 0.5, -1.0, 2.0), Stump(1, 0.0, 3.0, -4.0)], 0.5, 0.25)
    X = np.array([[0.0, -1.0], [1.0, -1.0], [0.0, 1.0], [1.0, 1.0]])
    # base + lr * (s1 + s2)
    expected = [0.25 + 0.5 * (-1 + 3), 0.25 + 0.5 * (2 + 3), 0.25 + 0.5 * (-1 - 4), 0.25 + 0.5 * (2 - 4)]
    assert model.decision_function(X).tolist() == expected
    labels, scores = predict(model, X)
    assert labels.tolist() == [1, 1, 0, 0]
    assert np.allclose(scores, 1 / (1 + np.exp(-np.array(expected))))


def test_empty_ensemble_gives_base_score():
    model = BoostedEnsemble([], 0.1, -0.7)
    assert model.decision_function(np.zeros((3, 2))).tolist() == [-0.7] * 3
    assert Forest([], []).predict_proba(np.zeros((2, 1))).tolist() == [0.5, 0.5]


def test_positive_leaf_stump_raises_scores(rng):
    X = rng.normal(size=(30, 2))
    model = fit_gbs(X, (X[:, 0] > 0).astype(float), 5)
    before = model.decision_function(X)
    model.trees.append(Stump(1, 0.0, 0.0, 1.0))
    assert np.all(model.decision_function(X) >= before)


def test_scale_invariance(rng):
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + X[:, 1] ** 2 > 0.5).astype(float)
    for c in (0.01, 3.0, 250.0):
        assert np.array_equal(fit_gbs(X, y, 20).predict(X), fit_gbs(c * X, y, 20).predict(c * X))
        assert np.array_equal(fit_boosted_trees(X, y, 3, 10).predict(X),
                              fit_boosted_trees(c * X, y, 3, 10).predict(c * X))


def test_identical_inputs_same_path(rng):
    X = rng.normal(size=(50, 3))
    X[10] = X[20]
    model = fit_boosted_trees(X, (X[:, 0] > 0).astype(float), 4, 10)
    d = model.decision_function(X)
    assert d[10] == d[20]


def test_round_trip(rng):
    X = rng.normal(size=(40, 3))
    y = (X[:, 2] > 0).astype(float)
    for model in (fit_gbs(X, y, 5), fit_boosted_trees(X, y, 3, 5), fit_forest(X, y, 4, seed=1)):
        again = model_from_dict(json.loads(json.dumps(model.to_dict())))
        assert np.array_equal(again.predict_proba(X), model.predict_proba(X))
    with pytest.raises(ValueError):
        model_from_dict({"kind": "bag", "trees": []})


def test_tree_depth_and_cart_purity(rng):
    X = rng.normal(size=(64, 2))
    y = (X[:, 0] > 0).astype(float)
    t = fit_cart(X, y, max_depth=3)
    assert isinstance(t, Tree) and t.depth <= 3
    assert np.array_equal(t.predict(X) > 0.5, y > 0.5)


def test_logistic_loss_matches_formula():
    y = np.array([0.0, 1.0, 1.0])
    F = np.array([-2.0, 0.5, 30.0])
    ref = np.mean([np.log1p(np.exp(f)) - f * t for f, t in zip(F, y)])
    assert logistic_loss(y, F) == pytest.approx(ref)
    assert all(isinstance(x, float) for x in itertools.chain([logistic_loss(y, F)]))
