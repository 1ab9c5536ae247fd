import json
import re

import numpy as np
import pytest

from airtwin.errors import (
    DegenerateTarget,
    InvalidConfig,
    NoData,
    SchemaMismatch,
)
from airtwin.geo import FeatureTable
from airtwin.models import (
    CvConfig,
    ForestParams,
    GbtParams,
    TreeNode,
    TreeParams,
    accuracy_metric,
    cross_validate,
    eval_report_to_json,
    fit_gbt,
    fit_random_forest,
    fit_tree,
    model_from_json,
    model_hash,
    model_to_json,
    predict,
    predict_tree,
)


def table_from(X, y=None, prefix="f"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    ids = tuple(f"z{i}" for i in range(len(X)))
    names = tuple(f"{prefix}{j}" for j in range(X.shape[1]))
    return FeatureTable(ids, names, X, None if y is None else np.asarray(y, float))


# --- independent exhaustive CART oracle ------------------------------------


def _sse(v: np.ndarray) -> float:
    return float(np.sum((v - v.mean()) ** 2))


def oracle_tree(X, y, depth, max_depth, min_leaf, rtol=1e-9):
    """Exhaustive split search over every (feature, midpoint) candidate.

    Gains within ``rtol`` of the maximum (relative to parent SSE) count
    as tied and resolve to the lowest (feature, threshold) candidate.
    """
    node = {"value": float(y.mean()), "n": len(y)}
    if (max_depth is not None and depth >= max_depth) or len(y) < 2 * min_leaf:
        return node
    if np.ptp(y) == 0:
        return node
    sse_parent = _sse(y)
    candidates = []
    for f in range(X.shape[1]):
        xs = np.unique(X[:, f])
        for a, b in zip(xs, xs[1:]):
            t = (a + b) / 2.0
            if t >= b:
                continue
            left = X[:, f] <= t
            n_left = int(left.sum())
            if n_left < min_leaf or len(y) - n_left < min_leaf:
                continue
            gain = sse_parent - _sse(y[left]) - _sse(y[~left])
            candidates.append((f, t, gain))
    if not candidates:
        return node
    best_gain = max(g for _, _, g in candidates)
    if best_gain <= rtol * sse_parent:
        return node
    # first (feature, threshold) among near-maximal gains
    f, t, _ = next(
        c for c in candidates if c[2] >= best_gain - rtol * sse_parent
    )
    left = X[:, f] <= t
    node["feature"] = f
    node["threshold"] = t
    node["left"] = oracle_tree(X[left], y[left], depth + 1, max_depth, min_leaf, rtol)
    node["right"] = oracle_tree(X[~left], y[~left], depth + 1, max_depth, min_leaf, rtol)
    return node


def assert_same_tree(node: TreeNode, oracle: dict):
    assert node.n_samples == oracle["n"]
    assert node.value == pytest.approx(oracle["value"], abs=1e-12)
    if "feature" in oracle:
        assert not node.is_leaf
        assert node.feature_index == oracle["feature"]
        assert node.threshold == oracle["threshold"]
        assert_same_tree(node.left, oracle["left"])
        assert_same_tree(node.right, oracle["right"])
    else:
        assert node.is_leaf, f"expected leaf, got split on {node.feature_index}"


class TestFitTree:
    def test_constant_target_single_leaf(self):
        t = table_from(np.arange(6.0), y=np.full(6, 4.5))
        tree = fit_tree(t)
        assert tree.is_leaf
        assert tree.value == 4.5
        assert tree.n_samples == 6

    def test_step_function_split(self):
        x = np.arange(1.0, 11.0)
        y = (x > 5).astype(float)
        tree = fit_tree(table_from(x, y), TreeParams(max_depth=1))
        assert tree.feature_index == 0
        assert tree.threshold == 5.5
        assert tree.left.value == 0.0
        assert tree.right.value == 1.0

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(30):
            n = int(rng.integers(5, 31))
            f = int(rng.integers(1, 4))
            X = rng.uniform(-5, 5, size=(n, f))
            y = rng.normal(size=n)
            min_leaf = int(rng.integers(1, 3))
            depth = int(rng.integers(1, 3))
            tree = fit_tree(
                table_from(X, y),
                TreeParams(max_depth=depth, min_samples_leaf=min_leaf),
            )
            expected = oracle_tree(X, y, 0, depth, min_leaf)
            assert_same_tree(tree, expected)

    def test_duplicate_feature_ties_to_lower_index(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([x + 100, x + 100])  # identical gain everywhere
        y = np.array([0.0, 0.0, 1.0, 1.0])
        tree = fit_tree(table_from(X, y), TreeParams(max_depth=1))
        assert tree.feature_index == 0

    def test_empty_table_rejected(self):
        t = table_from(np.zeros((0, 1)), y=np.zeros(0))
        with pytest.raises(NoData):
            fit_tree(t)

    def test_missing_target_rejected(self):
        with pytest.raises(NoData):
            fit_tree(table_from(np.arange(4.0)))


class TestRandomForest:
    def test_single_tree_reduces_to_fit_tree(self):
        rng = np.random.default_rng(1)
        t = table_from(rng.normal(size=(30, 3)), y=rng.normal(size=30))
        params = ForestParams(
            n_trees=1, bootstrap=False, feature_subsample=1.0, seed=5
        )
        forest = fit_random_forest(t, params)
        single = fit_tree(t, TreeParams(seed=5))
        np.testing.assert_array_equal(predict(forest, t), predict_tree(single, t.X))

    def test_seed_determinism(self):
        rng = np.random.default_rng(2)
        t = table_from(rng.normal(size=(40, 4)), y=rng.uniform(1, 10, 40))
        params = ForestParams(n_trees=12, max_depth=6, feature_subsample=0.6, seed=9)
        m1 = fit_random_forest(t, params)
        m2 = fit_random_forest(t, params)
        assert model_to_json(m1) == model_to_json(m2)
        np.testing.assert_array_equal(predict(m1, t), predict(m2, t))

    def test_thread_count_does_not_change_model(self):
        rng = np.random.default_rng(3)
        t = table_from(rng.normal(size=(50, 5)), y=rng.uniform(1, 10, 50))
        params = ForestParams(n_trees=16, max_depth=7, feature_subsample=0.5, seed=4)
        serial = fit_random_forest(t, params, n_jobs=1)
        threaded = fit_random_forest(t, params, n_jobs=4)
        assert model_to_json(serial) == model_to_json(threaded)

    def test_memorizes_training_points(self):
        rng = np.random.default_rng(4)
        t = table_from(rng.uniform(size=(25, 2)), y=rng.uniform(1, 20, 25))
        # power-of-two tree count keeps the ensemble mean exact in floats
        params = ForestParams(
            n_trees=4, bootstrap=False, max_depth=None, min_samples_leaf=1,
            feature_subsample=1.0, seed=0,
        )
        model = fit_random_forest(t, params)
        np.testing.assert_array_equal(predict(model, t), t.y)
        odd = fit_random_forest(t, ForestParams(
            n_trees=3, bootstrap=False, max_depth=None, min_samples_leaf=1,
            feature_subsample=1.0, seed=0,
        ))
        np.testing.assert_allclose(predict(odd, t), t.y, rtol=1e-14)

    def test_importances_normalized(self):
        rng = np.random.default_rng(5)
        t = table_from(rng.normal(size=(40, 3)), y=rng.uniform(1, 5, 40))
        model = fit_random_forest(t, ForestParams(n_trees=5, seed=1))
        total = sum(model.impurity_importances.values())
        assert total == pytest.approx(1.0, abs=1e-9)


class TestGbt:
    def test_zero_trees_predicts_mean(self):
        rng = np.random.default_rng(6)
        t = table_from(rng.normal(size=(20, 2)), y=rng.uniform(5, 15, 20))
        model = fit_gbt(t, GbtParams(n_trees=0))
        np.testing.assert_allclose(predict(model, t), t.y.mean())

    def test_overfits_training_data(self):
        rng = np.random.default_rng(7)
        t = table_from(rng.normal(size=(50, 3)), y=rng.uniform(5, 25, 50))
        model = fit_gbt(
            t, GbtParams(n_trees=80, learning_rate=1.0, max_depth=8, seed=0)
        )
        assert accuracy_metric(t.y, predict(model, t)) >= 99.5

    def test_training_sse_monotone_nonincreasing(self):
        rng = np.random.default_rng(8)
        t = table_from(rng.normal(size=(60, 4)), y=rng.uniform(3, 30, 60))
        model = fit_gbt(t, GbtParams(n_trees=50, learning_rate=0.3, max_depth=3, seed=2))
        sse = np.array(model.train_sse)
        assert len(sse) == 51
        assert np.all(np.diff(sse) <= 1e-9)

    def test_learning_rate_bounds(self):
        with pytest.raises(InvalidConfig):
            GbtParams(learning_rate=0.0)
        with pytest.raises(InvalidConfig):
            GbtParams(learning_rate=1.5)


def leaf_tree_model(values, kind="random_forest", lr=None, base=None):
    """Hand-assembled ensemble whose trees are single leaves."""
    from airtwin.models import _FlatTree

    trees = []
    for v in values:
        t = _FlatTree()
        t._new_node(float(v), 1)
        t.freeze()
        trees.append(t)
    from airtwin.models import TreeEnsembleModel

    return TreeEnsembleModel(
        kind=kind,
        trees=tuple(trees),
        feature_names=("f0",),
        hyperparams={},
        impurity_importances={"f0": 0.0},
        learning_rate=lr,
        base_prediction=base,
    )


class TestPredict:
    def test_single_leaf_tree(self):
        tree = TreeNode(value=7.25, n_samples=3)
        np.testing.assert_array_equal(predict_tree(tree, np.zeros((4, 2))), 7.25)

    def test_forest_mean(self):
        model = leaf_tree_model([10.0, 14.0])
        np.testing.assert_array_equal(predict(model, np.zeros((3, 1))), 12.0)

    def test_gbt_formula(self):
        model = leaf_tree_model([2.0, 3.0], kind="gbt", lr=0.1, base=12.0)
        np.testing.assert_allclose(predict(model, np.zeros((2, 1))), 12.5)

    def test_schema_mismatch(self):
        model = leaf_tree_model([1.0])
        with pytest.raises(SchemaMismatch):
            predict(model, np.zeros((2, 3)))
        bad = table_from(np.zeros((2, 1)), prefix="other")
        with pytest.raises(SchemaMismatch):
            predict(model, bad)


class TestAccuracyMetric:
    def test_perfect(self):
        y = np.array([3.0, 8.0, 12.0])
        assert accuracy_metric(y, y) == 100.0

    def test_hand_example(self):
        assert accuracy_metric(np.array([10.0, 20.0]), np.array([9.0, 22.0])) == pytest.approx(90.0)

    def test_clamped_at_zero(self):
        y = np.array([5.0, 10.0])
        assert accuracy_metric(y, 3 * y) == 0.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(9)
        y = rng.uniform(1, 30, 20)
        yhat = y + rng.normal(0, 2, 20)
        base = accuracy_metric(y, yhat)
        for c in (0.5, 3.0, 1e4):
            assert accuracy_metric(c * y, c * yhat) == pytest.approx(base, abs=1e-9)

    def test_nonpositive_target(self):
        with pytest.raises(DegenerateTarget):
            accuracy_metric(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


class TestCrossValidate:
    def test_perfect_model(self):
        # y values repeat across folds, so a memorizing tree is exact
        y = np.tile(np.array([10.0, 20.0, 30.0]), 6)
        X = y.copy()
        t = table_from(X, y)
        spec = ForestParams(
            n_trees=1, bootstrap=False, max_depth=None, min_samples_leaf=1, seed=0
        )
        rep = cross_validate(t, spec, CvConfig(k=3, seed=1))
        assert rep.accuracy_pct == 100.0
        assert rep.accuracy_std_pct == 0.0
        assert rep.error_range == (rep.mean_target, rep.mean_target)

    def test_constant_predictor_hand_folds(self):
        # unshuffled k=2 on y=(10,10,14,14); fold models predict the
        # opposite fold's mean, so accuracies are 60% and (1 - 2/7)*100
        t = table_from(np.arange(4.0), y=np.array([10.0, 10.0, 14.0, 14.0]))
        spec = GbtParams(n_trees=0)
        rep = cross_validate(t, spec, CvConfig(k=2, seed=0, shuffle=False))
        acc1 = 100 * (1 - 4 / 10)
        acc2 = 100 * (1 - 4 / 14)
        assert rep.accuracy_pct == pytest.approx((acc1 + acc2) / 2, abs=1e-9)
        assert rep.accuracy_std_pct == pytest.approx(abs(acc1 - acc2) / 2, abs=1e-9)
        assert rep.mean_target == 12.0
        assert rep.error_range == (8.0, 16.0)

    def test_k_exceeding_rows(self):
        t = table_from(np.arange(3.0), y=np.ones(3))
        with pytest.raises(InvalidConfig):
            cross_validate(t, GbtParams(n_trees=0), CvConfig(k=5))

    def test_fold_count(self):
        rng = np.random.default_rng(10)
        t = table_from(rng.normal(size=(30, 2)), y=rng.uniform(1, 9, 30))
        rep = cross_validate(t, GbtParams(n_trees=5, max_depth=2), CvConfig(k=6))
        assert len(rep.per_fold) == 6
        assert sum(fe.n_test for fe in rep.per_fold) == 30


class TestSerialization:
    def test_model_round_trip(self):
        rng = np.random.default_rng(11)
        t = table_from(rng.normal(size=(40, 3)), y=rng.uniform(1, 20, 40))
        model = fit_gbt(t, GbtParams(n_trees=10, max_depth=3, seed=3))
        text = model_to_json(model)
        back = model_from_json(text)
        np.testing.assert_array_equal(predict(model, t), predict(back, t))
        assert model_to_json(back) == text
        assert model_hash(back) == model_hash(model)

    def test_rf_round_trip(self):
        rng = np.random.default_rng(12)
        t = table_from(rng.normal(size=(25, 2)), y=rng.uniform(1, 20, 25))
        model = fit_random_forest(t, ForestParams(n_trees=4, max_depth=4, seed=1))
        back = model_from_json(model_to_json(model))
        np.testing.assert_array_equal(predict(model, t), predict(back, t))

    def test_unknown_version_rejected(self):
        with pytest.raises(SchemaMismatch):
            model_from_json(json.dumps({"format_version": 99, "kind": "gbt"}))

    def test_eval_report_six_decimals(self):
        t = table_from(np.arange(12.0), y=np.full(12, 12.8476961234) + np.arange(12) * 0.001)
        rep = cross_validate(t, GbtParams(n_trees=0), CvConfig(k=3, seed=0))
        text = eval_report_to_json(rep)
        m = re.search(r'"mean_target": (\d+\.\d+)', text)
        assert m, text
        assert len(m.group(1).split(".")[1]) == 6
        doc = json.loads(text)
        assert doc["mean_target"] == pytest.approx(rep.mean_target, abs=1e-6)
        assert len(doc["per_fold"]) == 3
