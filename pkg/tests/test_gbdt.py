import json
import math

import numpy as np
import pytest

from tabfuse.errors import DataError
from tabfuse.gbdt import GbdtConfig, GbdtModel, Tree, find_best_split, train_gbdt


def brute_force_split(x, g, h, l2_reg, min_child_hessian):
    """Independent oracle: try every feature and midpoint with plain masks.

    Returns (gain, feature, threshold, sorted_gains) or None; ties keep the
    first candidate scanned (features ascending, thresholds ascending).
    """
    n_total = g.sum()
    h_total = h.sum()
    parent = n_total * n_total / (h_total + l2_reg)
    best = None
    all_gains = []
    for j in range(x.shape[1]):
        values = sorted(set(float(v) for v in x[:, j]))
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2.0
            mask = x[:, j] < t
            hl = float(h[mask].sum())
            hr = float(h[~mask].sum())
            if hl < min_child_hessian or hr < min_child_hessian:
                continue
            gl = float(g[mask].sum())
            gr = float(g[~mask].sum())
            gain = 0.5 * (gl * gl / (hl + l2_reg) + gr * gr / (hr + l2_reg) - parent)
            if gain <= 0.0:
                continue
            all_gains.append(gain)
            if best is None or gain > best[0]:
                best = (gain, j, t)
    if best is None:
        return None
    return best[0], best[1], best[2], sorted(all_gains, reverse=True)


class TestFindBestSplit:
    def test_hand_computed_gain(self):
        x = np.array([[0.0], [1.0]])
        g = np.array([-1.0, 1.0])
        h = np.array([1.0, 1.0])
        found = find_best_split(x, g, h, l2_reg=1.0, min_child_hessian=1e-3)
        gain, feature, threshold = found
        # parent 0/(2+1); each child 1/(1+1); gain = 0.5*(0.5+0.5-0)
        assert gain == 0.5
        assert feature == 0
        assert threshold == 0.5

    def test_min_child_hessian_blocks_split(self):
        x = np.array([[0.0], [1.0]])
        g = np.array([-1.0, 1.0])
        h = np.array([1.0, 1.0])
        assert find_best_split(x, g, h, 1.0, min_child_hessian=1.5) is None

    def test_constant_feature_has_no_split(self):
        x = np.full((4, 1), 3.0)
        g = np.array([-1.0, 1.0, -1.0, 1.0])
        h = np.ones(4)
        assert find_best_split(x, g, h, 1.0, 1e-3) is None

    def test_single_row_has_no_split(self):
        assert find_best_split(np.zeros((1, 2)), np.ones(1), np.ones(1), 1.0, 1e-3) is None

    def test_zero_gain_not_taken(self):
        # identical gradient everywhere: any split scores exactly 0
        x = np.array([[0.0], [1.0]])
        g = np.array([1.0, 1.0])
        h = np.array([1.0, 1.0])
        assert find_best_split(x, g, h, 1.0, 1e-3) is None

    def test_threshold_tie_breaks_low(self):
        x = np.array([[0.0], [1.0], [2.0]])
        g = np.array([1.0, -2.0, 1.0])
        h = np.ones(3)
        gain, feature, threshold = find_best_split(x, g, h, 1.0, 1e-3)
        # splits at 0.5 and 1.5 score identically by symmetry
        assert threshold == 0.5
        assert feature == 0
        assert abs(gain - 5.0 / 12.0) < 1e-12

    def test_feature_tie_breaks_low(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        g = np.array([-1.0, 1.0])
        h = np.ones(2)
        _, feature, _ = find_best_split(x, g, h, 1.0, 1e-3)
        assert feature == 0

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        m = int(rng.integers(1, 5))
        if seed % 3 == 0:
            x = rng.integers(0, 4, size=(n, m)).astype(np.float64)  # forces ties
        else:
            x = rng.normal(size=(n, m))
        g = rng.normal(size=n)
        h = rng.uniform(0.05, 2.0, size=n)
        l2 = float(rng.choice([0.5, 1.0, 2.0]))
        minh = float(rng.choice([1e-3, 0.4]))
        found = find_best_split(x, g, h, l2, minh)
        oracle = brute_force_split(x, g, h, l2, minh)
        if oracle is None:
            assert found is None
            return
        best_gain, feature, threshold, ranked = oracle
        assert found is not None
        assert abs(found[0] - best_gain) < 1e-9
        # location must match whenever the optimum is unique by a clear margin
        if len(ranked) == 1 or ranked[0] - ranked[1] > 1e-6:
            assert (found[1], found[2]) == (feature, threshold)


class TestTreeStructure:
    def test_depth_and_leaf_budgets_respected(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 3))
        y = (x[:, 0] + x[:, 1] > 0).astype(np.int64)
        cfg = GbdtConfig(rounds=3, max_depth=2, max_leaves=4)
        model, _ = train_gbdt(x, y, 2, cfg)
        for tree in model.trees:
            assert tree.depth() <= 2
            assert tree.n_leaves <= 4

    def test_depth_one_gives_stumps(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(100, 2))
        y = (x[:, 0] > 0).astype(np.int64)
        cfg = GbdtConfig(rounds=2, max_depth=1, max_leaves=100)
        model, _ = train_gbdt(x, y, 2, cfg)
        for tree in model.trees:
            assert tree.depth() <= 1
            assert tree.n_leaves <= 2

    def test_predict_routes_strictly_less_than_left(self):
        tree = Tree()
        root = tree.add_leaf(0.0)
        left = tree.add_leaf(-1.0)
        right = tree.add_leaf(2.0)
        tree.make_split(root, 0, 1.5, left, right)
        # value equal to the threshold goes right
        out = tree.predict(np.array([[1.0], [1.5], [2.0]]))
        assert np.array_equal(out, [-1.0, 2.0, 2.0])


class TestTrainGbdt:
    def test_one_round_stump_hand_oracle(self):
        x = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        cfg = GbdtConfig(rounds=1, max_depth=1, max_leaves=2, shrinkage=0.1)
        model, losses = train_gbdt(x, y, 2, cfg)
        tree0 = model.trees[0]  # class 0: g=[-0.5, 0.5], h=[0.25, 0.25]
        assert tree0.feature[0] == 0
        assert tree0.threshold[0] == 0.5
        assert tree0.weight[1] == 0.4  # -(-0.5)/(0.25+1)
        assert tree0.weight[2] == -0.4
        expected_loss = -math.log(1.0 / (1.0 + math.exp(-0.08)))
        assert abs(losses[0] - expected_loss) < 1e-12

    @pytest.mark.parametrize("shrinkage", [0.1, 0.3])
    def test_training_loss_non_increasing(self, shrinkage):
        rng = np.random.default_rng(2)
        centers = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
        y = rng.integers(0, 3, size=90)
        x = centers[y] + rng.normal(scale=0.8, size=(90, 2))
        cfg = GbdtConfig(rounds=15, max_depth=3, max_leaves=8, shrinkage=shrinkage)
        _, losses = train_gbdt(x, y, 3, cfg)
        assert len(losses) == 15
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)

    def test_separable_data_fits_exactly(self):
        x = np.array([[-1.0], [-0.5], [0.5], [1.0]])
        y = np.array([0, 0, 1, 1])
        cfg = GbdtConfig(rounds=50, max_depth=2, max_leaves=4)
        model, losses = train_gbdt(x, y, 2, cfg)
        assert (model.predict_proba(x).argmax(axis=1) == y).all()
        assert losses[-1] < losses[0] / 5

    def test_constant_features_yield_leaf_only_trees(self):
        x = np.full((6, 2), 2.5)
        y = np.array([0, 1, 0, 1, 0, 1])
        cfg = GbdtConfig(rounds=2, max_depth=3, max_leaves=8)
        model, losses = train_gbdt(x, y, 2, cfg)
        for tree in model.trees:
            assert tree.n_leaves == 1
        assert all(np.isfinite(l) for l in losses)

    def test_seed_parameter_has_no_effect(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 2))
        y = (x[:, 0] > 0).astype(np.int64)
        cfg = GbdtConfig(rounds=3, max_depth=2, max_leaves=4)
        a, _ = train_gbdt(x, y, 2, cfg, seed=1)
        b, _ = train_gbdt(x, y, 2, cfg, seed=99)
        assert a.to_json_dict() == b.to_json_dict()

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 3))
        y = rng.integers(0, 3, size=50)
        cfg = GbdtConfig(rounds=4, max_depth=3, max_leaves=6)
        a, la = train_gbdt(x, y, 3, cfg)
        b, lb = train_gbdt(x, y, 3, cfg)
        assert a.to_json_dict() == b.to_json_dict()
        assert la == lb

    def test_round_major_tree_layout(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(30, 2))
        y = rng.integers(0, 3, size=30)
        cfg = GbdtConfig(rounds=4, max_depth=2, max_leaves=4)
        model, _ = train_gbdt(x, y, 3, cfg)
        assert len(model.trees) == 12
        assert model.rounds == 4

    def test_rejects_bad_inputs(self):
        cfg = GbdtConfig(rounds=1, max_depth=1, max_leaves=2)
        with pytest.raises(DataError, match="row count"):
            train_gbdt(np.zeros((3, 1)), np.zeros(2, dtype=np.int64), 2, cfg)
        with pytest.raises(DataError, match="at least 2 rows"):
            train_gbdt(np.zeros((1, 1)), np.zeros(1, dtype=np.int64), 2, cfg)
        with pytest.raises(DataError, match="out of range"):
            train_gbdt(np.zeros((2, 1)), np.array([0, 2]), 2, cfg)
        with pytest.raises(DataError, match="distinct classes"):
            train_gbdt(np.zeros((2, 1)), np.array([1, 1]), 2, cfg)


class TestGbdtModel:
    def test_zero_round_model_is_uniform(self):
        model = GbdtModel(trees=[], n_classes=3, feature_count=2, shrinkage=0.1)
        p = model.predict_proba(np.zeros((4, 2)))
        assert np.all(p == np.float64(1.0) / 3.0)

    def test_feature_width_checked(self):
        model = GbdtModel(trees=[], n_classes=2, feature_count=3, shrinkage=0.1)
        with pytest.raises(DataError, match="expected 3 features"):
            model.predict_proba(np.zeros((1, 2)))

    def test_json_round_trip_preserves_predictions(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(40, 2))
        y = (x[:, 0] * x[:, 1] > 0).astype(np.int64)
        cfg = GbdtConfig(rounds=5, max_depth=3, max_leaves=6)
        model, _ = train_gbdt(x, y, 2, cfg)
        doc = json.loads(json.dumps(model.to_json_dict()))
        again = GbdtModel.from_json_dict(doc)
        assert np.array_equal(model.predict_proba(x), again.predict_proba(x))

    def test_probability_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(25, 2))
        y = rng.integers(0, 3, size=25)
        cfg = GbdtConfig(rounds=3, max_depth=2, max_leaves=4)
        model, _ = train_gbdt(x, y, 3, cfg)
        p = model.predict_proba(x)
        assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-12)


class TestGbdtConfig:
    def test_defaults(self):
        cfg = GbdtConfig()
        assert cfg.rounds == 100
        assert cfg.max_depth == 8
        assert cfg.max_leaves == 100
        assert cfg.shrinkage == 0.1
        assert cfg.l2_reg == 1.0
        assert cfg.min_child_hessian == 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            GbdtConfig(rounds=0)
        with pytest.raises(ValueError):
            GbdtConfig(max_leaves=1)
        with pytest.raises(ValueError):
            GbdtConfig(shrinkage=0.0)
        with pytest.raises(ValueError):
            GbdtConfig(l2_reg=-1.0)

    def test_json_round_trip(self):
        cfg = GbdtConfig(rounds=7, max_depth=2, max_leaves=5, shrinkage=0.2)
        assert GbdtConfig.from_json_dict(cfg.to_json_dict()) == cfg
