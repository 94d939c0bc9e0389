import json
import warnings

import numpy as np
import pytest

from robustce import (
    DecisionTree,
    FeatureSpace,
    LinearModel,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
    lipschitz_bound,
    predict_class,
    predict_score,
    surrogate_score,
)
from robustce.io import ModelFileError, load_model, model_from_dict, model_to_dict, save_model
from robustce.models import (
    InputError,
    ModelIntegrityError,
    locate_leaf,
    negate,
    scores,
    spectral_norm,
    surrogate_scores,
)

from .conftest import TREE_FIXTURES


def linear_x2(tau=0.0):
    sp = FeatureSpace(np.array([0.0, -0.5]), np.array([2.5, 2.5]), np.zeros(2, bool))
    return TrainedModel(LinearModel(np.array([0.0, 1.0]), -1.0), tau, sp)


def step_tree_model():
    return DecisionTree.from_splits({"a": 1, "b": 0.5, "left": 1.0, "right": 0.0}, 2)


def test_linear_score():
    assert predict_score(linear_x2(), [1, 1.5]) == pytest.approx(0.5)


def test_linear_classes():
    m = linear_x2()
    assert predict_class(m, [0, 2]) == 1
    assert predict_class(m, [0, 0]) == -1


def test_single_leaf_tree():
    m = TrainedModel(DecisionTree.from_splits(0.9, 2), 0.5, FeatureSpace.unit(2))
    assert predict_score(m, [0.3, 0.1]) == pytest.approx(0.9)


def test_ensemble_average():
    t1 = DecisionTree.from_splits({"a": 0, "b": 0.5, "left": 0.2, "right": 0.0}, 2)
    t2 = DecisionTree.from_splits({"a": 0, "b": 0.5, "left": 0.8, "right": 0.0}, 2)
    m = TrainedModel(TreeEnsemble((t1, t2)), 0.5, FeatureSpace.unit(2))
    assert predict_score(m, [0.1, 0.1]) == pytest.approx(0.5)


def test_steptree_factual(fixtures):
    m = fixtures["step_tree"]
    assert predict_class(m, [0, 2]) == -1


def test_locate_leaf_boundary_rules():
    t = DecisionTree.from_splits({"a": 0, "b": 0.5, "left": 1.0, "right": 0.0}, 1)
    assert locate_leaf(t, [0.2]).id == 0
    assert locate_leaf(t, [0.5]).id == 0
    assert locate_leaf(t, [0.7]).id == 1


def test_malformed_tree_has_gap():
    from robustce.models import Halfspace, Leaf
    t = DecisionTree((Leaf((Halfspace([1.0], 0.3),), 1.0, 0), Leaf((Halfspace([-1.0], -0.6),), 0.0, 1)))
    with pytest.raises(ModelIntegrityError):
        locate_leaf(t, [0.5])


def test_dimension_mismatch():
    with pytest.raises(InputError):
        predict_score(linear_x2(), [1.0, 2.0, 3.0])


def test_clamp_warns():
    with pytest.warns(UserWarning):
        predict_score(linear_x2(), [5.0, 0.0])


def test_surrogate_values():
    t = DecisionTree.from_splits({"a": 0, "b": 0.5, "left": 0.0, "right": 1.0}, 1)
    assert surrogate_score(t, 0.5, [0.2]) == pytest.approx(0.2)
    assert surrogate_score(t, 0.5, [0.8]) == pytest.approx(0.5)
    assert surrogate_score(t, 0.5, [0.5]) == pytest.approx(0.5)


def test_lipschitz_examples():
    t = DecisionTree.from_splits({"a": [1.0, 0.0], "b": 0.5,
                                  "left": {"a": [3.0, 4.0], "b": 2.0, "left": 1.0, "right": 0.0},
                                  "right": 0.0}, 2)
    assert lipschitz_bound(TrainedModel(t, 0.5, FeatureSpace.unit(2))) == pytest.approx(5.0)
    eye = ReluNetwork((np.eye(1),), (np.zeros(1),))
    assert lipschitz_bound(TrainedModel(eye, 0.5, FeatureSpace.unit(1))) == pytest.approx(1.0, rel=1e-9)
    two = ReluNetwork((2 * np.eye(2), 3 * np.eye(2)[:1]), (np.zeros(2), np.zeros(1)))
    assert lipschitz_bound(TrainedModel(two, 0.0, FeatureSpace.unit(2))) == pytest.approx(6.0, rel=1e-9)
    assert lipschitz_bound(linear_x2()) == pytest.approx(1.0)


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(0)
    for _ in range(10):
        W = rng.normal(size=(int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        assert spectral_norm(W) == pytest.approx(np.linalg.svd(W, compute_uv=False)[0], rel=1e-8)


def _trees(model):
    p = model.params
    return list(p.trees) if isinstance(p, TreeEnsemble) else [p]


@pytest.mark.parametrize("name", TREE_FIXTURES + ["ensemble2", "staggered"])
def test_leaf_partition(fixtures, name):
    m = fixtures[name]
    X = np.random.default_rng(1).uniform(m.space.lower, m.space.upper, size=(5000, m.dim))
    for t in _trees(m):
        hits = np.sum([lf.contains(X) for lf in t.leaves], axis=0)
        assert np.all(hits == 1)


@pytest.mark.parametrize("name", TREE_FIXTURES)
def test_surrogate_continuous_across_boundaries(fixtures, name):
    m = fixtures[name]
    t = m.params
    rng = np.random.default_rng(2)
    X = rng.uniform(m.space.lower, m.space.upper, size=(2000, m.dim))
    for h in t.halfspaces():
        a = h.a / np.linalg.norm(h.a)
        # project onto the split hyperplane, then step to either side
        P = X - np.outer(X @ h.a - h.b, h.a) / (h.a @ h.a)
        lo = surrogate_scores(t, m.tau, P - 1e-9 * a)
        hi = surrogate_scores(t, m.tau, P + 1e-9 * a)
        assert np.max(np.abs(lo - hi)) <= 1e-6


def test_negate_flips_classes(fixtures):
    pts = np.random.default_rng(3).uniform(0, 1, size=(500, 2))
    for name in ["step2d", "depth3", "ensemble2", "relu221"]:
        m = fixtures[name]
        n = negate(m)
        s, sn = scores(m, pts), scores(n, pts)
        off = np.abs(s - m.tau) > 1e-12  # a score of exactly tau stays +1 on both sides
        assert np.all((s >= m.tau)[off] != (sn >= n.tau)[off])
        assert np.all(sn[~off] >= n.tau)


def test_model_roundtrip(fixtures, tmp_path):
    for name, m in fixtures.items():
        save_model(m, tmp_path / f"{name}.json")
        back = load_model(tmp_path / f"{name}.json")
        X = np.random.default_rng(0).uniform(m.space.lower, m.space.upper, size=(200, m.dim))
        assert np.allclose(scores(m, X), scores(back, X))
        assert back.meta == m.meta


def test_schema_error_names_field(fixtures):
    doc = model_to_dict(fixtures["depth3"])
    doc["params"]["leaves"][2]["weight"] = "high"
    with pytest.raises(ModelFileError) as exc:
        model_from_dict(doc)
    assert "params.leaves[2].weight" in str(exc.value)


def test_dimension_clash_reported(fixtures):
    doc = model_to_dict(fixtures["linear_x2"])
    doc["params"]["beta"] = [1.0, 2.0, 3.0]
    with pytest.raises(ModelFileError) as exc:
        model_from_dict(doc)
    assert exc.value.field == "params"


def test_unreadable_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ModelFileError):
        load_model(p)
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.json")
