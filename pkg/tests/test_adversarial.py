import numpy as np
import pytest

from robustce import (
    DecisionTree,
    EngineConfig,
    FeatureSpace,
    TrainedModel,
    TreeEnsemble,
    UncertaintySet,
    adversarial,
    ap_ensemble,
    ap_relu,
    ap_tree,
    robustness_radius,
)
from robustce.adversarial import PreconditionError, radius_by_bisection, radius_witness
from robustce.models import classes, lipschitz_bound, scores, surrogate_scores
from robustce.oracle import _sample

from .conftest import GRID_FIXTURES


def _ball_grid(x, uset, res=1e-3):
    k = int(np.ceil(uset.rho / res))
    g = np.arange(-k, k + 1) * res
    S = np.array(np.meshgrid(g, g, indexing="ij")).reshape(2, -1).T
    if uset.norm.value == "l2":
        S = S[np.linalg.norm(S, axis=1) <= uset.rho]
    else:
        S = S[np.abs(S).max(axis=1) <= uset.rho]
    return x[None, :] + S


def test_steptree_depth(fixtures):
    m = fixtures["step_tree"]
    out = ap_tree(m.params, m.tau, [0, 0], UncertaintySet("linf", 1.0))
    assert out.violation == pytest.approx(0.5, abs=1e-9)
    assert out.scenario[1] == pytest.approx(1.0, abs=1e-9)


def test_ball_inside_positive_leaf(fixtures):
    m = fixtures["step_tree"]
    out = ap_tree(m.params, m.tau, [0, -0.5], UncertaintySet("linf", 0.5))
    assert out.violation <= 0
    assert not np.any(out.scenario)


def test_halfspace_leaf_depth_matches_grid():
    t = DecisionTree.from_splits({"a": 0, "b": 0.5, "left": 1.0, "right": 0.0}, 2)
    x = np.array([0.8, 0.5])
    u = UncertaintySet("linf", 0.1)
    out = ap_tree(t, 0.5, x, u)
    assert out.violation == pytest.approx(0.4, abs=1e-9)
    grid = _ball_grid(x, u)
    assert out.violation == pytest.approx(np.max(0.5 - surrogate_scores(t, 0.5, grid)), abs=1e-3)


@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_single_tree_ensemble_matches_tree(fixtures, norm):
    m = fixtures["depth3"]
    x = np.array([0.62, 0.71])
    u = UncertaintySet(norm, 0.08)
    a = ap_tree(m.params, m.tau, x, u)
    b = ap_ensemble(TreeEnsemble((m.params,)), m.tau, x, u)
    c = ap_ensemble(TreeEnsemble((m.params, m.params)), m.tau, x, u)
    assert a.violation == pytest.approx(b.violation, abs=1e-7)
    assert a.violation == pytest.approx(c.violation, abs=1e-7)


@pytest.mark.parametrize("x1", [0.5, 0.52, 0.58, 0.62])
def test_staggered_sign_matches_grid(fixtures, x1):
    m = fixtures["staggered"]
    x = np.array([x1, 0.5])
    u = UncertaintySet("linf", 0.05)
    out = ap_ensemble(m.params, m.tau, x, u)
    flips = np.any(classes(m, _ball_grid(x, u)) == -1)
    assert (out.violation > EngineConfig().epsilon) == flips


def test_identity_net_violation(fixtures):
    m = fixtures["identity_net"]
    u = UncertaintySet("linf", 0.1)
    assert ap_relu(m.params, m.tau, [0.7, 0], u).violation == pytest.approx(-0.1, abs=1e-9)
    out = ap_relu(m.params, m.tau, [0.55, 0], u)
    assert out.violation == pytest.approx(0.05, abs=1e-9)
    assert out.scenario[0] == pytest.approx(-0.1, abs=1e-9)


@pytest.mark.parametrize("norm", ["linf", "l2"])
@pytest.mark.parametrize("x", [(0.3, 0.6), (0.5, 0.9), (0.8, 0.8)])
def test_relu_violation_matches_grid(fixtures, norm, x):
    m = fixtures["relu221"]
    x = np.asarray(x)
    u = UncertaintySet(norm, 0.1)
    out = ap_relu(m.params, m.tau, x, u)
    grid_min = scores(m, _ball_grid(x, u)).min()
    # the grid misses the true minimum by at most L times one cell diagonal
    slack = lipschitz_bound(m) * 1e-3 * np.sqrt(2)
    assert out.violation >= m.tau - grid_min - 1e-9
    assert out.violation <= m.tau - grid_min + slack


def test_radius_examples(fixtures):
    assert robustness_radius(fixtures["linear_x2"], [1, 1.5], "linf") == pytest.approx(0.5)
    assert robustness_radius(fixtures["step_tree"], [0, 0.5], "linf") == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(PreconditionError):
        robustness_radius(fixtures["step_tree"], [0, 2.0], "linf")


@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_radius_matches_bisection(fixtures, norm):
    m = fixtures["depth3"]
    rng = np.random.default_rng(4)
    done = 0
    while done < 20:
        x = rng.uniform(0, 1, 2)
        if classes(m, x)[0] != 1:
            continue
        r = robustness_radius(m, x, norm)
        b = radius_by_bisection(m, x, norm, hi=2.0, tol=1e-6)
        assert r == pytest.approx(b, abs=1e-4)
        done += 1


@pytest.mark.parametrize("name", ["depth3", "ensemble2", "relu221", "oblique"])
@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_radius_consistent_with_ap(fixtures, name, norm):
    m = fixtures[name]
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(60):
        x = rng.uniform(0, 1, 2)
        if classes(m, x)[0] != 1:
            continue
        r, _ = radius_witness(m, x, norm)
        for rho in (0.03, 0.08):
            v = adversarial(m, x, UncertaintySet(norm, rho)).violation
            if abs(r - rho) > 1e-6:
                assert (r >= rho) == (v <= 1e-6), (x, r, rho, v)
                checked += 1
        if checked >= 20:
            break
    assert checked >= 10


@pytest.mark.parametrize("name", ["step2d", "straddle", "depth3", "oblique", "jump_tree"])
@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_tree_ap_dominates_sampled_surrogate(fixtures, name, norm):
    m = fixtures[name]
    rng = np.random.default_rng(8)
    u = UncertaintySet(norm, 0.07)
    for _ in range(5):
        x = rng.uniform(0, 1, 2)
        out = ap_tree(m.params, m.tau, x, u)
        S = _sample(u, np.ones(2, bool), 10_000, rng)
        sampled = np.max(m.tau - surrogate_scores(m.params, m.tau, x + S))
        assert out.violation >= sampled - 1e-6


@pytest.mark.parametrize("name", GRID_FIXTURES)
@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_ap_complete_and_sound_on_grid(fixtures, name, norm):
    m = fixtures[name]
    rng = np.random.default_rng(9)
    res = 1e-3
    eps = EngineConfig().epsilon
    for _ in range(8):
        x = rng.uniform(0.1, 0.9, 2)
        u = UncertaintySet(norm, 0.06)
        out = adversarial(m, x, u)
        if out.violation > eps:
            # soundness: the returned scenario flips the exact model
            assert classes(m, x + out.scenario)[0] == -1
        inner = UncertaintySet(norm, u.rho - 2 * res)
        if np.any(classes(m, _ball_grid(x, inner, res)) == -1):
            assert out.violation > eps
        if out.violation > 0.01:
            assert np.any(classes(m, _ball_grid(x, u, res)) == -1)
