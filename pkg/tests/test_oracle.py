import numpy as np
import pytest

from robustce import FeatureSpace, LinearModel, TrainedModel, UncertaintySet, robustness_radius, solve_robust_ce
from robustce.formulations import MasterProblem
from robustce.io import fixture_names
from robustce.models import classes
from robustce.oracle import OracleRefused, grid_ce, sample_audit

from .conftest import GRID_FIXTURES, factual_of


def test_grid_linear_fixture(fixtures):
    m = fixtures["linear_x2"]
    _, d = grid_ce(m, [1, 0], UncertaintySet("linf", 0.5))
    assert d == pytest.approx(1.5, abs=2e-3)


def test_grid_steptree(fixtures):
    m = fixtures["step_tree"]
    _, d = grid_ce(m, [0, 2], UncertaintySet("linf", 1.0), resolution=5e-3)
    assert d == pytest.approx(2.5, abs=2 * 5e-3)


@pytest.mark.parametrize("name", GRID_FIXTURES + ["staggered", "jump_tree"])
def test_grid_rho_zero_is_plain_ce(fixtures, name):
    m = fixtures[name]
    mp = MasterProblem(m, factual_of(m))
    mp.add_scenario(np.zeros(2))
    out = mp.solve()
    _, d = grid_ce(m, factual_of(m), UncertaintySet("linf", 0.0))
    assert d == pytest.approx(out.objective, abs=2e-3)


def test_grid_refuses_high_dimensions():
    sp = FeatureSpace(np.zeros(4), np.ones(4), np.zeros(4, bool))
    m = TrainedModel(LinearModel(np.ones(4), -2.0), 0.0, sp)
    with pytest.raises(OracleRefused):
        grid_ce(m, np.zeros(4), UncertaintySet("linf", 0.1))
    # freezing a feature brings it back within reach
    from dataclasses import replace
    frozen = replace(m, space=sp.with_immutable([3]))
    point, _ = grid_ce(frozen, np.zeros(4), UncertaintySet("linf", 0.1), resolution=0.02)
    assert point is not None and point[3] == 0.0


def test_grid_refuses_huge_lattices(fixtures):
    with pytest.raises(OracleRefused):
        grid_ce(fixtures["step2d"], [0.2, 0.4], UncertaintySet("linf", 0.1), resolution=1e-4)


def test_audit_deep_inside(fixtures):
    m = fixtures["step_tree"]
    score, _, ok = sample_audit(m, [0, -0.5], UncertaintySet("linf", 0.4), 10_000, 0)
    assert ok and score == 1.0


@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_audit_on_boundary(fixtures, norm):
    m = fixtures["step_tree"]
    _, worst, ok = sample_audit(m, [0, 0.5], UncertaintySet(norm, 0.1), 10_000, 0)
    assert not ok
    assert classes(m, np.array([0, 0.5]) + worst)[0] == -1


def test_audit_reproducible(fixtures):
    m = fixtures["relu221"]
    a = sample_audit(m, [0.3, 0.6], UncertaintySet("l2", 0.1), 2000, 7)
    b = sample_audit(m, [0.3, 0.6], UncertaintySet("l2", 0.1), 2000, 7)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_audit_draws_half_on_the_surface():
    from robustce.oracle import _sample
    rng = np.random.default_rng(0)
    for norm in ("linf", "l2"):
        u = UncertaintySet(norm, 0.3)
        S = _sample(u, np.ones(3, bool), 1000, rng)
        sizes = np.array([u.size(s) for s in S])
        assert np.all(sizes <= 0.3 + 1e-12)
        assert np.sum(np.isclose(sizes, 0.3)) >= 500


@pytest.mark.parametrize("name", ["depth3", "ensemble2", "relu221", "oblique", "straddle"])
def test_audit_never_contradicts_radius(fixtures, name):
    m = fixtures[name]
    rng = np.random.default_rng(12)
    for _ in range(10):
        x = rng.uniform(0, 1, 2)
        if classes(m, x)[0] != 1:
            continue
        for norm in ("linf", "l2"):
            r = robustness_radius(m, x, norm)
            if r > 1e-3:
                for seed in range(3):
                    assert sample_audit(m, x, UncertaintySet(norm, r * (1 - 1e-9)), 2000, seed)[2]


@pytest.mark.parametrize("name", fixture_names())
@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_converged_runs_pass_audit(fixtures, name, norm):
    m = fixtures[name]
    u = UncertaintySet(norm, 0.05)
    res = solve_robust_ce(m, factual_of(m), u)
    if res.converged:
        assert sample_audit(m, res.point, u, 10_000, 42)[2]
