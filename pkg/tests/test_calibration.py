import csv
import io
import math

import mpmath
import numpy as np
import pytest

from robustce import UncertaintySet, solve_robust_ce
from robustce.calibration import (
    CAVEAT,
    CSV_COLUMNS,
    CalibrationError,
    CalibrationQuery,
    calibrate,
    pareto_front,
    write_csv,
)
from robustce.calibration import special
from robustce.io import fixture_names
from robustce.models import locate_leaf

from .conftest import factual_of

mpmath.mp.dps = 30


@pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 4.0, 17.0, 60.0])
@pytest.mark.parametrize("x", [1e-6, 0.1, 0.9, 1.0, 3.0, 7.5, 20.0, 90.0])
def test_incomplete_gamma_against_mpmath(a, x):
    p = float(mpmath.gammainc(a, 0, x, regularized=True))
    q = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
    assert special.gammainc_p(a, x) == pytest.approx(p, abs=1e-14, rel=1e-12)
    assert special.gammainc_q(a, x) == pytest.approx(q, abs=1e-14, rel=1e-12)


@pytest.mark.parametrize("x", [-4.0, -1.3, -0.2, 0.0, 0.05, 0.7, 2.0, 5.5])
def test_erf_against_mpmath(x):
    assert special.erf(x) == pytest.approx(float(mpmath.erf(x)), abs=1e-15)
    assert special.erfc(x) == pytest.approx(float(mpmath.erfc(x)), rel=1e-12)


@pytest.mark.parametrize("z", [-30.0, -8.0, -1.959964, 0.0, 0.4, 3.0])
def test_normal_cdf_and_inverse(z):
    ref = float(mpmath.ncdf(z))
    assert special.norm_cdf(z) == pytest.approx(ref, rel=1e-12)
    assert special.norm_ppf(ref) == pytest.approx(z, abs=1e-12, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 8, 34, 100])
@pytest.mark.parametrize("alpha", [1e-40, 1e-6, 0.05, 0.5, 0.9, 0.999999])
def test_chi2_quantile(k, alpha):
    x = special.chi2_ppf(alpha, k)
    back = mpmath.gammainc(mpmath.mpf(k) / 2, 0, mpmath.mpf(x) / 2, regularized=True)
    # mismatch in probability, converted to relative error in x through the density
    rel = float(abs(back - alpha) / (special.chi2_pdf(x, k) * x))
    assert rel <= 1e-12


def test_zero_radius_gives_zero_alpha():
    for norm in ("l2", "linf"):
        assert calibrate(CalibrationQuery(k=3, norm=norm, rho=0.0, sigma=0.7)).alpha == 0.0


def test_linf_one_dimension():
    q = calibrate(CalibrationQuery(k=1, norm="linf", rho=1.959964, sigma=1.0))
    assert q.alpha == pytest.approx(2 * float(mpmath.ncdf(1.959964)) - 1, abs=1e-15)
    assert q.alpha == pytest.approx(0.95, abs=1e-6)


def test_chi2_two_dof_closed_form():
    rho = math.sqrt(2 * math.log(20))
    q = calibrate(CalibrationQuery(k=2, norm="l2", rho=rho, sigma=1.0))
    assert q.alpha == pytest.approx(1 - math.exp(-rho ** 2 / 2), abs=1e-12)
    assert q.alpha == pytest.approx(0.95, abs=1e-9)


@pytest.mark.parametrize("k", [1, 2, 8, 34])
@pytest.mark.parametrize("norm", ["l2", "linf"])
@pytest.mark.parametrize("rho", [1e-3, 0.05, 0.4, 1.0, 2.5, 4.0])
def test_round_trip(k, norm, rho):
    alpha = calibrate(CalibrationQuery(k=k, norm=norm, rho=rho, sigma=1.3)).alpha
    back = calibrate(CalibrationQuery(k=k, norm=norm, alpha=alpha, sigma=1.3)).rho
    sigma = calibrate(CalibrationQuery(k=k, norm=norm, alpha=alpha, rho=rho)).sigma
    assert back == pytest.approx(rho, rel=1e-9)
    assert sigma == pytest.approx(1.3, rel=1e-9)


def test_two_unknowns_rejected():
    with pytest.raises(CalibrationError, match="exactly one"):
        CalibrationQuery(k=2, norm="l2", rho=0.1)
    with pytest.raises(CalibrationError):
        calibrate(CalibrationQuery(k=2, norm="l2", rho=0.1, sigma=1.0, alpha=0.5))


def test_domain_errors():
    with pytest.raises(CalibrationError):
        CalibrationQuery(k=2, alpha=1.5, sigma=1.0)
    with pytest.raises(CalibrationError):
        CalibrationQuery(k=0, alpha=0.5, sigma=1.0)
    # coverage that rounds to one is not a usable answer
    with pytest.raises(CalibrationError, match="outside"):
        calibrate(CalibrationQuery(k=1, norm="l2", rho=50.0, sigma=1.0))
    with pytest.raises(CalibrationError):
        calibrate(CalibrationQuery(k=1, norm="l2", rho=0.0, alpha=0.5))


def test_caveat_mentions_conservative():
    assert "conservative" in CAVEAT


# -- pareto --------------------------------------------------------------

def test_single_zero_point_is_plain_ce(fixtures):
    m = fixtures["depth3"]
    pts = pareto_front(m, factual_of(m), [0.0])
    plain = solve_robust_ce(m, factual_of(m), UncertaintySet("linf", 0.0))
    assert len(pts) == 1 and pts[0].distance == pytest.approx(plain.distance)


@pytest.mark.parametrize("name", fixture_names())
def test_distance_nondecreasing(fixtures, name):
    m = fixtures[name]
    grid = np.linspace(0, 0.12, 7)
    pts = pareto_front(m, factual_of(m), grid, norm="linf")
    assert [p.rho for p in pts] == list(grid)
    d = [p.distance for p in pts if p.status.value == "converged"]
    assert all(b >= a - 1e-9 for a, b in zip(d, d[1:]))
    # once infeasible, larger budgets stay infeasible
    states = [p.status.value for p in pts]
    if "infeasible" in states:
        assert all(s == "infeasible" for s in states[states.index("infeasible"):])


def test_jump_at_leaf_change(fixtures):
    m = fixtures["jump_tree"]
    fac = factual_of(m)

    def leaf_at(rho):
        res = solve_robust_ce(m, fac, UncertaintySet("linf", rho))
        return locate_leaf(m.params, res.point).id, res.distance

    lo, hi = 0.0, 0.12
    leaf_lo, leaf_hi = leaf_at(lo)[0], leaf_at(hi)[0]
    assert leaf_lo != leaf_hi
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        if leaf_at(mid)[0] == leaf_lo:
            lo = mid
        else:
            hi = mid
    step = 0.01
    pre = leaf_at(lo - step)[1], leaf_at(lo)[1]
    jump = leaf_at(hi)[1] - leaf_at(lo)[1]
    assert jump > 10 * (pre[1] - pre[0])


def test_threads_match_serial(fixtures):
    m = fixtures["ensemble2"]
    grid = [0.0, 0.02, 0.05, 0.08]
    a = pareto_front(m, factual_of(m), grid, norm="l2")
    b = pareto_front(m, factual_of(m), grid, norm="l2", workers=4)
    assert [p.distance for p in a] == [p.distance for p in b]


def test_csv_columns(fixtures, tmp_path):
    m = fixtures["thin_leaves"]
    pts = pareto_front(m, factual_of(m), [0.0, 0.04, 0.1])
    text = write_csv(pts, tmp_path / "front.csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[-1]["status"] == "infeasible" and rows[-1]["distance"] == ""
    assert (tmp_path / "front.csv").read_text() == text


def test_unsorted_grid_rejected(fixtures):
    m = fixtures["depth3"]
    with pytest.raises(ValueError):
        pareto_front(m, factual_of(m), [0.1, 0.0])
