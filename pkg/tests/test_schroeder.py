import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from branchveil.laws import BevertonHoltPoisson, BinarySplit, UserTabulated
from branchveil.schroeder import (IteratedMap, MonotonicityError, SchroederH, compute_h,
                                  fixed_points, h_eval, h_inverse, h_n, iterate_f, load_h,
                                  schroeder_residual, slope_floor_region)

BH = BevertonHoltPoisson(2, 1)
FBH = IteratedMap(BH)


@pytest.fixture(scope="module")
def H_bh():
    return compute_h(FBH, x_max=4.0, knots=1025, tol=1e-10)


def test_closed_form_iterates_satisfy_recursion():
    assert oracles.bh_f_n_symbolic_check(6)


def test_iterate_examples():
    assert iterate_f(FBH, 0.1, 3) == pytest.approx(0.470588, abs=1e-6)
    assert iterate_f(FBH, 0.1, 3) == pytest.approx(oracles.bh_f_n(2, 1, 0.1, 3), rel=1e-14)
    assert iterate_f(FBH, 0.37, 0) == 0.37
    with pytest.raises(ValueError):
        iterate_f(FBH, 0.1, -1)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(1.1, 5), b=st.floats(0.05, 3), x=st.floats(0, 10), n=st.integers(0, 25))
def test_iterates_match_closed_form(a, b, x, n):
    fmap = IteratedMap(BevertonHoltPoisson(a, b))
    assert iterate_f(fmap, x, n) == pytest.approx(oracles.bh_f_n(a, b, x, n), rel=1e-10, abs=1e-14)


def test_capacity_iterates_with_kappa_zero_equal_limit():
    assert iterate_f(FBH, 0.2, 7, K=1e3) == iterate_f(FBH, 0.2, 7)


def test_h_matches_closed_form(H_bh):
    x = np.linspace(0, 4, 3001)
    assert np.max(np.abs(h_eval(H_bh, x) - oracles.bh_h(2, 1, x))) < 1e-6
    assert h_eval(H_bh, 0.0) == 0.0
    assert h_eval(H_bh, 1.0) == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("law,x_max", [(BH, 4.0), (BinarySplit(0.5, 1), 3.0),
                                       (BevertonHoltPoisson(3, 0.5), 10.0)])
def test_schroeder_equation_residual(law, x_max):
    fmap = IteratedMap(law)
    H = compute_h(fmap, x_max=x_max, tol=1e-9)
    assert np.max(schroeder_residual(H, fmap)) < 10 * 1e-9


def test_approximants_decrease_in_n():
    fmap = IteratedMap(BinarySplit(0.5, 1))
    x = np.linspace(0, 3, 301)
    prev = x
    for n in range(1, 40):
        cur = h_n(fmap, x, n)
        assert np.all(cur <= prev * (1 + 1e-12))
        prev = cur


def test_increasing_mean_is_rejected():
    # m(0) = 1.5 but m = 2.5 beyond the first knot, so f_n(x/a^n) grows with n
    knots = np.array([0.0, 0.5, 1.0])
    probs = np.array([[0.0, 0.5, 0.5, 0.0], [0, 0, 0.5, 0.5], [0, 0, 0.5, 0.5]])
    law = UserTabulated(knots, probs)
    assert law.a == pytest.approx(1.5)
    with pytest.raises(MonotonicityError):
        compute_h(IteratedMap(law), x_max=2.0)


def test_tol_must_be_positive():
    with pytest.raises(ValueError):
        compute_h(FBH, tol=0)


def test_default_range_uses_fixed_point():
    H = compute_h(FBH, knots=65)
    assert H.x_max == pytest.approx(2.0)
    with pytest.raises(ValueError):
        compute_h(IteratedMap(BinarySplit(0.5, 1)))


def test_h_eval_out_of_range(H_bh):
    with pytest.raises(ValueError):
        h_eval(H_bh, 4.5)
    with pytest.raises(ValueError):
        h_eval(H_bh, -0.1)


def test_h_inverse_round_trip(H_bh):
    assert h_inverse(H_bh, 0.5) == pytest.approx(1.0, abs=1e-6)
    x = np.linspace(0, 4, 57)
    np.testing.assert_allclose(h_inverse(H_bh, h_eval(H_bh, x)), x, atol=1e-7)
    with pytest.raises(ValueError):
        h_inverse(H_bh, 0.9)


def test_h_strictly_increasing(H_bh):
    assert np.all(np.diff(H_bh.values) > 0)


def test_fixed_points():
    fps = fixed_points(FBH, domain=(0, 5))
    assert len(fps) == 1
    xs, slope, label = fps[0]
    assert xs == pytest.approx(1.0, abs=1e-12)
    assert slope == pytest.approx(0.5, abs=1e-6)
    assert label == "attracting"
    assert fixed_points(IteratedMap(BinarySplit(0.5, 1))) == []


def test_slope_floor():
    law = BinarySplit(0.5, 1)
    fmap = IteratedMap(law)
    H = compute_h(fmap, x_max=3.0, knots=2049, tol=1e-10)
    top = slope_floor_region(law, H.x_max)
    assert top == pytest.approx(1.0, rel=1e-3)
    sel = H.x <= top
    slopes = np.diff(H.values[sel]) / np.diff(H.x[sel])
    assert np.all(slopes >= math.exp(-law.a))


def test_corollary_perturbation_is_absorbed(H_bh):
    # points x/a^n + delta_n with delta_n = a^{-n}/n still converge to h(x)
    x = np.array([0.3, 1.0, 2.5])
    errs = []
    for n in (5, 10, 20, 40):
        xn = x / 2.0 ** n + 2.0 ** -n / n
        errs.append(np.max(np.abs(iterate_f(FBH, xn, n) - oracles.bh_h(2, 1, x))))
    assert errs[-1] < 0.03 and all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_capacity_contraction_bound():
    law = BevertonHoltPoisson(2, 1, kappa=2.0)
    fmap = IteratedMap(law)
    grid = np.linspace(0, 4, 801)
    for K in (1e2, 1e4, 1e6):
        gap1 = np.max(np.abs(fmap.f(grid, K) - fmap.f(grid)))
        for n in (1, 3, 6):
            x0 = grid[grid <= 4 / 2.0 ** n]
            gap = np.max(np.abs(iterate_f(fmap, x0, n, K) - iterate_f(fmap, x0, n)))
            assert gap <= gap1 * (2.0 ** n - 1) + 1e-15


def test_inverse_map():
    y = np.array([0.0, 0.2, 0.9, 1.9])
    np.testing.assert_allclose(FBH.f(FBH.inverse(y)), y, atol=1e-12)


def test_csv_round_trip(tmp_path, H_bh):
    p = tmp_path / "h.csv"
    H_bh.to_csv(p)
    assert p.read_bytes().startswith(b"x,h\r\n")
    H2 = SchroederH.from_csv(p)
    np.testing.assert_array_equal(H2.x, H_bh.x)
    np.testing.assert_array_equal(H2.values, H_bh.values)
    x = np.linspace(0, 4, 99)
    np.testing.assert_array_equal(h_eval(H2, x), h_eval(H_bh, x))
    H3, fmap = load_h(p)
    assert fmap.law == BH and H3.a == 2.0
