"""Exact eigenfunctions, the intermediate-frame operator, and the solved
auxiliary correction ODE."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflow.errors import DomainError
from mcflow.params import double_factorial
from mcflow.special import (
    L_power_action,
    apply_L,
    apply_L_values,
    bracket2,
    eigenfunction,
    phi_k_all,
    solve_g,
)


@pytest.mark.parametrize("k", [4, 5, 6])
def test_eigenfunction_coefficients_are_exact_rationals(k):
    ef = eigenfunction(k)
    want = tuple(
        Fraction(math.comb(k, n), double_factorial(2 * n + 1)) for n in range(k + 1)
    )
    assert ef.coeffs == want


def test_apply_L_rejects_nonpositive_y():
    with pytest.raises(DomainError):
        apply_L(lambda y: (y, np.ones_like(y), np.zeros_like(y)), np.array([0.0, 1.0]))


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-6.0, max_value=4.0))
def test_L_power_action_matches_direct_evaluation(consts, r):
    # (6 gamma - L)[y^r] must equal a y^(r-2) + b y^r at every y
    y = np.array([0.3, 1.0, 2.7, 8.0])
    v = y**r
    d1 = r * y ** (r - 1.0)
    d2 = r * (r - 1.0) * y ** (r - 2.0)
    lhs = 6.0 * consts.gamma * v - apply_L_values(v, d1, d2, y)
    a, b = L_power_action(r, consts)
    rhs = a * y ** (r - 2.0) + b * y**r
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_bracket2_weighted_seminorm():
    got = bracket2(-2.0, 3.0, -1.0, 2.0)
    assert got == pytest.approx(2.0 + 6.0 + 4.0)


def test_g_matches_both_asymptotic_branches(gfun):
    # just inside the grid the solved values agree with the closed-form
    # limits used outside it
    y_lo, y_hi = gfun.grid[0], gfun.grid[-1]
    assert gfun(y_lo) == pytest.approx(-1.0 / 3.0 * y_lo**-5.0, rel=0.02)
    q = 4 * gfun.k - 7
    assert gfun(y_hi) == pytest.approx(y_hi**q, rel=0.02)
    # evaluation beyond the grid switches branch continuously
    assert gfun(y_lo * 0.5) == pytest.approx(-1.0 / 3.0 * (y_lo * 0.5) ** -5.0, rel=1e-12)


def test_g_positive_where_source_dominates(gfun):
    # the y^(4k-7) source wins at large y, the negative branch at small y
    assert gfun(100.0) > 0.0
    assert gfun(0.02) < 0.0


def test_solve_g_resolutions_agree():
    coarse = solve_g(4, npoints=1000)
    fine = solve_g(4, npoints=4000)
    assert coarse.residual_norm < 1e-6 and fine.residual_norm < 1e-6
    probe = np.geomspace(0.2, 5.0, 50)
    rel = np.abs(coarse(probe) - fine(probe)) / np.abs(fine(probe))
    assert np.max(rel) < 2e-2


def test_phi_k_derivatives_consistent_with_finite_differences():
    ef = eigenfunction(4)
    y = np.linspace(0.5, 5.0, 11)
    h = 1e-6
    v, d1, d2 = phi_k_all(ef, y)
    vp, _, _ = phi_k_all(ef, y + h)
    vm, _, _ = phi_k_all(ef, y - h)
    assert np.allclose(d1, (vp - vm) / (2 * h), rtol=1e-7, atol=1e-7)
    assert np.allclose(d2, (vp - 2 * v + vm) / h**2, rtol=1e-3, atol=1e-3)
