"""Barrier construction and verification: residual signs, matching scan,
nesting of the delta family, and the global envelopes."""
from __future__ import annotations

import math

import numpy as np
import pytest

from mcflow.barriers import (
    barrier_above_cone_alpha,
    global_excess,
    verify_matching,
    verify_nesting,
    verify_residuals,
)


@pytest.mark.parametrize("region", ["Outer", "Intermediate", "Inner"])
def test_residual_signs_hold(bs, region):
    rep = verify_residuals(bs, region, grid=(17, 40))
    assert rep.ok
    assert rep.fraction_correct_sign == 1.0
    assert rep.min_margin > 0.0


def test_matching_scan_measures_certified_window(bs):
    rep = verify_matching(bs)
    assert rep.ok
    assert rep.tau_delta == pytest.approx(-39.0)


def test_matching_window_deepens_as_delta_shrinks(bs, bs_half):
    # halving delta shifts the certified matching time by about -2
    r1 = verify_matching(bs)
    r2 = verify_matching(bs_half)
    assert r2.ok
    assert r2.tau_delta == pytest.approx(-41.0)
    assert r2.tau_delta < r1.tau_delta


def test_nesting_of_delta_family(bs, bs_half):
    rep = verify_nesting(bs, bs_half, n=100)
    assert rep.ok, rep.checks


def test_global_envelopes_ordered_and_positive(bs):
    t = math.exp(-40.0)
    x = np.geomspace(1e-3 * math.sqrt(t), 2.0, 400)
    lo = global_excess(bs, x, t, -1)
    hi = global_excess(bs, x, t, +1)
    assert np.all(hi >= lo)
    assert np.all(hi > 0.0)  # upper envelope sits above the cone


def test_barrier_stays_above_cone_fraction(bs):
    alpha = barrier_above_cone_alpha(bs)
    assert 0.0 < alpha <= 1.0


def test_geometry_scales(bs):
    # the inner patch must sit inside the intermediate overlap
    assert bs.Zdelta > 2.0 * bs.params.Rstar
    assert bs.params.M > bs.params.B
