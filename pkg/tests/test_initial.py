"""Initial profile and the C^2 transition functions."""
from __future__ import annotations

import numpy as np
import pytest

from mcflow.errors import InvalidInitialData
from mcflow.initial import (
    build_initial_u0,
    psi_glue,
    smoothstep_down,
    zeta_cutoff,
)
from mcflow.params import ModelParams, derive_constants


def test_smoothstep_plateaus_and_monotone():
    t = np.linspace(-0.5, 1.5, 401)
    v, d1, d2 = smoothstep_down(t)
    assert np.all(v[t <= 0.0] == 1.0) and np.all(v[t >= 1.0] == 0.0)
    assert np.all(np.diff(v) <= 0.0)
    # C^2: derivatives vanish at both plateau edges
    for probe in (0.0, 1.0):
        _, a, b = smoothstep_down(np.array([probe]))
        assert a[0] == 0.0 and b[0] == 0.0


def test_transition_derivatives_match_finite_differences():
    t = np.linspace(0.05, 0.95, 37)
    h = 1e-6
    for fn in (smoothstep_down, zeta_cutoff, psi_glue):
        v, d1, d2 = fn(t)
        vp, _, _ = fn(t + h)
        vm, _, _ = fn(t - h)
        assert np.allclose(d1, (vp - vm) / (2 * h), rtol=1e-6, atol=1e-6)
        assert np.allclose(d2, (vp - 2 * v + vm) / h**2, rtol=1e-3, atol=1e-3)


def test_initial_profile_shape(u0):
    # pure perturbed cone inside the cutoff, exact cone beyond it
    x = np.array([0.1, 0.3, 0.5])
    assert np.allclose(u0(x), x + x**6, rtol=1e-14)
    x2 = np.array([1.0, 1.7, 3.0])
    assert np.allclose(u0(x2), x2, rtol=0.0, atol=0.0)
    assert u0(0.25, 1) == pytest.approx(1.0 + 6.0 * 0.25**5, rel=1e-12)


def test_initial_profile_constants(u0):
    assert 0.0 < u0.c_lower <= 1.0
    assert u0.C1 >= 1.0
    assert u0.C0 > 0.0
    xs = np.linspace(1e-4, 5.0, 4001)
    assert np.max(u0(xs, 1)) <= u0.C1 + 1e-9


def test_large_amplitude_initial_data_rejected():
    params = ModelParams(k=4, K0=100.0, p=2.5, m=2.25)
    with pytest.raises(InvalidInitialData):
        build_initial_u0(params, derive_constants(params))
