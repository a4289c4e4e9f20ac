"""Radial minimal profile: shooting solution, far-field expansion, scaling
family, and the phase-plane reduction."""
from __future__ import annotations

import numpy as np
import pytest

from mcflow.alencar import (
    PhasePoint,
    Phi_with_derivs,
    phase_system,
    rescale_W,
    shoot_alencar,
)
from mcflow.errors import InvalidParameter

# frozen oracle values (shooting + far-field fit, stable to ~6e-7)
GAMMA2 = 0.7450609
GAMMA3 = -0.3249555
KSTAR = 1.1030691


def test_far_field_constants_frozen(profile):
    assert profile.Gamma2 == pytest.approx(GAMMA2, abs=2e-6)
    assert profile.Gamma3 == pytest.approx(GAMMA3, abs=2e-6)
    assert profile.Kstar == pytest.approx(KSTAR, abs=2e-6)
    assert profile.Gamma3 < 0.0  # sign drives the barrier glue restriction
    assert profile.Kstar**3 * profile.Gamma2 == pytest.approx(1.0, rel=1e-10)


def test_profile_stays_above_cone(profile):
    assert np.all(profile.W > profile.z)
    # and approaches it: excess decays like Gamma2/z^2
    zt = profile.z[-1]
    assert profile.W[-1] - zt == pytest.approx(GAMMA2 / zt**2, rel=1e-2)


def test_rescaling_family(profile):
    # W_K(0) = K and the far tail is z + Gamma2 K^3 / z^2
    for K in (0.5, 2.0):
        assert rescale_W(profile, K, np.array([0.0]))[0] == pytest.approx(K, rel=1e-10)
        z = np.array([500.0])
        tail = z + profile.Gamma2 * K**3 / z**2 + profile.Gamma3 * K**4 / z**3
        assert rescale_W(profile, K, z)[0] == pytest.approx(float(tail[0]), rel=1e-9)


def test_star_function_bounds(profile):
    z = np.linspace(0.0, 45.0, 500)
    phi, d1, _ = Phi_with_derivs(profile, z)
    assert phi[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all((phi > 0.0) & (phi <= 1.0))
    assert np.all(d1[1:] < 0.0)  # strictly decreasing away from the axis


def test_phase_jacobian_matches_finite_differences():
    pt = PhasePoint(P=0.6, Q=0.9)
    v0, jac = phase_system(pt)
    h = 1e-7
    for j, dp in enumerate(((h, 0.0), (0.0, h))):
        vp, _ = phase_system(PhasePoint(P=pt.P + dp[0], Q=pt.Q + dp[1]))
        fd = (np.asarray(vp) - np.asarray(v0)) / h
        assert np.allclose(jac[:, j], fd, rtol=1e-5, atol=1e-6)


def test_shoot_rejects_bad_arguments():
    with pytest.raises(InvalidParameter):
        shoot_alencar(z_max=10.0)
    with pytest.raises(InvalidParameter):
        shoot_alencar(tol=1e-20)
