"""Concrete initial profile u0(x) = x + K0 zeta(x) x^(2k-2) with a fixed
cutoff zeta (1 on [0,1/2], 0 on [1,infinity)), plus the C^2 transition
profiles used for cutoffs and gluing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInitialData
from .params import DerivedConstants, ModelParams


def smoothstep_down(t):
    """C^2 monotone transition: 1 for t <= 0, 0 for t >= 1.

    Returns (value, d/dt, d2/dt2) of 1 - (10 t^3 - 15 t^4 + 6 t^5)."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    v = 1.0 - (10.0 * tc**3 - 15.0 * tc**4 + 6.0 * tc**5)
    inside = (t > 0.0) & (t < 1.0)
    d1 = np.where(inside, -(30.0 * tc**2 - 60.0 * tc**3 + 30.0 * tc**4), 0.0)
    d2 = np.where(inside, -(60.0 * tc - 180.0 * tc**2 + 120.0 * tc**3), 0.0)
    return v, d1, d2


def zeta_cutoff(x):
    """(zeta, zeta', zeta''): 1 on [0, 1/2], 0 on [1, infinity)."""
    x = np.asarray(x, dtype=float)
    v, d1, d2 = smoothstep_down(2.0 * x - 1.0)
    return v, 2.0 * d1, 4.0 * d2


def psi_glue(xi):
    """Glue transition Psi: 1 on [0,1], 0 on [2,infinity), C^2 monotone."""
    xi = np.asarray(xi, dtype=float)
    v, d1, d2 = smoothstep_down(xi - 1.0)
    return v, d1, d2


@dataclass
class InitialProfile:
    """u0 with analytic derivatives and the validated constants: C0 bounds
    |u0''| <= C0 x^(2k-4) on (0,1], c_lower = min u0' on [0,1]."""

    params: ModelParams
    c: DerivedConstants
    C0: float
    c_lower: float
    C1: float  # max u0' over [0, infinity)

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        k, K0 = self.params.k, self.params.K0
        q = 2 * k - 2
        z, z1, z2 = zeta_cutoff(x)
        if deriv == 0:
            out = x + K0 * z * x**q
        elif deriv == 1:
            out = 1.0 + K0 * (z1 * x**q + q * z * x ** (q - 1))
        elif deriv == 2:
            out = K0 * (z2 * x**q + 2 * q * z1 * x ** (q - 1) + q * (q - 1) * z * x ** (q - 2))
        else:
            raise ValueError("deriv must be 0, 1 or 2")
        return float(out[0]) if scalar else out


def build_initial_u0(params: ModelParams, c: DerivedConstants) -> InitialProfile:
    """Construct u0 and validate its slope and curvature bounds numerically."""
    prof = InitialProfile(params=params, c=c, C0=0.0, c_lower=0.0, C1=0.0)
    x = np.linspace(1e-6, 2.0, 20001)
    d1 = prof(x, 1)
    if np.any(d1 < 0.0):
        raise InvalidInitialData(
            f"u0' < 0 (min {d1.min():.3e}) for K0={params.K0}; initial data not monotone"
        )
    on01 = x <= 1.0
    d2 = prof(x[on01], 2)
    prof.C0 = float(np.max(np.abs(d2) / x[on01] ** (2 * params.k - 4)))
    prof.c_lower = float(np.min(d1[on01]))
    prof.C1 = float(np.max(d1))
    if prof.c_lower <= 0.0:
        raise InvalidInitialData("u0' is not bounded below by a positive constant on [0,1]")
    return prof
