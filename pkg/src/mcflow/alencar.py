"""The Alencar minimal profile W, its rescalings, asymptotics, phase plane,
and the two linearized operators of the mean-curvature analysis.

W is the rotationally symmetric minimal graph desingularizing the cone u = x:

    W'' = (1 + W'^2) (3/W - 3 W'/z),   W(0) = 1,  W'(0) = 0,

with W(z) = z + Gamma2/z^2 + Gamma3/z^3 + O(z^-5) at infinity.  The scaling
family W_K(z) = K W(z/K) sweeps out the inner barriers.  The star-shape
function Phi = W - z W' spans the kernel of the linearization M_infinity of
the minimal surface operator at W; the cone linearization M_0 is killed by
xi^-2 and xi^-3 exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import DomainError, FitFailure, InvalidParameter, ShootingFailure

_Z0 = 1e-3  # series start, clear of the 3/z singularity
_A2 = 3.0 / 8.0
_A4 = -15.0 / 512.0


def _series_W(z):
    z = np.asarray(z, dtype=float)
    return 1.0 + _A2 * z**2 + _A4 * z**4


def _series_W1(z):
    z = np.asarray(z, dtype=float)
    return 2.0 * _A2 * z + 4.0 * _A4 * z**3


def _ode_rhs(z, Y):
    W, W1 = Y
    return [W1, (1.0 + W1 * W1) * (3.0 / W - 3.0 * W1 / z)]


def _W2_from_ode(z, W, W1):
    """W'' from the ODE; at z = 0 the limit (1+0)(3 - 3 W''...) gives 3/4
    for the normalized profile, handled via the series."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < _Z0
    if np.any(small):
        out[small] = 2.0 * _A2 + 12.0 * _A4 * z[small] ** 2
    big = ~small
    if np.any(big):
        out[big] = (1.0 + W1[big] ** 2) * (3.0 / W[big] - 3.0 * W1[big] / z[big])
    return out


def _W3_from_ode(z, W, W1, W2):
    """W''' by differentiating the ODE; series 24 A4 z below the start of
    the integration window where the 1/z terms are indeterminate."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z, W, W1, W2 = map(np.atleast_1d, (z, W, W1, W2))
    out = np.empty_like(z)
    small = z < _Z0
    out[small] = 24.0 * _A4 * z[small]
    big = ~small
    if np.any(big):
        zb, Wb, W1b, W2b = z[big], W[big], W1[big], W2[big]
        G = 3.0 / Wb - 3.0 * W1b / zb
        Gp = -3.0 * W1b / Wb**2 - 3.0 * W2b / zb + 3.0 * W1b / zb**2
        out[big] = 2.0 * W1b * W2b * G + (1.0 + W1b * W1b) * Gp
    return float(out[0]) if scalar else out


@dataclass
class AlencarProfile:
    """Sampled solution of the minimal-profile ODE with fitted asymptotics.

    Gamma2, Gamma3 are the coefficients of z^-2, z^-3 in W - z; Kstar is
    the rescaling that normalizes the z^-2 coefficient to 1."""

    z: np.ndarray
    W: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    Gamma2: float
    Gamma3: float
    Kstar: float
    tol: float
    _spl: tuple = field(repr=False, default=None)

    def __post_init__(self):
        if self._spl is None:
            object.__setattr__(
                self,
                "_spl",
                (
                    CubicSpline(self.z, self.W),
                    CubicSpline(self.z, self.W1),
                    CubicSpline(self.z, self.W2),
                ),
            )

    @property
    def z_max(self):
        return float(self.z[-1])

    def eval(self, z, deriv: int = 0):
        """W (deriv=0), W' (1) or W'' (2); the fitted tail takes over past
        the integration window."""
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z = np.atleast_1d(z).astype(float)
        if np.any(z < 0.0):
            raise DomainError("W is defined for z >= 0")
        out = np.empty_like(z)
        hi = z > self.z[-1]
        mid = ~hi
        if np.any(mid):
            out[mid] = self._spl[deriv](z[mid])
        if np.any(hi):
            zz = z[hi]
            if deriv == 0:
                out[hi] = zz + self.Gamma2 / zz**2 + self.Gamma3 / zz**3
            elif deriv == 1:
                out[hi] = 1.0 - 2.0 * self.Gamma2 / zz**3 - 3.0 * self.Gamma3 / zz**4
            else:
                out[hi] = 6.0 * self.Gamma2 / zz**4 + 12.0 * self.Gamma3 / zz**5
        return float(out[0]) if scalar else out


def shoot_alencar(z_max: float = 50.0, tol: float = 1e-12) -> AlencarProfile:
    """Integrate the profile ODE from the interior series start at z0=1e-3."""
    if z_max < 20.0:
        raise InvalidParameter("z_max must be >= 20")
    if not (1e-13 <= tol <= 1e-6):
        raise InvalidParameter("tol must lie in [1e-13, 1e-6]")
    y0 = [float(_series_W(_Z0)), float(_series_W1(_Z0))]
    # sample grid: fine uniform; the profile is smooth and O(1)-curved only
    # for z of order 1
    n = max(4000, int(80 * z_max))
    z_eval = np.linspace(_Z0, z_max, n)
    sol = solve_ivp(
        _ode_rhs,
        (_Z0, z_max),
        y0,
        method="DOP853",
        t_eval=z_eval,
        rtol=tol,
        atol=tol * 1e-2,
    )
    if not sol.success:
        raise ShootingFailure(f"ODE integration failed: {sol.message}")
    W = sol.y[0]
    W1 = sol.y[1]
    if np.any(W <= 0.0):
        raise ShootingFailure("W reached a nonpositive value")
    # prepend the series segment including z = 0
    z_pre = np.linspace(0.0, _Z0, 8, endpoint=False)
    z_all = np.concatenate([z_pre, z_eval])
    W_all = np.concatenate([_series_W(z_pre), W])
    W1_all = np.concatenate([_series_W1(z_pre), W1])
    W2_all = _W2_from_ode(z_all, W_all, W1_all)
    prof = AlencarProfile(
        z=z_all, W=W_all, W1=W1_all, W2=W2_all,
        Gamma2=math.nan, Gamma3=math.nan, Kstar=math.nan, tol=tol,
    )
    g2, g3, kstar = fit_asymptotics(prof)
    prof.Gamma2, prof.Gamma3, prof.Kstar = g2, g3, kstar
    return prof


def fit_asymptotics(profile: AlencarProfile):
    """Least-squares fit of W - z against {z^-2, z^-3, z^-5} on the outer
    half of the window; the expansion has no z^-4 term."""
    zm = profile.z_max
    if zm < 20.0:
        raise FitFailure("window too short for an asymptotic fit")
    mask = profile.z >= zm / 2.0
    zz = profile.z[mask]
    rhs = profile.W[mask] - zz
    basis = np.column_stack([zz**-2, zz**-3, zz**-5])
    coef, _, rank, sv = np.linalg.lstsq(basis, rhs, rcond=None)
    if rank < 3 or sv[0] / sv[-1] > 1e12:
        raise FitFailure("asymptotic fit is ill-conditioned")
    g2, g3, _g5 = (float(v) for v in coef)
    if g2 <= 0.0:
        raise FitFailure(f"Gamma2 must be positive, fit gave {g2}")
    return g2, g3, g2 ** (-1.0 / 3.0)


def rescale_W(profile: AlencarProfile, K: float, z, deriv: int = 0):
    """W_K(z) = K W(z/K) and its z-derivatives."""
    if not (K > 0.0):
        raise InvalidParameter("K must be positive")
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    za = np.atleast_1d(z) / K
    v = profile.eval(za, deriv)
    v = v * K ** (1 - deriv)
    return float(v[0]) if scalar else v


def Phi(profile: AlencarProfile, z):
    """Star-shape function Phi = W - z W', strictly decreasing from 1."""
    z = np.asarray(z, dtype=float)
    return profile.eval(z, 0) - z * profile.eval(z, 1)


def Phi_with_derivs(profile: AlencarProfile, z):
    """(Phi, Phi', Phi'') using the ODE for W'' and W'''."""
    z = np.asarray(z, dtype=float)
    W = profile.eval(z, 0)
    W1 = profile.eval(z, 1)
    W2 = _W2_from_ode(np.atleast_1d(z), np.atleast_1d(W), np.atleast_1d(W1))
    W2 = W2.reshape(np.shape(z)) if np.ndim(z) else float(W2[0])
    W3 = _W3_from_ode(z, W, W1, W2)
    phi = W - z * W1
    phi1 = -z * W2
    phi2 = -W2 - z * W3
    return phi, phi1, phi2


@dataclass(frozen=True)
class PhasePoint:
    """Phase-plane coordinates P = W_z, Q = z/W."""

    P: float
    Q: float


def phase_system(pt: PhasePoint):
    """Vector field per unit log z and its analytic Jacobian.

    z P_z = 3 (1+P^2) (Q - P);   z Q_z = Q (1 - P Q),
    the Q-equation coming directly from Q = z/W."""
    P, Q = pt.P, pt.Q
    vel = np.array([3.0 * (1.0 + P * P) * (Q - P), Q * (1.0 - P * Q)])
    jac = np.array(
        [
            [6.0 * P * (Q - P) - 3.0 * (1.0 + P * P), 3.0 * (1.0 + P * P)],
            [-Q * Q, 1.0 - 2.0 * P * Q],
        ]
    )
    return vel, jac


def phase_orbit(profile: AlencarProfile, z):
    """(P, Q) along the shot orbit."""
    z = np.asarray(z, dtype=float)
    return profile.eval(z, 1), z / profile.eval(z, 0)


def linearized_at_alencar(profile: AlencarProfile, eta, xi):
    """M_infinity[eta] = d/dxi(eta'/(1+W'^2)) + (3/xi) eta' + (3/W^2) eta.

    eta is supplied as xi -> (value, d1, d2)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0):
        raise DomainError("M_infinity requires xi > 0")
    v, d1, d2 = eta(xi)
    W = profile.eval(xi, 0)
    W1 = profile.eval(xi, 1)
    W2 = _W2_from_ode(np.atleast_1d(xi), np.atleast_1d(W), np.atleast_1d(W1))
    W2 = W2.reshape(np.shape(xi)) if np.ndim(xi) else float(W2[0])
    s = 1.0 + W1 * W1
    return d2 / s - 2.0 * W1 * W2 * d1 / (s * s) + 3.0 * d1 / xi + 3.0 * v / (W * W)


def linearized_at_cone(eta, xi):
    """M_0[eta] = (1/2) eta'' + (3/xi) eta' + (3/xi^2) eta."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0):
        raise DomainError("M_0 requires xi > 0")
    v, d1, d2 = eta(xi)
    return 0.5 * d2 + 3.0 * d1 / xi + 3.0 * v / (xi * xi)
