"""Eigenfunctions of the intermediate-frame linearized operator L, the
operator itself, its action on powers, and the auxiliary correction g.

In the parabolic frame v(y,tau) = y + f(y,tau) the perturbation f satisfies
f_tau = L f + N[f] with

    L f = (1/2) f'' + (3/y + y/2) f' + (3/y^2 - 1/2) f.

The operator L has the explicit eigenfunctions

    phi_k(y) = y^-2 sum_{n=0}^{k} binom(k,n) y^(2n) / (2n+1)!!,
    L phi_k = (k - 3/2) phi_k,

kept here with exact rational coefficients.  The auxiliary function g solves
the forced two-point problem

    6 gamma g - L g = y^-7 + y^(4k-7),
    g ~ -(1/3) y^-5  (y -> 0),     g ~ y^(4k-7)  (y -> infinity),

discretized with second-order centered differences on a log-spaced grid and
solved with a banded direct solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .errors import DomainError, InvalidParameter, LinearSolveFailure
from .params import DerivedConstants, double_factorial


@dataclass(frozen=True)
class EigenfunctionK:
    """phi_k as exact rational data: coeffs[n] multiplies y^(2n-2)."""

    k: int
    coeffs: tuple  # Fractions, length k+1

    def __post_init__(self):
        if len(self.coeffs) != self.k + 1:
            raise InvalidParameter("eigenfunction must carry k+1 coefficients")
        if self.coeffs[0] != 1:
            raise InvalidParameter("trailing coefficient (of y^-2) must be 1")


def eigenfunction(k: int) -> EigenfunctionK:
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise InvalidParameter(f"k must be a positive integer, got {k!r}")
    coeffs = tuple(
        Fraction(math.comb(k, n), double_factorial(2 * n + 1)) for n in range(k + 1)
    )
    return EigenfunctionK(k=k, coeffs=coeffs)


def _phi_sums(ef: EigenfunctionK, y, order):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise DomainError("phi_k requires y > 0")
    out = []
    c = np.array([float(q) for q in ef.coeffs])
    for deriv in range(order + 1):
        total = np.zeros_like(y)
        for n, cn in enumerate(c):
            e = 2 * n - 2
            fac = 1.0
            for j in range(deriv):
                fac *= e - j
            if fac != 0.0:
                total += cn * fac * y ** (e - deriv)
        out.append(total)
    return out


def phi_k(ef: EigenfunctionK, y):
    """Value of phi_k at y > 0 (scalar or array)."""
    (v,) = _phi_sums(ef, y, 0)
    return v if np.ndim(y) else float(v)


def phi_k_d1(ef: EigenfunctionK, y):
    _, d1 = _phi_sums(ef, y, 1)
    return d1 if np.ndim(y) else float(d1)


def phi_k_d2(ef: EigenfunctionK, y):
    _, _, d2 = _phi_sums(ef, y, 2)
    return d2 if np.ndim(y) else float(d2)


def phi_k_all(ef: EigenfunctionK, y):
    """(phi, phi', phi'') at y, vectorized."""
    return tuple(_phi_sums(ef, y, 2))


def chi_k_series(k: float, y, nterms: int):
    """Partial sum of chi_k(y) = sum_n k(k-1)...(k-n+1)/(n!(2n+1)!!) y^(2n).

    For integer k the series terminates at n = k and the partial sum with
    nterms > k is exact; phi_k = y^-2 chi_k.
    """
    if nterms < 1:
        raise InvalidParameter("nterms must be >= 1")
    y = np.asarray(y, dtype=float)
    u = y * y
    total = np.ones_like(y)
    term_coeff = 1.0  # falling-factorial / (n! (2n+1)!!) accumulator
    upow = np.ones_like(y)
    for n in range(1, nterms):
        term_coeff *= (k - (n - 1)) / (n * (2 * n + 1))
        # (2n+1)!!/(2n-1)!! = 2n+1 and n!/(n-1)! = n handled incrementally
        if term_coeff == 0.0:
            break
        upow = upow * u
        total = total + term_coeff * upow
    return total if np.ndim(y) else float(total)


def apply_L(f, y):
    """Apply L to a function f supplied as y -> (value, d1, d2)."""
    yarr = np.asarray(y, dtype=float)
    if np.any(yarr <= 0.0):
        raise DomainError("apply_L requires y > 0")
    v, d1, d2 = f(y)
    return apply_L_values(v, d1, d2, y)


def apply_L_values(v, d1, d2, y):
    """L from precomputed value and derivatives at y."""
    y = np.asarray(y, dtype=float) if np.ndim(y) else float(y)
    return 0.5 * d2 + (3.0 / y + 0.5 * y) * d1 + (3.0 / (y * y) - 0.5) * v


def L_power_action(r: float, c: DerivedConstants):
    """Coefficients (a, b) with (6 gamma - L)[y^r] = a y^(r-2) + b y^r.

    From L[y^r] = (1/2)(r+2)(r+3) y^(r-2) + (1/2)(r-1) y^r and
    6 gamma = 2k - 3:  a = -(1/2)(r+2)(r+3), b = (1/2)(4k - 5 - r).
    """
    a = -0.5 * (r + 2.0) * (r + 3.0)
    b = 0.5 * (4.0 * c.k - 5.0 - r)
    return a, b


def bracket2(v, d1, d2, y):
    """Weighted seminorm [F]_2 = |F| + |y F'| + |y^2 F''|."""
    y = np.asarray(y, dtype=float) if np.ndim(y) else float(y)
    return np.abs(v) + np.abs(y * d1) + np.abs(y * y * d2)


@dataclass
class AuxiliaryG:
    """Discrete solution of 6 gamma g - L g = y^-7 + y^(4k-7).

    grid is log-spaced; values holds g at the grid nodes; residual_norm is
    the largest interior relative residual of the solved banded system.
    Beyond the grid, evaluation switches to the asymptotic expansions
    -(1/3) y^-5 (below) and y^(4k-7) + m y^(4k-9) with measured m (above).
    """

    grid: np.ndarray
    values: np.ndarray
    k: int
    residual_norm: float
    d1: np.ndarray = field(repr=False, default=None)
    d2: np.ndarray = field(repr=False, default=None)
    c1_measured: float = 0.0
    tail_m: float = 0.0
    _splines: tuple = field(repr=False, default=None)

    def __post_init__(self):
        s = np.log(self.grid)
        if self._splines is None:
            object.__setattr__(
                self,
                "_splines",
                (
                    CubicSpline(s, self.values),
                    CubicSpline(s, self.d1),
                    CubicSpline(s, self.d2),
                ),
            )

    def __call__(self, y, deriv: int = 0):
        """g (deriv=0), g' (1) or g'' (2) at y > 0, scalar or array."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        if np.any(y <= 0.0):
            raise DomainError("g requires y > 0")
        out = np.empty_like(y)
        lo = y < self.grid[0]
        hi = y > self.grid[-1]
        mid = ~(lo | hi)
        if np.any(mid):
            out[mid] = self._splines[deriv](np.log(y[mid]))
        if np.any(lo):
            ylo = y[lo]
            if deriv == 0:
                out[lo] = -(1.0 / 3.0) * ylo ** -5
            elif deriv == 1:
                out[lo] = (5.0 / 3.0) * ylo ** -6
            else:
                out[lo] = -10.0 * ylo ** -7
        if np.any(hi):
            yhi = y[hi]
            q = 4 * self.k - 7
            if deriv == 0:
                out[hi] = yhi ** q + self.tail_m * yhi ** (q - 2)
            elif deriv == 1:
                out[hi] = q * yhi ** (q - 1) + self.tail_m * (q - 2) * yhi ** (q - 3)
            else:
                out[hi] = q * (q - 1) * yhi ** (q - 2) + self.tail_m * (q - 2) * (q - 3) * yhi ** (q - 4)
        return out[0] if scalar else out


def _fd_derivs_uniform(vals, h):
    """First and second derivatives on a uniform grid: fourth-order centered
    stencils inside, second-order one-sided near the edges (where evaluation
    falls back to the analytic asymptotics anyway)."""
    n = len(vals)
    v = vals
    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d2[2:-2] = (-v[:-4] + 16 * v[1:-3] - 30 * v[2:-2] + 16 * v[3:-1] - v[4:]) / (12 * h * h)
    for i in (0, 1):
        d1[i] = (-3 * v[i] + 4 * v[i + 1] - v[i + 2]) / (2 * h)
        d2[i] = (2 * v[i] - 5 * v[i + 1] + 4 * v[i + 2] - v[i + 3]) / (h * h)
    for i in (n - 2, n - 1):
        d1[i] = (3 * v[i] - 4 * v[i - 1] + v[i - 2]) / (2 * h)
        d2[i] = (2 * v[i] - 5 * v[i - 1] + 4 * v[i - 2] - v[i - 3]) / (h * h)
    return d1, d2


def solve_g(k: int, y_min: float = 1e-2, y_max: float = 150.0, npoints: int = 4000) -> AuxiliaryG:
    """Solve the g boundary value problem on a log-spaced grid.

    Working in s = log y the operator becomes

      (6g - L)g = -(1/2)e^{-2s} g_ss - ((5/2)e^{-2s} + 1/2) g_s
                  + (6 gamma - 3 e^{-2s} + 1/2) g,

    a tridiagonal system after centered differencing on the uniform s grid.
    """
    if not (0.0 < y_min < 1.0 < y_max):
        raise InvalidParameter("need 0 < y_min < 1 < y_max")
    if npoints < 100:
        raise InvalidParameter("npoints must be >= 100")
    gamma6 = 2.0 * k - 3.0
    q = 4 * k - 7
    s = np.linspace(math.log(y_min), math.log(y_max), npoints)
    h = s[1] - s[0]
    y = np.exp(s)
    e2 = np.exp(-2.0 * s)

    # coefficients of (6 gamma - L) in s: A2 g_ss + A1 g_s + A0 g = b
    A2 = -0.5 * e2
    A1 = -(2.5 * e2 + 0.5)
    A0 = gamma6 - 3.0 * e2 + 0.5
    b = y ** -7 + y ** q

    lower = np.zeros(npoints)
    diag = np.zeros(npoints)
    upper = np.zeros(npoints)
    lower[:-1] = A2[1:] / h**2 - A1[1:] / (2 * h)
    diag[:] = -2.0 * A2 / h**2 + A0
    upper[1:] = A2[:-1] / h**2 + A1[:-1] / (2 * h)

    bc_lo = -(1.0 / 3.0) * y_min ** -5
    bc_hi = y_max ** float(q)
    if not (np.isfinite(bc_lo) and np.isfinite(bc_hi)):
        raise DomainError("boundary values are non-finite")
    diag[0] = 1.0
    upper[1] = 0.0
    b[0] = bc_lo
    diag[-1] = 1.0
    lower[-2] = 0.0
    b[-1] = bc_hi

    ab = np.zeros((3, npoints))
    ab[0] = upper
    ab[1] = diag
    ab[2] = lower
    try:
        g = solve_banded((1, 1), ab, b)
    except Exception as exc:  # pragma: no cover - LAPACK failure path
        raise LinearSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(g)):
        raise LinearSolveFailure("banded solve produced non-finite values")

    # interior residual of the solved system, relative to the forcing
    Ag = diag[1:-1] * g[1:-1] + lower[:-2] * g[:-2] + upper[2:] * g[2:]
    res_rel = np.abs(Ag - b[1:-1]) / np.abs(b[1:-1])
    residual_norm = float(np.max(res_rel))

    gs, gss = _fd_derivs_uniform(g, h)
    d1 = gs / y
    d2 = (gss - gs) / (y * y)

    # measured coefficient of y^-3 log y near the lower end
    i0 = np.searchsorted(s, math.log(2.0 * y_min))
    y0 = y[i0]
    c1_measured = float((g[i0] + (1.0 / 3.0) * y0 ** -5) / (y0 ** -3 * math.log(y0)))
    # measured next-order tail coefficient (of y^(4k-9))
    i1 = np.searchsorted(s, math.log(0.8 * y_max))
    y1 = y[i1]
    tail_m = float((g[i1] - y1 ** q) / y1 ** (q - 2))

    return AuxiliaryG(
        grid=y,
        values=g,
        k=k,
        residual_norm=residual_norm,
        d1=d1,
        d2=d2,
        c1_measured=c1_measured,
        tail_m=tail_m,
    )


def g_ode_residual(aux: AuxiliaryG):
    """Independent residual sweep: apply (6 gamma - L) to the solved g using
    fourth-order finite differences and compare against the forcing.

    The residual is normalized by the largest term entering the balance
    (forcing or individual operator terms); near y ~ 1 the operator terms
    cancel to a forcing orders of magnitude smaller than themselves, so a
    plain forcing-relative residual would only measure that cancellation.

    Returns (y_interior, normalized_residual)."""
    y = aux.grid
    gamma6 = 2.0 * aux.k - 3.0
    q = 4 * aux.k - 7
    v, d1, d2 = aux.values, aux.d1, aux.d2
    lhs = gamma6 * v - apply_L_values(v, d1, d2, y)
    forcing = y ** -7 + y ** float(q)
    scale = (
        np.abs(forcing)
        + gamma6 * np.abs(v)
        + np.abs(0.5 * d2)
        + np.abs((3.0 / y + 0.5 * y) * d1)
        + np.abs((3.0 / (y * y) - 0.5) * v)
    )
    sl = slice(4, -4)
    return y[sl], np.abs(lhs[sl] - forcing[sl]) / scale[sl]
