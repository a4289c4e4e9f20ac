"""Sub/super-solution barriers for the singular profile equation and their
numerical certification.

Three barrier families are glued into global upper/lower barriers:

  outer         u±(x,t)   = u0(x) ± M t min{1, x^(2k-4)}         x >= M sqrt(t)
  intermediate  v±(y,tau) = y + f±(y,tau)                        R* e^(gt) <= y <= e^(-tau/2)
  inner         w+(z,tau) = W_{K2+}(z),
                w-(z,tau) = W_{K2-}(z) + D e^(2 gamma tau)       z <= Z_delta

with f± = (K1 ± delta) e^(3 gamma tau) phi_k ± [B K1^2 e^(6 gamma tau) g
+ e^((p+1) gamma tau) y^(-p)].  The global barriers are the min (upper) or
max (lower) of the pieces in (x,t).  Certification is by dense residual
sweeps with the correct sign, crossing brackets at the matching stations
Y_delta/4, Y_delta (outer/intermediate) and Z_delta/2, Z_delta
(inner/intermediate), and nesting between the delta and delta/2 families.

All piece evaluations go through "excess" forms (barrier minus the cone x)
so that the tiny barrier gaps survive in float arithmetic; the star-shape
function W_K - z W_K' and the cap excess W_K - z switch to their analytic
far-field expansions where direct subtraction would cancel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import CubicSpline

from .alencar import AlencarProfile, rescale_W, shoot_alencar
from .errors import ConstantSearchFailure, InvalidParameter, RegionError
from .initial import InitialProfile, build_initial_u0, zeta_cutoff
from .params import (
    DerivedConstants,
    ModelParams,
    RegionSpec,
    derive_constants,
    double_factorial,
)
from .special import (
    AuxiliaryG,
    EigenfunctionK,
    apply_L_values,
    bracket2,
    eigenfunction,
    phi_k_all,
    solve_g,
)


def c_coefficients(k: int):
    """Exact coefficients c_j of the slow part of phi_k:

    phi_k(y) = y^(2k-2)/(2k+1)!! + c(y) y^(2k-4),
    c(y) = c_0 + c_1 y^-2 + ... + c_(k-1) y^(-2(k-1)),
    c_j = binom(k, j+1)/(2(k-j)-1)!!.
    """
    return [
        Fraction(math.comb(k, j + 1), double_factorial(2 * (k - j) - 1))
        for j in range(k)
    ]


def c_eval(k: int, y):
    """c(y) evaluated from the exact rational coefficients."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for j, cj in enumerate(c_coefficients(k)):
        out = out + float(cj) * y ** (-2 * j)
    return out if np.ndim(y) else float(out)


@dataclass(frozen=True)
class BarrierParams:
    """Constants fixing one barrier family.

    delta: half-gap of the intermediate eigenfunction coefficients K1 +- delta
    B: weight of the auxiliary-g correction (multiplies K1^2)
    M: outer barrier slope
    Rstar, taustar: inner edge and time cutoff of the intermediate region
    D: lift of the inner sub-solution; zeta: its range constant
    K2plus, K2minus: cap scales with K2pm^3 = K1 +- 2 delta
    epsilon: glue half-width scale for the initial-data construction
    """

    delta: float
    B: float
    M: float
    Rstar: float
    taustar: float
    D: float
    zeta: float
    K2plus: float
    K2minus: float
    epsilon: float

    def __post_init__(self):
        for name in ("delta", "B", "M", "Rstar", "D", "zeta", "K2plus", "K2minus", "epsilon"):
            if not (getattr(self, name) > 0.0):
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)}")
        if not (self.K2minus < self.K2plus):
            raise InvalidParameter("need K2minus < K2plus")
        gap = self.K2plus**3 - self.K2minus**3
        if abs(gap - 4.0 * self.delta) > 1e-12 * max(1.0, self.K2plus**3):
            raise InvalidParameter(
                f"K2plus^3 - K2minus^3 = {gap} must equal 4 delta = {4 * self.delta}"
            )


@dataclass
class ResidualReport:
    """Signed residual sweep over one region, both barrier signs.

    residual holds the evolution-operator residual (time side minus space
    side); required_sign is +1 where the residual must be >= 0 (upper
    barrier) and -1 where it must be <= 0 (lower barrier)."""

    region: str
    coord1: np.ndarray
    coord2: np.ndarray
    residual: np.ndarray
    required_sign: np.ndarray
    fraction_correct_sign: float
    worst_violation: float
    min_margin: float
    checks: dict

    @property
    def ok(self):
        return self.fraction_correct_sign == 1.0 and all(
            v for kk, v in self.checks.items() if kk.endswith("_ok")
        )


@dataclass
class MatchingReport:
    """Crossing-bracket signs at the four matching stations over a tau scan.

    tau_delta is the largest scanned tau from which all eight bracket
    inequalities hold for every sampled tau below it (None if the scan
    never succeeds)."""

    ok: bool
    tau_delta: float | None
    taus: np.ndarray
    station_ok: np.ndarray
    labels: tuple
    gaps_at_tau_delta: dict


@dataclass
class NestingReport:
    """Ordering of the delta and delta/2 barrier families."""

    ok: bool
    checks: dict
    margins: dict


@dataclass
class BarrierSet:
    """One barrier family with its evaluation ingredients."""

    params: BarrierParams
    model: ModelParams
    c: DerivedConstants
    ef: EigenfunctionK
    g: AuxiliaryG
    profile: AlencarProfile
    u0: InitialProfile
    spec: RegionSpec
    _excess_spl: CubicSpline = field(repr=False, default=None)
    _star_spl: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._excess_spl is None:
            pz = self.profile.z
            object.__setattr__(self, "_excess_spl", CubicSpline(pz, self.profile.W - pz))
            object.__setattr__(
                self, "_star_spl", CubicSpline(pz, self.profile.W - pz * self.profile.W1)
            )

    # -- derived geometry -------------------------------------------------
    @property
    def Zdelta(self):
        return self.spec.Zdelta

    @property
    def Ydelta(self):
        return self.spec.Ydelta

    @property
    def tau_star_D(self):
        """Validity cutoff of the inner sub-solution lift."""
        w0 = self.cap_value(self.params.K2minus, 0.0)
        return (1.0 / (2.0 * self.c.gamma)) * math.log(w0 / self.params.D)

    def cap_scale(self, K_label: float) -> float:
        """Full rescaling applied to the raw minimal profile: the label K
        carries the normalized z^-2 coefficient K^3."""
        return K_label * self.profile.Kstar

    # -- cancellation-safe cap evaluations --------------------------------
    def cap_value(self, K_label: float, z, deriv: int = 0):
        return rescale_W(self.profile, self.cap_scale(K_label), z, deriv)

    def cap_excess(self, K_label: float, z):
        """W_K(z) - z without catastrophic cancellation at large z."""
        Kf = self.cap_scale(K_label)
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        zz = np.atleast_1d(z)
        zeta = zz / Kf
        out = np.empty_like(zz)
        lo = zeta <= self.profile.z_max
        out[lo] = Kf * self._excess_spl(zeta[lo])
        hi = ~lo
        if np.any(hi):
            zh = zz[hi]
            out[hi] = (
                self.profile.Gamma2 * Kf**3 / zh**2 + self.profile.Gamma3 * Kf**4 / zh**3
            )
        return float(out[0]) if scalar else out

    def cap_star(self, K_label: float, z):
        """Star-shape function W_K - z W_K' > 0, safe at large z."""
        Kf = self.cap_scale(K_label)
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        zz = np.atleast_1d(z)
        zeta = zz / Kf
        out = np.empty_like(zz)
        lo = zeta <= self.profile.z_max
        out[lo] = Kf * self._star_spl(zeta[lo])
        hi = ~lo
        if np.any(hi):
            zh = zz[hi]
            out[hi] = (
                3.0 * self.profile.Gamma2 * Kf**3 / zh**2
                + 4.0 * self.profile.Gamma3 * Kf**4 / zh**3
            )
        return float(out[0]) if scalar else out

    # -- intermediate perturbation ----------------------------------------
    def f_perturbation(self, y, tau: float, sign: int, nderiv: int = 0):
        """f(y, tau) of the intermediate barrier v = y + f, optionally with
        y-derivatives (nderiv=2 returns (f, f_y, f_yy))."""
        y = np.asarray(y, dtype=float)
        p = self.model.p
        K1, gamma = self.c.K1, self.c.gamma
        e3 = math.exp(3.0 * gamma * tau)
        e6 = math.exp(6.0 * gamma * tau)
        ep1 = math.exp((p + 1.0) * gamma * tau)
        A = K1 + sign * self.params.delta
        BK = self.params.B * K1 * K1
        pv, p1, p2 = phi_k_all(self.ef, y)
        f = A * e3 * pv + sign * (BK * e6 * self.g(y, 0) + ep1 * y**-p)
        if nderiv == 0:
            return f
        fy = A * e3 * p1 + sign * (BK * e6 * self.g(y, 1) - ep1 * p * y ** (-p - 1))
        fyy = A * e3 * p2 + sign * (
            BK * e6 * self.g(y, 2) + ep1 * p * (p + 1) * y ** (-p - 2)
        )
        return f, fy, fyy

    # -- piece excesses in (x, t) -----------------------------------------
    def outer_excess(self, x, t: float, sign: int):
        x = np.asarray(x, dtype=float)
        k, K0 = self.model.k, self.model.K0
        zv, _, _ = zeta_cutoff(x)
        return K0 * zv * x ** (2 * k - 2) + sign * self.params.M * t * np.minimum(
            1.0, x ** (2 * k - 4)
        )

    def intermediate_excess(self, x, t: float, sign: int):
        tau = math.log(t)
        y = np.asarray(x, dtype=float) / math.sqrt(t)
        return math.sqrt(t) * self.f_perturbation(y, tau, sign)

    def inner_excess(self, x, t: float, sign: int):
        tau = math.log(t)
        scale = t ** (self.c.k / 3.0)
        z = np.asarray(x, dtype=float) / scale
        K = self.params.K2plus if sign > 0 else self.params.K2minus
        ex = self.cap_excess(K, z)
        if sign < 0:
            ex = ex + self.params.D * math.exp(2.0 * self.c.gamma * tau)
        return scale * ex


def outer_barrier(bs: BarrierSet, x, t: float, sign: int):
    """u0(x) +- M t min{1, x^(2k-4)} on x >= M sqrt(t), t < M^-2."""
    x = np.asarray(x, dtype=float)
    M = bs.params.M
    if t <= 0.0 or t >= M**-2 or np.any(x < M * math.sqrt(t)):
        raise RegionError("point outside the outer region")
    return x + bs.outer_excess(x, t, sign)


def intermediate_barrier(bs: BarrierSet, y, tau: float, sign: int):
    """v(y, tau) = y + f(y, tau) on R* e^(gamma tau) <= y <= e^(-tau/2)."""
    y = np.asarray(y, dtype=float)
    glo = bs.params.Rstar * math.exp(bs.c.gamma * tau)
    if tau > bs.params.taustar or np.any(y < glo) or np.any(y > math.exp(-tau / 2.0)):
        raise RegionError("point outside the intermediate region")
    return y + bs.f_perturbation(y, tau, sign)


def inner_barrier(bs: BarrierSet, z, tau: float, sign: int):
    """w(z, tau): the rescaled cap, lifted by D e^(2 gamma tau) for sign -."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > bs.Zdelta) or tau > bs.params.taustar:
        raise RegionError("point outside the inner region")
    if sign > 0:
        return bs.cap_value(bs.params.K2plus, z)
    if tau > bs.tau_star_D or np.any(
        z > bs.params.zeta * math.exp(-bs.c.gamma * tau)
    ):
        raise RegionError("inner sub-solution range exceeded")
    return bs.cap_value(bs.params.K2minus, z) + bs.params.D * math.exp(
        2.0 * bs.c.gamma * tau
    )


def global_excess(bs: BarrierSet, x, t: float, sign: int):
    """Barrier minus the cone x: min (upper) / max (lower) of the defined
    piece excesses at (x, t).

    The intermediate piece enters the glue only inside its certified
    crossing zones with the neighbors: (Z_delta/2) t^(k/3) <= x (inner end)
    and x <= Y_delta sqrt(t) (outer end).  Outside those zones it remains a
    valid one-sided barrier but loses its ordering against the opposite
    envelope: deeper in, the negative z^-3 coefficient of the cap pulls the
    upper cap below the intermediate lower barrier; further out, the
    eigenfunction grows like K0 x^(2k-2) without the cutoff of the initial
    data and overtakes the cut-off outer upper barrier.  Only the restricted
    glue brackets a single solution."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xx = np.atleast_1d(x)
    if t <= 0.0 or t > math.exp(bs.params.taustar) or np.any(xx < 0.0):
        raise RegionError("global barriers exist for 0 < t <= t_delta, x >= 0")
    tau = math.log(t)
    tk3 = t ** (bs.c.k / 3.0)
    fill = np.inf if sign > 0 else -np.inf
    combine = np.minimum if sign > 0 else np.maximum

    out = np.full_like(xx, fill)
    in_outer = (xx >= bs.params.M * math.sqrt(t)) & (t < bs.params.M**-2)
    if np.any(in_outer):
        out[in_outer] = combine(out[in_outer], bs.outer_excess(xx[in_outer], t, sign))
    in_mid = (xx >= 0.5 * bs.Zdelta * tk3) & (xx <= min(1.0, bs.Ydelta * math.sqrt(t)))
    if np.any(in_mid):
        out[in_mid] = combine(out[in_mid], bs.intermediate_excess(xx[in_mid], t, sign))
    in_inner = xx <= bs.Zdelta * tk3
    if sign < 0:
        in_inner &= (xx <= bs.params.zeta * math.exp(-bs.c.gamma * tau) * tk3) & (
            tau <= bs.tau_star_D
        )
    if np.any(in_inner):
        out[in_inner] = combine(out[in_inner], bs.inner_excess(xx[in_inner], t, sign))
    if np.any(~np.isfinite(out)):
        raise RegionError("no barrier piece defined at some requested points")
    return float(out[0]) if scalar else out


def global_barrier(bs: BarrierSet, x, t: float, sign: int):
    """U±(x,t) = x + global excess."""
    return np.asarray(x, dtype=float) + global_excess(bs, x, t, sign)


def nonlinear_term(f, fy, fyy, y):
    """N[f] = -3 f^2 / (y^2 (y+f)) - [(2+f_y)/(1+(1+f_y)^2)] f_y f_yy."""
    return -3.0 * f * f / (y * y * (y + f)) - (
        (2.0 + fy) / (1.0 + (1.0 + fy) ** 2)
    ) * fy * fyy


def _outer_residual(bs: BarrierSet, x, t: float, sign: int):
    """u_t - F[u] for the outer barrier, grouped so the 3u_x/x - 3/u
    cancellation is done symbolically (u = x + w)."""
    x = np.asarray(x, dtype=float)
    k, K0 = bs.model.k, bs.model.K0
    M = bs.params.M
    q = 2 * k - 2
    z0, z1, z2 = zeta_cutoff(x)
    mt = np.minimum(1.0, x ** (2 * k - 4))
    dm1 = np.where(x < 1.0, (2 * k - 4) * x ** (2 * k - 5), 0.0)
    dm2 = np.where(x < 1.0, (2 * k - 4) * (2 * k - 5) * x ** (2 * k - 6), 0.0)
    w = K0 * z0 * x**q + sign * M * t * mt
    w1 = K0 * (z1 * x**q + q * z0 * x ** (q - 1)) + sign * M * t * dm1
    w2 = (
        K0 * (z2 * x**q + 2 * q * z1 * x ** (q - 1) + q * (q - 1) * z0 * x ** (q - 2))
        + sign * M * t * dm2
    )
    ux = 1.0 + w1
    F = w2 / (1.0 + ux * ux) + 3.0 * (x * w1 + w + w * w1) / (x * (x + w))
    return sign * M * mt - F


def _intermediate_residual(bs: BarrierSet, y, tau: float, sign: int):
    """(d_tau - L)f - N[f].  The eigenfunction part cancels exactly since
    L phi_k = 3 gamma phi_k, so only the g and y^-p corrections contribute
    to the linear side; using the identity avoids float noise from the
    enormous hidden cancellation at mid-range y.

    Returns (residual, diagnostics dict)."""
    y = np.asarray(y, dtype=float)
    p = bs.model.p
    K1, gamma, k = bs.c.K1, bs.c.gamma, bs.c.k
    e6 = math.exp(6.0 * gamma * tau)
    ep1 = math.exp((p + 1.0) * gamma * tau)
    BK = bs.params.B * K1 * K1
    gv, g1, g2 = bs.g(y, 0), bs.g(y, 1), bs.g(y, 2)
    Ig = 6.0 * gamma * gv - apply_L_values(gv, g1, g2, y)
    yp = y**-p
    If2 = ep1 * (
        (p + 1.0) * gamma * yp
        - apply_L_values(yp, -p * y ** (-p - 1), p * (p + 1) * y ** (-p - 2), y)
    )
    f, fy, fyy = bs.f_perturbation(y, tau, sign, nderiv=2)
    N = nonlinear_term(f, fy, fyy, y)
    residual = sign * (BK * e6 * Ig + If2) - N
    forcing = y**-7.0 + y ** (4.0 * k - 7.0)
    ident_scale = (
        forcing
        + 6.0 * gamma * np.abs(gv)
        + 0.5 * np.abs(g2)
        + np.abs((3.0 / y + 0.5 * y) * g1)
        + (3.0 / (y * y) + 0.5) * np.abs(gv)
    )
    diag = {
        "f": f,
        "N": N,
        "bracket": bracket2(f, fy, fyy, y),
        "identity_rel": np.abs(Ig - forcing) / ident_scale,
        "f2_gap": If2 - (p + 1.0) * gamma * ep1 * yp,
        "f2_value": ep1 * yp,
        "scale": BK * e6 * forcing,
    }
    return residual, diag


def _inner_residual(bs: BarrierSet, z, tau: float, sign: int):
    """Residual of the cap barriers in the inner frame.

    The static minimal-surface residual of W_K vanishes identically (checked
    separately), so the upper residual reduces to e^(2 gamma tau) (k/3)
    (W_K - z W_K') and the lower one to
    e^(2 gamma tau)[(k-1) D e^(2 gamma tau) + (k/3)(W_K - z W_K')]
    - 3 D e^(2 gamma tau)/(W_K (W_K + D e^(2 gamma tau)))."""
    z = np.asarray(z, dtype=float)
    k, gamma = bs.c.k, bs.c.gamma
    e2 = math.exp(2.0 * gamma * tau)
    if sign > 0:
        return e2 * (k / 3.0) * bs.cap_star(bs.params.K2plus, z)
    D = bs.params.D
    W = bs.cap_value(bs.params.K2minus, z)
    return e2 * (
        (k - 1.0) * D * e2
        + (k / 3.0) * bs.cap_star(bs.params.K2minus, z)
        - 3.0 * D / (W * (W + D * e2))
    )


def _cap_static_residual(bs: BarrierSet, K_label: float, n: int = 2000):
    """Independent check that the rescaled cap kills the static
    minimal-surface operator, sampled over the resolved window."""
    Kf = bs.cap_scale(K_label)
    z = np.linspace(1e-2, 0.9 * bs.profile.z_max, n) * Kf
    W = bs.cap_value(K_label, z, 0)
    W1 = bs.cap_value(K_label, z, 1)
    W2 = bs.cap_value(K_label, z, 2)
    return float(np.max(np.abs(W2 / (1.0 + W1 * W1) + 3.0 * W1 / z - 3.0 / W)))


def verify_residuals(bs: BarrierSet, region: str, grid=(64, 160)) -> ResidualReport:
    """Sweep the signed barrier residual over one region, both signs.

    grid = (number of time samples, number of space samples per time)."""
    nt, nx = grid
    tau_hi = bs.params.taustar
    gamma = bs.c.gamma
    c1_rows, c2_rows, res_rows, sgn_rows = [], [], [], []
    checks = {}
    if region == "Outer":
        M = bs.params.M
        ts = np.geomspace(1e-20, 0.99 * M**-2, nt)
        for t in ts:
            x = np.geomspace(M * math.sqrt(t), 4.0, nx)
            for sign in (1, -1):
                r = _outer_residual(bs, x, t, sign)
                c1_rows.append(np.full_like(x, t))
                c2_rows.append(x)
                res_rows.append(r)
                sgn_rows.append(np.full_like(x, sign))
        # upper barrier corner at x=1: the slope of min{1, x^(2k-4)} drops
        # across the corner, making the upper barrier concave there
        checks["corner_concave_ok"] = bool(2 * bs.model.k - 4 > 0)
    elif region == "Intermediate":
        taus = np.linspace(tau_hi - 8.0, tau_hi, nt)
        n_ok = True
        f_pos = True
        ident = 0.0
        f2_ok = True
        for tau in taus:
            y = np.geomspace(
                bs.params.Rstar * math.exp(gamma * tau), math.exp(-tau / 2.0), nx
            )
            for sign in (1, -1):
                r, d = _intermediate_residual(bs, y, tau, sign)
                c1_rows.append(np.full_like(y, tau))
                c2_rows.append(y)
                res_rows.append(r)
                sgn_rows.append(np.full_like(y, sign))
                f_pos &= bool(np.all(d["f"] > 0.0))
                bound = 3.0 * y**-3.0 * d["bracket"] ** 2
                n_ok &= bool(np.all(np.abs(d["N"])[d["f"] >= 0] <= bound[d["f"] >= 0]))
                ident = max(ident, float(d["identity_rel"].max()))
                f2_ok &= bool(np.all(d["f2_gap"] > 0.0) and np.all(d["f2_value"] > 0.0))
        checks["n_bound_ok"] = n_ok
        checks["f_positive_ok"] = f_pos
        checks["identity_max_rel"] = ident
        checks["identity_ok"] = ident < 1e-3
        checks["f2_monotone_ok"] = f2_ok
    elif region == "Inner":
        taus = np.linspace(tau_hi - 8.0, tau_hi, nt)
        for tau in taus:
            z = np.concatenate([[0.0], np.geomspace(1e-2, bs.Zdelta, nx - 1)])
            for sign in (1, -1):
                zz = z
                if sign < 0:
                    zz = z[z <= bs.params.zeta * math.exp(-gamma * tau)]
                r = _inner_residual(bs, zz, tau, sign)
                c1_rows.append(np.full_like(zz, tau))
                c2_rows.append(zz)
                res_rows.append(r)
                sgn_rows.append(np.full_like(zz, sign))
        stat = max(
            _cap_static_residual(bs, bs.params.K2plus),
            _cap_static_residual(bs, bs.params.K2minus),
        )
        checks["static_residual_max"] = stat
        checks["static_ok"] = stat < 1e-7
        checks["star_shape_ok"] = bool(
            np.all(bs.cap_star(bs.params.K2plus, np.geomspace(1e-3, bs.Zdelta, 2000)) > 0)
        )
    else:
        raise InvalidParameter(f"unknown region {region!r}")

    c1 = np.concatenate(c1_rows)
    c2 = np.concatenate(c2_rows)
    res = np.concatenate(res_rows)
    sgn = np.concatenate(sgn_rows)
    signed = sgn * res
    correct = signed > 0.0
    frac = float(np.count_nonzero(correct)) / correct.size
    worst = float(np.max(-signed[~correct])) if not correct.all() else 0.0
    return ResidualReport(
        region=region,
        coord1=c1,
        coord2=c2,
        residual=res,
        required_sign=sgn,
        fraction_correct_sign=frac,
        worst_violation=worst,
        min_margin=float(signed.min()),
        checks=checks,
    )


_STATIONS = (
    ("outer_upper_quarter", "Y", 1, 0.25, True),
    ("outer_upper_full", "Y", 1, 1.0, False),
    ("outer_lower_quarter", "Y", -1, 0.25, False),
    ("outer_lower_full", "Y", -1, 1.0, True),
    ("inner_upper_half", "Z", 1, 0.5, True),
    ("inner_upper_full", "Z", 1, 1.0, False),
    ("inner_lower_half", "Z", -1, 0.5, False),
    ("inner_lower_full", "Z", -1, 1.0, True),
)


def _matching_gaps(bs: BarrierSet, tau: float):
    """Signed gaps (neighbor piece minus local piece) at the four crossing
    stations; the bracket requires alternating signs across each pair."""
    gamma = bs.c.gamma
    t = math.exp(tau)
    et2 = math.exp(tau / 2.0)
    eg = math.exp(gamma * tau)
    gaps = {}
    for name, kind, sign, frac, _want in _STATIONS:
        if kind == "Y":
            ys = frac * bs.Ydelta
            gap = bs.outer_excess(ys * et2, t, sign) / et2 - bs.f_perturbation(
                ys, tau, sign
            )
        else:
            zs = frac * bs.Zdelta
            K = bs.params.K2plus if sign > 0 else bs.params.K2minus
            cap = bs.cap_excess(K, zs)
            if sign < 0:
                cap = cap + bs.params.D * math.exp(2.0 * gamma * tau)
            gap = bs.f_perturbation(zs * eg, tau, sign) / eg - cap
        gaps[name] = float(gap)
    return gaps


def _matching_prereqs(bs: BarrierSet, tau: float):
    """Stations must lie inside both regions being matched."""
    gamma = bs.c.gamma
    return (
        bs.Ydelta <= math.exp(-tau / 2.0)
        and bs.Ydelta / 4.0 >= bs.params.M
        and bs.Zdelta <= bs.params.zeta * math.exp(-gamma * tau)
        and tau <= bs.tau_star_D
    )


def verify_matching(bs: BarrierSet, tau_lo: float = -56.0, tau_step: float = 0.5):
    """Scan tau for the eight crossing-bracket inequalities and locate
    tau_delta, the largest tau from which they all hold downward."""
    taus = np.arange(-8.0, tau_lo - 0.5 * tau_step, -tau_step)
    oks = np.zeros(taus.size, dtype=bool)
    for i, tau in enumerate(taus):
        if not _matching_prereqs(bs, tau):
            continue
        gaps = _matching_gaps(bs, tau)
        oks[i] = all(
            (gaps[name] > 0.0) == want and gaps[name] != 0.0
            for name, _k, _s, _f, want in _STATIONS
        )
    suffix = np.logical_and.accumulate(oks[::-1])[::-1]
    idx = np.nonzero(suffix)[0]
    tau_delta = float(taus[idx[0]]) if idx.size else None
    ok = tau_delta is not None and bs.params.taustar <= tau_delta
    gaps_at = _matching_gaps(bs, tau_delta) if tau_delta is not None else {}
    return MatchingReport(
        ok=ok,
        tau_delta=tau_delta,
        taus=taus,
        station_ok=oks,
        labels=tuple(s[0] for s in _STATIONS),
        gaps_at_tau_delta=gaps_at,
    )


def verify_nesting(bs: BarrierSet, bs_half: BarrierSet, n: int = 200) -> NestingReport:
    """Check that halving delta nests the barriers strictly inside."""
    if abs(bs_half.params.delta - 0.5 * bs.params.delta) > 1e-15:
        raise InvalidParameter("second barrier set must use delta/2")
    gamma = bs.c.gamma
    tau_c = min(bs.params.taustar, bs_half.params.taustar)
    checks, margins = {}, {}

    # intermediate four-way ordering on the common region
    four_ok = True
    four_margin = np.inf
    for tau in np.linspace(tau_c - 8.0, tau_c, 17):
        y = np.geomspace(bs.params.Rstar * math.exp(gamma * tau), math.exp(-tau / 2.0), 300)
        fm = bs.f_perturbation(y, tau, -1)
        fmh = bs_half.f_perturbation(y, tau, -1)
        fph = bs_half.f_perturbation(y, tau, 1)
        fp = bs.f_perturbation(y, tau, 1)
        gapmin = min(
            float(np.min(fmh - fm)), float(np.min(fph - fmh)), float(np.min(fp - fph))
        )
        four_margin = min(four_margin, gapmin)
        four_ok &= gapmin > 0.0
    checks["intermediate_four_way"] = four_ok
    margins["intermediate_four_way"] = four_margin

    # inner ordering through the cancellation-safe excesses
    inner_ok = True
    inner_margin = np.inf
    z = np.concatenate([[0.0], np.geomspace(1e-2, bs.Zdelta, 300)])
    for tau in np.linspace(tau_c - 8.0, tau_c, 17):
        lift = bs.params.D * math.exp(2.0 * gamma * tau)
        wm = bs.cap_excess(bs.params.K2minus, z) + lift
        wmh = bs_half.cap_excess(bs_half.params.K2minus, z) + lift
        wph = bs_half.cap_excess(bs_half.params.K2plus, z)
        wp = bs.cap_excess(bs.params.K2plus, z)
        gapmin = min(
            float(np.min(wmh - wm)), float(np.min(wph - wmh)), float(np.min(wp - wph))
        )
        inner_margin = min(inner_margin, gapmin)
        inner_ok &= gapmin > 0.0
    checks["inner_ordering"] = inner_ok
    margins["inner_ordering"] = inner_margin

    # monotonicity driver: d/dkappa W_kappa(z) = Phi(z/kappa) > 0
    zz = np.geomspace(1e-3, 1e6, 2000)
    drv = bs.cap_star(1.0, zz)
    checks["monotonicity_driver"] = bool(np.all(drv > 0.0))
    margins["monotonicity_driver"] = float(drv.min())

    # global ordering on an (x, t) grid
    glob_ok = True
    glob_margin = np.inf
    t_c = math.exp(tau_c)
    for t in np.geomspace(1e-3 * t_c, t_c, n):
        tk3 = t ** (bs.c.k / 3.0)
        x = np.concatenate(
            [tk3 * np.geomspace(1e-2, bs.Zdelta, n // 2), np.geomspace(bs.params.Rstar * tk3, 4.0, n // 2)]
        )
        em = global_excess(bs, x, t, -1)
        emh = global_excess(bs_half, x, t, -1)
        eph = global_excess(bs_half, x, t, 1)
        ep = global_excess(bs, x, t, 1)
        # strict middle gap: where both envelopes reduce to the outer pieces
        # the analytic gap is exactly 2 M t min(1, x^(2k-4)), which can round
        # to zero against the O(x^(2k-2)) excess; accept float equality there
        gap = eph - emh
        outer_gap = 2.0 * bs_half.params.M * t * np.minimum(1.0, x ** (2 * bs.c.k - 4))
        sub_ulp = outer_gap <= 8.0 * np.finfo(float).eps * np.abs(eph)
        mid_ok = np.all((gap > 0.0) | ((gap >= 0.0) & sub_ulp))
        glob_ok &= bool(np.all(em <= emh) and mid_ok and np.all(eph <= ep))
        glob_margin = min(glob_margin, float(np.min(gap)))
    checks["global_ordering"] = glob_ok
    margins["global_ordering"] = glob_margin

    return NestingReport(ok=all(checks.values()), checks=checks, margins=margins)


def barrier_above_cone_alpha(bs: BarrierSet, n: int = 200) -> float:
    """Largest sampled alpha with U-(x,t) >= x for all x in [0, alpha]."""
    t_c = math.exp(bs.params.taustar)
    alpha = np.inf
    for t in np.geomspace(1e-3 * t_c, t_c, n):
        x = np.linspace(1e-6, 1.0, n)
        ex = global_excess(bs, x, t, -1)
        bad = np.nonzero(ex < 0.0)[0]
        alpha = min(alpha, float(x[bad[0] - 1]) if bad.size else float(x[-1]))
    return alpha


def build_barrier_set(
    model: ModelParams,
    c: DerivedConstants,
    ef: EigenfunctionK,
    g: AuxiliaryG,
    profile: AlencarProfile,
    u0: InitialProfile,
    bp: BarrierParams,
) -> BarrierSet:
    """Assemble a BarrierSet, validating the parameter couplings."""
    if not (0.0 < bp.delta < 0.5 * c.K1):
        raise InvalidParameter(f"delta must lie in (0, K1/2), got {bp.delta}")
    for K, s in ((bp.K2plus, 1), (bp.K2minus, -1)):
        target = c.K1 + 2.0 * s * bp.delta
        if abs(K**3 - target) > 1e-9 * target:
            raise InvalidParameter(f"K2{'plus' if s > 0 else 'minus'}^3 must equal K1 {s:+d}*2 delta")
    p = model.p
    spec = RegionSpec(
        M=bp.M,
        Rstar=bp.Rstar,
        Zdelta=(4.0 / 3.0) * bp.delta ** (-1.0 / (p - 2.0)),
        Ydelta=2.0 * math.sqrt(c.dblfact * bp.M / bp.delta),
        taustar=bp.taustar,
    )
    return BarrierSet(params=bp, model=model, c=c, ef=ef, g=g, profile=profile, u0=u0, spec=spec)


def make_barrier_params(
    model: ModelParams,
    c: DerivedConstants,
    delta: float,
    B: float,
    M: float,
    Rstar: float,
    taustar: float,
    D: float,
    zeta: float,
    epsilon: float = 0.1,
) -> BarrierParams:
    return BarrierParams(
        delta=delta,
        B=B,
        M=M,
        Rstar=Rstar,
        taustar=taustar,
        D=D,
        zeta=zeta,
        K2plus=(c.K1 + 2.0 * delta) ** (1.0 / 3.0),
        K2minus=(c.K1 - 2.0 * delta) ** (1.0 / 3.0),
        epsilon=epsilon,
    )


DEFAULT_SCHEDULES = {
    "M": (16.0, 64.0, 256.0, 1024.0),
    "B": (16.0, 32.0, 64.0),
    "delta": (2e-5, 1e-5, 5e-6),
    "D_factor": (1.1, 2.2, 4.4),
}


def search_constants(
    model: ModelParams,
    c: DerivedConstants | None = None,
    ef: EigenfunctionK | None = None,
    g: AuxiliaryG | None = None,
    profile: AlencarProfile | None = None,
    u0: InitialProfile | None = None,
    schedules: dict | None = None,
    grid=(17, 120),
    epsilon: float = 0.1,
) -> BarrierParams:
    """Deterministic staged search for a certified barrier parameter set.

    Stage 1 fixes the outer slope M; stage 2 scans (B, delta, D), deriving
    R* from the four-way-ordering threshold and tau* from the matching scan,
    and accepts the first candidate for which residual sweeps, matching
    brackets, and delta/2 nesting all pass (first-found-feasible)."""
    c = c or derive_constants(model)
    ef = ef or eigenfunction(model.k)
    g = g if g is not None else solve_g(model.k, y_min=1e-3, y_max=6e4, npoints=16000)
    profile = profile or shoot_alencar()
    u0 = u0 or build_initial_u0(model, c)
    sched = dict(DEFAULT_SCHEDULES)
    if schedules:
        sched.update(schedules)
    k, p, K1 = model.k, model.p, c.K1
    zeta = 0.7 * math.sqrt(3.0 / (k - 1.0))
    worst = ("no candidate evaluated", math.inf)

    def probe(bp):
        bs = build_barrier_set(model, c, ef, g, profile, u0, bp)
        mrep = verify_matching(bs)
        if mrep.tau_delta is None:
            return None, ("matching brackets never hold "
                          f"(delta={bp.delta:g}, B={bp.B:g})", math.inf)
        bp2 = make_barrier_params(
            model, c, bp.delta, bp.B, bp.M, bp.Rstar, mrep.tau_delta, bp.D, bp.zeta, epsilon
        )
        bs = build_barrier_set(model, c, ef, g, profile, u0, bp2)
        for region in ("Outer", "Intermediate", "Inner"):
            rep = verify_residuals(bs, region, grid)
            if not rep.ok:
                return None, (
                    f"{region} residual sweep failed (delta={bp.delta:g}, B={bp.B:g}, "
                    f"M={bp.M:g}, D={bp.D:g})",
                    rep.worst_violation,
                )
        return (bp2, bs), None

    # stage 1: outer slope
    M_found = None
    for M in sched["M"]:
        ok = True
        wv = 0.0
        for t in np.geomspace(1e-20, 0.99 * M**-2, grid[0]):
            x = np.geomspace(M * math.sqrt(t), 4.0, grid[1])
            for sign in (1, -1):
                r = _outer_residual_standalone(model, M, x, t, sign)
                s = sign * r
                if not np.all(s > 0.0):
                    ok = False
                    wv = max(wv, float(np.max(-s[s <= 0.0])))
        if ok:
            M_found = M
            break
        if wv < worst[1]:
            worst = (f"outer residual sign fails for M={M:g}", wv)
    if M_found is None:
        raise ConstantSearchFailure(worst[0], worst=worst[1])

    # stage 2: (B, delta, D) with derived R* and tau*
    for B in sched["B"]:
        rho0 = ((B / 3.0) * K1 * K1) ** (1.0 / (5.0 - p))
        Rstar = math.ceil(1.3 * max(1.0, B ** (1.0 / 3.0), rho0))
        for delta in sched["delta"]:
            Zdelta = (4.0 / 3.0) * delta ** (-1.0 / (p - 2.0))
            if not Zdelta > 2.0 * Rstar:
                continue
            for fac in sched["D_factor"]:
                D = fac * k * K1 / (3.0 - (k - 1.0) * zeta**2)
                bp = make_barrier_params(
                    model, c, delta, B, float(M_found), float(Rstar),
                    -math.log(max(B, 2.0)), D, zeta, epsilon,
                )
                found, fail = probe(bp)
                if found is None:
                    if fail[1] < worst[1]:
                        worst = fail
                    continue
                bp2, bs = found
                bp_half = make_barrier_params(
                    model, c, delta / 2.0, B, float(M_found), float(Rstar),
                    bp2.taustar, D, zeta, epsilon,
                )
                found_half, fail = probe(bp_half)
                if found_half is None:
                    if fail[1] < worst[1]:
                        worst = fail
                    continue
                bs_half = found_half[1]
                nrep = verify_nesting(bs, bs_half, n=120)
                if not nrep.ok:
                    bad = [kk for kk, v in nrep.checks.items() if not v]
                    cand = (f"nesting fails ({', '.join(bad)}) at delta={delta:g}", 0.0)
                    if cand[1] < worst[1]:
                        worst = cand
                    continue
                return bp2
    raise ConstantSearchFailure(
        f"search exhausted; worst violated inequality: {worst[0]}", worst=worst[1]
    )


def _outer_residual_standalone(model: ModelParams, M: float, x, t: float, sign: int):
    """Outer residual before any BarrierSet exists (stage-1 search)."""
    x = np.asarray(x, dtype=float)
    k, K0 = model.k, model.K0
    q = 2 * k - 2
    z0, z1, z2 = zeta_cutoff(x)
    mt = np.minimum(1.0, x ** (2 * k - 4))
    dm1 = np.where(x < 1.0, (2 * k - 4) * x ** (2 * k - 5), 0.0)
    dm2 = np.where(x < 1.0, (2 * k - 4) * (2 * k - 5) * x ** (2 * k - 6), 0.0)
    w = K0 * z0 * x**q + sign * M * t * mt
    w1 = K0 * (z1 * x**q + q * z0 * x ** (q - 1)) + sign * M * t * dm1
    w2 = (
        K0 * (z2 * x**q + 2 * q * z1 * x ** (q - 1) + q * (q - 1) * z0 * x ** (q - 2))
        + sign * M * t * dm2
    )
    ux = 1.0 + w1
    F = w2 / (1.0 + ux * ux) + 3.0 * (x * w1 + w + w * w1) / (x * (x + w))
    return sign * M * mt - F
