"""Time evolution of the singular profile equation with glued initial data
and the full monitor suite.

The PDE u_t = u_xx/(1+u_x^2) + (3/x)u_x - 3/u is solved on a static graded
mesh with a two-stage L-stable linearly implicit (Rosenbrock) step.  At the
times where the certified barriers exist the right side is a ~30 digit
cancellation at the cap (3/u ~ 1e22 against u_t ~ 1e-7), far beyond float64,
so the production path evolves the deviation v = u - r from the analytic
reference cap

    r(x,t) = x + t^(k/3) (W_Kf(z) - z),   z = x t^(-k/3),

whose second derivative is defined through the minimal-surface ODE identity,
making the minimal-surface operator vanish on r exactly in float.  The
v-equation is then written in grouped, cancellation-free form

    v_t = v_xx/S_u - r_xx (u_x+r_x) v_x/(S_u S_r) + 3 v_x/x + 3 v/(u r) - r_t

with S = 1 + (.)_x^2 and the forcing r_t = (k/3) t^(k/3-1) Phi_Kf(z)
evaluated through the cancellation-safe star function.  A direct-u path
(ref=None) serves the O(1)-scale verification problems: shrinking cylinder,
stationary cone, and the self-convergence study.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .alencar import rescale_W
from .barriers import BarrierSet, global_excess
from .errors import (
    GlueFailure,
    InvalidParameter,
    LinearSolveFailure,
    MeshResolutionError,
    SandwichViolation,
    SingularProfile,
)
from .initial import psi_glue
from .params import DerivedConstants

_ROS_GAMMA = 1.0 + 1.0 / math.sqrt(2.0)  # L-stable two-stage Rosenbrock


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True)
class Mesh:
    """Static graded mesh: geometric refinement toward 0 (ratio per cell)
    down to spacing h0, uniform spacing h_coarse in the far field."""

    x: np.ndarray
    h0: float
    ratio: float
    h_coarse: float

    @property
    def n_nodes(self):
        return self.x.size

    def __post_init__(self):
        dx = np.diff(self.x)
        if np.any(dx <= 0.0):
            raise InvalidParameter("mesh nodes must be strictly increasing")


def build_mesh(
    s: float,
    c: DerivedConstants,
    eta: float = 0.1,
    xmax: float = 4.0,
    ratio: float = 1.05,
    h_coarse: float = 0.02,
    x0: float = 0.0,
) -> Mesh:
    """Mesh resolving the inner scale of the start time s: first spacing
    eta*s^(k/3) (eta <= 1/10), geometric growth, uniform h_coarse to xmax."""
    if not (0.0 < eta <= 0.1):
        raise InvalidParameter(f"eta must lie in (0, 1/10], got {eta}")
    if not (s > 0.0 and xmax > 0.0 and ratio > 1.0):
        raise InvalidParameter("need s > 0, xmax > 0, ratio > 1")
    h0 = eta * s ** (c.k / 3.0)
    xs = [x0]
    h = h0
    while xs[-1] < xmax:
        xs.append(xs[-1] + h)
        h = min(h * ratio, h_coarse)
    xs[-1] = xmax
    return Mesh(x=np.array(xs), h0=h0, ratio=ratio, h_coarse=h_coarse)


def uniform_mesh(a: float, b: float, n: int) -> Mesh:
    """Uniform mesh for verification problems."""
    x = np.linspace(a, b, n)
    h = float(x[1] - x[0])
    return Mesh(x=x, h0=h, ratio=1.0, h_coarse=h)


def derivatives(mesh: Mesh, f: np.ndarray):
    """(f_x, f_xx) by 3-point nonuniform differences; node 0 uses even
    (symmetry) extension when the mesh starts at x=0, one-sided otherwise."""
    x = mesh.x
    n = x.size
    fx = np.empty(n)
    fxx = np.empty(n)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    den = hm * hp * (hm + hp)
    fx[1:-1] = (hm**2 * f[2:] - hp**2 * f[:-2] - (hm**2 - hp**2) * f[1:-1]) / den
    fxx[1:-1] = 2.0 * (hm * f[2:] + hp * f[:-2] - (hm + hp) * f[1:-1]) / den
    h1 = x[1] - x[0]
    if x[0] == 0.0:
        fx[0] = 0.0
        fxx[0] = 2.0 * (f[1] - f[0]) / h1**2
    else:
        fx[0] = (f[1] - f[0]) / h1
        fxx[0] = fxx[1]
    hn = x[-1] - x[-2]
    fx[-1] = (f[-1] - f[-2]) / hn
    fxx[-1] = fxx[-2]
    return fx, fxx


# ---------------------------------------------------------------------------
# reference cap


@dataclass
class CapReference:
    """Analytic reference surface r = x + t^(k/3)(W_Kf(z) - z).

    r_x comes from the profile; r_xx is defined through the ODE identity
    r_xx := (1+r_x^2)(3/r - 3 r_x/x), so the minimal-surface operator
    vanishes on (r, r_x, r_xx) exactly.  3/r - 3 r_x/x is computed in the
    grouped form 3(x(1-r_x) - e r_x)/(r x) with e = r - x to avoid the
    cancellation of the leading cone."""

    bs: BarrierSet
    K_label: float

    @property
    def Kfull(self):
        return self.bs.cap_scale(self.K_label)

    def _one_minus_W1(self, z):
        prof = self.bs.profile
        Kf = self.Kfull
        zz = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.empty_like(zz)
        lo = zz / Kf <= prof.z_max
        if np.any(lo):
            out[lo] = 1.0 - rescale_W(prof, Kf, zz[lo], 1)
        hi = ~lo
        if np.any(hi):
            zh = zz[hi]
            out[hi] = 2.0 * prof.Gamma2 * Kf**3 / zh**3 + 3.0 * prof.Gamma3 * Kf**4 / zh**4
        return out

    def fields(self, x: np.ndarray, t: float):
        """(r, r_x, r_xx, r_t) at the nodes."""
        x = np.asarray(x, dtype=float)
        k3 = self.bs.c.k / 3.0
        scale = t**k3
        z = x / scale
        ex = scale * self.bs.cap_excess(self.K_label, z)
        r = x + ex
        rx = 1.0 - self._one_minus_W1(z)
        rxx = np.empty_like(x)
        pos = x > 0.0
        omw = self._one_minus_W1(z[pos])
        rxx[pos] = (
            (1.0 + rx[pos] ** 2)
            * 3.0
            * (x[pos] * omw - ex[pos] * rx[pos])
            / (r[pos] * x[pos])
        )
        if np.any(~pos):
            # x=0: the identity degenerates to r_xx = (3/4)/r(0)
            rxx[~pos] = 0.75 / r[~pos]
        rt = k3 * t ** (k3 - 1.0) * self.bs.cap_star(self.K_label, z)
        return r, rx, rxx, rt


# ---------------------------------------------------------------------------
# state


@dataclass
class MeshState:
    """Profile state at one time.

    For direct states (ref=None) `v` is the profile u itself; for referenced
    states `v` is the deviation u - r.  `u` always returns the full profile.
    `h` caches u_t of the last accepted step for the Lambda monitor."""

    mesh: Mesh
    t: float
    v: np.ndarray
    ref: CapReference | None = None
    h: np.ndarray | None = None

    @property
    def u(self):
        if self.ref is None:
            return self.v
        r, _, _, _ = self.ref.fields(self.mesh.x, self.t)
        return r + self.v

    def validate(self):
        u = self.u
        if np.any(~np.isfinite(u)) or np.any(u <= 0.0):
            raise SingularProfile(f"profile not positive at t={self.t:.6e}")
        return self


@dataclass(frozen=True)
class BoundaryConditions:
    """left: "symmetry" (even extension at x=0) or "dirichlet";
    right: "dirichlet" (value frozen) or "symmetry" (zero slope)."""

    left: str = "symmetry"
    right: str = "dirichlet"

    def __post_init__(self):
        if self.left not in ("symmetry", "dirichlet"):
            raise InvalidParameter(f"unknown left bc {self.left!r}")
        if self.right not in ("dirichlet", "symmetry"):
            raise InvalidParameter(f"unknown right bc {self.right!r}")


# ---------------------------------------------------------------------------
# right side and Jacobian


def _coefficients(state: MeshState):
    """(F, a, b, cdiag) with F the right side and J ~ a D2 + b D1 + cdiag."""
    mesh, t, v = state.mesh, state.t, state.v
    x = mesh.x
    vx, vxx = derivatives(mesh, v)
    if state.ref is None:
        u = v
        Su = 1.0 + vx * vx
        F = np.empty_like(v)
        pos = x > 0.0
        F[pos] = vxx[pos] / Su[pos] + 3.0 * vx[pos] / x[pos] - 3.0 / u[pos]
        if x[0] == 0.0:
            F[0] = 4.0 * vxx[0] / (1.0 + vx[0] ** 2) - 3.0 / u[0]
        a = 1.0 / Su
        b = 3.0 / np.where(pos, x, 1.0)
        b[~pos] = 0.0
        cdiag = 3.0 / (u * u)
        return F, a, b, cdiag
    r, rx, rxx, rt = state.ref.fields(x, t)
    u = r + v
    ux = rx + vx
    Su = 1.0 + ux * ux
    Sr = 1.0 + rx * rx
    cross = -rxx * (ux + rx) / (Su * Sr)
    F = np.empty_like(v)
    pos = x > 0.0
    F[pos] = (
        vxx[pos] / Su[pos]
        + cross[pos] * vx[pos]
        + 3.0 * vx[pos] / x[pos]
        + 3.0 * v[pos] / (u[pos] * r[pos])
        - rt[pos]
    )
    if x[0] == 0.0:
        # symmetry: v_x(0)=r_x(0)=0 and (3/x)v_x -> 3 v_xx
        F[0] = 4.0 * vxx[0] + 3.0 * v[0] / (u[0] * r[0]) - rt[0]
    a = 1.0 / Su
    b = cross + 3.0 / np.where(pos, x, 1.0)
    b[~pos] = 0.0
    cdiag = 3.0 / (u * u)
    return F, a, b, cdiag


def _apply_bc_to_F(F: np.ndarray, bc: BoundaryConditions, mesh: Mesh, state: MeshState):
    if bc.left == "dirichlet":
        F[0] = 0.0
    if bc.right == "dirichlet":
        F[-1] = 0.0
    else:
        # zero-slope right: even extension, no transport or it vanishes
        v = state.v
        hn = mesh.x[-1] - mesh.x[-2]
        vxx = 2.0 * (v[-2] - v[-1]) / hn**2
        if state.ref is None:
            F[-1] = vxx / 1.0 - 3.0 / v[-1]
        else:
            F[-1] = vxx
    return F


def _banded_matrix(state: MeshState, bc: BoundaryConditions, a, b, cdiag, w: float):
    """ab array for solve_banded of (I - w J)."""
    x = state.mesh.x
    n = x.size
    ab = np.zeros((3, n))
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    den = hm * hp * (hm + hp)
    d2m = 2.0 * hp / den
    d2c = -2.0 * (hm + hp) / den
    d2p = 2.0 * hm / den
    d1m = -(hp**2) / den
    d1c = -(hm**2 - hp**2) / den
    d1p = hm**2 / den
    ai, bi, ci = a[1:-1], b[1:-1], cdiag[1:-1]
    lower = ai * d2m + bi * d1m
    diag = ai * d2c + bi * d1c + ci
    upper = ai * d2p + bi * d1p
    ab[0, 2:] = -w * upper
    ab[1, 1:-1] = 1.0 - w * diag
    ab[2, :-2] = -w * lower
    # node 0
    h1 = x[1] - x[0]
    if bc.left == "dirichlet":
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
    else:
        fac = 4.0 * a[0] if state.ref is None else 4.0
        d0 = fac * (-2.0 / h1**2) + cdiag[0]
        ab[1, 0] = 1.0 - w * d0
        ab[0, 1] = -w * fac * (2.0 / h1**2)
    # last node
    hn = x[-1] - x[-2]
    if bc.right == "dirichlet":
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
    else:
        dN = a[-1] * (-2.0 / hn**2) + cdiag[-1]
        ab[1, -1] = 1.0 - w * dN
        ab[2, -2] = -w * a[-1] * (2.0 / hn**2)
    return ab


def _step_core(state: MeshState, dt: float, bc: BoundaryConditions):
    """One Rosenbrock step; returns (v_new, k_mean, err_vec)."""
    F1, a, b, cdiag = _coefficients(state)
    _apply_bc_to_F(F1, bc, state.mesh, state)
    w = _ROS_GAMMA * dt
    ab = _banded_matrix(state, bc, a, b, cdiag, w)
    try:
        k1 = solve_banded((1, 1), ab, F1)
        mid = MeshState(state.mesh, state.t + dt, state.v + dt * k1, state.ref)
        F2, _, _, _ = _coefficients(mid)
        _apply_bc_to_F(F2, bc, state.mesh, mid)
        # 2 gamma dt J k1 = 2(k1 - F1) from the first stage relation
        k2 = solve_banded((1, 1), ab, F2 - 2.0 * (k1 - F1))
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    if np.any(~np.isfinite(k1)) or np.any(~np.isfinite(k2)):
        raise LinearSolveFailure("nonfinite stage values in the banded solve")
    k_mean = 0.5 * (k1 + k2)
    v_new = state.v + dt * k_mean
    err_vec = 0.5 * dt * (k2 - k1)
    return v_new, k_mean, err_vec


def step(state: MeshState, dt: float, bc: BoundaryConditions | None = None) -> MeshState:
    """Advance one accepted step of size dt."""
    if not (dt > 0.0):
        raise InvalidParameter("dt must be positive")
    if bc is None:
        bc = BoundaryConditions()
    v_new, k_mean, _ = _step_core(state, dt, bc)
    new = MeshState(state.mesh, state.t + dt, v_new, state.ref)
    new.validate()
    if state.ref is None:
        new.h = k_mean.copy()
    else:
        _, _, _, rt = state.ref.fields(state.mesh.x, new.t)
        new.h = k_mean + rt
    return new


# ---------------------------------------------------------------------------
# geometry monitors


def _profile_derivatives(state: MeshState):
    """(u, u_x, u_xx) with the reference part analytic."""
    vx, vxx = derivatives(state.mesh, state.v)
    if state.ref is None:
        return state.v, vx, vxx
    r, rx, rxx, _ = state.ref.fields(state.mesh.x, state.t)
    return r + state.v, rx + vx, rxx + vxx


def mean_curvature(state: MeshState) -> np.ndarray:
    """H = [u_xx/(1+u_x^2) + (3/x)u_x - 3/u]/sqrt(1+u_x^2); for referenced
    states the minimal-surface part of r drops out exactly."""
    F, _, _, _ = _coefficients(state)
    if state.ref is not None:
        _, _, _, rt = state.ref.fields(state.mesh.x, state.t)
        F = F + rt
    _, ux, _ = _profile_derivatives(state)
    return F / np.sqrt(1.0 + ux * ux)


def principal_curvatures(state: MeshState):
    """(kappa_prof, kappa_sphere1, kappa_sphere2); the two sphere families
    carry multiplicity 3 each."""
    x = state.mesh.x
    u, ux, uxx = _profile_derivatives(state)
    S = 1.0 + ux * ux
    kp = uxx / S**1.5
    k1 = np.empty_like(u)
    pos = x > 0.0
    k1[pos] = ux[pos] / (x[pos] * np.sqrt(S[pos]))
    if np.any(~pos):
        k1[~pos] = uxx[~pos] / np.sqrt(S[~pos])  # u_x/x -> u_xx at the axis
    k2 = -1.0 / (u * np.sqrt(S))
    return kp, k1, k2


def second_fundamental_norm(state: MeshState) -> np.ndarray:
    """|A| = sqrt(kp^2 + 3 k1^2 + 3 k2^2)."""
    kp, k1, k2 = principal_curvatures(state)
    return np.sqrt(kp * kp + 3.0 * k1 * k1 + 3.0 * k2 * k2)


def shape_trace_error(state: MeshState) -> float:
    """max relative deviation of kp + 3k1 + 3k2 from H (algebraic identity,
    measured against the curvature magnitude scale)."""
    kp, k1, k2 = principal_curvatures(state)
    H = mean_curvature(state)
    scale = np.abs(kp) + 3.0 * np.abs(k1) + 3.0 * np.abs(k2) + np.abs(H) + 1e-300
    return float(np.max(np.abs(kp + 3.0 * k1 + 3.0 * k2 - H) / scale))


def lambda_monitor(state: MeshState, m: float) -> float:
    """Lambda = max over nodes with x <= M sqrt(t) of (1+t^(-k/3)x)^m |h|."""
    if state.h is None:
        raise InvalidParameter("state has no cached h field; take a step first")
    if state.ref is None:
        raise InvalidParameter("lambda monitor requires a referenced run state")
    bs = state.ref.bs
    x = state.mesh.x
    mask = x <= bs.params.M * math.sqrt(state.t)
    z = x[mask] * state.t ** (-bs.c.k / 3.0)
    return float(np.max((1.0 + z) ** m * np.abs(state.h[mask])))


def inner_convergence_error(state: MeshState, bs: BarrierSet, Z: float) -> float:
    """sup over z in [0, Z] of |t^(-k/3) u(t^(k/3) z, t) - W_K2(z)|."""
    x = state.mesh.x
    scale = state.t ** (bs.c.k / 3.0)
    mask = x <= Z * scale
    if mask.sum() < 8 or state.mesh.h0 > Z * scale / 4.0:
        raise MeshResolutionError(
            f"mesh does not resolve the inner scale at t={state.t:.3e}"
        )
    z = x[mask] / scale
    if state.ref is not None and state.ref.K_label == bs.c.K2:
        return float(np.max(np.abs(state.v[mask]))) / scale
    w = state.u[mask] / scale
    return float(np.max(np.abs(w - bs.cap_value(bs.c.K2, z))))


def truncation_estimate(state: MeshState) -> float:
    """Spatial truncation proxy max |h_loc^2 f_xxxx|/12 for f = v."""
    x = state.mesh.x
    _, vxx = derivatives(state.mesh, state.v)
    _, v4 = derivatives(state.mesh, vxx)
    h = np.empty_like(x)
    h[1:-1] = np.maximum(x[1:-1] - x[:-2], x[2:] - x[1:-1])
    h[0] = x[1] - x[0]
    h[-1] = x[-1] - x[-2]
    return float(np.max(h * h * np.abs(v4)) / 12.0)


# ---------------------------------------------------------------------------
# glued initial data


@dataclass(frozen=True)
class GlueConfig:
    """Blend scale epsilon and start time s_n; the transition profile is the
    fixed C^2 quintic (1 on [0,1], 0 on [2,inf))."""

    epsilon: float
    s_n: float

    def __post_init__(self):
        if not (self.epsilon > 0.0 and self.s_n > 0.0):
            raise InvalidParameter("epsilon and s_n must be positive")


def glued_initial_data(bs: BarrierSet, glue: GlueConfig, mesh: Mesh) -> MeshState:
    """u0n = psi * cap + (1 - psi) * U^-, as a deviation from the cap.

    psi = Psi(x/(eps sqrt(s))): exactly the rescaled minimal cap for
    x <= eps sqrt(s), exactly the lower barrier beyond 2 eps sqrt(s)."""
    s = glue.s_n
    gamma = bs.c.gamma
    if not (glue.epsilon * s**-gamma > bs.Zdelta):
        raise GlueFailure(
            f"glue scale inside the cap region: eps*s^-gamma = "
            f"{glue.epsilon * s**-gamma:.3e} <= Zdelta = {bs.Zdelta:.3e}"
        )
    if s > math.exp(bs.params.taustar):
        raise GlueFailure("start time beyond the certified barrier window")
    x = mesh.x
    ref = CapReference(bs=bs, K_label=bs.c.K2)
    cap_ex = s ** (bs.c.k / 3.0) * bs.cap_excess(bs.c.K2, x / s ** (bs.c.k / 3.0))
    low_ex = global_excess(bs, x, s, -1)
    psi, _, _ = psi_glue(x / (glue.epsilon * math.sqrt(s)))
    v0 = (1.0 - psi) * (low_ex - cap_ex)
    state = MeshState(mesh=mesh, t=s, v=v0, ref=ref)
    state.validate()
    du = np.diff(state.u)
    if np.any(du < -1e-12):
        raise GlueFailure(f"glued data not monotone: min step {du.min():.3e}")
    up_ex = global_excess(bs, x, s, +1)
    if np.any(v0 + cap_ex > up_ex) or np.any(v0 + cap_ex < low_ex - 1e-30):
        raise GlueFailure("glued data escapes the barrier sandwich at t=s_n")
    return state


# ---------------------------------------------------------------------------
# run loop


@dataclass(frozen=True)
class MonitorConfig:
    """Cadence (accepted steps between monitor records), inner window Z,
    weight exponent m, sandwich tolerance factor, and dt controller knobs."""

    cadence: int = 4
    Z: float = 5.0
    m: float = 2.25
    sandwich_factor: float = 5.0
    rtol: float = 1e-4
    dt_init_frac: float = 1e-3
    dt_max_frac: float = 0.05
    max_steps: int = 100000


@dataclass
class RunTrace:
    """Time series of the monitors plus checkpoint states."""

    t: np.ndarray
    supH: np.ndarray
    supA: np.ndarray
    supUx: np.ndarray
    minUx: np.ndarray
    marginLo: np.ndarray
    marginHi: np.ndarray
    lam: np.ndarray
    innerErr: np.ndarray
    dt: np.ndarray
    wC2: np.ndarray
    houterC: np.ndarray
    trunc: np.ndarray
    states: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def validate(self):
        if np.any(np.diff(self.t) <= 0.0):
            raise InvalidParameter("trace times must be increasing")
        for name in ("supH", "supA", "supUx", "minUx", "marginLo", "marginHi",
                     "lam", "innerErr", "dt"):
            if np.any(~np.isfinite(getattr(self, name))):
                raise InvalidParameter(f"nonfinite values in trace field {name}")
        return self


def _robust_h(state: MeshState):
    """Pointwise |u_t| from two independent estimates: the discrete time
    derivative (clean away from stiff regions) and the spatial operator
    (clean away from the quasi-static tip, where the solve leaves
    off-manifold residue that the operator amplifies).  Each estimate is
    corrupted only upward and in complementary regions, so the pointwise
    minimum magnitude is a robust |u_t|."""
    F, _, _, _ = _coefficients(state)
    if state.ref is not None:
        _, _, _, rt = state.ref.fields(state.mesh.x, state.t)
        F = F + rt
    h_sp = np.abs(F)
    if state.h is None:
        return h_sp
    return np.minimum(h_sp, np.abs(state.h))


def _record(state: MeshState, bs: BarrierSet, mon: MonitorConfig, dt: float, rows: dict):
    x = state.mesh.x
    _, ux, uxx = _profile_derivatives(state)
    A = second_fundamental_norm(state)
    habs = _robust_h(state)
    up = global_excess(bs, x, state.t, +1)
    lo = global_excess(bs, x, state.t, -1)
    scale = state.t ** (bs.c.k / 3.0)
    z = x / scale
    if state.ref is not None:
        # excess u - x assembled from its small parts; recomposing u = r + v
        # and subtracting x would drown the margins in ulp(x) noise
        ex = scale * bs.cap_excess(state.ref.K_label, z) + state.v
    else:
        ex = state.v - x
    margin_hi = np.min(up - ex)
    margin_lo = np.min(ex - lo)
    # inner-region discretization drift: |u - cap| where the barriers pin the
    # exact solution to within ~1e-8 relative; used as the sandwich tolerance
    pin = z <= 0.5 * bs.Zdelta
    drift = float(np.max(np.abs(state.v[pin]))) if state.ref is not None and pin.any() else (
        truncation_estimate(state) * state.t
    )
    inner_mask = x <= bs.params.M * math.sqrt(state.t)
    # weighted C2 bound on the trusted window (beyond Zdelta the FD noise of
    # the tiny deviation field dominates the exponentially small true value)
    wmask = inner_mask & (z <= bs.Zdelta)
    wc2 = np.max(np.abs(uxx[wmask]) * scale * (1.0 + z[wmask]) ** 4)
    outer_mask = ~inner_mask
    k = bs.c.k
    if outer_mask.any():
        houter = np.max(habs[outer_mask] / np.minimum(1.0, x[outer_mask] ** (2 * k - 4)))
    else:
        houter = 0.0
    rows["t"].append(state.t)
    rows["supH"].append(float(np.max(habs / np.sqrt(1.0 + ux * ux))))
    rows["supA"].append(float(np.max(A)))
    rows["supUx"].append(float(np.max(ux)))
    rows["minUx"].append(float(np.min(ux)))
    rows["marginLo"].append(float(margin_lo))
    rows["marginHi"].append(float(margin_hi))
    rows["lam"].append(float(np.max((1.0 + z[inner_mask]) ** mon.m * habs[inner_mask])))
    rows["innerErr"].append(inner_convergence_error(state, bs, mon.Z))
    rows["dt"].append(dt)
    rows["wC2"].append(float(wc2))
    rows["houterC"].append(float(houter))
    rows["trunc"].append(drift)


def evolve(
    initial: MeshState,
    t_end: float,
    bs: BarrierSet,
    mon: MonitorConfig | None = None,
) -> RunTrace:
    """Adaptive time loop with the full monitor suite; aborts with
    SandwichViolation if a margin drops below -sandwich_factor times the
    measured discretization drift (the inner deviation from the reference
    cap, which shrinks under combined mesh-ratio and dt refinement)."""
    if mon is None:
        mon = MonitorConfig()
    if not (t_end > initial.t):
        raise InvalidParameter("t_end must exceed the initial time")
    if initial.ref is None:
        raise InvalidParameter("evolve requires a referenced (glued) state")
    bc = BoundaryConditions(left="symmetry", right="dirichlet")
    rows = {k: [] for k in (
        "t", "supH", "supA", "supUx", "minUx", "marginLo", "marginHi",
        "lam", "innerErr", "dt", "wC2", "houterC", "trunc")}
    state = initial
    s0 = initial.t
    dt = mon.dt_init_frac * s0
    _record(state, bs, mon, dt, rows)
    states = [initial]
    accepted = 0
    trunc_peak = rows["trunc"][-1]
    for _ in range(mon.max_steps):
        if state.t >= t_end:
            break
        dt = min(dt, mon.dt_max_frac * state.t, t_end - state.t)
        v_new, k_mean, err_vec = _step_core(state, dt, bc)
        scale = mon.rtol * (np.abs(state.v) + 1e-15 * np.max(np.abs(state.v)) + 1e-300)
        est = float(np.max(np.abs(err_vec) / scale))
        if est <= 1.0:
            new = MeshState(state.mesh, state.t + dt, v_new, state.ref)
            new.validate()
            _, _, _, rt = state.ref.fields(state.mesh.x, new.t)
            new.h = k_mean + rt
            state = new
            accepted += 1
            if accepted % mon.cadence == 0 or state.t >= t_end:
                _record(state, bs, mon, dt, rows)
                trunc_peak = max(trunc_peak, rows["trunc"][-1])
                tol = mon.sandwich_factor * trunc_peak + 1e-300
                worst = min(rows["marginLo"][-1], rows["marginHi"][-1])
                if worst < -tol:
                    raise SandwichViolation(
                        f"margin {worst:.3e} below -{tol:.3e} at t={state.t:.6e}"
                    )
        dt = dt * float(np.clip(0.9 / math.sqrt(max(est, 1e-12)), 0.3, 2.0))
    else:
        raise InvalidParameter("max_steps exhausted before t_end")
    states.append(state)
    trace = RunTrace(
        **{k: np.array(vals) for k, vals in rows.items()},
        states=states,
        meta={
            "s0": s0,
            "t_end": t_end,
            "accepted_steps": accepted,
            "n_nodes": initial.mesh.n_nodes,
            "delta": bs.params.delta,
        },
    )
    return trace.validate()
