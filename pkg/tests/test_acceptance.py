"""Acceptance gate: nine quantitative desk-scale checks with stated
tolerances and runtime budgets.

1. eigenfunction identity to 1e-8 for k = 4, 5, 6
2. exact rational values of the k=4 eigenfunction
3. auxiliary correction ODE: residual, both asymptotic limits, order 2
4. minimal cap profile: normalization, convexity, star function, tail
   coefficient, phase-plane eigenvalues
5. linearized operators: inner decay bound and cone kernel
6. barrier certification including the constant search, under 2 minutes
7. solver verification problems (cylinder, cone, spatial order)
8. continuation run family: sandwich, slope bounds, stability across runs
9. determinism: byte-identical CSV/JSON artifacts across executions
"""
from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from mcflow.alencar import (
    PhasePoint,
    Phi_with_derivs,
    linearized_at_alencar,
    linearized_at_cone,
    phase_system,
    rescale_W,
)
from mcflow.barriers import (
    build_barrier_set,
    make_barrier_params,
    search_constants,
    verify_matching,
    verify_nesting,
    verify_residuals,
)
from mcflow.config import default_config
from mcflow.evolve import BoundaryConditions, MeshState, step, uniform_mesh
from mcflow.pipeline import read_csv, run_pipeline
from mcflow.special import apply_L_values, eigenfunction, phi_k_all, solve_g


def test_criterion_1_eigenfunction_identity():
    t0 = time.perf_counter()
    y = np.linspace(0.1, 10.0, 1999)
    for k in (4, 5, 6):
        ef = eigenfunction(k)
        v, d1, d2 = phi_k_all(ef, y)
        res = np.abs(apply_L_values(v, d1, d2, y) - (k - 1.5) * v) / v
        assert np.max(res) < 1e-8, f"k={k}: worst relative residual {np.max(res):.3e}"
    assert time.perf_counter() - t0 < 1.0


def test_criterion_2_phi4_exact_values():
    t0 = time.perf_counter()
    ef = eigenfunction(4)
    v, _, _ = phi_k_all(ef, np.array([1.0]))
    assert abs(float(v[0]) - 2620.0 / 945.0) < 1e-14
    # coefficients of y^(2n-2), n = 0..k: C(k,n)/(2n+1)!! as exact rationals
    assert ef.coeffs[0] == Fraction(1)
    assert ef.coeffs[-1] == Fraction(1, 945)
    assert ef.coeffs == (Fraction(1), Fraction(4, 3), Fraction(2, 5),
                         Fraction(4, 105), Fraction(1, 945))
    assert time.perf_counter() - t0 < 1.0


def test_criterion_3_g_bvp(gfun, model):
    t0 = time.perf_counter()
    assert gfun.residual_norm < 1e-6
    c1 = float(gfun.values[0] * gfun.grid[0] ** 5)
    assert abs(c1 + 1.0 / 3.0) < 0.02 / 3.0, f"y^5 g at 1e-2: {c1}"
    q = 4 * model.k - 7
    tail = float(gfun.values[-1] / gfun.grid[-1] ** q)
    assert abs(tail - 1.0) < 0.02
    probe = np.geomspace(0.2, 5.0, 97)
    sols = [solve_g(model.k, npoints=n)(probe) for n in (1000, 2000, 4000)]
    order = math.log2(np.max(np.abs(sols[0] - sols[1]))
                      / np.max(np.abs(sols[1] - sols[2])))
    assert abs(order - 2.0) < 0.2, f"observed order {order:.3f}"
    assert time.perf_counter() - t0 < 5.0


def test_criterion_4_alencar(profile):
    t0 = time.perf_counter()
    p = profile
    assert abs(p.W[0] - 1.0) < 1e-12
    assert abs(p.W1[0]) < 1e-12
    upto = p.z <= 50.0
    assert np.all(p.W2[upto] > 0.0)
    phi = p.W - p.z * p.W1
    assert np.all((phi[upto] > 0.0) & (phi[upto] <= 1.0))
    # normalized far-field coefficient refit on the rescaled spline window
    zz = np.linspace(25.0 * p.Kstar, 0.98 * p.z_max * p.Kstar, 400)
    rhs = rescale_W(p, p.Kstar, zz) - zz
    basis = np.column_stack([zz**-2.0, zz**-3.0, zz**-5.0])
    coef, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    assert abs(float(coef[0]) - 1.0) < 1e-3
    _, j1 = phase_system(PhasePoint(P=1.0, Q=1.0))
    _, j0 = phase_system(PhasePoint(P=0.0, Q=0.0))
    ev1 = sorted(np.linalg.eigvals(j1).real)
    ev0 = sorted(np.linalg.eigvals(j0).real)
    assert abs(ev1[0] + 4.0) < 1e-8 and abs(ev1[1] + 3.0) < 1e-8
    assert abs(ev0[0] + 3.0) < 1e-8 and abs(ev0[1] - 1.0) < 1e-8
    assert time.perf_counter() - t0 < 2.0


def test_criterion_5_linearized_operators(profile):
    t0 = time.perf_counter()
    xi = np.linspace(0.1, 10.0, 997)
    res = linearized_at_alencar(profile, lambda q: Phi_with_derivs(profile, q), xi)
    assert np.all(np.abs(res) < 1e-6 * (1.0 + xi) ** -2.0)
    r2 = linearized_at_cone(lambda q: (q**-2.0, -2.0 * q**-3.0, 6.0 * q**-4.0), xi)
    r3 = linearized_at_cone(lambda q: (q**-3.0, -3.0 * q**-4.0, 12.0 * q**-5.0), xi)
    # kernel to 1e-12 relative to the xi^(-q-2) term scale
    assert np.max(np.abs(r2) * xi**4.0) < 1e-12
    assert np.max(np.abs(r3) * xi**5.0) < 1e-12
    assert time.perf_counter() - t0 < 1.0


def test_criterion_6_barrier_certification(model, consts, ef, gfun, profile, u0):
    t0 = time.perf_counter()
    bp = search_constants(model, consts, ef, gfun, profile, u0)
    bset = build_barrier_set(model, consts, ef, gfun, profile, u0, bp)
    for region in ("Outer", "Intermediate", "Inner"):
        rep = verify_residuals(bset, region, grid=(64, 160))
        assert rep.residual.size >= 10_000
        assert rep.ok
        assert rep.fraction_correct_sign == 1.0, (
            f"{region}: worst violation {rep.worst_violation:.3e}")
    mrep = verify_matching(bset)
    assert mrep.ok and mrep.tau_delta is not None
    assert bp.taustar <= mrep.tau_delta
    # delta/2 member with its own measured matching time
    probe = make_barrier_params(model, consts, bp.delta / 2.0, bp.B, bp.M,
                                bp.Rstar, -56.0, bp.D, bp.zeta, bp.epsilon)
    bhalf = build_barrier_set(model, consts, ef, gfun, profile, u0, probe)
    m2 = verify_matching(bhalf)
    assert m2.tau_delta is not None
    bp2 = make_barrier_params(model, consts, bp.delta / 2.0, bp.B, bp.M,
                              bp.Rstar, m2.tau_delta, bp.D, bp.zeta, bp.epsilon)
    bhalf = build_barrier_set(model, consts, ef, gfun, profile, u0, bp2)
    nrep = verify_nesting(bset, bhalf, n=200)
    assert nrep.ok, f"nesting checks: {nrep.checks}"
    assert time.perf_counter() - t0 < 120.0


def test_criterion_7_solver_verification():
    t0 = time.perf_counter()
    # shrinking cylinder u(t) = sqrt(1 - 6t)
    mesh = uniform_mesh(0.0, 1.0, 41)
    st = MeshState(mesh, 0.0, np.ones(mesh.n_nodes))
    bc = BoundaryConditions(left="symmetry", right="symmetry")
    while st.t < 0.1 - 1e-12:
        st = step(st, 1e-5, bc)
    assert np.max(np.abs(st.v - math.sqrt(1.0 - 6.0 * st.t))) < 1e-6
    # exact cone is stationary
    mesh2 = uniform_mesh(0.5, 2.0, 301)
    st2 = MeshState(mesh2, 0.0, mesh2.x.copy())
    bc2 = BoundaryConditions(left="dirichlet", right="dirichlet")
    for _ in range(50):
        prev = st2.v.copy()
        st2 = step(st2, 1e-4, bc2)
        assert np.max(np.abs(st2.v - prev)) < 1e-10
    # spatial self-convergence on a smooth perturbed cone
    def run(npts):
        m = uniform_mesh(1.0, 3.0, npts)
        s = MeshState(m, 0.0, m.x + 0.2 * np.exp(-4.0 * (m.x - 2.0) ** 2))
        for _ in range(1000):
            s = step(s, 2e-5, bc2)
        return s.v

    u1, u2, u3 = run(101), run(201), run(401)
    order = math.log2(np.max(np.abs(u1 - u2[::2])) / np.max(np.abs(u2 - u3[::2])))
    assert abs(order - 2.0) < 0.3, f"observed order {order:.3f}"
    assert time.perf_counter() - t0 < 60.0


def test_criterion_8_continuation_family(pipeline_out, u0, consts):
    report, outdir = pipeline_out
    cfg = default_config()
    k3 = consts.k / 3.0
    suph, lam = [], []
    for n in range(cfg.time.n_runs):
        run_dir = outdir / "runs" / f"run{n}"
        mon = read_csv(run_dir / "monitors.csv")
        dia = read_csv(run_dir / "diagnostics.csv")
        # sandwich: margins never below -5x the estimated truncation error
        tol = cfg.monitors.sandwich_factor * float(np.max(dia["trunc"]))
        assert float(min(mon["marginLo"].min(), mon["marginHi"].min())) >= -tol
        # slope bounds 0 <= u_x <= C1 throughout (tolerance 1e-9 / 1e-2)
        assert mon["minUx"].min() >= -1e-9
        assert mon["supUx"].max() <= u0.C1 + 0.01
        # curvature growth: sup|A| ~ t^(-k/3) within 10%
        slope = float(np.polyfit(np.log(mon["t"][1:]), np.log(mon["supA"][1:]), 1)[0])
        assert abs(slope + k3) <= 0.1 * k3, f"run {n}: slope {slope:.4f}"
        suph.append(float(mon["supH"].max()))
        lam.append(float(mon["lambda"].max()))
        # inner convergence error at fixed Z: decreasing toward small t
        # modulo a wiggle at 25% of the series peak, and < 0.05 at the
        # smallest resolved t (row 0)
        inner = mon["innerErr"]
        assert np.all(np.diff(inner) >= -0.25 * float(inner.max()))
        assert inner[0] < 0.05 and inner.max() < 0.05
    for a, b in zip(suph, suph[1:]):
        assert 0.5 <= b / a <= 2.0, "sup|H| not stable under refinement"
    for a, b in zip(lam, lam[1:]):
        assert 0.5 <= b / a <= 2.0, "weighted u_t monitor not in a factor-2 band"
    timings = (outdir / "timings.txt").read_text()
    evolve_secs = float([ln.split()[1] for ln in timings.splitlines()
                         if ln.startswith("evolve/total")][0])
    assert evolve_secs < 600.0


def test_criterion_9_determinism(pipeline_out, tmp_path):
    _, outdir1 = pipeline_out
    outdir2 = tmp_path / "repeat"
    run_pipeline(default_config(), outdir2)

    def artifacts(root):
        return {p.relative_to(root): p.read_bytes()
                for p in sorted(root.rglob("*"))
                if p.suffix in (".csv", ".json")}

    a, b = artifacts(outdir1), artifacts(outdir2)
    assert a.keys() == b.keys()
    diff = [str(k) for k in a if a[k] != b[k]]
    assert not diff, f"artifacts differ: {diff}"


def test_all_criteria_reported_pass(pipeline_out):
    report, _ = pipeline_out
    assert len(report["criteria"]) == 9
    assert not report["any_blocked"]
    failed = [c["name"] for c in report["criteria"] if not c["pass"]]
    assert not failed, f"failing criteria: {failed}"
