"""Shared session fixtures: model constants, solved special functions, the
certified barrier set, and one full pipeline run reused by several tests."""
from __future__ import annotations

import pytest

from mcflow.alencar import shoot_alencar
from mcflow.barriers import build_barrier_set, make_barrier_params
from mcflow.config import default_config
from mcflow.initial import build_initial_u0
from mcflow.params import ModelParams, derive_constants
from mcflow.pipeline import run_pipeline
from mcflow.special import eigenfunction, solve_g

# frozen certified constants (see BarriersSection defaults)
CERT = dict(delta=2e-05, B=16.0, M=64.0, Rstar=610.0, taustar=-39.0,
            D=2717.647058823529, zeta=0.7, epsilon=0.1)


@pytest.fixture(scope="session")
def model():
    return ModelParams(k=4, K0=1.0, p=2.5, m=2.25)


@pytest.fixture(scope="session")
def consts(model):
    return derive_constants(model)


@pytest.fixture(scope="session")
def ef(model):
    return eigenfunction(model.k)


@pytest.fixture(scope="session")
def gfun(model):
    return solve_g(model.k)


@pytest.fixture(scope="session")
def profile():
    return shoot_alencar()


@pytest.fixture(scope="session")
def u0(model, consts):
    return build_initial_u0(model, consts)


@pytest.fixture(scope="session")
def bp(model, consts):
    return make_barrier_params(
        model, consts, CERT["delta"], CERT["B"], CERT["M"], CERT["Rstar"],
        CERT["taustar"], CERT["D"], CERT["zeta"], CERT["epsilon"],
    )


@pytest.fixture(scope="session")
def bs(model, consts, ef, gfun, profile, u0, bp):
    return build_barrier_set(model, consts, ef, gfun, profile, u0, bp)


@pytest.fixture(scope="session")
def bs_half(model, consts, ef, gfun, profile, u0):
    # delta/2 member of the nested pair; tau* shifts by -2 per halving
    bp2 = make_barrier_params(
        model, consts, CERT["delta"] / 2.0, CERT["B"], CERT["M"], CERT["Rstar"],
        CERT["taustar"] - 2.0, CERT["D"], CERT["zeta"], CERT["epsilon"],
    )
    return build_barrier_set(model, consts, ef, gfun, profile, u0, bp2)


@pytest.fixture(scope="session")
def pipeline_out(tmp_path_factory):
    """One full pipeline run shared by the family and artifact tests."""
    outdir = tmp_path_factory.mktemp("pipeline") / "out"
    report = run_pipeline(default_config(), outdir)
    return report, outdir
