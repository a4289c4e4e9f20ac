"""Model parameters, derived constants, coordinate frames, and region membership.

The profile equation u_t = u_xx/(1+u_x^2) + (3/x)u_x - 3/u is studied in
three coordinate frames:

  original      (x, t)
  intermediate  y = x t^(-1/2),   tau = log t   (parabolic self-similar frame)
  inner         z = x t^(-k/3),   tau = log t   (frame of the minimal cap)

Everything downstream is parameterized by the integer k >= 4 and the profile
coefficient K0 > 0, from which gamma = k/3 - 1/2, K1 = (2k+1)!! K0 and
K2 = K1^(1/3) are derived.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidParameter, InvalidTime


def double_factorial(n):
    """Odd double factorial 1*3*5*...*n in exact integer arithmetic."""
    if not isinstance(n, int) or isinstance(n, bool):
        raise InvalidParameter(f"double_factorial expects an integer, got {n!r}")
    if n < 1 or n > 31 or n % 2 == 0:
        raise InvalidParameter(f"double_factorial expects an odd integer in [1, 31], got {n}")
    out = 1
    for j in range(1, n + 1, 2):
        out *= j
    return out


@dataclass(frozen=True)
class ModelParams:
    """Free parameters: dimension knob k, profile coefficient K0, barrier
    exponent p and monitor weight exponent m (both in the open interval (2,3))."""

    k: int = 4
    K0: float = 1.0
    p: float = 2.5
    m: float = 2.25

    def __post_init__(self):
        if not isinstance(self.k, int) or isinstance(self.k, bool):
            raise InvalidParameter(f"k must be an integer, got {self.k!r}")
        if self.k < 4:
            raise InvalidParameter(f"k must be >= 4, got {self.k}")
        if not (self.K0 > 0):
            raise InvalidParameter(f"K0 must be positive, got {self.K0}")
        if not (2.0 < self.p < 3.0):
            raise InvalidParameter(f"p must lie in the open interval (2,3), got {self.p}")
        if not (2.0 < self.m < 3.0):
            raise InvalidParameter(f"m must lie in the open interval (2,3), got {self.m}")


@dataclass(frozen=True)
class DerivedConstants:
    """Constants computed once from ModelParams.

    gamma = k/3 - 1/2, K1 = (2k+1)!! K0, K2 = K1^(1/3),
    dblfact = (2k+1)!! as an exact integer.
    """

    k: int
    gamma: float
    K1: float
    K2: float
    dblfact: int

    @property
    def k_over_3(self):
        # exponent of the inner scale t^(k/3); gamma + 1/2 as a rational
        return self.k / 3.0


def derive_constants(params: ModelParams) -> DerivedConstants:
    if not isinstance(params, ModelParams):
        raise InvalidParameter("derive_constants expects ModelParams")
    dblfact = double_factorial(2 * params.k + 1)
    gamma = float(Fraction(params.k, 3) - Fraction(1, 2))
    K1 = dblfact * params.K0
    K2 = K1 ** (1.0 / 3.0)
    return DerivedConstants(k=params.k, gamma=gamma, K1=K1, K2=K2, dblfact=dblfact)


def to_intermediate(x, t):
    """(x, t) -> (y, tau) with y = x/sqrt(t), tau = log t."""
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    if np.any(np.asarray(t) <= 0.0):
        raise InvalidTime("t must be positive")
    y = np.asarray(x, dtype=float) / np.sqrt(t) if np.ndim(x) else float(x) / math.sqrt(t)
    tau = np.log(t) if np.ndim(t) else math.log(t)
    return y, tau


def from_intermediate(y, tau):
    """(y, tau) -> (x, t), inverse of to_intermediate."""
    t = np.exp(tau) if np.ndim(tau) else math.exp(tau)
    x = np.asarray(y, dtype=float) * np.sqrt(t) if np.ndim(y) else float(y) * math.sqrt(t)
    return x, t


def to_inner(x, t, c: DerivedConstants):
    """(x, t) -> (z, tau) with z = x t^(-k/3), tau = log t."""
    if np.any(np.asarray(t) <= 0.0):
        raise InvalidTime("t must be positive")
    scale = np.power(t, -c.k / 3.0) if np.ndim(t) else float(t) ** (-c.k / 3.0)
    z = np.asarray(x, dtype=float) * scale if np.ndim(x) or np.ndim(t) else float(x) * scale
    tau = np.log(t) if np.ndim(t) else math.log(t)
    return z, tau


def from_inner(z, tau, c: DerivedConstants):
    """(z, tau) -> (x, t), inverse of to_inner."""
    t = np.exp(tau) if np.ndim(tau) else math.exp(tau)
    scale = np.power(t, c.k / 3.0) if np.ndim(t) else t ** (c.k / 3.0)
    x = np.asarray(z, dtype=float) * scale if np.ndim(z) or np.ndim(tau) else float(z) * scale
    return x, t


@dataclass(frozen=True)
class RegionSpec:
    """Thresholds delimiting the outer / intermediate / inner regions.

    Outer:        x >= M sqrt(t),          t < M^-2
    Intermediate: Rstar t^(k/3) <= x <= 1, tau <= taustar
    Inner:        x <= Zdelta t^(k/3),     tau <= taustar
    """

    M: float
    Rstar: float
    Zdelta: float
    Ydelta: float
    taustar: float

    def __post_init__(self):
        if not (self.M > 1.0):
            raise InvalidParameter(f"M must exceed 1, got {self.M}")
        if not (self.Zdelta > 2.0 * self.Rstar):
            raise InvalidParameter(
                f"regions must overlap: need Zdelta > 2 Rstar, got {self.Zdelta} <= 2*{self.Rstar}"
            )


OUTER = "Outer"
INTERMEDIATE = "Intermediate"
INNER = "Inner"


def region_classify(x, t, spec: RegionSpec, c: DerivedConstants):
    """Return the set of region tags containing the point (x, t). Tags may
    overlap and the set may be empty."""
    if t <= 0.0:
        raise InvalidTime("t must be positive")
    tags = set()
    tau = math.log(t)
    inner_scale = t ** (c.k / 3.0)
    if x >= spec.M * math.sqrt(t) and t < spec.M ** (-2.0):
        tags.add(OUTER)
    if tau <= spec.taustar and spec.Rstar * inner_scale <= x <= 1.0:
        tags.add(INTERMEDIATE)
    if tau <= spec.taustar and x <= spec.Zdelta * inner_scale:
        tags.add(INNER)
    return tags
