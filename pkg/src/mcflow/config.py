"""Run configuration: JSON schema with sections model / barriers / mesh /
time / monitors, strict validation (unknown keys rejected, every violation
reported with its field path), and deterministic serialization with
17-significant-digit floats so emit-then-parse is the identity."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError, IoError


def fmt17(x) -> str:
    """Shortest exact decimal within 17 significant digits."""
    return format(float(x), ".17g")


def dump_json(obj, path):
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(to_json(obj))
        fh.write("\n")


def to_json(obj) -> str:
    def walk(o):
        if isinstance(o, float):
            return _F(o)
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        return o

    return json.dumps(walk(obj), sort_keys=True, indent=2)


class _F(float):
    """Float rendered by json at 17 significant digits."""

    def __repr__(self):
        return fmt17(self)


@dataclass
class ModelSection:
    k: int = 4
    K0: float = 1.0
    p: float = 2.5
    m: float = 2.25


@dataclass
class BarriersSection:
    """mode "overrides" uses the frozen certified constants; "search"
    re-runs the constant search (slower, same defaults as the frozen set)."""

    delta0: float = 2e-05
    mode: str = "overrides"
    B: float = 16.0
    M: float = 64.0
    Rstar: float = 610.0
    taustar: float = -39.0
    D: float = 2717.647058823529
    zeta: float = 0.7
    epsilon: float = 0.1


@dataclass
class MeshSection:
    eta: float = 0.1
    xmax: float = 4.0
    ratio: float = 1.05
    h_coarse: float = 0.02


@dataclass
class TimeSection:
    s0: float = 1e-19
    n_runs: int = 4
    t_end: float = 1.5e-18
    rtol: float = 1e-4
    dt_init_frac: float = 1e-3
    dt_max_frac: float = 0.05
    max_steps: int = 100000


@dataclass
class MonitorsSection:
    cadence: int = 4
    Z: float = 5.0
    sandwich_factor: float = 5.0


_SECTIONS = {
    "model": ModelSection,
    "barriers": BarriersSection,
    "mesh": MeshSection,
    "time": TimeSection,
    "monitors": MonitorsSection,
}


@dataclass
class RunConfig:
    """Validated configuration; fully deterministic (no seeds anywhere)."""

    model: ModelSection = field(default_factory=ModelSection)
    barriers: BarriersSection = field(default_factory=BarriersSection)
    mesh: MeshSection = field(default_factory=MeshSection)
    time: TimeSection = field(default_factory=TimeSection)
    monitors: MonitorsSection = field(default_factory=MonitorsSection)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}


def _check(cond, violations, path, message):
    if not cond:
        violations.append(f"{path}: {message}")


def validate_config(cfg: RunConfig):
    """Collect every violation; raise ConfigError listing all of them."""
    v = []
    mo = cfg.model
    _check(isinstance(mo.k, int) and mo.k >= 4, v, "model.k", "must be an integer >= 4")
    _check(mo.K0 > 0.0, v, "model.K0", "must be positive")
    _check(2.0 < mo.p < 3.0, v, "model.p", "must lie in the open interval (2, 3)")
    _check(2.0 < mo.m < 3.0, v, "model.m", "must lie in the open interval (2, 3)")
    ba = cfg.barriers
    _check(0.0 < ba.delta0 <= 1e-3, v, "barriers.delta0", "must lie in (0, 1e-3]")
    _check(ba.mode in ("overrides", "search"), v, "barriers.mode",
           'must be "overrides" or "search"')
    _check(ba.B > 0.0, v, "barriers.B", "must be positive")
    _check(ba.M > 0.0, v, "barriers.M", "must be positive")
    _check(ba.Rstar > 0.0, v, "barriers.Rstar", "must be positive")
    _check(ba.taustar < 0.0, v, "barriers.taustar", "must be negative")
    _check(ba.D > 0.0, v, "barriers.D", "must be positive")
    _check(0.0 < ba.zeta < 1.0, v, "barriers.zeta", "must lie in (0, 1)")
    _check(0.0 < ba.epsilon <= 1.0, v, "barriers.epsilon", "must lie in (0, 1]")
    me = cfg.mesh
    _check(0.0 < me.eta <= 0.1, v, "mesh.eta", "must lie in (0, 1/10]")
    _check(me.xmax > 1.0, v, "mesh.xmax", "must exceed 1")
    _check(1.0 < me.ratio <= 1.2, v, "mesh.ratio", "must lie in (1, 1.2]")
    _check(0.0 < me.h_coarse <= 0.1, v, "mesh.h_coarse", "must lie in (0, 0.1]")
    ti = cfg.time
    _check(ti.s0 > 0.0, v, "time.s0", "must be positive")
    _check(isinstance(ti.n_runs, int) and 1 <= ti.n_runs <= 8, v, "time.n_runs",
           "must be an integer in [1, 8]")
    _check(ti.t_end > ti.s0, v, "time.t_end", "must exceed time.s0")
    _check(0.0 < ti.rtol <= 1e-2, v, "time.rtol", "must lie in (0, 1e-2]")
    _check(0.0 < ti.dt_init_frac <= 0.1, v, "time.dt_init_frac", "must lie in (0, 0.1]")
    _check(0.0 < ti.dt_max_frac <= 0.1, v, "time.dt_max_frac", "must lie in (0, 0.1]")
    _check(isinstance(ti.max_steps, int) and ti.max_steps >= 100, v, "time.max_steps",
           "must be an integer >= 100")
    mn = cfg.monitors
    _check(isinstance(mn.cadence, int) and mn.cadence >= 1, v, "monitors.cadence",
           "must be an integer >= 1")
    _check(mn.Z > 0.0, v, "monitors.Z", "must be positive")
    _check(mn.sandwich_factor >= 1.0, v, "monitors.sandwich_factor", "must be >= 1")
    if v:
        raise ConfigError(v)
    return cfg


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig from a plain dict (strict keys)."""
    if not isinstance(data, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    violations = []
    sections = {}
    for key in data:
        if key not in _SECTIONS:
            violations.append(f"{key}: unknown section")
    for name, cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            violations.append(f"{name}: must be an object")
            raw = {}
        known = {f for f in cls.__dataclass_fields__}
        for key in raw:
            if key not in known:
                violations.append(f"{name}.{key}: unknown key")
        kwargs = {}
        for key, val in raw.items():
            if key not in known:
                continue
            want = cls.__dataclass_fields__[key].type
            if want == "int":
                if isinstance(val, bool) or not isinstance(val, int):
                    violations.append(f"{name}.{key}: must be an integer")
                    continue
            elif want == "float":
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    violations.append(f"{name}.{key}: must be a number")
                    continue
                val = float(val)
            kwargs[key] = val
        sections[name] = cls(**kwargs)
    if violations:
        raise ConfigError(violations)
    return validate_config(RunConfig(**sections))


def parse_config(path) -> RunConfig:
    """Load, schema-check, and validate a JSON config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: invalid JSON ({exc})"])
    return config_from_dict(data)


def default_config() -> RunConfig:
    return validate_config(RunConfig())
