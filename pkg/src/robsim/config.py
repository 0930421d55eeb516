"""Run configuration: a flat ``dotted.key = value`` file.

Blank lines and ``#`` comments are ignored. Every key must be known; values
are typed by the default table below. ``resolved_text`` prints every key with
its effective value and re-parses to the same configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .elliptic import EllipticOptions
from .errors import InvalidAlpha, ParseError, ValidationError
from .grid import DomainSpec, VelocityField
from .transforms import PhysicsParams, parse_expression

# key -> (type, default); ``floats3`` is a comma separated triple
DEFAULTS: dict[str, tuple[str, object]] = {
    "mode": ("str", "standard"),
    "domain.Lx": ("float", 1.0),
    "domain.Ly": ("float", 1.0),
    "domain.nx": ("int", 64),
    "domain.ny": ("int", 64),
    "domain.nz": ("int", 8),
    "physics.mu": ("float", 0.01),
    "physics.kappa": ("float", 0.02),
    "physics.alpha": ("float", 0.4),
    "physics.a": ("float", 0.0),
    "physics.g": ("floats3", (0.0, 0.0, 0.0)),
    "physics.theta_B": ("str", "const:0"),
    "solver.method": ("str", "fft"),
    "solver.tol": ("float", 1e-10),
    "solver.max_iter": ("int", 2000),
    "time.dt": ("float", 0.002),
    "time.t_end": ("float", 1.0),
    "time.cfl": ("float", 0.5),
    "time.adaptive": ("bool", False),
    "time.series_every": ("int", 1),
    "time.snapshot_every": ("int", 0),
    "init.psi": ("str", "const:0"),
    "init.theta": ("str", "const:0"),
    "init.velocity_file": ("str", ""),
    "init.theta_file": ("str", ""),
    "nudging.lambda": ("float", 0.0),
    "nudging.interp": ("str", "volume:0.125"),
    "nudging.spinup": ("float", 20.0),
    "nudging.obs_every": ("int", 1),
    "nudging.init_psi": ("str", "const:0"),
    "nudging.init_theta": ("str", "const:0"),
    "nudging.tune_probe": ("float", 3.0),
    "nudging.tune_transient": ("float", 1.0),
    "nudging.tune_max_iter": ("int", 8),
    "output.snapshots": ("bool", True),
}

MODES = ("standard", "longtime")


def _convert(key: str, kind: str, raw: str, line=None):
    try:
        if kind == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if kind == "floats3":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 3 or not all(math.isfinite(p) for p in parts):
                raise ValueError
            return tuple(parts)
        return raw
    except ValueError:
        raise ValidationError(key, f"expected {kind}, got {raw!r}") from None


def _format(kind: str, val) -> str:
    if kind == "float":
        return repr(float(val))
    if kind == "bool":
        return "true" if val else "false"
    if kind == "floats3":
        return ",".join(repr(float(v)) for v in val)
    return str(val)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def replace(self, **updates) -> "RunConfig":
        """Copy with ``section__key=value`` overrides (``__`` stands for the dot)."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in DEFAULTS:
                raise ValidationError(key, "unknown key")
            vals[key] = v
        cfg = RunConfig(vals, self.source)
        validate(cfg)
        return cfg

    def resolved_text(self) -> str:
        lines = [f"{k} = {_format(DEFAULTS[k][0], self.values[k])}" for k in DEFAULTS]
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values


def parse_config_text(text: str, source: str | None = None) -> RunConfig:
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", line=lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ParseError("empty key", line=lineno)
        if key in seen:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        if key not in DEFAULTS:
            raise ValidationError(key, "unknown key")
        seen[key] = _convert(key, DEFAULTS[key][0], raw, lineno)
    values = {k: seen.get(k, d) for k, (_, d) in DEFAULTS.items()}
    cfg = RunConfig(values, source)
    validate(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text file") from exc
    return parse_config_text(text, str(path))


def validate(cfg: RunConfig) -> None:
    v = cfg.values
    if v["mode"] not in MODES:
        raise ValidationError("mode", f"expected one of {MODES}")
    for key in ("domain.nx", "domain.ny"):
        if v[key] < 4:
            raise ValidationError(key, "need at least 4 cells")
    if v["domain.nz"] < 4:
        raise ValidationError("domain.nz", "need at least 4 vertical cells")
    for key in ("domain.Lx", "domain.Ly", "physics.mu", "physics.kappa", "time.dt"):
        if not v[key] > 0:
            raise ValidationError(key, "must be positive")
    if v["time.t_end"] < 0:
        raise ValidationError("time.t_end", "must be >= 0")
    if v["time.series_every"] < 1:
        raise ValidationError("time.series_every", "must be >= 1")
    if v["time.snapshot_every"] < 0:
        raise ValidationError("time.snapshot_every", "must be >= 0")
    if v["physics.alpha"] == -1:
        raise ValidationError("physics.alpha", "alpha = -1 makes the change of variables singular")
    if v["mode"] == "longtime" and not 0 < v["physics.alpha"] < 1:
        raise ValidationError("physics.alpha", "long-time mode requires 0 < alpha < 1")
    if v["nudging.lambda"] < 0:
        raise ValidationError("nudging.lambda", "must be >= 0")
    if v["nudging.spinup"] < 0:
        raise ValidationError("nudging.spinup", "must be >= 0")
    if v["nudging.obs_every"] < 1:
        raise ValidationError("nudging.obs_every", "must be >= 1")
    from .interpolant import InterpolantSpec

    InterpolantSpec.parse(v["nudging.interp"])
    dom = domain(cfg)
    for key in ("physics.theta_B", "init.psi", "init.theta", "nudging.init_psi", "nudging.init_theta"):
        try:
            parse_expression(v[key], dom)
        except ValueError as exc:
            raise ValidationError(key, str(exc)) from None
    elliptic_options(cfg)


# -- builders ------------------------------------------------------------------------

def domain(cfg: RunConfig) -> DomainSpec:
    v = cfg.values
    try:
        return DomainSpec(v["domain.Lx"], v["domain.Ly"], v["domain.nx"], v["domain.ny"], v["domain.nz"])
    except ValueError as exc:
        raise ValidationError("domain", str(exc)) from None


def physics(cfg: RunConfig) -> PhysicsParams:
    v = cfg.values
    p = PhysicsParams(mu=v["physics.mu"], kappa=v["physics.kappa"], alpha=v["physics.alpha"],
                      a=v["physics.a"], g=v["physics.g"])
    if v["mode"] == "longtime":
        try:
            p.require_longtime()
        except InvalidAlpha as exc:
            raise ValidationError("physics.alpha", str(exc)) from None
    return p


def elliptic_options(cfg: RunConfig) -> EllipticOptions:
    v = cfg.values
    return EllipticOptions(tol=v["solver.tol"], max_iter=v["solver.max_iter"], method=v["solver.method"])


def build_model(cfg: RunConfig):
    from .solver import Model

    dom = domain(cfg)
    return Model(dom, physics(cfg), parse_expression(cfg["physics.theta_B"], dom), elliptic_options(cfg))


def initial_state(cfg: RunConfig, model, prefix: str = "init"):
    """Initial :class:`~robsim.solver.State` from ``init.psi``/``init.theta``.

    With ``prefix="nudging"`` the keys ``nudging.init_psi``/``nudging.init_theta``
    are used instead.

    ``psi`` is a streamfunction evaluated on the ``z = 0`` plane at cell corners,
    so the velocity is discretely divergence free. ``theta`` is the physical
    temperature deviation. Restart files (``init`` prefix only) override them.
    """
    from . import fieldio
    from .solver import State

    dom = model.dom
    t0 = 0.0
    key = f"{prefix}.init_" if prefix == "nudging" else f"{prefix}."
    vfile = cfg.get(f"{prefix}.velocity_file", "")
    tfile = cfg.get(f"{prefix}.theta_file", "")
    if vfile:
        v, t0 = fieldio.load_velocity(vfile)
        if v.u1.shape != (dom.nx + 1, dom.ny) or v.u2.shape != (dom.nx, dom.ny + 1):
            raise ValidationError(f"{prefix}.velocity_file", "grid does not match domain")
    else:
        psi = parse_expression(cfg[key + "psi"], dom)
        v = VelocityField.from_streamfunction(dom, lambda x, y: psi(x, y, np.zeros_like(x)))
    if tfile:
        rec = fieldio.load_scalar(tfile)
        if rec.values.shape != dom.shape3:
            raise ValidationError(f"{prefix}.theta_file", "grid does not match domain")
        theta = rec.values
    else:
        theta = parse_expression(cfg[key + "theta"], dom)(*dom.centers3())
    return State(float(t0), v, model.Z_from_theta(theta))


def step_control(cfg: RunConfig):
    from .solver import StepControl

    v = cfg.values
    return StepControl(dt=v["time.dt"], t_end=v["time.t_end"], cfl=v["time.cfl"], adaptive=v["time.adaptive"],
                       series_every=v["time.series_every"], snapshot_every=v["time.snapshot_every"])
