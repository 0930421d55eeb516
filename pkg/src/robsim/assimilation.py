"""Nudging data assimilation: forced system, twin experiments and observation streams.

The nudged copy ``(v~, Z~)`` obeys the same equations as the reference with
the extra velocity force ``-Lambda (I_delta[v~] - obs)``; the temperature is
never nudged. Errors are tracked through

    E = |v~ - v|^2 + avg(d^2) - alpha/(1+alpha) avg(d)^2,    d = Z~ - Z,

which satisfies ``|v~-v|^2 + avg(d^2)/(1+alpha) <= E <= |v~-v|^2 + avg(d^2)``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import fieldio, interpolant
from .errors import (
    FormatError,
    InsufficientData,
    NonConvergence,
    NonMonotoneTime,
    SpecMismatch,
    ValidationError,
)
from .grid import DomainSpec, VelocityField, domain_average, inner_cells, inner_faces
from .interpolant import InterpolantSpec
from .solver import Model, State, step

log = logging.getLogger(__name__)


# -- observations ---------------------------------------------------------------------

@dataclass
class ObservationStream:
    """Time-ordered coarse velocity observations sharing one interpolant."""

    spec: InterpolantSpec
    shape: tuple
    times: list = field(default_factory=list)
    obs: list = field(default_factory=list)
    source: str = "twin"

    def append(self, t: float, ob) -> None:
        c1, c2 = (np.asarray(c, dtype=float) for c in ob)
        if c1.shape != tuple(self.shape) or c2.shape != tuple(self.shape):
            raise SpecMismatch(f"observation shape {c1.shape}/{c2.shape} does not match {self.shape}")
        if self.times and not t > self.times[-1]:
            raise NonMonotoneTime(f"observation time {t!r} does not exceed {self.times[-1]!r}")
        self.times.append(float(t))
        self.obs.append((c1, c2))

    def __len__(self):
        return len(self.times)

    def latest(self, t: float, tol: float = 1e-9):
        """Index of the newest record with ``t_k <= t`` (zero-order hold), or ``None``."""
        k = int(np.searchsorted(np.asarray(self.times), t + tol, side="right")) - 1
        return k if k >= 0 else None

    def equals(self, other: "ObservationStream") -> bool:
        if self.spec != other.spec or tuple(self.shape) != tuple(other.shape) or self.times != other.times:
            return False
        return all(np.array_equal(a, b) for p, q in zip(self.obs, other.obs) for a, b in zip(p, q))


@dataclass(frozen=True)
class NudgingParams:
    Lambda: float
    spec: InterpolantSpec
    hold: str = "zero-order"

    def __post_init__(self):
        if not (self.Lambda >= 0 and math.isfinite(self.Lambda)):
            raise ValidationError("nudging.lambda", f"must be a finite value >= 0, got {self.Lambda}")
        if self.hold != "zero-order":
            raise ValidationError("nudging.hold", "only zero-order hold is supported")


def nudging_force(v_tilde: VelocityField, obs, params: NudgingParams, dom: DomainSpec) -> VelocityField:
    """``-Lambda (I_delta[v~] - obs)`` on faces."""
    mine = interpolant.observe(params.spec, v_tilde, dom)
    diff = tuple(a - b for a, b in zip(mine, obs))
    return interpolant.expand(params.spec, diff, dom) * (-params.Lambda)


def nudged_step(model: Model, state: State, dt: float, obs, params: NudgingParams) -> State:
    """One step of the forced system. ``Lambda = 0`` takes the unforced path exactly."""
    if params.Lambda == 0 or obs is None:
        return step(model, state, dt)
    return step(model, state, dt, nudging_force(state.v, obs, params, model.dom))


# -- error measures ------------------------------------------------------------------

def lyapunov(ref: State, nudged: State, alpha: float, dom: DomainSpec) -> float:
    dv = nudged.v - ref.v
    d = nudged.Z - ref.Z
    m = domain_average(d)
    bracket = float(np.mean(d * d)) - alpha / (1.0 + alpha) * m * m
    return inner_faces(dv, dv, dom) + bracket


def velocity_error(ref: State, nudged: State, dom: DomainSpec) -> float:
    dv = nudged.v - ref.v
    return math.sqrt(inner_faces(dv, dv, dom))


def temperature_error(model: Model, ref: State, nudged: State) -> float:
    d = model.Theta(nudged.Z) - model.Theta(ref.Z)
    return math.sqrt(inner_cells(d, d, model.dom))


@dataclass
class ErrorSeries:
    t: list = field(default_factory=list)
    vel_err: list = field(default_factory=list)
    temp_err: list = field(default_factory=list)
    E: list = field(default_factory=list)

    def record(self, model, ref, nudged):
        self.t.append(float(nudged.t))
        self.vel_err.append(velocity_error(ref, nudged, model.dom))
        self.temp_err.append(temperature_error(model, ref, nudged))
        self.E.append(lyapunov(ref, nudged, model.params.alpha, model.dom))

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in ("t", "vel_err", "temp_err", "E")}

    def to_csv(self) -> str:
        lines = ["t,vel_err,temp_err,E"]
        for row in zip(self.t, self.vel_err, self.temp_err, self.E):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"


@dataclass
class DecayFit:
    beta_hat: float
    r_squared: float
    n: int
    prefactor: float


def estimate_decay_rate(t, E, floor: float = 1e-24, window=None, min_samples: int = 10) -> DecayFit:
    """Least-squares fit of ``log E = log C - beta t`` over samples above ``floor``."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    keep = E > floor
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if keep.sum() < min_samples:
        raise InsufficientData(f"need {min_samples} samples above floor {floor:g}, have {int(keep.sum())}")
    x, y = t[keep], np.log(E[keep])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # a constant series (up to rounding in log) is fitted perfectly
    tiny = 1e-24 * len(y) * max(1.0, float(np.abs(y).max())) ** 2
    r2 = 1.0 - ss_res / ss_tot if ss_tot > tiny else 1.0
    beta = -float(slope)
    if abs(beta) < 1e-14 * max(1.0, float(np.abs(y).max())):
        beta = 0.0
    return DecayFit(beta, r2, int(keep.sum()), float(np.exp(icpt)))


# -- twin experiment ----------------------------------------------------------------------

@dataclass
class TwinResult:
    series: ErrorSeries
    reference: State
    nudged: State
    observations: ObservationStream | None
    steps: int
    snapshots: list = field(default_factory=list)


def spin_up(model: Model, state: State, dt: float, duration: float) -> State:
    """Advance ``duration`` time units and reset the clock to 0."""
    cur = state
    for _ in range(int(round(duration / dt))):
        cur = step(model, cur, dt)
    out = cur.copy()
    out.t = 0.0
    return out


def run_twin(model: Model, ref0: State, nud0: State, params: NudgingParams, dt: float, t_end: float,
             obs_every: int = 1, sample_every: int = 1, record_obs: bool = False,
             snapshot_every: int = 0) -> TwinResult:
    """Advance reference and nudged copy in lockstep.

    The observation ``I_delta[v](t_n)`` is taken from the reference every
    ``obs_every`` steps and held in between.
    """
    dom = model.dom
    shape = params.spec.check(dom)
    nsteps = int(round(t_end / dt))
    ref, nud = ref0.copy(), nud0.copy()
    series = ErrorSeries()
    series.record(model, ref, nud)
    stream = ObservationStream(params.spec, shape, source="twin") if record_obs else None
    snaps = [(ref.copy(), nud.copy())] if snapshot_every else []
    obs = None
    for n in range(nsteps):
        if n % obs_every == 0:
            obs = interpolant.observe(params.spec, ref.v, dom)
            if stream is not None:
                stream.append(ref.t, obs)
        nud_next = nudged_step(model, nud, dt, obs, params)
        ref_next = step(model, ref, dt)
        ref, nud = ref_next, nud_next
        ref.t = nud.t = ref0.t + (n + 1) * dt
        if (n + 1) % sample_every == 0 or n + 1 == nsteps:
            series.record(model, ref, nud)
        if snapshot_every and ((n + 1) % snapshot_every == 0 or n + 1 == nsteps):
            snaps.append((ref.copy(), nud.copy()))
    return TwinResult(series, ref, nud, stream, nsteps, snaps)


def nudging_params(cfg, Lambda=None, interp=None) -> NudgingParams:
    lam = cfg["nudging.lambda"] if Lambda is None else Lambda
    spec = InterpolantSpec.parse(cfg["nudging.interp"] if interp is None else str(interp))
    return NudgingParams(float(lam), spec)


def twin_experiment(cfg, Lambda=None, interp=None, record_obs: bool = False, model: Model | None = None,
                    reference: State | None = None) -> TwinResult:
    """Spin up the reference from ``init.*``, start the nudged copy from ``nudging.init_*``.

    ``reference`` skips the spin-up when an already spun-up state is given.
    """
    from .config import build_model, initial_state

    model = model or build_model(cfg)
    params = nudging_params(cfg, Lambda, interp)
    params.spec.check(model.dom)
    dt = cfg["time.dt"]
    if reference is None:
        reference = spin_up(model, initial_state(cfg, model, "init"), dt, cfg["nudging.spinup"])
    nud0 = initial_state(cfg, model, "nudging")
    nud0.t = reference.t
    return run_twin(model, reference, nud0, params, dt, cfg["time.t_end"], obs_every=cfg["nudging.obs_every"],
                    sample_every=cfg["time.series_every"], record_obs=record_obs,
                    snapshot_every=cfg["time.snapshot_every"])


# -- observation files -------------------------------------------------------------------

_OBS_HEADER = re.compile(
    r"^ROBOBS v1 kind=(?P<kind>\S+) delta=(?P<delta>\S+) mx=(?P<mx>\d+) my=(?P<my>\d+)$")
_TIME_LINE = re.compile(r"^t=(?P<t>\S+)$")


def stream_bytes(stream: ObservationStream) -> bytes:
    s = stream.spec
    mx, my = stream.shape
    buf = fieldio._Buffer()
    buf.write(f"ROBOBS v1 kind={s.kind} delta={s.delta!r} mx={mx} my={my}\n".encode("ascii"))
    for t, (c1, c2) in zip(stream.times, stream.obs):
        buf.write(f"t={fieldio.format_float(t)}\n".encode("ascii"))
        fieldio.write_record(buf, c1, "u1", t)
        fieldio.write_record(buf, c2, "u2", t)
    return buf.getvalue()


def write_stream(stream: ObservationStream, path) -> None:
    fieldio.atomic_write_bytes(path, stream_bytes(stream))


def ingest_observations(path) -> ObservationStream:
    with open(path, "rb") as fh:
        head = fh.readline()
        try:
            text = head.decode("ascii").rstrip("\n")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: header is not ASCII") from None
        m = _OBS_HEADER.match(text)
        if m is None:
            raise FormatError(f"{path}: bad ROBOBS header {text[:80]!r}", line=1)
        try:
            spec = InterpolantSpec(m["kind"], float(m["delta"]))
        except (ValueError, ValidationError) as exc:
            raise FormatError(f"{path}: {exc}", line=1) from None
        shape = (int(m["mx"]), int(m["my"]))
        stream = ObservationStream(spec, shape, source="file")
        while True:
            line = fh.readline()
            if not line:
                break
            tm = _TIME_LINE.match(line.decode("ascii", errors="replace").rstrip("\n"))
            if tm is None:
                raise FormatError(f"{path}: expected 't=<float>' line, got {line[:40]!r}")
            try:
                t = float(tm["t"])
            except ValueError:
                raise FormatError(f"{path}: bad time {tm['t']!r}") from None
            r1 = fieldio.read_record(fh)
            r2 = fieldio.read_record(fh)
            if (r1.name, r2.name) != ("u1", "u2"):
                raise FormatError(f"{path}: expected u1,u2 records at t={t!r}")
            if r1.time != t or r2.time != t:
                raise FormatError(f"{path}: record times disagree with t={t!r}")
            stream.append(t, (np.atleast_2d(r1.values), np.atleast_2d(r2.values)))
    return stream


def export_observations(snapshots, spec: InterpolantSpec, cadence: float, dom: DomainSpec, path=None,
                        tol: float = 1e-9) -> ObservationStream:
    """Apply ``I_delta`` to the snapshots whose times are multiples of ``cadence``.

    ``snapshots`` is a sequence of states (anything with ``t`` and ``v``).
    """
    if not cadence > 0:
        raise ValidationError("every", "cadence must be positive")
    shape = spec.check(dom)
    stream = ObservationStream(spec, shape, source="twin")
    for s in snapshots:
        k = round(s.t / cadence)
        if abs(s.t - k * cadence) <= tol * max(1.0, cadence):
            stream.append(s.t, interpolant.observe(spec, s.v, dom))
    if not len(stream):
        raise InsufficientData(f"no snapshot falls on the cadence {cadence!r}")
    if path is not None:
        write_stream(stream, path)
    return stream


# -- assimilation from a stream ---------------------------------------------------------

@dataclass
class AssimilationResult:
    t: list
    obs_err: list
    final: State
    steps: int
    snapshots: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["t,obs_err"]
        lines += [f"{t!r},{e!r}" for t, e in zip(map(float, self.t), map(float, self.obs_err))]
        return "\n".join(lines) + "\n"


def observation_misfit(spec, v, obs, dom) -> float:
    mine = interpolant.observe(spec, v, dom)
    d = interpolant.expand(spec, tuple(a - b for a, b in zip(mine, obs)), dom)
    return math.sqrt(inner_faces(d, d, dom))


def assimilate_from_stream(cfg, stream: ObservationStream, Lambda=None, model: Model | None = None,
                           snapshot_every: int = 0) -> AssimilationResult:
    """Run the nudged system from ``nudging.init_*`` against ``stream``.

    The newest observation with ``t_k <= t`` is held between records.
    ``Lambda = 0`` ignores the stream and reproduces a plain run. With
    ``snapshot_every = k > 0`` the initial state, every ``k``-th state and the
    final state are kept, as in :func:`run_twin`.
    """
    from .config import build_model, initial_state

    model = model or build_model(cfg)
    dom = model.dom
    params = nudging_params(cfg, Lambda)
    if params.spec != stream.spec:
        raise SpecMismatch(f"stream interpolant {stream.spec} differs from configured {params.spec}")
    if tuple(stream.shape) != params.spec.check(dom):
        raise SpecMismatch(f"stream coarse shape {stream.shape} does not fit the grid")
    if params.Lambda > 0 and not len(stream):
        raise InsufficientData("observation stream is empty")
    dt = cfg["time.dt"]
    nsteps = int(round(cfg["time.t_end"] / dt))
    cur = initial_state(cfg, model, "nudging")
    t0 = cur.t
    ts, errs = [], []
    snaps = [cur.copy()] if snapshot_every else []
    every = cfg["time.series_every"]
    use = params.Lambda > 0

    def current_obs(t):
        k = stream.latest(t)
        if k is None:
            raise InsufficientData(f"no observation at or before t={t!r}")
        return stream.obs[k]

    if use:
        ts.append(cur.t)
        errs.append(observation_misfit(params.spec, cur.v, current_obs(cur.t), dom))
    for n in range(nsteps):
        obs = current_obs(cur.t) if use else None
        cur = nudged_step(model, cur, dt, obs, params)
        cur.t = t0 + (n + 1) * dt
        if snapshot_every and ((n + 1) % snapshot_every == 0 or n + 1 == nsteps):
            snaps.append(cur.copy())
        if use and ((n + 1) % every == 0 or n + 1 == nsteps):
            k = stream.latest(cur.t)
            if k is not None:
                ts.append(cur.t)
                errs.append(observation_misfit(params.spec, cur.v, stream.obs[k], dom))
    return AssimilationResult(ts, errs, cur, nsteps, snaps)


# -- tuning and cadence robustness -----------------------------------------------------------

@dataclass
class TuneResult:
    Lambda: float
    spec: InterpolantSpec
    history: list

    def to_text(self) -> str:
        lines = [f"nudging.lambda = {self.Lambda!r}", f"nudging.interp = {self.spec}"]
        for i, (lam, spec, ok, why) in enumerate(self.history):
            lines.append(f"# probe {i}: lambda={lam!r} interp={spec} {'accepted' if ok else 'rejected'} ({why})")
        return "\n".join(lines) + "\n"


def probe_monotone(series: ErrorSeries, transient: float, rtol: float = 1e-12) -> tuple[bool, str]:
    a = series.arrays()
    after = a["t"] >= transient
    E = a["E"][after]
    if len(E) < 2:
        return False, "probe window too short"
    inc = np.diff(E) > rtol * np.maximum(E[:-1], 1e-300)
    if inc.any():
        return False, f"E increased at t={a['t'][after][1:][inc][0]:.4g}"
    if not E[-1] < E[0]:
        return False, "E did not decrease"
    return True, f"E fell by {E[0] / max(E[-1], 1e-300):.3g}x"


def tune(cfg, model: Model | None = None, reference: State | None = None) -> TuneResult:
    """Bracketing search: alternately double Lambda and halve delta until E decays monotonically.

    Each probe is a twin run over ``nudging.tune_probe`` time units, judged after
    ``nudging.tune_transient``. Lambda is capped so that ``Lambda dt <= 0.5``;
    delta halvings that break the coarse tiling are skipped.
    """
    from .config import build_model, initial_state

    model = model or build_model(cfg)
    dom = model.dom
    dt = cfg["time.dt"]
    if reference is None:
        reference = spin_up(model, initial_state(cfg, model, "init"), dt, cfg["nudging.spinup"])
    probe = cfg.replace(time__t_end=cfg["nudging.tune_probe"], time__snapshot_every=0)
    lam = cfg["nudging.lambda"] or 1.0
    spec = InterpolantSpec.parse(cfg["nudging.interp"])
    spec.check(dom)
    history = []
    grow_lambda = True
    for _ in range(cfg["nudging.tune_max_iter"]):
        res = twin_experiment(probe, Lambda=lam, interp=spec, model=model, reference=reference)
        ok, why = probe_monotone(res.series, cfg["nudging.tune_transient"])
        history.append((lam, spec, ok, why))
        log.info("tune probe lambda=%g interp=%s: %s", lam, spec, why)
        if ok:
            return TuneResult(lam, spec, history)
        can_lam = 2 * lam * dt <= 0.5
        finer = InterpolantSpec(spec.kind, spec.delta / 2)
        try:
            finer.check(dom)
            can_delta = True
        except SpecMismatch:
            can_delta = False
        if not (can_lam or can_delta):
            break
        if (grow_lambda and can_lam) or not can_delta:
            lam *= 2
        else:
            spec = finer
        grow_lambda = not grow_lambda
    raise NonConvergence(f"no monotone decay after {len(history)} probes; last: {history[-1][3]}")


@dataclass
class CadenceReport:
    every: list
    final_vel_err: list
    final_E: list

    def factors(self):
        return [b / a if a > 0 else float("inf") for a, b in zip(self.final_E, self.final_E[1:])]

    def to_text(self) -> str:
        lines = ["obs_every,final_vel_err,final_E,factor_vs_previous"]
        fac = [float("nan")] + self.factors()
        for k, ve, e, f in zip(self.every, self.final_vel_err, self.final_E, fac):
            lines.append(f"{k},{ve!r},{e!r},{f!r}")
        return "\n".join(lines) + "\n"


def cadence_report(cfg, cadences=(1, 2), Lambda=None, model: Model | None = None,
                   reference: State | None = None) -> CadenceReport:
    """Final errors of twin runs observing every ``k`` steps, for each ``k``."""
    from .config import build_model, initial_state

    model = model or build_model(cfg)
    if reference is None:
        reference = spin_up(model, initial_state(cfg, model, "init"), cfg["time.dt"], cfg["nudging.spinup"])
    ev, ve, ee = [], [], []
    for k in cadences:
        res = twin_experiment(cfg.replace(nudging__obs_every=int(k)), Lambda=Lambda, model=model, reference=reference)
        ev.append(int(k))
        ve.append(res.series.vel_err[-1])
        ee.append(res.series.E[-1])
    return CadenceReport(ev, ve, ee)
