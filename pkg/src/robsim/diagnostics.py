"""Energy balances, maximum principle and absorbing-set checks on trajectories.

Everything here only reads states. The quantities are assembled with the same
discrete operators as the time stepper, so on a trajectory the energy
balances are violated only by the time discretisation:

kinetic   d/dt 1/2 |v|^2 + mu |grad_h v|^2 = (buoyancy force, v)
thermal   d/dt 1/2 [avg Z^2 - c (avg Z)^2] + kappa avg |grad Z|^2
              = avg(theta_B_hat v . grad Z)

with ``c = alpha/(1+alpha)``. The buoyancy work ``(-<Theta> grad_h F, v)``
carries the sign of the momentum equation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

import numpy as np

from .errors import InsufficientData, InvalidAlpha
from .grid import domain_average, h1_semi_sq_scalar, h1_semi_sq_velocity, inner_faces, norms


@dataclass(frozen=True)
class Sample:
    t: float
    ke: float
    diss_u: float
    work: float
    thermal: float
    diss_z: float
    heat: float
    theta_max: float
    theta_min: float
    u_h1: float
    theta_h1: float
    theta_inf: float


def heat_exchange(model, v, Z) -> float:
    """Discrete ``avg(theta_B_hat v . grad Z)`` built from the centred advective flux."""
    dom = model.dom
    tb = model.theta_B_hat
    sx = np.sum(v.u1[1:-1, :, None] * 0.5 * (tb[1:] + tb[:-1]) * (Z[1:] - Z[:-1])) / dom.dx
    sy = np.sum(v.u2[:, 1:-1, None] * 0.5 * (tb[:, 1:] + tb[:, :-1]) * (Z[:, 1:] - Z[:, :-1])) / dom.dy
    return float((sx + sy) / Z.size)


def thermal_form(Z: np.ndarray, alpha: float) -> float:
    """``1/2 [avg Z^2 - alpha/(1+alpha) (avg Z)^2]``."""
    m = domain_average(Z)
    return 0.5 * (float(np.mean(Z * Z)) - alpha / (1.0 + alpha) * m * m)


def sample_state(model, state) -> Sample:
    from .solver import buoyancy_force

    dom, p = model.dom, model.params
    v, Z = state.v, state.Z
    Theta = model.Theta(Z)
    fb = buoyancy_force(model, Z)
    nv = norms(v, dom)
    tn = norms(Theta, dom, bc=model.Theta_trace(Z))
    return Sample(
        t=float(state.t),
        ke=0.5 * inner_faces(v, v, dom),
        diss_u=p.mu * h1_semi_sq_velocity(v, dom),
        work=inner_faces(fb, v, dom),
        thermal=thermal_form(Z, p.alpha),
        diss_z=p.kappa * h1_semi_sq_scalar(Z, dom, bc="zero") / dom.volume,
        heat=heat_exchange(model, v, Z),
        theta_max=float(Theta.max()),
        theta_min=float(Theta.min()),
        u_h1=float(np.hypot(nv["l2"], nv["h1_semi"])),
        theta_h1=float(np.hypot(tn["l2"], tn["h1_semi"])),
        theta_inf=tn["linf"],
    )


def _series(samples, name):
    return np.array([getattr(s, name) for s in samples], dtype=float)


def _rate(samples, name):
    if len(samples) < 3:
        raise InsufficientData(f"need at least 3 consecutive samples, got {len(samples)}")
    t = _series(samples, "t")
    if np.any(np.diff(t) <= 0):
        raise InsufficientData("sample times must be strictly increasing")
    return np.gradient(_series(samples, name), t, edge_order=1)


def kinetic_energy_residual(samples) -> np.ndarray:
    """``|d/dt KE + mu |grad v|^2 - work|`` per sample (central differences)."""
    r = _rate(samples, "ke") + _series(samples, "diss_u") - _series(samples, "work")
    return np.abs(r)


def thermal_energy_residual(samples) -> np.ndarray:
    r = _rate(samples, "thermal") + _series(samples, "diss_z") - _series(samples, "heat")
    return np.abs(r)


@dataclass
class MaxPrincipleResult:
    passed: bool
    bound: float
    margin: float
    theta_max: float
    theta_min: float


def max_principle_bound(theta0_linf: float, boundary_linf: float, alpha: float) -> float:
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"maximum principle bound needs 0 < alpha < 1, got {alpha}")
    return max(theta0_linf, boundary_linf / (1.0 - alpha))


def max_principle_check(samples, alpha: float, boundary_linf: float, slack: float = 1e-8,
                        theta0_linf: float | None = None) -> MaxPrincipleResult:
    """Compare every sample's Theta extrema with ``max(|Theta_0|_inf, |theta_B|_inf/(1-alpha))``."""
    if not samples:
        raise InsufficientData("empty trajectory")
    if theta0_linf is None:
        theta0_linf = samples[0].theta_inf
    bound = max_principle_bound(theta0_linf, boundary_linf, alpha)
    tmax = float(_series(samples, "theta_max").max())
    tmin = float(_series(samples, "theta_min").min())
    margin = bound - max(tmax, -tmin)
    ok = margin >= -slack * max(1.0, bound)
    return MaxPrincipleResult(bool(ok), bound, float(margin), tmax, tmin)


@dataclass
class AbsorbingSetReport:
    suprema: list
    spread: float
    passed: bool
    window: float


def absorbing_set_report(runs, fraction: float = 0.25, tol: float = 0.10, min_samples: int = 4) -> AbsorbingSetReport:
    """Tail-window suprema of ``|v|_W12 + |Theta|_inf`` for each run.

    ``runs`` is a sequence of sample lists sharing physics but not initial data.
    The last ``fraction`` of each run stands in for the limsup.
    """
    if len(runs) < 2:
        raise InsufficientData("need at least two trajectories")
    sups = []
    for samples in runs:
        t = _series(samples, "t")
        if len(t) < min_samples:
            raise InsufficientData("trajectory too short")
        start = t[-1] - fraction * (t[-1] - t[0])
        tail = t >= start
        if tail.sum() < min_samples:
            raise InsufficientData(f"tail window holds {int(tail.sum())} samples, need {min_samples}")
        q = _series(samples, "u_h1") + _series(samples, "theta_inf")
        sups.append(float(q[tail].max()))
    hi, lo = max(sups), min(sups)
    spread = (hi - lo) / hi if hi > 0 else 0.0
    return AbsorbingSetReport(sups, spread, spread <= tol, fraction)


# -- report.csv ----------------------------------------------------------------------------

REPORT_COLUMNS = ("t", "ke", "thermal", "res_a6", "res_a7", "theta_max", "theta_min", "u_h1", "theta_h1", "theta_inf")


@dataclass
class DiagnosticsReport:
    t: np.ndarray
    ke: np.ndarray
    thermal: np.ndarray
    res_a6: np.ndarray
    res_a7: np.ndarray
    theta_max: np.ndarray
    theta_min: np.ndarray
    u_h1: np.ndarray
    theta_h1: np.ndarray
    theta_inf: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "DiagnosticsReport":
        res6 = thermal_energy_residual(samples)
        res7 = kinetic_energy_residual(samples)
        cols = {name: _series(samples, name) for name in REPORT_COLUMNS if name not in ("res_a6", "res_a7")}
        return cls(res_a6=res6, res_a7=res7, **cols)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        rows = zip(*(getattr(self, c) for c in REPORT_COLUMNS))
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def samples_to_csv(samples) -> str:
    names = [f.name for f in fields(Sample)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for s in samples:
        w.writerow([repr(float(getattr(s, n))) for n in names])
    return buf.getvalue()
