"""Time stepping for the transformed rotating Oberbeck-Boussinesq system.

Unknowns are the face velocity ``v`` on the horizontal section and ``Z`` on the
3-D box. One step is a first-order splitting:

1. ``Z`` is advanced with the current velocity: explicit centred flux of
   ``Z + theta_B_hat``, then the implicit nonlocal Helmholtz solve.
2. ``v`` is advanced with the new ``Z``: explicit centred advection plus
   buoyancy and any external force (projected onto divergence-free fields),
   implicit viscosity, pressure projection.

Centred fluxes are used on purpose: they are energy neutral for discretely
divergence-free velocities, so the discrete energy balances hold up to the
time-splitting error only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .elliptic import (
    DEFAULT_OPTIONS,
    EllipticOptions,
    NonlocalHelmholtz,
    harmonic_extension,
    solve_helmholtz_dirichlet_2d,
    solve_poisson_h,
)
from .errors import CFLViolation, ValidationError
from .grid import (
    BoundaryTrace,
    DomainSpec,
    VelocityField,
    boundary_trace,
    divergence_h,
    domain_average,
    gradient_h,
    vertical_average,
)
from .transforms import (
    ForcingPotential,
    PhysicsParams,
    Theta_to_theta,
    Theta_to_Z,
    Z_to_Theta,
    effective_boundary_data,
    theta_to_Theta,
)

log = logging.getLogger(__name__)


def _zero_fn(x, y, z):
    return np.zeros(np.broadcast(x, y, z).shape)


class Model:
    """Static part of a run: geometry, parameters and cached derived fields."""

    def __init__(self, dom: DomainSpec, params: PhysicsParams, theta_B=None,
                 opts: EllipticOptions = DEFAULT_OPTIONS):
        self.dom = dom
        self.params = params
        self.opts = opts
        self.theta_B = theta_B if theta_B is not None else _zero_fn
        self.potential = ForcingPotential(dom, params.g)
        self.F = self.potential.values
        self.gradF = self.potential.grad_h()
        self.boundary_fn = effective_boundary_data(self.theta_B, params, self.potential, dom)
        self.theta_B_hat, self.boundary = harmonic_extension(self.boundary_fn, dom, opts)
        self.z_solver = NonlocalHelmholtz(dom, opts)

    # variable changes
    def Theta(self, Z: np.ndarray) -> np.ndarray:
        return Z_to_Theta(Z, self.params.alpha, self.theta_B_hat)

    def Z_from_Theta(self, Theta: np.ndarray) -> np.ndarray:
        return Theta_to_Z(Theta, self.params.alpha, self.theta_B_hat)

    def theta(self, Z: np.ndarray) -> np.ndarray:
        return Theta_to_theta(self.Theta(Z), self.F, self.params, self.dom)

    def Z_from_theta(self, theta: np.ndarray) -> np.ndarray:
        return self.Z_from_Theta(theta_to_Theta(theta, self.F, self.params, self.dom))

    def Theta_trace(self, Z: np.ndarray) -> BoundaryTrace:
        """Boundary values of Theta implied by the ghost rules of Z and theta_B_hat."""
        c = self.params.nonlocal_weight
        zt = boundary_trace(Z)
        shift = -c * domain_average(Z + self.theta_B_hat)
        return BoundaryTrace(*(a + b + shift for a, b in zip(zt.faces(), self.boundary.faces())))


@dataclass
class State:
    t: float
    v: VelocityField
    Z: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.v.copy(), self.Z.copy())


@dataclass
class StepControl:
    dt: float
    t_end: float
    cfl: float = 0.5
    adaptive: bool = False
    series_every: int = 1
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("time.dt", "must be positive")
        if self.t_end < 0:
            raise ValidationError("time.t_end", "must be >= 0")
        if not 0 < self.cfl <= 0.5:
            raise ValidationError("time.cfl", "must be in (0, 0.5]")


# -- spatial terms ---------------------------------------------------------------------

def momentum_advection(v: VelocityField, dom: DomainSpec) -> VelocityField:
    """Centred divergence form ``div_h(v (x) v)`` on the MAC grid."""
    u, w = v.u1, v.u2
    dx, dy = dom.dx, dom.dy
    au = np.zeros_like(u)
    aw = np.zeros_like(w)

    uc = 0.5 * (u[1:] + u[:-1])
    fxx = uc * uc
    au[1:-1] = (fxx[1:] - fxx[:-1]) / dx
    # x-momentum carried in y, on corners of interior x-faces; zero on walls since w = 0 there
    vcor = 0.5 * (w[:-1] + w[1:])
    ucor = np.zeros_like(vcor)
    ucor[:, 1:-1] = 0.5 * (u[1:-1, :-1] + u[1:-1, 1:])
    fxy = vcor * ucor
    au[1:-1] += (fxy[:, 1:] - fxy[:, :-1]) / dy

    wc = 0.5 * (w[:, 1:] + w[:, :-1])
    fyy = wc * wc
    aw[:, 1:-1] = (fyy[:, 1:] - fyy[:, :-1]) / dy
    ucor2 = 0.5 * (u[:, :-1] + u[:, 1:])
    wcor = np.zeros_like(ucor2)
    wcor[1:-1] = 0.5 * (w[:-1, 1:-1] + w[1:, 1:-1])
    fyx = ucor2 * wcor
    aw[:, 1:-1] += (fyx[1:] - fyx[:-1]) / dx
    return VelocityField(au, aw)


def scalar_advection(q: np.ndarray, v: VelocityField, dom: DomainSpec) -> np.ndarray:
    """Layer-wise ``div_h(v q)`` with centred face values; no flux through walls."""
    nx, ny, nz = q.shape
    fx = np.zeros((nx + 1, ny, nz))
    fy = np.zeros((nx, ny + 1, nz))
    fx[1:-1] = v.u1[1:-1, :, None] * 0.5 * (q[1:] + q[:-1])
    fy[:, 1:-1] = v.u2[:, 1:-1, None] * 0.5 * (q[:, 1:] + q[:, :-1])
    return (fx[1:] - fx[:-1]) / dom.dx + (fy[:, 1:] - fy[:, :-1]) / dom.dy


def to_faces(p: np.ndarray) -> VelocityField:
    """Average a cell-centred 2-D field to interior faces (walls left at zero)."""
    nx, ny = p.shape
    a = np.zeros((nx + 1, ny))
    b = np.zeros((nx, ny + 1))
    a[1:-1] = 0.5 * (p[1:] + p[:-1])
    b[:, 1:-1] = 0.5 * (p[:, 1:] + p[:, :-1])
    return VelocityField(a, b)


def buoyancy_force(model: Model, Z: np.ndarray) -> VelocityField:
    """``-<Theta> grad_h F`` on faces."""
    tbar = to_faces(vertical_average(model.Theta(Z)))
    return VelocityField(-tbar.u1 * model.gradF.u1, -tbar.u2 * model.gradF.u2)


def project(v: VelocityField, dom: DomainSpec, opts: EllipticOptions = DEFAULT_OPTIONS) -> VelocityField:
    """Remove the gradient part so that ``div_h v = 0`` on every cell."""
    div = divergence_h(v, dom)
    scale = v.max_abs() * (1.0 / dom.dx + 1.0 / dom.dy)
    phi = solve_poisson_h(div, dom, opts, scale=scale)
    out = v - gradient_h(phi, dom)
    return out.enforce_walls()


def courant(v: VelocityField, dt: float, dom: DomainSpec) -> float:
    return v.max_abs() * dt / min(dom.dx, dom.dy)


def _check_cfl(v, dt, dom):
    c = courant(v, dt, dom)
    if c > 1.0:
        raise CFLViolation(f"Courant number {c:.3f} > 1 (dt={dt:g})")


# -- steps --------------------------------------------------------------------------------

def step_temperature(model: Model, state: State, dt: float, v_adv: VelocityField | None = None) -> np.ndarray:
    v = state.v if v_adv is None else v_adv
    dom, p = model.dom, model.params
    _check_cfl(v, dt, dom)
    c = p.nonlocal_weight
    Z = state.Z
    rhs = Z - c * domain_average(Z) - dt * scalar_advection(Z + model.theta_B_hat, v, dom)
    return model.z_solver.solve(p.kappa * dt, p.alpha, rhs)


def step_velocity(model: Model, state: State, dt: float, extra_force: VelocityField | None = None) -> VelocityField:
    dom, p = model.dom, model.params
    v = state.v
    _check_cfl(v, dt, dom)
    tend = buoyancy_force(model, state.Z) - momentum_advection(v, dom)
    if extra_force is not None:
        tend = tend + extra_force
    # Projecting the explicit tendency first keeps pure-gradient forcing inert:
    # the no-slip Helmholtz solve does not map gradients to gradients.
    tend = project(tend.enforce_walls(), dom, model.opts)
    rhs = v + dt * tend
    vstar = solve_helmholtz_dirichlet_2d(p.mu * dt, rhs, dom, model.opts)
    return project(vstar, dom, model.opts)


def step(model: Model, state: State, dt: float, extra_force: VelocityField | None = None) -> State:
    Z_new = step_temperature(model, state, dt)
    v_new = step_velocity(model, State(state.t, state.v, Z_new), dt, extra_force)
    return State(state.t + dt, v_new, Z_new)


# -- driver ---------------------------------------------------------------------------------

@dataclass
class Trajectory:
    model: Model
    samples: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: State | None = None
    steps: int = 0


def step_size(control: StepControl, state: State, dom: DomainSpec) -> float:
    if not control.adaptive:
        return control.dt
    umax = state.v.max_abs()
    if umax == 0:
        return control.dt
    return min(control.dt, control.cfl * min(dom.dx, dom.dy) / umax)


def integrate(model: Model, state: State, control: StepControl, force_fn=None,
              record_samples: bool = True, callback=None) -> Trajectory:
    """Advance ``state`` to ``control.t_end``.

    Fixed-step runs take ``round(t_end/dt)`` steps with times ``t0 + n dt``.
    ``force_fn(state)`` supplies an extra face force per step.
    """
    traj = Trajectory(model)
    t0 = state.t
    cur = state.copy()
    if record_samples:
        traj.samples.append(diagnostics.sample_state(model, cur))
    traj.snapshots.append(cur.copy())
    n = 0
    nsteps = int(round(control.t_end / control.dt)) if not control.adaptive else None
    t_stop = t0 + control.t_end
    eps = 1e-12 * max(1.0, abs(t_stop))
    done = nsteps == 0 if nsteps is not None else cur.t >= t_stop - eps
    while not done:
        if nsteps is not None:
            dt = control.dt
        else:
            dt = min(step_size(control, cur, model.dom), t_stop - cur.t)
        force = force_fn(cur) if force_fn is not None else None
        nxt = step(model, cur, dt, force)
        n += 1
        if nsteps is not None:
            nxt.t = t0 + n * control.dt
            done = n >= nsteps
        else:
            done = nxt.t >= t_stop - eps
        cur = nxt
        if callback is not None:
            callback(n, cur)
        if record_samples and (n % control.series_every == 0 or done):
            traj.samples.append(diagnostics.sample_state(model, cur))
        if (control.snapshot_every and n % control.snapshot_every == 0) or done:
            traj.snapshots.append(cur.copy())
    traj.final = cur
    traj.steps = n
    log.debug("integrated %d steps to t=%g", n, cur.t)
    return traj


def simulate(cfg) -> Trajectory:
    """Run the configuration ``cfg`` (a :class:`robsim.config.RunConfig`)."""
    from .config import build_model, initial_state, step_control

    model = build_model(cfg)
    state = initial_state(cfg, model)
    return integrate(model, state, step_control(cfg))
