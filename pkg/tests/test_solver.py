import numpy as np
import pytest

from conftest import random_divfree
from robsim.elliptic import EllipticOptions
from robsim.errors import CFLViolation, ValidationError
from robsim.grid import DomainSpec, VelocityField, divergence_h, inner_faces, laplacian_dirichlet_3d, with_ghosts
from robsim.solver import (
    Model,
    State,
    StepControl,
    buoyancy_force,
    integrate,
    momentum_advection,
    scalar_advection,
    step,
    step_temperature,
    step_velocity,
)
from robsim.transforms import PhysicsParams, parse_expression
from test_elliptic import dense_dirichlet

D16 = DomainSpec(1.0, 1.0, 16, 16, 8)


def smooth_state(dom, amp=0.05, seed=0, zamp=0.2):
    r = np.random.default_rng(seed)
    c = r.standard_normal((3, 3))
    psi = lambda X, Y: amp * sum(  # noqa: E731
        c[i, j] * np.sin((i + 1) * np.pi * X / dom.Lx) * np.sin((j + 1) * np.pi * Y / dom.Ly)
        for i in range(3) for j in range(3))
    X, Y, Z = dom.centers3()
    z = zamp * np.sin(np.pi * X / dom.Lx) * np.sin(2 * np.pi * Y / dom.Ly) * np.sin(np.pi * Z)
    return State(0.0, VelocityField.from_streamfunction(dom, psi), z)


def model(dom=D16, alpha=0.4, g=(1.0, 0.0, 0.0), tb="linear:-1,2,0,0", mu=0.01, kappa=0.02, a=0.0):
    return Model(dom, PhysicsParams(mu=mu, kappa=kappa, alpha=alpha, a=a, g=g), parse_expression(tb, dom))


# -- buoyancy ------------------------------------------------------------------------------

def test_buoyancy_zero_when_theta_zero():
    m = model()
    Z = m.Z_from_Theta(np.zeros(D16.shape3))
    f = buoyancy_force(m, Z)
    assert f.max_abs() == 0.0


def test_buoyancy_oracle_unit_theta():
    m = model(g=(0.0, 0.0, 0.0))
    Z = m.Z_from_Theta(np.ones(D16.shape3))
    f = buoyancy_force(m, Z)
    xf = D16.xf()[1:-1, None]
    yf = D16.yf()[None, 1:-1]
    assert np.allclose(f.u1[1:-1], -2 * xf, atol=1e-12)
    assert np.allclose(f.u2[:, 1:-1], -2 * yf, atol=1e-12)


def test_buoyancy_linear_in_theta():
    m = model()
    Th = np.random.default_rng(1).standard_normal(D16.shape3)
    f1 = buoyancy_force(m, m.Z_from_Theta(Th))
    f3 = buoyancy_force(m, m.Z_from_Theta(3 * Th))
    assert np.allclose(f3.u1, 3 * f1.u1, rtol=1e-13, atol=1e-13)
    assert np.allclose(f3.u2, 3 * f1.u2, rtol=1e-13, atol=1e-13)


# -- advection ----------------------------------------------------------------------------

def test_momentum_advection_energy_neutral(rng):
    v = random_divfree(D16, rng, amp=0.1)
    adv = momentum_advection(v, D16)
    scale = np.sqrt(inner_faces(v, v, D16) * inner_faces(adv, adv, D16))
    assert abs(inner_faces(v, adv, D16)) < 1e-12 * scale


def test_scalar_advection_neutral_and_conservative(rng):
    v = random_divfree(D16, rng, amp=0.1)
    q = rng.standard_normal(D16.shape3)
    a = scalar_advection(q, v, D16)
    assert abs(a.sum()) < 1e-10 * np.abs(a).max()
    assert abs(np.sum(q * a)) < 1e-10 * np.sqrt(np.sum(q * q) * np.sum(a * a))


# -- velocity step ------------------------------------------------------------------------

def test_rest_state_is_fixed_point():
    # theta_B depending on x3 only gives a constant vertical average of Theta
    m = model(tb="linear:1,0,0,-1", g=(0.3, -0.2, 0.0))
    s = State(0.0, VelocityField.zeros(D16), np.zeros(D16.shape3))
    for _ in range(5):
        s = step(m, s, 0.01)
    assert s.v.max_abs() < 1e-12
    assert np.abs(s.Z).max() < 1e-12


def test_step_velocity_divergence_free_and_no_slip():
    m = model()
    s = smooth_state(D16, amp=0.1)
    v = step_velocity(m, s, 0.01, extra_force=VelocityField(np.ones((17, 16)), np.ones((16, 17))))
    scale = v.max_abs() / D16.dx
    assert np.abs(divergence_h(v, D16)).max() <= 1e-10 * scale
    assert np.all(v.u1[[0, -1]] == 0) and np.all(v.u2[:, [0, -1]] == 0)


def test_step_doubling_self_convergence():
    m = model()
    s0 = smooth_state(D16, amp=0.1)
    diffs = []
    dts = [0.02, 0.01, 0.005]
    for dt in dts:
        one = step(m, s0, dt)
        two = step(m, step(m, s0, dt / 2), dt / 2)
        dv = one.v - two.v
        diffs.append(np.sqrt(inner_faces(dv, dv, D16) + np.mean((one.Z - two.Z) ** 2)))
    order = np.polyfit(np.log(dts), np.log(diffs), 1)[0]
    # local splitting defect is O(dt^2)
    assert order >= 1.8


def test_cfl_violation_raised():
    m = model()
    s = smooth_state(D16, amp=0.1)
    with pytest.raises(CFLViolation):
        step(m, s, 10.0 * D16.dx / s.v.max_abs())


# -- temperature step ---------------------------------------------------------------------------

def test_temperature_equilibrium_with_harmonic_data():
    m = model(tb="linear:0.3,1,-2,0.5")
    s = State(0.0, VelocityField.zeros(D16), np.zeros(D16.shape3))
    assert np.abs(step_temperature(m, s, 0.05)).max() < 1e-13


@pytest.mark.parametrize("alpha", [0.0, 0.4])
def test_temperature_step_matches_dense_backward_euler(alpha):
    d = DomainSpec(1.0, 1.0, 8, 8, 8)
    m = model(dom=d, alpha=alpha, tb="const:0")
    Z0 = np.random.default_rng(4).standard_normal(d.shape3)
    dt, kappa = 0.03, m.params.kappa
    A = dense_dirichlet(d)
    n = A.shape[0]
    c = alpha / (1 + alpha)
    P = np.eye(n) - c * np.ones((n, n)) / n
    z0 = Z0.ravel(order="F")
    want = np.linalg.solve(P - kappa * dt * A, P @ z0).reshape(d.shape3, order="F")
    got = step_temperature(m, State(0.0, VelocityField.zeros(d), Z0), dt)
    assert np.abs(got - want).max() <= 1e-10 * np.abs(want).max()


def test_temperature_total_changes_only_by_boundary_flux(rng):
    d = DomainSpec(1.0, 1.0, 8, 8, 8)
    m = model(dom=d, alpha=0.0, tb="const:0")
    v = random_divfree(d, rng, amp=0.01)
    Z0 = rng.standard_normal(d.shape3)
    dt = 0.01
    Z1 = step_temperature(m, State(0.0, v, Z0), dt)
    # diffusive flux through Dirichlet faces: (0 - Z_edge)/(h/2) per unit face area
    h = (d.dx, d.dy, d.dz)
    flux = 0.0
    for ax in range(3):
        edge = np.take(Z1, 0, axis=ax).sum() + np.take(Z1, -1, axis=ax).sum()
        flux += -2.0 * edge / h[ax] ** 2
    change = Z1.sum() - Z0.sum()
    assert abs(change - dt * m.params.kappa * flux) <= 1e-10 * max(1.0, abs(change))


def test_Z_trace_stays_zero_and_nonlocal_condition_holds():
    m = model(tb="linear:-1,2,0,0 + sines:0.3,1,1,1")
    s = smooth_state(D16)
    for _ in range(3):
        s = step(m, s, 0.01)
    # ghost layer of Z carries zero boundary values
    g = with_ghosts(s.Z)
    assert np.allclose(0.5 * (g[0, 1:-1, 1:-1] + g[1, 1:-1, 1:-1]), 0.0, atol=1e-15)
    tr = m.Theta_trace(s.Z)
    Theta = m.Theta(s.Z)
    alpha = m.params.alpha
    for face, data in zip(tr.faces(), m.boundary.faces()):
        assert np.abs(face + alpha * Theta.mean() - data).max() < 1e-12


# -- driver ----------------------------------------------------------------------------------

def test_step_control_validation():
    with pytest.raises(ValidationError):
        StepControl(dt=0.0, t_end=1.0)
    with pytest.raises(ValidationError):
        StepControl(dt=0.1, t_end=1.0, cfl=0.8)


def test_integrate_t_end_zero_gives_initial_snapshot_only():
    m = model()
    tr = integrate(m, smooth_state(D16), StepControl(dt=0.01, t_end=0.0))
    assert tr.steps == 0 and len(tr.snapshots) == 1 and len(tr.samples) == 1


def test_integrate_sampling_cadence_and_times():
    m = model()
    tr = integrate(m, smooth_state(D16), StepControl(dt=0.01, t_end=0.1, series_every=3, snapshot_every=5))
    assert tr.steps == 10
    assert [s.t for s in tr.samples] == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    assert [s.t for s in tr.snapshots] == pytest.approx([0.0, 0.05, 0.1])
    assert tr.final.t == pytest.approx(0.1)


def test_adaptive_steps_respect_cfl():
    m = model()
    s = smooth_state(D16, amp=0.5)
    seen = []
    ctl = StepControl(dt=1.0, t_end=0.05, cfl=0.5, adaptive=True)
    prev = [0.0]

    def cb(n, st):
        seen.append(st.t - prev[0])
        prev[0] = st.t

    tr = integrate(m, s, ctl, callback=cb)
    assert tr.final.t == pytest.approx(0.05)
    assert max(seen) <= 0.5 * D16.dx / s.v.max_abs() * 1.5


def test_equilibrium_series_constant():
    m = model(tb="const:0.5")
    s = State(0.0, VelocityField.zeros(D16), np.zeros(D16.shape3))
    tr = integrate(m, s, StepControl(dt=0.01, t_end=0.05))
    ke = [x.ke for x in tr.samples]
    th = [x.thermal for x in tr.samples]
    assert max(ke) < 1e-20 and np.ptp(th) < 1e-10


def test_steps_are_bitwise_deterministic():
    m1, m2 = model(), model()
    a = b = smooth_state(D16, amp=0.1)
    for _ in range(5):
        a = step(m1, a, 0.01)
        b = step(m2, b, 0.01)
    assert np.array_equal(a.v.u1, b.v.u1) and np.array_equal(a.Z, b.Z)


@pytest.mark.parametrize("method", ["direct", "iterative"])
def test_backends_give_same_step(method):
    opts = EllipticOptions(method=method, tol=1e-11)
    mf = model()
    mo = Model(D16, mf.params, mf.theta_B, opts)
    s = smooth_state(D16, amp=0.1)
    a, b = step(mf, s, 0.01), step(mo, s, 0.01)
    assert (a.v - b.v).max_abs() < 1e-8 and np.abs(a.Z - b.Z).max() < 1e-8


def test_laplacian_consistency_of_model_boundary():
    m = model(tb="linear:-1,2,0,0")
    # harmonic extension of linear data is the linear function itself
    X, Y, Z = D16.centers3()
    assert np.allclose(m.theta_B_hat, -1 + 2 * X, atol=1e-11)
    assert np.abs(laplacian_dirichlet_3d(m.theta_B_hat, D16, m.boundary)).max() < 1e-9
