import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_divfree, random_velocity
from robsim.grid import (
    BoundaryTrace,
    DomainSpec,
    VelocityField,
    boundary_trace,
    divergence_h,
    domain_average,
    gradient_h,
    h1_semi_sq_scalar,
    h1_semi_sq_velocity,
    inner_cells,
    inner_faces,
    laplacian_dirichlet_3d,
    laplacian_neumann_2d,
    laplacian_velocity,
    norms,
    vertical_average,
    w12_norm,
)

dims = st.integers(4, 10)


def test_domain_spacing_and_volume():
    d = DomainSpec(2.0, 3.0, 8, 12, 4)
    assert (d.dx, d.dy, d.dz) == (0.25, 0.25, 0.25)
    assert d.volume == pytest.approx(6.0)
    assert d.cell_volume == pytest.approx(0.25**3)


def test_domain_rejects_small_grids():
    with pytest.raises(ValueError):
        DomainSpec(1.0, 1.0, 3, 8, 8)
    with pytest.raises(ValueError):
        DomainSpec(-1.0, 1.0, 8, 8, 8)


def test_vertical_average_of_x3_squared_matches_midpoint_rule():
    # midpoint rule: (1/nz) sum ((k+1/2)/nz)^2 = 1/3 - dz^2/12
    d = DomainSpec(1.0, 1.0, 4, 4, 8)
    X, Y, Z = d.centers3()
    avg = vertical_average(Z**2)
    oracle = sum(((k + 0.5) / 8) ** 2 for k in range(8)) / 8
    assert oracle == pytest.approx(0.33203125, abs=1e-15)
    assert np.allclose(avg, oracle, atol=1e-15)


def test_vertical_average_of_constant():
    d = DomainSpec(1.0, 1.0, 4, 5, 6)
    assert np.allclose(vertical_average(np.full(d.shape3, 3.25)), 3.25)


@given(st.integers(0, 2**32 - 1))
def test_vertical_average_shapes_and_linearity(seed):
    r = np.random.default_rng(seed)
    f, g = r.standard_normal((2, 5, 6, 7))
    a, b = r.standard_normal(2)
    lhs = vertical_average(a * f + b * g)
    assert lhs.shape == (5, 6)
    assert np.allclose(lhs, a * vertical_average(f) + b * vertical_average(g), atol=1e-13)


def test_domain_average_uniform_grid():
    f = np.arange(4 * 4 * 4, dtype=float).reshape(4, 4, 4)
    assert domain_average(f) == pytest.approx(f.sum() / 64)


@given(dims, dims, st.integers(0, 2**32 - 1))
def test_streamfunction_velocity_is_discretely_divergence_free(nx, ny, seed):
    d = DomainSpec(1.3, 0.7, nx, ny, 4)
    v = random_divfree(d, np.random.default_rng(seed))
    assert np.abs(divergence_h(v, d)).max() < 1e-10 * max(1.0, v.max_abs() / d.dx)
    assert np.all(v.u1[[0, -1]] == 0) and np.all(v.u2[:, [0, -1]] == 0)


@given(dims, dims, st.integers(0, 2**32 - 1))
def test_gradient_is_minus_adjoint_of_divergence(nx, ny, seed):
    r = np.random.default_rng(seed)
    d = DomainSpec(1.0, 2.0, nx, ny, 4)
    v = random_velocity(d, r)
    p = r.standard_normal(d.shape2)
    lhs = np.sum(divergence_h(v, d) * p) * d.dx * d.dy
    rhs = -inner_faces(v, gradient_h(p, d), d)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_divergence_of_linear_field():
    d = DomainSpec(1.0, 1.0, 6, 6, 4)
    v = VelocityField.from_functions(d, lambda x, y: 2 * x + 0 * y, lambda x, y: -3 * y + 0 * x)
    v.u1[[0, -1]] = 2 * d.xf()[[0, -1], None]
    v.u2[:, [0, -1]] = -3 * d.yf()[None, [0, -1]]
    assert np.allclose(divergence_h(v, d), -1.0)


def test_neumann_laplacian_of_quadratic_interior():
    d = DomainSpec(1.0, 1.0, 8, 8, 4)
    X, Y = d.centers2()
    lap = laplacian_neumann_2d(X**2 + Y**2, d)
    assert np.allclose(lap[1:-1, 1:-1], 4.0, atol=1e-11)


def test_ghost_trace_recovers_boundary_values(rng):
    d = DomainSpec(1.0, 1.0, 5, 6, 4)
    tr = BoundaryTrace.from_function(d, lambda x, y, z: 1 + x - 2 * y + 3 * z)
    f = rng.standard_normal(d.shape3)
    back = boundary_trace(f, tr)
    for a, b in zip(back.faces(), tr.faces()):
        assert np.allclose(a, b, atol=1e-14)


def test_dirichlet_laplacian_dense_oracle():
    # oracle: assemble the 7-point operator with explicit ghost reflection
    d = DomainSpec(1.0, 1.0, 4, 5, 4)
    n = d.nx * d.ny * d.nz
    h = (d.dx, d.dy, d.dz)
    A = np.zeros((n, n))
    idx = lambda i, j, k: (k * d.ny + j) * d.nx + i  # noqa: E731
    for k in range(d.nz):
        for j in range(d.ny):
            for i in range(d.nx):
                r = idx(i, j, k)
                for ax, (p, q) in enumerate([(i, d.nx), (j, d.ny), (k, d.nz)]):
                    A[r, r] -= 2 / h[ax] ** 2
                    for s in (-1, 1):
                        m = p + s
                        if 0 <= m < q:
                            ijk = [i, j, k]
                            ijk[ax] = m
                            A[r, idx(*ijk)] += 1 / h[ax] ** 2
                        else:
                            A[r, r] -= 1 / h[ax] ** 2
    f = np.random.default_rng(3).standard_normal(d.shape3)
    got = laplacian_dirichlet_3d(f, d).ravel(order="F")
    assert np.allclose(got, A @ f.ravel(order="F"), atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_dirichlet_h1_matches_laplacian_by_parts(seed):
    r = np.random.default_rng(seed)
    d = DomainSpec(1.0, 1.5, 6, 5, 4)
    f = r.standard_normal(d.shape3)
    lhs = -inner_cells(f, laplacian_dirichlet_3d(f, d), d)
    assert lhs == pytest.approx(h1_semi_sq_scalar(f, d, bc="zero"), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_velocity_h1_matches_laplacian_by_parts(seed):
    r = np.random.default_rng(seed)
    d = DomainSpec(1.0, 0.8, 7, 6, 4)
    v = random_velocity(d, r)
    lhs = -inner_faces(v, laplacian_velocity(v, d), d)
    assert lhs == pytest.approx(h1_semi_sq_velocity(v, d), rel=1e-12)


def test_norms_of_constant_field():
    d = DomainSpec(2.0, 1.0, 4, 4, 4)
    f = np.full(d.shape3, -3.0)
    n = norms(f, d)
    assert n["l2"] == pytest.approx(3.0 * np.sqrt(d.volume))
    assert n["linf"] == 3.0
    assert n["h1_semi"] == 0.0


def test_norms_h1_honours_boundary_trace():
    d = DomainSpec(1.0, 1.0, 4, 4, 4)
    f = np.full(d.shape3, 2.0)
    assert norms(f, d, bc=BoundaryTrace.constant(d, 2.0))["h1_semi"] == pytest.approx(0.0, abs=1e-14)
    assert norms(f, d, bc="zero")["h1_semi"] > 0


def test_h1_semi_converges_for_smooth_function():
    # |grad sin(pi x) sin(pi y) sin(pi z)|^2 integrates to 3 pi^2 / 8
    vals = []
    for n in (8, 16, 32):
        d = DomainSpec(1.0, 1.0, n, n, n)
        X, Y, Z = d.centers3()
        f = np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)
        vals.append(abs(h1_semi_sq_scalar(f, d, bc="zero") - 3 * np.pi**2 / 8))
    assert vals[2] < vals[1] < vals[0]
    assert vals[2] < 0.02


def test_w12_norm_is_hypot_of_l2_and_h1():
    d = DomainSpec(1.0, 1.0, 6, 6, 4)
    v = random_divfree(d, np.random.default_rng(1))
    n = norms(v, d)
    assert w12_norm(v, d) == pytest.approx(np.hypot(n["l2"], n["h1_semi"]))


def test_velocity_arithmetic():
    d = DomainSpec(1.0, 1.0, 4, 4, 4)
    v = random_velocity(d, np.random.default_rng(0))
    w = 2 * v - v
    assert np.array_equal(w.u1, v.u1) and np.array_equal((-v).u2, -v.u2)
    assert v.copy() is not v


def test_domain_average_of_centred_x3_vanishes():
    d = DomainSpec(1.5, 0.5, 6, 4, 8)
    _, _, Z = d.centers3()
    assert abs(domain_average(Z - 0.5)) <= 1e-15


@given(st.integers(0, 2**32 - 1))
def test_domain_average_matches_naive_sum(seed):
    f = np.random.default_rng(seed).standard_normal((5, 4, 6))
    naive = 0.0
    for x in f.ravel():
        naive += x
    assert domain_average(f) == pytest.approx(naive / f.size, abs=1e-14)


def test_norms_of_zero_field():
    d = DomainSpec(1.0, 1.0, 4, 4, 4)
    n = norms(np.zeros(d.shape3), d, bc="zero")
    assert n == {k: 0.0 for k in n}


@pytest.mark.parametrize("nz", [4, 8, 16, 32])
def test_l2_norm_of_vertical_sine(nz):
    # |sin(pi x3)|^2 integrates to Lx Ly / 2; the midpoint sum of sin^2 is exact
    # by discrete orthogonality, so the O(dz^2) bound holds with zero constant
    d = DomainSpec(2.0, 1.0, 4, 4, nz)
    _, _, Z = d.centers3()
    assert norms(np.sin(np.pi * Z), d)["l2"] ** 2 == pytest.approx(1.0, abs=1e-13)


@given(st.integers(0, 2**32 - 1), st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_norms_are_absolutely_homogeneous(seed, c):
    d = DomainSpec(1.0, 1.0, 5, 4, 4)
    f = np.random.default_rng(seed).standard_normal(d.shape3)
    a, b = norms(f, d, bc="zero"), norms(c * f, d, bc="zero")
    for k in a:
        assert b[k] == pytest.approx(abs(c) * a[k], rel=1e-12, abs=1e-300)


def test_gradient_of_constant_and_divergence_of_zero():
    d = DomainSpec(1.0, 1.0, 5, 4, 4)
    g = gradient_h(np.full((5, 4), 7.0), d)
    assert g.max_abs() == 0.0
    assert np.all(divergence_h(VelocityField.zeros(d), d) == 0.0)
