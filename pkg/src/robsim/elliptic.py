"""Linear solves on the staggered grid.

Three backends share one discrete operator set:

``fft``
    Fast diagonalisation with sine/cosine transforms. The second-order
    operators on a uniform box are diagonal in the DST-I (node Dirichlet),
    DST-II (cell Dirichlet) and DCT-II (cell Neumann) bases, so this is an
    exact direct solver. Default.
``direct``
    Sparse LU of the assembled matrix (cached per operator).
``iterative``
    Jacobi-preconditioned conjugate gradients on the (negated, SPD) operator.

The Dirichlet operators use the ghost rule of :mod:`robsim.grid`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IncompatibleRHS, NonConvergence, SingularCorrection, ValidationError
from .grid import (
    BoundaryTrace,
    DomainSpec,
    VelocityField,
    domain_average,
    laplacian_dirichlet_3d,
    laplacian_neumann_2d,
    laplacian_velocity,
)

METHODS = ("fft", "direct", "iterative")


@dataclass(frozen=True)
class EllipticOptions:
    tol: float = 1e-10
    max_iter: int = 2000
    method: str = "fft"
    verify: bool = False

    def __post_init__(self):
        if not (0 < self.tol < 1e-6):
            raise ValidationError("elliptic.tol", "must satisfy 0 < tol < 1e-6")
        if self.max_iter < 1:
            raise ValidationError("elliptic.max_iter", "must be >= 1")
        if self.method not in METHODS:
            raise ValidationError("elliptic.method", f"must be one of {METHODS}")


DEFAULT_OPTIONS = EllipticOptions()


def workers() -> int:
    """Worker count for transforms, from ``ROBSIM_THREADS`` (default 1)."""
    raw = os.environ.get("ROBSIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError("ROBSIM_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise ValidationError("ROBSIM_THREADS", "must be a positive integer")
    return n


# -- 1-D eigenvalues and matrices ---------------------------------------------------

def _eig_cell_dirichlet(n, h):
    return -4.0 / h**2 * np.sin(np.pi * np.arange(1, n + 1) / (2 * n)) ** 2


def _eig_cell_neumann(n, h):
    return -4.0 / h**2 * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2


def _eig_node_dirichlet(n, h):
    # n intervals, n - 1 interior unknowns
    return -4.0 / h**2 * np.sin(np.pi * np.arange(1, n) / (2 * n)) ** 2


def _mat_1d(n, h, kind):
    main = -2.0 * np.ones(n)
    if kind == "cell_dirichlet":
        main[0] = main[-1] = -3.0
    elif kind == "cell_neumann":
        main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _kron_sum(mats):
    """Sum of 1-D operators acting on Fortran-ordered (axis 0 fastest) vectors."""
    sizes = [m.shape[0] for m in mats]
    total = None
    for ax, m in enumerate(mats):
        left = sp.identity(int(np.prod(sizes[ax + 1:])))
        right = sp.identity(int(np.prod(sizes[:ax])))
        term = sp.kron(sp.kron(left, m), right, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


_FACTOR_CACHE: dict = {}


def _solve_matrix(key, build, rhs, opts: EllipticOptions, spd_sign=1.0, singular=False):
    """Solve ``M x = rhs`` with the sparse backends; ``rhs`` is flattened F-order."""
    shape = rhs.shape
    b = rhs.ravel(order="F")
    if opts.method == "direct":
        lu = _FACTOR_CACHE.get(key)
        if lu is None:
            M = build()
            if singular:
                # pin the constant mode by replacing one equation with x[0] = 0
                M = M.tolil()
                M[0, :] = 0.0
                M[0, 0] = 1.0
                M = M.tocsc()
            lu = spla.splu(sp.csc_matrix(M))
            _FACTOR_CACHE[key] = lu
        if singular:
            b = b.copy()
            b[0] = 0.0
        x = lu.solve(b)
        if singular:
            x -= x.mean()
        return x.reshape(shape, order="F")
    M = _FACTOR_CACHE.get(("mat",) + key)
    if M is None:
        M = (spd_sign * build()).tocsr()
        _FACTOR_CACHE[("mat",) + key] = M
    d = M.diagonal()
    pre = spla.LinearOperator(M.shape, matvec=lambda r: r / d)
    bb = spd_sign * b
    if not np.any(bb):
        return np.zeros(shape)
    x, info = spla.cg(M, bb, rtol=opts.tol * 1e-2, atol=0.0, maxiter=opts.max_iter, M=pre)
    res = np.linalg.norm(M @ x - bb) / np.linalg.norm(bb)
    if info != 0 or res > opts.tol:
        raise NonConvergence(f"CG stopped after max_iter={opts.max_iter} with relative residual {res:.3e}", res)
    if singular:
        x -= x.mean()
    return x.reshape(shape, order="F")


def _relative(res, ref):
    scale = np.abs(ref).max() if np.size(ref) else 0.0
    r = np.abs(res).max() if np.size(res) else 0.0
    return r / scale if scale > 0 else r


def _check(opts, residual, rhs, what):
    if opts.verify:
        rel = _relative(residual, rhs)
        if rel > opts.tol:
            raise NonConvergence(f"{what}: residual {rel:.3e} exceeds tol {opts.tol:.1e}", rel)


# -- Dirichlet problems on cell centres (3-D) ------------------------------------------

def _dirichlet_3d(a, b, rhs, dom: DomainSpec, opts: EllipticOptions):
    """Solve ``(a I + b Lap_D) x = rhs`` with homogeneous Dirichlet walls."""
    if opts.method == "fft":
        lam = (
            _eig_cell_dirichlet(dom.nx, dom.dx)[:, None, None]
            + _eig_cell_dirichlet(dom.ny, dom.dy)[None, :, None]
            + _eig_cell_dirichlet(dom.nz, dom.dz)[None, None, :]
        )
        w = workers()
        hat = sfft.dstn(rhs, type=2, norm="ortho", workers=w)
        return sfft.idstn(hat / (a + b * lam), type=2, norm="ortho", workers=w)
    key = ("d3", dom, a, b, opts.method)

    def build():
        L = _kron_sum([
            _mat_1d(dom.nx, dom.dx, "cell_dirichlet"),
            _mat_1d(dom.ny, dom.dy, "cell_dirichlet"),
            _mat_1d(dom.nz, dom.dz, "cell_dirichlet"),
        ])
        return a * sp.identity(L.shape[0], format="csr") + b * L

    sign = 1.0 if b <= 0 else -1.0
    return _solve_matrix(key, build, rhs, opts, spd_sign=sign)


def solve_helmholtz_dirichlet_3d(gamma: float, rhs: np.ndarray, dom: DomainSpec,
                                 opts: EllipticOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Solve ``(I - gamma Lap) z = rhs`` with ``z = 0`` on the boundary."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return np.array(rhs, dtype=float, copy=True)
    z = _dirichlet_3d(1.0, -gamma, rhs, dom, opts)
    if opts.verify:
        _check(opts, z - gamma * laplacian_dirichlet_3d(z, dom) - rhs, rhs, "helmholtz_3d")
    return z


def harmonic_extension(boundary_fn, dom: DomainSpec, opts: EllipticOptions = DEFAULT_OPTIONS):
    """Discrete harmonic function with the given Dirichlet data.

    ``boundary_fn`` is either a callable ``f(x, y, z)`` evaluated at boundary
    face centroids or a ready :class:`BoundaryTrace`. Returns
    ``(field, trace)``.
    """
    trace = boundary_fn if isinstance(boundary_fn, BoundaryTrace) else BoundaryTrace.from_function(dom, boundary_fn)
    # boundary contribution of the ghost rule: Lap_D(f; trace) = Lap_D0(f) + src
    src = laplacian_dirichlet_3d(np.zeros(dom.shape3), dom, trace)
    field = _dirichlet_3d(0.0, 1.0, -src, dom, opts)
    if opts.verify:
        res = laplacian_dirichlet_3d(field, dom, trace)
        scale = max(trace.linf() / min(dom.dx, dom.dy, dom.dz) ** 2, 1e-300)
        if np.abs(res).max() / scale > opts.tol:
            raise NonConvergence("harmonic_extension residual too large", np.abs(res).max() / scale)
    return field, trace


class NonlocalHelmholtz:
    """Solver for ``(I - gamma Lap_D) z - c avg(z) 1 = rhs``, ``c = alpha/(1+alpha)``.

    The rank-one term is removed by the Sherman-Morrison formula, which needs
    the Helmholtz solve of the constant field; that solve is cached per gamma.
    """

    def __init__(self, dom: DomainSpec, opts: EllipticOptions = DEFAULT_OPTIONS):
        self.dom = dom
        self.opts = opts
        self._q = {}

    def unit_response(self, gamma: float) -> np.ndarray:
        q = self._q.get(gamma)
        if q is None:
            q = solve_helmholtz_dirichlet_3d(gamma, np.ones(self.dom.shape3), self.dom, self.opts)
            self._q[gamma] = q
        return q

    def solve(self, gamma: float, alpha: float, rhs: np.ndarray) -> np.ndarray:
        if alpha == -1:
            raise ValueError("alpha = -1 makes the nonlocal operator undefined")
        y = solve_helmholtz_dirichlet_3d(gamma, rhs, self.dom, self.opts)
        if alpha == 0:
            return y
        c = alpha / (1.0 + alpha)
        q = self.unit_response(gamma)
        den = 1.0 - c * domain_average(q)
        if abs(den) < 1e-12:
            raise SingularCorrection(f"Sherman-Morrison denominator {den:.3e} vanishes")
        z = y + (c * domain_average(y) / den) * q
        if self.opts.verify:
            res = z - gamma * laplacian_dirichlet_3d(z, self.dom) - c * domain_average(z) - rhs
            _check(self.opts, res, rhs, "nonlocal_helmholtz")
        return z


def solve_nonlocal_helmholtz(gamma: float, alpha: float, rhs: np.ndarray, dom: DomainSpec,
                             opts: EllipticOptions = DEFAULT_OPTIONS) -> np.ndarray:
    return NonlocalHelmholtz(dom, opts).solve(gamma, alpha, rhs)


# -- velocity components (2-D) -----------------------------------------------------------

def _helmholtz_component(gamma, r, n_node, h_node, n_cell, h_cell, node_axis, opts, tag):
    """``(I - gamma Lap) x = r`` for one staggered component.

    Along ``node_axis`` the unknowns sit on interior nodes (walls are grid
    points); along the other axis they are cell-centred with a wall between
    the edge cell and its ghost.
    """
    if opts.method == "fft":
        lam_n = _eig_node_dirichlet(n_node, h_node)
        lam_c = _eig_cell_dirichlet(n_cell, h_cell)
        lam = lam_n[:, None] + lam_c[None, :] if node_axis == 0 else lam_c[:, None] + lam_n[None, :]
        w = workers()
        cell_axis = 1 - node_axis
        hat = sfft.dst(r, type=1, axis=node_axis, norm="ortho", workers=w)
        hat = sfft.dst(hat, type=2, axis=cell_axis, norm="ortho", workers=w)
        hat /= 1.0 - gamma * lam
        x = sfft.idst(hat, type=2, axis=cell_axis, norm="ortho", workers=w)
        return sfft.idst(x, type=1, axis=node_axis, norm="ortho", workers=w)
    key = ("v2", tag, n_node, h_node, n_cell, h_cell, gamma, opts.method)

    def build():
        mn = _mat_1d(n_node - 1, h_node, "node")
        mc = _mat_1d(n_cell, h_cell, "cell_dirichlet")
        L = _kron_sum([mn, mc] if node_axis == 0 else [mc, mn])
        return sp.identity(L.shape[0], format="csr") - gamma * L

    return _solve_matrix(key, build, r, opts)


def solve_helmholtz_dirichlet_2d(gamma: float, rhs: VelocityField, dom: DomainSpec,
                                 opts: EllipticOptions = DEFAULT_OPTIONS) -> VelocityField:
    """``(I - gamma Lap_h) v = rhs`` per component, no-slip walls; wall faces of rhs ignored."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    out = VelocityField.zeros(dom)
    if gamma == 0:
        out.u1[1:-1] = rhs.u1[1:-1]
        out.u2[:, 1:-1] = rhs.u2[:, 1:-1]
        return out
    out.u1[1:-1] = _helmholtz_component(gamma, rhs.u1[1:-1], dom.nx, dom.dx, dom.ny, dom.dy, 0, opts, "u1")
    out.u2[:, 1:-1] = _helmholtz_component(gamma, rhs.u2[:, 1:-1], dom.ny, dom.dy, dom.nx, dom.dx, 1, opts, "u2")
    if opts.verify:
        lap = laplacian_velocity(out, dom)
        r = out - gamma * lap - rhs
        _check(opts, np.concatenate([r.u1[1:-1].ravel(), r.u2[:, 1:-1].ravel()]),
               np.concatenate([rhs.u1[1:-1].ravel(), rhs.u2[:, 1:-1].ravel()]), "helmholtz_2d")
    return out


# -- pressure Poisson (2-D, Neumann) ------------------------------------------------------

def solve_poisson_h(rhs: np.ndarray, dom: DomainSpec, opts: EllipticOptions = DEFAULT_OPTIONS,
                    scale: float | None = None) -> np.ndarray:
    """Zero-mean ``p`` with ``Lap_h p = rhs`` and homogeneous Neumann walls.

    ``scale`` is the magnitude against which the mean of ``rhs`` is judged
    (default ``max|rhs|``); callers that know the size of the terms that
    cancel in the mean should pass it.
    """
    if scale is None:
        scale = float(np.abs(rhs).max())
    if scale == 0.0:
        return np.zeros_like(rhs, dtype=float)
    mean = float(rhs.mean())
    if abs(mean) > opts.tol * scale:
        raise IncompatibleRHS(f"Neumann problem needs zero-mean data, mean={mean:.3e}")
    rhs = rhs - mean
    if opts.method == "fft":
        lam = _eig_cell_neumann(dom.nx, dom.dx)[:, None] + _eig_cell_neumann(dom.ny, dom.dy)[None, :]
        lam[0, 0] = 1.0
        w = workers()
        hat = sfft.dctn(rhs, type=2, norm="ortho", workers=w)
        hat /= lam
        hat[0, 0] = 0.0
        p = sfft.idctn(hat, type=2, norm="ortho", workers=w)
    else:
        key = ("p2", dom.nx, dom.dx, dom.ny, dom.dy, opts.method)

        def build():
            return _kron_sum([_mat_1d(dom.nx, dom.dx, "cell_neumann"), _mat_1d(dom.ny, dom.dy, "cell_neumann")])

        p = _solve_matrix(key, build, rhs, opts, spd_sign=-1.0, singular=True)
    if opts.verify:
        _check(opts, laplacian_neumann_2d(p, dom) - rhs, rhs, "poisson_h")
    return p
