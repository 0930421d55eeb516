"""Staggered (MAC) grid on the box (0,Lx) x (0,Ly) x (0,1).

Array layout
------------
Cell-centred 3-D scalars have shape ``(nx, ny, nz)`` and 2-D scalars
``(nx, ny)``. The horizontal velocity lives on cell faces: ``u1`` has shape
``(nx + 1, ny)`` (x-normal faces, ``u1[0]`` and ``u1[nx]`` on the walls) and
``u2`` has shape ``(nx, ny + 1)``. Flattening any of these in Fortran order
gives the file index order ``(k*ny + j)*nx + i``.

Scalars with a Dirichlet condition are extended by a ghost layer whose value
makes the face average equal to the prescribed trace, so the trace of a
homogeneous field is ``(edge + ghost)/2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DomainSpec:
    Lx: float
    Ly: float
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if int(getattr(self, name)) < 4:
                raise ValueError(f"{name} must be >= 4")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("Lx and Ly must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    @property
    def dz(self) -> float:
        return 1.0 / self.nz

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def volume(self) -> float:
        return self.Lx * self.Ly

    @property
    def shape3(self):
        return (self.nx, self.ny, self.nz)

    @property
    def shape2(self):
        return (self.nx, self.ny)

    def xc(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    def yc(self):
        return (np.arange(self.ny) + 0.5) * self.dy

    def zc(self):
        return (np.arange(self.nz) + 0.5) * self.dz

    def xf(self):
        return np.arange(self.nx + 1) * self.dx

    def yf(self):
        return np.arange(self.ny + 1) * self.dy

    def centers3(self):
        return np.meshgrid(self.xc(), self.yc(), self.zc(), indexing="ij")

    def centers2(self):
        return np.meshgrid(self.xc(), self.yc(), indexing="ij")

    def u1_points(self):
        return np.meshgrid(self.xf(), self.yc(), indexing="ij")

    def u2_points(self):
        return np.meshgrid(self.xc(), self.yf(), indexing="ij")


@dataclass
class VelocityField:
    """Face-staggered horizontal velocity; wall faces hold exact zeros."""

    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def zeros(cls, dom: DomainSpec) -> "VelocityField":
        return cls(np.zeros((dom.nx + 1, dom.ny)), np.zeros((dom.nx, dom.ny + 1)))

    @classmethod
    def from_functions(cls, dom, f1, f2) -> "VelocityField":
        """Sample ``f1(x, y)``, ``f2(x, y)`` at face centroids, zeroing walls."""
        v = cls(f1(*dom.u1_points()).astype(float), f2(*dom.u2_points()).astype(float))
        v.enforce_walls()
        return v

    @classmethod
    def from_streamfunction(cls, dom, psi) -> "VelocityField":
        """Discretely divergence-free field from nodal values ``psi(x, y)``.

        ``u1 = d(psi)/dy`` and ``u2 = -d(psi)/dx``; ``psi`` is forced to zero
        on the walls so the normal velocity vanishes there.
        """
        X, Y = np.meshgrid(dom.xf(), dom.yf(), indexing="ij")
        p = np.asarray(psi(X, Y), dtype=float)
        p[0, :] = p[-1, :] = 0.0
        p[:, 0] = p[:, -1] = 0.0
        u1 = (p[:, 1:] - p[:, :-1]) / dom.dy
        u2 = -(p[1:, :] - p[:-1, :]) / dom.dx
        return cls(u1, u2)

    def enforce_walls(self):
        self.u1[0, :] = 0.0
        self.u1[-1, :] = 0.0
        self.u2[:, 0] = 0.0
        self.u2[:, -1] = 0.0
        return self

    def copy(self) -> "VelocityField":
        return VelocityField(self.u1.copy(), self.u2.copy())

    def __add__(self, other):
        return VelocityField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other):
        return VelocityField(self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, c):
        return VelocityField(c * self.u1, c * self.u2)

    __rmul__ = __mul__

    def __neg__(self):
        return VelocityField(-self.u1, -self.u2)

    def max_abs(self) -> float:
        return max(np.abs(self.u1).max(), np.abs(self.u2).max())

    def cell_centered(self):
        """Average face values to cell centres, returns ``(uc, vc)``."""
        return 0.5 * (self.u1[1:] + self.u1[:-1]), 0.5 * (self.u2[:, 1:] + self.u2[:, :-1])


@dataclass
class ScalarField:
    """A cell-centred array tagged with the symbol it holds (``Z``, ``Theta``...)."""

    values: np.ndarray
    name: str = "field"
    time: float = 0.0
    meta: dict = field(default_factory=dict)


# ScalarField3D and ScalarField2D differ only by array rank.
ScalarField3D = ScalarField
ScalarField2D = ScalarField


@dataclass
class BoundaryTrace:
    """Values at the centroids of the six families of boundary faces."""

    west: np.ndarray    # x = 0,  (ny, nz)
    east: np.ndarray    # x = Lx, (ny, nz)
    south: np.ndarray   # y = 0,  (nx, nz)
    north: np.ndarray   # y = Ly, (nx, nz)
    bottom: np.ndarray  # z = 0,  (nx, ny)
    top: np.ndarray     # z = 1,  (nx, ny)

    @classmethod
    def from_function(cls, dom: DomainSpec, fn) -> "BoundaryTrace":
        xc, yc, zc = dom.xc(), dom.yc(), dom.zc()
        Y, Zy = np.meshgrid(yc, zc, indexing="ij")
        X, Zx = np.meshgrid(xc, zc, indexing="ij")
        Xz, Yz = np.meshgrid(xc, yc, indexing="ij")

        def ev(x, y, z):
            return np.broadcast_to(np.asarray(fn(x, y, z), dtype=float), np.broadcast(x, y, z).shape).copy()

        return cls(
            west=ev(np.zeros_like(Y), Y, Zy),
            east=ev(np.full_like(Y, dom.Lx), Y, Zy),
            south=ev(X, np.zeros_like(X), Zx),
            north=ev(X, np.full_like(X, dom.Ly), Zx),
            bottom=ev(Xz, Yz, np.zeros_like(Xz)),
            top=ev(Xz, Yz, np.ones_like(Xz)),
        )

    @classmethod
    def constant(cls, dom: DomainSpec, c: float) -> "BoundaryTrace":
        return cls.from_function(dom, lambda x, y, z: c + 0.0 * x)

    def faces(self):
        return (self.west, self.east, self.south, self.north, self.bottom, self.top)

    def shift(self, c: float) -> "BoundaryTrace":
        return BoundaryTrace(*(f + c for f in self.faces()))

    def linf(self) -> float:
        return max(np.abs(f).max() for f in self.faces())

    def max(self) -> float:
        return max(f.max() for f in self.faces())

    def min(self) -> float:
        return min(f.min() for f in self.faces())


def with_ghosts(f: np.ndarray, trace: BoundaryTrace | None = None) -> np.ndarray:
    """Pad a cell-centred 3-D array with Dirichlet ghost cells.

    The ghost value is ``2*trace - edge``; ``trace=None`` means homogeneous data.
    Edge and corner ghosts of the padded array are left at zero (never used).
    """
    g = np.zeros(tuple(n + 2 for n in f.shape))
    g[1:-1, 1:-1, 1:-1] = f
    t = trace.faces() if trace is not None else (0.0,) * 6
    g[0, 1:-1, 1:-1] = 2.0 * t[0] - f[0]
    g[-1, 1:-1, 1:-1] = 2.0 * t[1] - f[-1]
    g[1:-1, 0, 1:-1] = 2.0 * t[2] - f[:, 0]
    g[1:-1, -1, 1:-1] = 2.0 * t[3] - f[:, -1]
    g[1:-1, 1:-1, 0] = 2.0 * t[4] - f[:, :, 0]
    g[1:-1, 1:-1, -1] = 2.0 * t[5] - f[:, :, -1]
    return g


def boundary_trace(f: np.ndarray, trace: BoundaryTrace | None = None) -> BoundaryTrace:
    """Recover face-centroid values as the mean of edge and ghost cells."""
    g = with_ghosts(f, trace)
    return BoundaryTrace(
        west=0.5 * (g[0, 1:-1, 1:-1] + g[1, 1:-1, 1:-1]),
        east=0.5 * (g[-1, 1:-1, 1:-1] + g[-2, 1:-1, 1:-1]),
        south=0.5 * (g[1:-1, 0, 1:-1] + g[1:-1, 1, 1:-1]),
        north=0.5 * (g[1:-1, -1, 1:-1] + g[1:-1, -2, 1:-1]),
        bottom=0.5 * (g[1:-1, 1:-1, 0] + g[1:-1, 1:-1, 1]),
        top=0.5 * (g[1:-1, 1:-1, -1] + g[1:-1, 1:-1, -2]),
    )


# -- averages -----------------------------------------------------------------

def vertical_average(f: np.ndarray) -> np.ndarray:
    """Midpoint rule for the integral over x3 in (0, 1)."""
    return f.mean(axis=2)


def domain_average(f: np.ndarray) -> float:
    return float(f.mean())


# -- staggered differential operators -------------------------------------------

def divergence_h(v: VelocityField, dom: DomainSpec) -> np.ndarray:
    return (v.u1[1:] - v.u1[:-1]) / dom.dx + (v.u2[:, 1:] - v.u2[:, :-1]) / dom.dy


def gradient_h(p: np.ndarray, dom: DomainSpec) -> VelocityField:
    """Face-valued gradient of a cell-centred 2-D field; wall faces are zero."""
    nx, ny = p.shape
    gx = np.zeros((nx + 1, ny))
    gy = np.zeros((nx, ny + 1))
    gx[1:-1] = (p[1:] - p[:-1]) / dom.dx
    gy[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / dom.dy
    return VelocityField(gx, gy)


def laplacian_neumann_2d(p: np.ndarray, dom: DomainSpec) -> np.ndarray:
    return divergence_h(gradient_h(p, dom), dom)


def laplacian_dirichlet_3d(f: np.ndarray, dom: DomainSpec, trace: BoundaryTrace | None = None) -> np.ndarray:
    g = with_ghosts(f, trace)
    c = g[1:-1, 1:-1, 1:-1]
    return (
        (g[2:, 1:-1, 1:-1] - 2 * c + g[:-2, 1:-1, 1:-1]) / dom.dx**2
        + (g[1:-1, 2:, 1:-1] - 2 * c + g[1:-1, :-2, 1:-1]) / dom.dy**2
        + (g[1:-1, 1:-1, 2:] - 2 * c + g[1:-1, 1:-1, :-2]) / dom.dz**2
    )


def laplacian_velocity(v: VelocityField, dom: DomainSpec) -> VelocityField:
    """Component-wise Laplacian with no-slip walls (ghost reflection tangentially)."""
    dx2, dy2 = dom.dx**2, dom.dy**2
    u = v.u1
    lu = np.zeros_like(u)
    lu[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx2
    up = np.concatenate([-u[:, :1], u, -u[:, -1:]], axis=1)
    lu[1:-1] += (up[1:-1, 2:] - 2 * up[1:-1, 1:-1] + up[1:-1, :-2]) / dy2
    w = v.u2
    lw = np.zeros_like(w)
    lw[:, 1:-1] = (w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / dy2
    wp = np.concatenate([-w[:1], w, -w[-1:]], axis=0)
    lw[:, 1:-1] += (wp[2:, 1:-1] - 2 * wp[1:-1, 1:-1] + wp[:-2, 1:-1]) / dx2
    return VelocityField(lu, lw)


# -- inner products and norms ------------------------------------------------------

def inner_faces(a: VelocityField, b: VelocityField, dom: DomainSpec) -> float:
    return float((np.sum(a.u1 * b.u1) + np.sum(a.u2 * b.u2)) * dom.dx * dom.dy)


def inner_cells(p: np.ndarray, q: np.ndarray, dom: DomainSpec) -> float:
    w = dom.dx * dom.dy * (dom.dz if p.ndim == 3 else 1.0)
    return float(np.sum(p * q) * w)


def _grad_sq_cc(f, axis, h, w, bc, lo=0.0, hi=0.0):
    """Sum of squared differences along ``axis`` times the dual cell weight.

    Interior differences get weight ``w`` (cell volume); with ``bc`` set the two
    half-cells next to the boundary contribute ``(f_edge - trace)/(h/2)`` with
    half weight. ``lo``/``hi`` are the trace values on the two ends.
    """
    d = np.diff(f, axis=axis) / h
    s = np.sum(d * d) * w
    if bc:
        first = np.take(f, 0, axis=axis) - lo
        last = np.take(f, -1, axis=axis) - hi
        s += (np.sum(first * first) + np.sum(last * last)) * (2.0 / h) ** 2 * 0.5 * w
    return s


def h1_semi_sq_scalar(f: np.ndarray, dom: DomainSpec, bc=None) -> float:
    """Squared discrete ``||grad f||_L2`` of a cell-centred field.

    ``bc=None`` uses interior differences only (zero-flux walls); ``bc="zero"``
    adds homogeneous Dirichlet half-cells; a :class:`BoundaryTrace` uses those
    face values as the Dirichlet data.
    """
    hs = (dom.dx, dom.dy, dom.dz) if f.ndim == 3 else (dom.dx, dom.dy)
    w = float(np.prod(hs))
    use = bc is not None
    tr = bc if isinstance(bc, BoundaryTrace) else None
    total = 0.0
    for axis, h in enumerate(hs):
        if tr is not None:
            lo, hi = [(tr.west, tr.east), (tr.south, tr.north), (tr.bottom, tr.top)][axis]
        else:
            lo = hi = 0.0
        total += _grad_sq_cc(f, axis, h, w, use, lo, hi)
    return float(total)


def h1_semi_sq_velocity(v: VelocityField, dom: DomainSpec) -> float:
    """Squared ``||grad_h v||_L2`` matching :func:`laplacian_velocity` by parts."""
    w = dom.dx * dom.dy
    # normal derivatives: wall faces are stored, plain differences to cell centres
    s = np.sum(np.diff(v.u1, axis=0) ** 2) / dom.dx**2 * w
    s += np.sum(np.diff(v.u2, axis=1) ** 2) / dom.dy**2 * w
    # tangential derivatives: Dirichlet half-cells at the walls
    s += _grad_sq_cc(v.u1[1:-1], 1, dom.dy, w, True)
    s += _grad_sq_cc(v.u2[:, 1:-1], 0, dom.dx, w, True)
    return float(s)


def norms(f, dom: DomainSpec, bc=None) -> dict:
    """``l2``, ``linf`` and ``h1_semi`` of a scalar array or a velocity field."""
    if isinstance(f, VelocityField):
        l2 = np.sqrt(inner_faces(f, f, dom))
        linf = f.max_abs()
        h1 = np.sqrt(h1_semi_sq_velocity(f, dom))
    else:
        f = np.asarray(f)
        l2 = np.sqrt(inner_cells(f, f, dom))
        linf = float(np.abs(f).max()) if f.size else 0.0
        h1 = np.sqrt(h1_semi_sq_scalar(f, dom, bc))
    return {"l2": float(l2), "linf": float(linf), "h1_semi": float(h1)}


def w12_norm(f, dom: DomainSpec, bc=None) -> float:
    n = norms(f, dom, bc)
    return float(np.hypot(n["l2"], n["h1_semi"]))
