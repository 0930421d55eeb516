"""Change of variables theta <-> Theta <-> Z and the static fields they need.

theta  physical temperature deviation
Theta  ``theta - a F + 2 a x3^2 - C`` with ``C = 2 a <x3^2>``; removes the
       ``a div(F u)`` source from the heat equation
Z      ``Theta + alpha avg(Theta) - theta_B_hat``; turns the nonlocal boundary
       condition into a homogeneous Dirichlet one

All maps are affine and invertible. Averages use the same midpoint rule as
:func:`robsim.grid.vertical_average`, so round trips are exact at any ``nz``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidAlpha, ValidationError
from .grid import DomainSpec, domain_average, gradient_h, vertical_average


@dataclass(frozen=True)
class PhysicsParams:
    mu: float
    kappa: float
    alpha: float = 0.0
    a: float = 0.0
    g: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("physics.mu", "viscosity must be positive")
        if not self.kappa > 0:
            raise ValidationError("physics.kappa", "diffusivity must be positive")
        if len(self.g) != 3:
            raise ValidationError("physics.g", "expected three components")
        object.__setattr__(self, "g", tuple(float(c) for c in self.g))

    @property
    def rho_bar(self) -> float:
        return 1.0

    @property
    def nonlocal_weight(self) -> float:
        """``alpha / (1 + alpha)``, the coefficient of avg(Z) in the Z equation."""
        if self.alpha == -1:
            raise InvalidAlpha("alpha = -1 has no inverse Z -> Theta map")
        return self.alpha / (1.0 + self.alpha)

    def require_longtime(self):
        if not 0 < self.alpha < 1:
            raise InvalidAlpha(f"long-time statements need 0 < alpha < 1, got alpha={self.alpha}")


# -- built-in expressions -----------------------------------------------------------

_TERM = re.compile(r"^(?P<kind>[a-z]+):(?P<args>.*)$")


def parse_expression(text: str, dom: DomainSpec):
    """Compile a boundary/initial-data expression into ``f(x, y, z)``.

    Terms, summed when joined by ``" + "``:

    ``const:c``
    ``linear:c0,c1,c2,c3``           c0 + c1 x + c2 y + c3 z
    ``sines:A,m1,m2,m3``             A * prod sin(m_i pi x_i / L_i), factor 1 where m_i = 0
    ``cosines:A,m1,m2,m3``           A * prod cos(m_i pi x_i / L_i)
    ``quad:c0,cx,cy,cz``             c0 + cx x^2 + cy y^2 + cz z^2
    ``randsines:A,kx,ky,kz,seed``    A * sum of sine products with modes up to
                                     ``(kx, ky, kz)`` and standard normal weights
                                     drawn from ``seed``; ``kz = 0`` means no z
                                     dependence
    """
    terms = [t.strip() for t in re.split(r"\s+\+\s+", text.strip()) if t.strip()]
    if not terms:
        raise ValueError("empty expression")
    fns = [_parse_term(t, dom) for t in terms]

    def f(x, y, z):
        out = np.zeros(np.broadcast(x, y, z).shape)
        for fn in fns:
            out = out + fn(x, y, z)
        return out

    f.text = text
    return f


def _parse_term(term, dom):
    m = _TERM.match(term)
    if m is None:
        raise ValueError(f"cannot parse expression term {term!r}")
    kind = m["kind"]
    try:
        args = [float(s) for s in m["args"].split(",")] if m["args"].strip() else []
    except ValueError:
        raise ValueError(f"non-numeric argument in {term!r}") from None
    L = (dom.Lx, dom.Ly, 1.0)
    need = {"const": 1, "linear": 4, "sines": 4, "cosines": 4, "quad": 4, "randsines": 5}
    if kind not in need:
        raise ValueError(f"unknown expression kind {kind!r}")
    if len(args) != need[kind]:
        raise ValueError(f"{kind} takes {need[kind]} arguments, got {len(args)}")
    if kind == "const":
        c = args[0]
        return lambda x, y, z: np.full(np.broadcast(x, y, z).shape, c)
    if kind == "linear":
        c0, c1, c2, c3 = args
        return lambda x, y, z: c0 + c1 * x + c2 * y + c3 * z
    if kind == "quad":
        c0, c1, c2, c3 = args
        return lambda x, y, z: c0 + c1 * x**2 + c2 * y**2 + c3 * z**2
    if kind == "randsines":
        return _random_sines(args, L, term)
    amp, *modes = args
    trig = np.sin if kind == "sines" else np.cos

    def prod(x, y, z):
        out = amp * np.ones(np.broadcast(x, y, z).shape)
        for mi, xi, Li in zip(modes, (x, y, z), L):
            if mi != 0:
                out = out * trig(mi * np.pi * xi / Li)
        return out

    return prod


def _random_sines(args, L, term):
    amp, *rest = args
    kx, ky, kz, seed = (int(a) for a in rest)
    if min(kx, ky) < 1 or kz < 0 or any(a != int(a) for a in rest):
        raise ValueError(f"randsines needs integer modes kx, ky >= 1, kz >= 0 in {term!r}")
    w = np.random.default_rng(seed).standard_normal((kx, ky, max(kz, 1)))

    def f(x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        sx = np.stack([np.sin((i + 1) * np.pi * x / L[0]) for i in range(kx)])
        sy = np.stack([np.sin((j + 1) * np.pi * y / L[1]) for j in range(ky)])
        if kz:
            sz = np.stack([np.sin((k + 1) * np.pi * z) for k in range(kz)])
        else:
            sz = np.ones((1,) + x.shape)
        return amp * np.einsum("ijk,i...,j...,k...->...", w, sx, sy, sz)

    return f


# -- forcing potential ----------------------------------------------------------------

class ForcingPotential:
    """``F = g.x + |x_h|^2`` shifted to zero discrete mean over the box."""

    def __init__(self, dom: DomainSpec, g):
        self.dom = dom
        self.g = tuple(float(c) for c in g)
        X, Y, Z = dom.centers3()
        raw = self._raw(X, Y, Z)
        self.shift = float(raw.mean())
        self.values = raw - self.shift

    def _raw(self, x, y, z):
        g1, g2, g3 = self.g
        return g1 * x + g2 * y + g3 * z + x**2 + y**2

    def __call__(self, x, y, z):
        return self._raw(x, y, z) - self.shift

    def grad_h(self):
        """Face-valued horizontal gradient (exact for this quadratic)."""
        return gradient_h(vertical_average(self.values), self.dom)


def eval_forcing_potential(dom: DomainSpec, g) -> np.ndarray:
    return ForcingPotential(dom, g).values


def x3_square_average(dom: DomainSpec) -> float:
    return float(np.mean(dom.zc() ** 2))


def theta_shift(dom: DomainSpec, F: np.ndarray, a: float) -> np.ndarray:
    """The additive field ``-a F + 2 a x3^2 - C`` mapping theta to Theta."""
    if a == 0:
        return np.zeros(dom.shape3)
    C = 2.0 * a * x3_square_average(dom)
    z2 = (dom.zc() ** 2)[None, None, :]
    return -a * F + 2.0 * a * z2 - C


def theta_to_Theta(theta: np.ndarray, F: np.ndarray, params: PhysicsParams, dom: DomainSpec) -> np.ndarray:
    return theta + theta_shift(dom, F, params.a)


def Theta_to_theta(Theta: np.ndarray, F: np.ndarray, params: PhysicsParams, dom: DomainSpec) -> np.ndarray:
    return Theta - theta_shift(dom, F, params.a)


def Theta_to_Z(Theta: np.ndarray, alpha: float, theta_B_hat: np.ndarray) -> np.ndarray:
    return Theta + alpha * domain_average(Theta) - theta_B_hat


def Z_to_Theta(Z: np.ndarray, alpha: float, theta_B_hat: np.ndarray) -> np.ndarray:
    if alpha == -1:
        raise InvalidAlpha("Z -> Theta is undefined for alpha = -1")
    s = Z + theta_B_hat
    return s - (alpha / (1.0 + alpha)) * domain_average(s)


def effective_boundary_data(theta_B_fn, params: PhysicsParams, potential: ForcingPotential, dom: DomainSpec):
    """Boundary data for Theta: ``theta_B - a F + 2 a x3^2 - C``.

    ``theta_B_fn`` is assumed smooth (C^2); only pointwise evaluation is used.
    """
    a = params.a
    if a == 0:
        return theta_B_fn
    C = 2.0 * a * x3_square_average(dom)

    def fn(x, y, z):
        return theta_B_fn(x, y, z) - a * potential(x, y, z) + 2.0 * a * z**2 - C

    return fn
