"""Coarse observation operators ``I_delta`` for the horizontal velocity.

Two kinds are offered:

``volume``
    cell-centred velocity averaged over coarse ``delta``-cells and broadcast
    back piecewise constant, then resampled to faces by linear interpolation.
``spectral``
    discrete sine expansion of each cell-centred component truncated at mode
    ``K = ceil(L/delta)``, resampled to faces the same way.

An observation is the coarse representation ``(c1, c2)``: coarse-cell means
for the volume kind, sine coefficients for the spectral kind.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .errors import SpecMismatch, ValidationError
from .grid import DomainSpec, VelocityField, w12_norm

KINDS = ("volume", "spectral")
_SPEC = re.compile(r"^(?P<kind>[a-z]+):(?P<delta>\S+)$")


@dataclass(frozen=True)
class InterpolantSpec:
    kind: str
    delta: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("interp", f"unknown kind {self.kind!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValidationError("interp", f"delta must be positive, got {self.delta}")

    @classmethod
    def parse(cls, text: str) -> "InterpolantSpec":
        m = _SPEC.match(text.strip())
        if m is None:
            raise ValidationError("interp", f"expected '<kind>:<delta>', got {text!r}")
        try:
            delta = float(m["delta"])
        except ValueError:
            raise ValidationError("interp", f"bad delta {m['delta']!r}") from None
        return cls(m["kind"], delta)

    def __str__(self) -> str:
        return f"{self.kind}:{self.delta!r}"

    def coarse_shape(self, dom: DomainSpec) -> tuple[int, int]:
        """``(Mx, My)``: coarse cell counts, or mode cutoffs for the spectral kind."""
        # guard against float noise such as 1/0.1 = 10.000000000000002
        mx = math.ceil(dom.Lx / self.delta - 1e-9)
        my = math.ceil(dom.Ly / self.delta - 1e-9)
        return mx, my

    def check(self, dom: DomainSpec) -> tuple[int, int]:
        """Validate against ``dom`` and return the coarse shape."""
        if self.delta > min(dom.Lx, dom.Ly) * (1 + 1e-12):
            raise SpecMismatch(f"delta={self.delta} exceeds min(Lx, Ly)={min(dom.Lx, dom.Ly)}")
        mx, my = self.coarse_shape(dom)
        if self.kind == "volume":
            if dom.nx % mx or dom.ny % my:
                raise SpecMismatch(
                    f"coarse grid {mx}x{my} does not tile the {dom.nx}x{dom.ny} fine grid")
        elif mx > dom.nx or my > dom.ny:
            raise SpecMismatch(f"mode cutoff {mx}x{my} exceeds grid {dom.nx}x{dom.ny}")
        return mx, my


def _cells_to_faces(uc: np.ndarray, vc: np.ndarray) -> VelocityField:
    """Linear interpolation of cell values to interior faces; walls set to zero."""
    nx, ny = uc.shape
    u1 = np.zeros((nx + 1, ny))
    u2 = np.zeros((nx, ny + 1))
    u1[1:-1] = 0.5 * (uc[1:] + uc[:-1])
    u2[:, 1:-1] = 0.5 * (vc[:, 1:] + vc[:, :-1])
    return VelocityField(u1, u2)


def _block_mean(a: np.ndarray, mx: int, my: int) -> np.ndarray:
    nx, ny = a.shape
    return a.reshape(mx, nx // mx, my, ny // my).mean(axis=(1, 3))


def _broadcast(c: np.ndarray, nx: int, ny: int) -> np.ndarray:
    mx, my = c.shape
    return np.repeat(np.repeat(c, nx // mx, axis=0), ny // my, axis=1)


def _sine_coeffs(a: np.ndarray, kx: int, ky: int) -> np.ndarray:
    return fft.dstn(a, type=2, norm="ortho")[:kx, :ky]


def _sine_synth(c: np.ndarray, nx: int, ny: int) -> np.ndarray:
    full = np.zeros((nx, ny))
    full[: c.shape[0], : c.shape[1]] = c
    return fft.idstn(full, type=2, norm="ortho")


def observe_cells(spec: InterpolantSpec, uc: np.ndarray, vc: np.ndarray, dom: DomainSpec):
    mx, my = spec.check(dom)
    if spec.kind == "volume":
        return _block_mean(uc, mx, my), _block_mean(vc, mx, my)
    return _sine_coeffs(uc, mx, my), _sine_coeffs(vc, mx, my)


def observe(spec: InterpolantSpec, v: VelocityField, dom: DomainSpec):
    """Coarse representation ``(c1, c2)`` of ``v``."""
    uc, vc = v.cell_centered()
    return observe_cells(spec, uc, vc, dom)


def expand_cells(spec: InterpolantSpec, obs, dom: DomainSpec):
    """Fine cell-centred components of a coarse observation."""
    c1, c2 = obs
    shape = spec.check(dom)
    if c1.shape != shape or c2.shape != shape:
        raise SpecMismatch(f"observation shape {c1.shape}/{c2.shape} does not match {shape}")
    if spec.kind == "volume":
        return _broadcast(c1, dom.nx, dom.ny), _broadcast(c2, dom.nx, dom.ny)
    return _sine_synth(c1, dom.nx, dom.ny), _sine_synth(c2, dom.nx, dom.ny)


def expand(spec: InterpolantSpec, obs, dom: DomainSpec) -> VelocityField:
    """Face field represented by a coarse observation."""
    return _cells_to_faces(*expand_cells(spec, obs, dom))


def apply(spec: InterpolantSpec, v: VelocityField, dom: DomainSpec) -> VelocityField:
    """``I_delta[v]`` on faces. Linear in ``v``; no divergence projection."""
    return expand(spec, observe(spec, v, dom), dom)


def project_cells(spec: InterpolantSpec, uc: np.ndarray, vc: np.ndarray, dom: DomainSpec):
    """Cell-level part of ``I_delta``; an orthogonal projection for both kinds."""
    return expand_cells(spec, observe_cells(spec, uc, vc, dom), dom)


def measure_interpolation_error(spec: InterpolantSpec, v, dom: DomainSpec) -> dict:
    """``abs_err = |I_delta v - v|_L2`` and its ratio to ``|v|_W12``.

    ``v`` is a face field, or a pair of cell-centred components, in which case
    only the cell-level part of the operator is measured.
    """
    if isinstance(v, VelocityField):
        d = apply(spec, v, dom) - v
        abs_err = float(np.sqrt((np.sum(d.u1**2) + np.sum(d.u2**2)) * dom.dx * dom.dy))
        ref = w12_norm(v, dom)
    else:
        uc, vc = v
        pu, pv = project_cells(spec, uc, vc, dom)
        abs_err = float(np.sqrt((np.sum((pu - uc) ** 2) + np.sum((pv - vc) ** 2)) * dom.dx * dom.dy))
        ref = float(np.hypot(w12_norm(uc, dom), w12_norm(vc, dom)))
    return {"abs_err": abs_err, "rel_to_h1": abs_err / ref if ref > 0 else 0.0}


def boundedness_constant(spec: InterpolantSpec, v: VelocityField, dom: DomainSpec) -> float:
    """Measured ``|I_delta v|_L2 / |v|_L2`` (0 for the zero field)."""
    nv = np.sqrt(np.sum(v.u1**2) + np.sum(v.u2**2))
    if nv == 0:
        return 0.0
    iv = apply(spec, v, dom)
    return float(np.sqrt(np.sum(iv.u1**2) + np.sum(iv.u2**2)) / nv)
