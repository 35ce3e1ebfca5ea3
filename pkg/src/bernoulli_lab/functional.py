"""Exact and smoothed evaluation of the two-phase energy for P1 fields.

``J(u, D) = int_D |grad u|^2 + Lambda chi{u > 0}``.  For piecewise-linear
``u`` both terms are integrated exactly triangle by triangle; sums are
numpy pairwise reductions over the canonical triangle order of the mesh,
so results do not depend on how nodes or triangles were numbered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .closed_form import ProblemSpec
from .errors import GNotSet, RegionUnaligned, UnalignedRadius
from .mesh import HalfDiscMesh, ScalarField


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    phase_area_pos: float
    phase_term: float
    total: float

    def as_dict(self) -> dict:
        return dict(dirichlet=self.dirichlet, phase_area_pos=self.phase_area_pos,
                    phase_term=self.phase_term, total=self.total)


def ramp(s):
    """C1 cubic step: 0 for s <= 0, 1 for s >= 1, ``3s^2 - 2s^3`` between."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class SmoothingSchedule:
    """Band widths for the smoothed phase term.

    With ``relative=True`` each entry multiplies the longest edge of every
    triangle, so the band is resolved at every scale of a graded mesh;
    otherwise entries are absolute widths.
    """

    eps_list: tuple = (16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
    relative: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps:
            raise ValueError("empty smoothing schedule")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be positive and strictly decreasing")
        object.__setattr__(self, "eps_list", eps)

    @staticmethod
    def ramp(s):
        return ramp(s)

    def widths(self, mesh: HalfDiscMesh, k: int) -> np.ndarray:
        e = self.eps_list[k]
        if self.relative:
            return e * mesh.tri_max_edge
        return np.full(mesh.n_triangles, e)

    def check(self, mesh: HalfDiscMesh) -> None:
        last = self.widths(mesh, len(self.eps_list) - 1).min()
        if last < 1e-6 * mesh.h_min:
            raise ValueError(f"last band width {last:g} below 1e-6 * min edge")


def positive_area_triangle(vertex_values: Sequence[float], triangle_area: float) -> float:
    """Exact area of ``{u > 0}`` for a linear ``u`` on one triangle.

    Vertices with value exactly 0 count as non-positive.
    """
    a, b, c = (float(v) for v in vertex_values)
    if not triangle_area > 0:
        raise ValueError("triangle area must be positive")
    return float(K.pos_area(a, b, c, float(triangle_area)))


def positive_areas(mesh: HalfDiscMesh, values: np.ndarray) -> np.ndarray:
    return K.pos_area_all(np.ascontiguousarray(values, dtype=float), mesh.triangles, mesh.areas)


def triangle_gradients(mesh: HalfDiscMesh, values: np.ndarray) -> np.ndarray:
    return np.einsum("ti,tik->tk", np.asarray(values)[mesh.triangles], mesh.grad_basis)


def dirichlet_density(mesh: HalfDiscMesh, values: np.ndarray) -> np.ndarray:
    """Per-triangle ``|grad u|^2 * area``."""
    g = triangle_gradients(mesh, values)
    return (g[:, 0] ** 2 + g[:, 1] ** 2) * mesh.areas


def _region_mask(mesh: HalfDiscMesh, region: Optional[float]):
    if region is None:
        return None
    try:
        mask = mesh.triangles_within(region)
    except UnalignedRadius as exc:
        raise RegionUnaligned(str(exc)) from None
    return None if mask.all() else mask


def _breakdown(dir_t, area_t, Lam, mask):
    if mask is not None:
        dir_t, area_t = dir_t[mask], area_t[mask]
    d = float(np.sum(dir_t))
    a = float(np.sum(area_t))
    return EnergyBreakdown(d, a, Lam * a, d + Lam * a)


def energy_exact(field: ScalarField, spec: ProblemSpec, region: Optional[float] = None) -> EnergyBreakdown:
    """Exact ``J(u, B_region^+)`` for the P1 field (whole mesh by default)."""
    mesh = field.mesh
    mask = _region_mask(mesh, region)
    return _breakdown(dirichlet_density(mesh, field.values), positive_areas(mesh, field.values), spec.Lambda, mask)


def per_triangle_energy(field: ScalarField, spec: ProblemSpec) -> np.ndarray:
    mesh = field.mesh
    return dirichlet_density(mesh, field.values) + spec.Lambda * positive_areas(mesh, field.values)


def energy_smoothed(field: ScalarField, spec: ProblemSpec, eps, grad: bool = True):
    """Surrogate energy with ``chi{u>0}`` replaced by the cubic ramp.

    ``eps`` is a band width or one width per triangle.  Returns
    ``(value, gradient)`` with the gradient taken w.r.t. all nodal values
    (``None`` when ``grad`` is false).  Since the ramp lies below the
    indicator, ``0 <= J - J_eps <= Lambda |{0 < u < eps}|``.
    """
    mesh = field.mesh
    return smoothed_values(mesh, field.values, spec.Lambda, eps, grad)


def smoothed_values(mesh: HalfDiscMesh, values: np.ndarray, Lam: float, eps, grad: bool = True):
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (mesh.n_triangles,))
    if not np.all(eps > 0):
        raise ValueError("eps must be positive")
    vals = np.ascontiguousarray(values, dtype=float)
    Ku = mesh.stiffness @ vals
    phase, g = K.smoothed_phase(vals, mesh.triangles, mesh.areas, np.ascontiguousarray(eps), K.QUAD_L, K.QUAD_W, grad)
    value = float(vals @ Ku) + Lam * phase
    if not grad:
        return value, None
    return value, 2.0 * Ku + Lam * g


def band_area(field: ScalarField, eps) -> float:
    """Exact area of ``{0 < u < eps}`` (``eps`` scalar or per triangle)."""
    mesh = field.mesh
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (mesh.n_triangles,))
    v = field.values[mesh.triangles] - eps[:, None]
    above = np.array([K.pos_area(a, b, c, A) for (a, b, c), A in zip(v, mesh.areas)])
    return float(np.sum(positive_areas(mesh, field.values) - above))


def scaled_energy(field: ScalarField, spec: ProblemSpec, eps_j: float) -> float:
    """``int |grad v|^2 + eps_j^2 Lambda chi{v > 0}`` over the field's mesh."""
    if eps_j < 0:
        raise ValueError("eps_j must be non-negative")
    mesh = field.mesh
    d = float(np.sum(dirichlet_density(mesh, field.values)))
    a = float(np.sum(positive_areas(mesh, field.values)))
    return d + eps_j * eps_j * spec.Lambda * a


# ---- corrected functional for data perturbed by g = C |x|^(1+kappa) ----------

def correction_constant(spec: ProblemSpec, c_lin: float) -> float:
    """``C1 = 2 C_lin C_g (1+kappa)^2 pi / (kappa+2)`` bounding ``|int v 2 Delta g|``."""
    k = spec.g_exponent
    return 2.0 * c_lin * spec.g_coeff * (1.0 + k) ** 2 * math.pi / (k + 2.0)


@dataclass(frozen=True)
class CorrectedBreakdown:
    dirichlet: float
    source: float  # int v * 2 Delta g
    phase_area: float  # |{v > -g}|
    total: float


def _origin_cell_weight(mesh: HalfDiscMesh, tri_mask, kappa: float) -> float:
    """``int r^(kappa-1) phi_0`` over the triangles at the origin node.

    In polar coordinates about the origin, ``phi_0 = 1 - r/R(phi)`` on a
    triangle whose far edge is at distance ``R(phi)``, so the radial
    integral is ``R^(kappa+1) / ((kappa+1)(kappa+2))``; the angular one is
    done by Gauss-Legendre on the smooth ``R(phi)``.
    """
    origin = np.flatnonzero(mesh.node_radius == 0.0)
    if len(origin) == 0:
        return 0.0
    o = origin[0]
    xg, wg = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for t in np.flatnonzero((mesh.triangles == o).any(axis=1) & tri_mask):
        tri = mesh.triangles[t]
        p, q = [mesh.nodes[v] for v in tri if v != o]
        a0, a1 = math.atan2(p[1], p[0]), math.atan2(q[1], q[0])
        # distance from origin to the line through p, q and its normal angle
        d = q - p
        nrm = np.array([d[1], -d[0]]) / math.hypot(d[0], d[1])
        dist = abs(float(nrm @ p))
        an = math.atan2(nrm[1], nrm[0]) if nrm @ p > 0 else math.atan2(-nrm[1], -nrm[0])
        lo, hi = min(a0, a1), max(a0, a1)
        phi = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        R = dist / np.cos(phi - an)
        total += 0.5 * (hi - lo) * float(np.sum(wg * R ** (kappa + 1.0)))
    return total / ((kappa + 1.0) * (kappa + 2.0))


def corrected_parts(field: ScalarField, spec: ProblemSpec, region: Optional[float] = None) -> CorrectedBreakdown:
    if spec.g_coeff == 0.0:
        raise GNotSet("g is zero; use energy_exact")
    mesh = field.mesh
    mask = _region_mask(mesh, region)
    tri_mask = np.ones(mesh.n_triangles, bool) if mask is None else mask
    v = field.values
    d = float(np.sum(dirichlet_density(mesh, v)[tri_mask]))

    # lumped nodal weights from the kept triangles
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.triangles[tri_mask].ravel(), np.repeat(mesh.areas[tri_mask] / 3.0, 3))
    r = mesh.node_radius
    lap = np.zeros(mesh.n_nodes)
    pos = r > 0
    lap[pos] = spec.laplacian_g(r[pos])
    src_nodes = v * 2.0 * lap * w
    origin = np.flatnonzero(~pos)
    if len(origin):
        k = spec.g_exponent
        cell = _origin_cell_weight(mesh, tri_mask, k)
        src_nodes[origin[0]] = v[origin[0]] * 2.0 * spec.g_coeff * (1.0 + k) ** 2 * cell
    source = float(np.sum(src_nodes))

    shifted = v + spec.g(mesh.nodes)
    area = float(np.sum(positive_areas(mesh, shifted)[tri_mask]))
    total = d - source + spec.Lambda * area
    return CorrectedBreakdown(d, source, area, total)


def corrected_energy(field: ScalarField, spec: ProblemSpec, region: Optional[float] = None) -> float:
    """``int |grad v|^2 - v (2 Delta g) + Lambda chi{v > -g}`` for ``v = u - g``."""
    return corrected_parts(field, spec, region).total
