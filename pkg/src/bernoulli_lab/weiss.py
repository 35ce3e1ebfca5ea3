"""Weiss energy, homogeneity defect and monotonicity profiles.

In two dimensions

``W(R, u, x0) = R^-2 int_{B_R^+(x0)} |grad u|^2 + Lambda chi{u > 0}
                - R^-3 int_{S_R^+(x0)} u^2``.

About the origin ``R`` must be a ring radius: the bulk term is the exact
P1 energy of the triangles inside the ring and the sphere term integrates
the squared trace exactly along the ring polygon.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .closed_form import ProblemSpec
from .errors import CenterOutside, GNotSet, RegionUnaligned, UnalignedRadius
from .functional import (correction_constant, corrected_energy, dirichlet_density, energy_exact, positive_areas,
                         triangle_gradients)
from .mesh import HalfDiscMesh, ScalarField

_GL5 = np.polynomial.legendre.leggauss(5)


def _ring(mesh: HalfDiscMesh, R: float):
    try:
        return mesh.ring_edges(R)
    except UnalignedRadius as exc:
        raise RegionUnaligned(str(exc)) from None


def sphere_term(field: ScalarField, R: float) -> float:
    """``int u^2`` along the ring polygon of radius ``R`` (exact for P1)."""
    mesh = field.mesh
    edges, _ = _ring(mesh, R)
    a, b = field.values[edges[:, 0]], field.values[edges[:, 1]]
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    return float(np.sum(L / 3.0 * (a * a + a * b + b * b)))


def homogeneity_defect(field: ScalarField, R: float) -> float:
    """``int (grad u . nu - u / |x|)^2`` along the ring polygon of radius ``R``.

    The gradient is that of the triangle just inside the ring; on each edge
    the integrand is then ``c_T^2 / |x|^2`` with ``c_T`` the value at the
    origin of the triangle's linear extension.
    """
    mesh = field.mesh
    edges, tris = _ring(mesh, R)
    G = triangle_gradients(mesh, field.values)[tris]
    p0, p1 = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    c = np.einsum("ij,ij->i", G, p0) - field.values[edges[:, 0]]
    xg, wg = _GL5
    s = 0.5 * (xg + 1.0)
    pts = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
    L = np.hypot(*(p1 - p0).T)
    return float(np.sum(0.5 * L * c * c * np.sum(wg / r2, axis=1)))


def weiss_energy(field: ScalarField, spec: ProblemSpec, R: float, x0=(0.0, 0.0)) -> float:
    """``W(R, u, x0)`` in two dimensions.

    Off-origin centres need ``B_R(x0)`` inside the unit ball and either
    ``x0`` on the flat boundary or the ball clear of it; the bulk term is
    then integrated over the triangles clipped to a fine inscribed polygon
    and the sphere term by Gauss-Legendre along the arc.
    """
    mesh = field.mesh
    x0 = np.asarray(x0, dtype=float)
    if not R > 0:
        raise ValueError("R must be positive")
    if x0[0] < 0 or math.hypot(*x0) > mesh.radius * (1 + 1e-12):
        raise CenterOutside(f"centre {tuple(x0)} is outside the half-disc")
    if x0[0] == 0.0 and x0[1] == 0.0:
        bulk = energy_exact(field, spec, region=R).total if R < mesh.radius * (1 - 1e-12) else \
            energy_exact(field, spec).total
        if R > mesh.radius * (1 + 1e-12):
            raise RegionUnaligned(f"R={R} exceeds the mesh radius")
        return bulk / R ** 2 - sphere_term(field, R) / R ** 3
    return _weiss_off_origin(field, spec, R, x0)


def _weiss_off_origin(field, spec, R, x0, n_poly=2048):
    mesh = field.mesh
    if math.hypot(*x0) + R > mesh.radius * (1 + 1e-12):
        raise RegionUnaligned("ball leaves the unit disc")
    on_pi = x0[0] == 0.0
    if not on_pi and x0[0] < R:
        raise RegionUnaligned("ball meets the flat boundary but the centre is not on it")
    u = field.values
    ang = 2 * math.pi * np.arange(n_poly) / n_poly
    # inscribed polygon with the disc's area
    rp = R * math.sqrt(2 * math.pi / (n_poly * math.sin(2 * math.pi / n_poly)))
    poly = x0 + rp * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    xy = mesh.tri_coords
    d = np.hypot(xy[..., 0] - x0[0], xy[..., 1] - x0[1])
    inside = (d <= R * math.cos(math.pi / n_poly)).all(axis=1)
    cent = xy.mean(axis=1)
    rad_t = np.max(np.hypot(*(xy - cent[:, None, :]).transpose(2, 0, 1)), axis=1)
    near = ~inside & (np.hypot(*(cent - x0).T) <= rp + rad_t)
    dens = dirichlet_density(mesh, u) / mesh.areas
    total = float(np.sum((dens * mesh.areas)[inside]))
    total += spec.Lambda * float(np.sum(positive_areas(mesh, u)[inside]))
    e = np.roll(poly, -1, axis=0) - poly
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    offsets = np.einsum("ij,ij->i", normals, poly)
    for t in np.flatnonzero(near):
        tri = xy[t]
        cuts = np.flatnonzero((tri @ normals.T > offsets).any(axis=0))
        clipped = _clip_halfplanes(list(tri), normals[cuts], offsets[cuts])
        if len(clipped) < 3:
            continue
        total += dens[t] * _area(clipped)
        pp = _positive_parts(tri[None], u[mesh.triangles[t]][None])[0]
        if len(pp) >= 3:
            total += spec.Lambda * _area(_clip_halfplanes(pp, normals[cuts], offsets[cuts]))
    # sphere term by Gauss-Legendre along the arc inside the domain
    if on_pi:
        lo, hi = -0.5 * math.pi, 0.5 * math.pi
    else:
        lo, hi = 0.0, 2 * math.pi
    xg, wg = np.polynomial.legendre.leggauss(1024)
    t = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    pts = x0 + R * np.stack([np.cos(t), np.sin(t)], axis=1)
    pts[:, 0] = np.maximum(pts[:, 0], 0.0)
    vals = field.evaluate(pts)
    sphere = 0.5 * (hi - lo) * R * float(np.sum(wg * vals * vals))
    return total / R ** 2 - sphere / R ** 3


def _area(p) -> float:
    p = np.asarray(p)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip_halfplane(poly, n, c):
    """Keep ``n . x <= c``."""
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        fp, fq = n @ p - c, n @ q - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            out.append(p + fp / (fp - fq) * (q - p))
    return out


def _clip_halfplanes(pts, normals, offsets):
    pts = [np.asarray(p, dtype=float) for p in pts]
    for n, c in zip(normals, offsets):
        pts = _clip_halfplane(pts, n, c)
        if len(pts) < 3:
            return []
    return pts


def _positive_parts(xy, vals):
    """Polygon ``{u > 0}`` of each linear triangle."""
    out = []
    for tri, v in zip(xy, vals):
        poly = []
        for i in range(3):
            j = (i + 1) % 3
            if v[i] > 0:
                poly.append(tri[i])
            if (v[i] > 0) != (v[j] > 0):
                t = v[i] / (v[i] - v[j])
                poly.append(tri[i] + t * (tri[j] - tri[i]))
        out.append(poly)
    return out


@dataclass
class WeissProfile:
    center: tuple
    radii: list
    W_values: list
    homogeneity_defects: list
    monotonicity_defect: float
    corrected: bool = False
    kappa_term: list = dc_field(default_factory=list)
    tol_W: float = float("nan")
    tol_hom: float = float("nan")

    @property
    def monotone(self) -> bool:
        return self.monotonicity_defect <= self.tol_W

    def as_dict(self) -> dict:
        return dict(center=list(self.center), radii=self.radii, W_values=self.W_values,
                    homogeneity_defects=self.homogeneity_defects, monotonicity_defect=self.monotonicity_defect,
                    corrected=self.corrected, kappa_term=self.kappa_term, tol_W=self.tol_W, tol_hom=self.tol_hom)


def monotonicity_defect(radii: Sequence[float], values: Sequence[float]) -> float:
    """``max (W(r_small) - W(r_big))^+`` over consecutive radii (any order)."""
    order = np.argsort(radii)[::-1]
    w = np.asarray(values, dtype=float)[order]
    if len(w) < 2:
        return 0.0
    return float(max(0.0, np.max(w[1:] - w[:-1])))


def default_tol_W(mesh: HalfDiscMesh, radii) -> float:
    return 10.0 * mesh.local_h(min(radii))


def _check_radii(radii):
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    return radii


def weiss_profile(field: ScalarField, spec: ProblemSpec, x0=(0.0, 0.0), radii: Sequence[float] = (1.0, 0.5),
                  tol_W: Optional[float] = None, tol_hom: Optional[float] = None) -> WeissProfile:
    """Weiss energy and homogeneity defect on a decreasing list of radii."""
    radii = _check_radii(radii)
    mesh = field.mesh
    W = [weiss_energy(field, spec, R, x0) for R in radii]
    at_origin = float(x0[0]) == 0.0 and float(x0[1]) == 0.0
    hom = [homogeneity_defect(field, R) if at_origin else float("nan") for R in radii]
    if tol_W is None:
        tol_W = default_tol_W(mesh, radii) if at_origin else 10.0 * mesh.h
    if tol_hom is None:
        h = mesh.local_h(radii[0]) if at_origin else mesh.h
        scale = float(np.max(np.abs(field.values))) if field.values.size else 0.0
        tol_hom = 20.0 * h * h * scale * scale
    return WeissProfile(tuple(float(v) for v in x0), radii, W, hom, monotonicity_defect(radii, W),
                        tol_W=float(tol_W), tol_hom=float(tol_hom))


def linear_growth_constant(field: ScalarField) -> float:
    """``max |u(x)| / |x|`` over the nodes away from the origin."""
    r = field.mesh.node_radius
    m = r > 0
    return float(np.max(np.abs(field.values[m]) / r[m]))


def subtract_g(field: ScalarField, spec: ProblemSpec) -> ScalarField:
    """``v = u - g`` at the nodes."""
    return ScalarField(field.mesh, field.values - spec.g(field.mesh.nodes))


def corrected_weiss_profile(field: ScalarField, spec: ProblemSpec, radii: Sequence[float] = (1.0, 0.5),
                            c_lin: Optional[float] = None, tol_W: Optional[float] = None) -> WeissProfile:
    """Corrected profile for ``v = u - g`` with ``g = C |x|^(1+kappa)``.

    ``W~(t) = t^-2 [int |grad v|^2 - v 2 Delta g + Lambda chi{v > -g}]
    - t^-3 int_{S_t} v^2 + C1/kappa t^kappa`` with ``C1`` from
    :func:`~bernoulli_lab.functional.correction_constant`; ``c_lin`` defaults
    to the nodal linear-growth constant of ``v``.
    """
    if spec.g_coeff == 0.0:
        raise GNotSet("g is zero; use weiss_profile")
    radii = _check_radii(radii)
    mesh = field.mesh
    if c_lin is None:
        c_lin = linear_growth_constant(field)
    C1 = correction_constant(spec, c_lin)
    k = spec.g_exponent
    W, kt, hom = [], [], []
    for t in radii:
        if t < mesh.radius * (1 - 1e-12):
            bulk = corrected_energy(field, spec, region=t)
        else:
            bulk = corrected_energy(field, spec)
        term = C1 / k * t ** k
        W.append(bulk / t ** 2 - sphere_term(field, t) / t ** 3 + term)
        kt.append(term)
        hom.append(homogeneity_defect(field, t))
    if tol_W is None:
        tol_W = default_tol_W(mesh, radii)
    return WeissProfile((0.0, 0.0), radii, W, hom, monotonicity_defect(radii, W), True, kt,
                        tol_W=float(tol_W), tol_hom=float("nan"))


def stability_consistent(profile: WeissProfile, spec: ProblemSpec, verdict: str, W_small: float) -> bool:
    """Cross-check between a profile and a blow-up verdict.

    If some profile value is below ``W(1, v_S) - tol_W`` the verdict must be
    ``"large"``; otherwise nothing is required.
    """
    if any(w < W_small - profile.tol_W for w in profile.W_values):
        return str(verdict).lower().endswith("large")
    return True


def write_profile_csv(profile: WeissProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "W", "defect", "corrected_term"])
        kt = profile.kappa_term if profile.corrected else [0.0] * len(profile.radii)
        for r, W, d, c in zip(profile.radii, profile.W_values, profile.homogeneity_defects, kt):
            w.writerow([repr(float(r)), repr(float(W)), repr(float(d)), repr(float(c))])


def read_profile_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [tuple(float(v) for v in row) for row in rd]
