"""Free-boundary extraction and geometric diagnostics for P1 fields.

The free boundary is ``d{u > 0}``.  Inside each triangle that has both
strictly positive and non-positive vertices it is the segment between the
two zero crossings of the linear interpolant; a crossing at a vertex with
value exactly 0 is that vertex, so plateau edges (both ends 0) bordering a
positive triangle are included whole.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .closed_form import ProblemSpec
from .errors import CurveTooShort, RadiiUnaligned
from .functional import triangle_gradients
from .mesh import HalfDiscMesh, NodeClass, ScalarField

EMPTY = "empty"
MULTI_COMPONENT = "multi-component"
BRANCHED = "branched"
CONTACT_TOL = 1e-14


class Side(str, enum.Enum):
    SMALL = "small"
    LARGE = "large"
    MIXED = "mixed"


@dataclass
class FreeBoundaryCurve:
    points: np.ndarray  # (P, 2)
    segments: np.ndarray  # (S, 2) indices into points
    components: list  # ordered point-index arrays, longest first
    flags: set = dc_field(default_factory=set)
    source_tris: Optional[np.ndarray] = None  # triangle generating each segment

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])

    @property
    def phi(self) -> np.ndarray:
        """Polar angle from the positive x2-axis toward +x1."""
        return np.arctan2(self.points[:, 0], self.points[:, 1])

    @property
    def contact(self) -> np.ndarray:
        return np.abs(self.points[:, 0]) <= CONTACT_TOL

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    def component_lengths(self) -> list:
        return [_polyline_length(self.points[c]) for c in self.components]

    def segment_points(self):
        return self.points[self.segments[:, 0]], self.points[self.segments[:, 1]]

    @classmethod
    def from_polyline(cls, pts) -> "FreeBoundaryCurve":
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        n = len(pts)
        segs = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1) if n > 1 else np.zeros((0, 2), np.int64)
        return cls(pts, segs, [np.arange(n)] if n else [], set() if n else {EMPTY})


def _polyline_length(p):
    if len(p) < 2:
        return 0.0
    d = np.diff(p, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def extract(field: ScalarField, spec: Optional[ProblemSpec] = None) -> FreeBoundaryCurve:
    """Polyline(s) of ``d{u > 0}`` inside the mesh."""
    mesh = field.mesh
    u = field.values
    tv = u[mesh.triangles]
    pos = tv > 0.0
    npos = pos.sum(axis=1)
    cut = np.flatnonzero((npos == 1) | (npos == 2))
    keys: dict = {}
    pts: list = []
    segs: list = []
    src: list = []
    cls = mesh.node_class

    def point(i, j):
        # zero crossing on edge (i, j) with u_i > 0 >= u_j
        if u[j] == 0.0:
            key = ("v", j)
            xy = mesh.nodes[j]
        else:
            a, b = (i, j) if i < j else (j, i)
            key = ("e", a, b)
            t = u[a] / (u[a] - u[b])
            xy = mesh.nodes[a] + t * (mesh.nodes[b] - mesh.nodes[a])
        k = keys.get(key)
        if k is None:
            k = keys[key] = len(pts)
            pts.append(xy)
        return k

    boundary = cls != NodeClass.INTERIOR
    for t in cut:
        tri = mesh.triangles[t]
        p = pos[t]
        if npos[t] == 1:
            i = tri[np.argmax(p)]
            others = [v for v in tri if v != i]
            a, b = point(i, others[0]), point(i, others[1])
        else:
            k = tri[np.argmin(p)]
            others = [v for v in tri if v != k]
            a, b = point(others[0], k), point(others[1], k)
        if a == b:
            continue
        segs.append((min(a, b), max(a, b)))
        src.append(t)
    pts_arr = np.array(pts, dtype=float).reshape(-1, 2)
    if not segs:
        return FreeBoundaryCurve(pts_arr[:0], np.zeros((0, 2), np.int64), [], {EMPTY}, np.zeros(0, np.int64))
    segs_arr, first = np.unique(np.array(segs, dtype=np.int64), axis=0, return_index=True)
    src_arr = np.array(src, dtype=np.int64)[first]
    # drop segments lying on the domain boundary (both ends on Pi or on the arc)
    keep = np.ones(len(segs_arr), bool)
    r = np.hypot(pts_arr[:, 0], pts_arr[:, 1])
    on_pi = np.abs(pts_arr[:, 0]) <= CONTACT_TOL
    on_arc = np.abs(r - mesh.radius) <= 1e-12
    keep &= ~(on_pi[segs_arr[:, 0]] & on_pi[segs_arr[:, 1]])
    keep &= ~(on_arc[segs_arr[:, 0]] & on_arc[segs_arr[:, 1]])
    segs_arr, src_arr = segs_arr[keep], src_arr[keep]
    used = np.unique(segs_arr)
    remap = np.full(len(pts_arr), -1, np.int64)
    remap[used] = np.arange(len(used))
    pts_arr = pts_arr[used]
    segs_arr = remap[segs_arr]
    if len(segs_arr) == 0:
        return FreeBoundaryCurve(pts_arr[:0], np.zeros((0, 2), np.int64), [], {EMPTY}, np.zeros(0, np.int64))
    comps, flags = _components(pts_arr, segs_arr)
    return FreeBoundaryCurve(pts_arr, segs_arr, comps, flags, src_arr)


def _components(pts, segs):
    n = len(pts)
    adj = [[] for _ in range(n)]
    for a, b in segs.tolist():
        adj[a].append(b)
        adj[b].append(a)
    for lst in adj:
        lst.sort()
    r = np.hypot(pts[:, 0], pts[:, 1])
    seen = np.zeros(n, bool)
    flags = set()
    comps = []
    # deterministic: visit seeds by increasing radius
    for seed in np.lexsort((pts[:, 1], pts[:, 0], r)):
        if seen[seed]:
            continue
        stack, members = [seed], []
        seen[seed] = True
        while stack:
            v = stack.pop()
            members.append(v)
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        members = np.array(members)
        deg = np.array([len(adj[v]) for v in members])
        if (deg > 2).any():
            flags.add(BRANCHED)
        ends = members[deg == 1]
        start = ends[np.argmin(r[ends])] if len(ends) else members[np.argmin(r[members])]
        comps.append(_walk(start, adj, set(members.tolist())))
    if len(comps) > 1:
        flags.add(MULTI_COMPONENT)
    lengths = [_polyline_length(pts[c]) for c in comps]
    order = sorted(range(len(comps)), key=lambda k: (-lengths[k], r[comps[k][0]]))
    return [comps[k] for k in order], flags


def _walk(start, adj, members):
    """Depth-first ordering along the polyline (branches appended in order)."""
    out, seen, stack = [], set(), [start]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        out.append(v)
        nxt = [w for w in adj[v] if w not in seen and w in members]
        stack.extend(reversed(nxt))
    return np.array(out, dtype=np.int64)


# ---- cones -----------------------------------------------------------------

def dyadic_annuli(mesh: HalfDiscMesh, r_min: Optional[float] = None) -> list:
    """Inner radii rho of the annuli [rho, 2 rho] covered by the mesh rings."""
    major = mesh.major_radii
    rho = [float(r) for r in major[1:]]
    if r_min is not None:
        rho = [r for r in rho if r >= r_min]
    return rho


@dataclass
class NTResult:
    radii: list
    per_annulus: list
    verdict: bool
    mode: str
    delta: float
    C: Optional[float] = None


def nt_check(curve: FreeBoundaryCurve, field: ScalarField, delta: float, mode: str = "strong",
             C: Optional[float] = None, radii: Optional[Sequence[float]] = None) -> NTResult:
    """delta-non-tangential test on dyadic annuli ``rho <= |x| <= 2 rho``.

    ``strong``: the free boundary meets ``K_delta = {x1 > delta |x2|}``.
    ``weak``: some node in the annulus and in ``K_delta`` has ``|u| <= C rho``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    mesh = field.mesh
    radii = dyadic_annuli(mesh) if radii is None else list(radii)
    res = []
    if mode == "strong":
        p = curve.points
        r = curve.radius
        for rho in radii:
            sel = (r >= rho) & (r <= 2 * rho)
            res.append(bool(np.any(p[sel, 0] > delta * np.abs(p[sel, 1]))))
    elif mode == "weak":
        if C is None:
            raise ValueError("weak mode needs C")
        x = mesh.nodes
        r = mesh.node_radius
        for rho in radii:
            sel = (r >= rho) & (r <= 2 * rho) & (x[:, 0] > delta * np.abs(x[:, 1]))
            res.append(bool(np.any(np.abs(field.values[sel]) <= C * rho)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return NTResult(radii, res, bool(all(res)) if res else False, mode, float(delta), C)


# ---- angle profile ---------------------------------------------------------------

@dataclass
class AngleProfile:
    radii: list
    phi_min: list
    phi_max: list
    phi_mean: list
    sigma: list
    counts: list
    side: Side
    theta_ref: float
    missing: list = dc_field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(radii=self.radii, phi_min=self.phi_min, phi_max=self.phi_max, phi_mean=self.phi_mean,
                    sigma=self.sigma, counts=self.counts, side=self.side.value, theta_ref=self.theta_ref,
                    missing=self.missing)


def curve_side(curve: FreeBoundaryCurve, near: Optional[float] = None, spec: Optional[ProblemSpec] = None) -> Side:
    """Small if the free boundary near the origin lies in ``{x2 > 0}``, Large if in ``{x2 < 0}``.

    With ``spec`` given, points hugging ``Pi`` (``x1 < sin(theta) |x| / 2``)
    are ignored: a positive perturbation on the flat boundary grows a thin
    branch along ``Pi`` that says nothing about which ray is approached.
    """
    if curve.empty:
        return Side.MIXED
    r = curve.radius
    off = ~curve.contact
    if spec is not None and spec.gamma is not None:
        off &= curve.points[:, 0] >= 0.5 * math.sin(spec.theta) * r
    inner = np.sort(r[off])
    if near is None:
        near = inner[min(len(inner) - 1, max(0, len(inner) // 4))] if len(inner) else 0.0
    sel = off & (r <= near) & (r > 0)
    if not sel.any():
        sel = off
    if not sel.any():
        return Side.MIXED
    x2 = curve.points[sel, 1]
    if np.all(x2 >= 0) and np.any(x2 > 0):
        return Side.SMALL
    if np.all(x2 <= 0) and np.any(x2 < 0):
        return Side.LARGE
    m = float(np.mean(x2))
    return Side.SMALL if m > 0 else Side.LARGE if m < 0 else Side.MIXED


def angle_profile(curve: FreeBoundaryCurve, spec: ProblemSpec, radii: Sequence[float],
                  side: Optional[Side] = None) -> AngleProfile:
    """Polar-angle statistics of the free boundary on annuli ``[r, 2r]``.

    ``sigma(r)`` is the largest deviation from the side's ray angle
    (``theta`` for Small, ``pi - theta`` for Large), using the points in
    that side's half-plane.  Annuli without points are listed in
    ``missing`` with NaN entries.
    """
    spec.require_gamma()
    theta = spec.theta
    side = curve_side(curve, spec=spec) if side is None else Side(side)
    radii = sorted((float(r) for r in radii), reverse=True)
    ref = theta if side is Side.SMALL else math.pi - theta
    r = curve.radius
    phi = curve.phi
    x2 = curve.points[:, 1] if not curve.empty else np.zeros(0)
    prof = AngleProfile(radii, [], [], [], [], [], side, float(ref))
    for rad in radii:
        sel = (r >= rad) & (r <= 2 * rad) & ~curve.contact
        if side is Side.SMALL:
            sel &= x2 > 0
        elif side is Side.LARGE:
            sel &= x2 < 0
        if not sel.any():
            prof.missing.append(rad)
            for lst in (prof.phi_min, prof.phi_max, prof.phi_mean, prof.sigma):
                lst.append(float("nan"))
            prof.counts.append(0)
            continue
        ph = phi[sel]
        if side is Side.MIXED:
            dev = np.minimum(np.abs(ph - theta), np.abs(ph - (math.pi - theta)))
        else:
            dev = np.abs(ph - ref)
        prof.phi_min.append(float(ph.min()))
        prof.phi_max.append(float(ph.max()))
        prof.phi_mean.append(float(ph.mean()))
        prof.sigma.append(float(dev.max()))
        prof.counts.append(int(sel.sum()))
    return prof


# ---- growth ------------------------------------------------------------------------

@dataclass
class GrowthReport:
    levels: list
    S_values: list
    c_fit: float
    recursion_ok: bool
    recursion_slack: list

    def as_dict(self) -> dict:
        return dict(levels=self.levels, S_values=self.S_values, c_fit=self.c_fit,
                    recursion_ok=self.recursion_ok, recursion_slack=self.recursion_slack)


def growth_report(field: ScalarField, levels: int, rtol: float = 1e-12) -> GrowthReport:
    """``S(j) = max |u|`` over nodes of ``B_{2^-j}^+`` and the recursion check.

    ``c_fit`` is the least-squares constant of ``S(j) 2^j ~ c``.  The
    recursion ``S(j+1) <= max{c 2^-j / 2, S(j)/2, ..., S(0)/2^(j+1)}`` is
    tested for every ``j`` with that ``c``.
    """
    mesh = field.mesh
    r = mesh.node_radius
    S = []
    for j in range(levels + 1):
        R = 2.0 ** (-j)
        if not mesh.is_aligned(R):
            raise RadiiUnaligned(f"radius 2^-{j} is not a mesh ring")
        S.append(float(np.max(np.abs(field.values[r <= R * (1 + 1e-12)]))))
    scaled = np.array(S) * 2.0 ** np.arange(levels + 1)
    c = float(np.mean(scaled))
    slack, ok = [], True
    for j in range(levels):
        bound = max([c * 2.0 ** (-j) / 2.0] + [S[i] / 2.0 ** (j + 1 - i) for i in range(j + 1)])
        slack.append(bound - S[j + 1])
        ok &= S[j + 1] <= bound * (1 + rtol) + 1e-300
    return GrowthReport(list(range(levels + 1)), S, c, bool(ok), slack)


# ---- nondegeneracy --------------------------------------------------------------------

@dataclass
class NondegeneracyReport:
    samples: list  # (x1, x2, r, sup/r)
    c_emp: float
    degenerate: bool
    per_radius: dict

    def as_dict(self) -> dict:
        return dict(samples=self.samples, c_emp=self.c_emp, degenerate=self.degenerate,
                    per_radius={str(k): v for k, v in self.per_radius.items()})


def nondegeneracy_report(field: ScalarField, curve: Optional[FreeBoundaryCurve], radii: Sequence[float],
                         points=None) -> NondegeneracyReport:
    """``sup_{B_r^+(x)} u / r`` for free-boundary points ``x`` (nodal sup).

    Applies to ``u^+`` for two-phase fields.
    """
    mesh = field.mesh
    if points is None:
        points = np.zeros((0, 2)) if curve is None or curve.empty else curve.points
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 2)
    upos = np.maximum(field.values, 0.0)
    tree = cKDTree(mesh.nodes)
    samples = []
    per = {}
    for rad in radii:
        vals = []
        for x in points:
            idx = tree.query_ball_point(x, rad * (1 + 1e-12))
            s = float(upos[idx].max()) / rad if idx else 0.0
            samples.append((float(x[0]), float(x[1]), float(rad), s))
            vals.append(s)
        per[float(rad)] = float(min(vals)) if vals else float("nan")
    c = min((s[3] for s in samples), default=0.0)
    return NondegeneracyReport(samples, float(c), c <= 0.0, per)


# ---- jump condition ----------------------------------------------------------------------

@dataclass
class JumpReport:
    midpoints: np.ndarray
    grad_pos_sq: np.ndarray
    grad_neg_sq: np.ndarray
    defect: np.ndarray
    median_defect: float
    max_defect: float

    def as_dict(self) -> dict:
        return dict(n_segments=int(len(self.defect)), median_defect=self.median_defect,
                    max_defect=self.max_defect)


def jump_report(field: ScalarField, curve: FreeBoundaryCurve, spec: ProblemSpec,
                far_from_pi: float = 5.0) -> JumpReport:
    """One-sided ``|grad u|^2`` on each free-boundary segment and the jump defect.

    Per segment, with ``h`` the local mesh size (longest edge of the cut
    triangle), the gradient on each side is the area-weighted least-squares
    fit over triangles of that phase whose centroids lie between ``h`` and
    ``3h`` from the segment midpoint.  Segments within ``far_from_pi * h``
    of the fixed boundary are skipped.
    """
    if curve.empty:
        raise CurveTooShort("empty free boundary")
    mesh = field.mesh
    u = field.values
    grads = triangle_gradients(mesh, u)
    tv = u[mesh.triangles]
    phase = np.where((tv > 0).all(axis=1), 1, np.where((tv <= 0).all(axis=1), -1, 0))
    cent = mesh.tri_coords.mean(axis=1)
    tree = cKDTree(cent)
    a, b = curve.segment_points()
    mids = 0.5 * (a + b)
    hloc = mesh.tri_max_edge[curve.source_tris] if curve.source_tris is not None else np.full(len(mids), mesh.h)
    out_m, gp, gn = [], [], []
    for m, h in zip(mids, hloc):
        if m[0] < far_from_pi * h:
            continue
        idx = np.array(tree.query_ball_point(m, 3 * h), dtype=np.int64)
        if len(idx) == 0:
            continue
        d = np.hypot(*(cent[idx] - m).T)
        idx = idx[d >= h]
        vals = []
        for ph in (1, -1):
            sel = idx[phase[idx] == ph]
            if len(sel) == 0:
                vals.append(np.nan)
                continue
            w = mesh.areas[sel]
            g = (grads[sel] * w[:, None]).sum(axis=0) / w.sum()
            vals.append(float(g @ g))
        if np.isnan(vals[0]):
            continue
        if np.isnan(vals[1]):
            if spec.alpha_minus != 0.0:
                continue
            vals[1] = 0.0
        out_m.append(m)
        gp.append(vals[0])
        gn.append(vals[1])
    if not gp:
        raise CurveTooShort("no free-boundary segment away from the fixed boundary with both phases resolved")
    gp_a, gn_a = np.array(gp), np.array(gn)
    defect = np.abs(gp_a - gn_a - spec.Lambda)
    return JumpReport(np.array(out_m), gp_a, gn_a, defect, float(np.median(defect)), float(defect.max()))


# ---- gradient bound --------------------------------------------------------------------------

@dataclass
class GradBoundReport:
    max_grad_sq: float
    location: tuple
    n_triangles: int
    ratio_to_lambda: float

    def as_dict(self) -> dict:
        return dict(max_grad_sq=self.max_grad_sq, location=list(self.location), n_triangles=self.n_triangles,
                    ratio_to_lambda=self.ratio_to_lambda)


def gradbound_report(field: ScalarField, spec: ProblemSpec, curve: Optional[FreeBoundaryCurve] = None,
                     margin: float = 3.0, r_min: float = 0.0) -> GradBoundReport:
    """Max ``|grad u|^2`` over triangles with all vertices in ``{u > 0}``.

    Triangles closer than ``margin * h`` (``h`` the triangle's longest edge)
    to the free boundary or to the fixed boundary are excluded, as are those
    with centroid radius below ``r_min``.
    """
    mesh = field.mesh
    u = field.values
    if curve is None:
        curve = extract(field, spec)
    tv = u[mesh.triangles]
    cand = (tv > 0).all(axis=1)
    cent = mesh.tri_coords.mean(axis=1)
    h = mesh.tri_max_edge
    cand &= cent[:, 0] >= margin * h
    cand &= np.hypot(cent[:, 0], cent[:, 1]) >= r_min
    if not curve.empty:
        a, b = curve.segment_points()
        dense = np.concatenate([a, b, 0.5 * (a + b)])
        d, _ = cKDTree(dense).query(cent)
        cand &= d >= margin * h
    idx = np.flatnonzero(cand)
    if len(idx) == 0:
        return GradBoundReport(float("nan"), (float("nan"), float("nan")), 0, float("nan"))
    g = triangle_gradients(mesh, u)[idx]
    gs = g[:, 0] ** 2 + g[:, 1] ** 2
    k = int(np.argmax(gs))
    loc = tuple(float(v) for v in cent[idx[k]])
    return GradBoundReport(float(gs[k]), loc, int(len(idx)), float(gs[k] / spec.Lambda))


# ---- export ------------------------------------------------------------------------------------

def write_curve_csv(curve: FreeBoundaryCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "index", "x1", "x2", "r", "phi"])
        r, phi = curve.radius, curve.phi
        for c, comp in enumerate(curve.components):
            for k, p in enumerate(comp):
                x = curve.points[p]
                w.writerow([c, k, repr(float(x[0])), repr(float(x[1])), repr(float(r[p])), repr(float(phi[p]))])


def read_curve_csv(path) -> list:
    """Rows of a curve CSV as tuples ``(component, index, x1, x2, r, phi)``."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(int(a), int(b), float(c), float(d), float(e), float(f)) for a, b, c, d, e, f in rd]


def write_report_json(report: dict, path, config: Optional[dict] = None) -> None:
    doc = {"schema_version": 1, "report": report, "config": config or {}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(f"not JSON serialisable: {type(o)}")
