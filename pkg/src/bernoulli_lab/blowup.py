"""Blow-up sequences ``u(r x) / r`` at the origin on ring-aligned scales."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .closed_form import GlobalSolution, ProblemSpec, Variant, eval_global, free_boundary_ray
from .errors import EmptyInAnnulus, TooFewScales, UnalignedScale
from .freeboundary import FreeBoundaryCurve
from .mesh import HalfDiscMesh, ScalarField


class Verdict(str, enum.Enum):
    SMALL = "small"
    LARGE = "large"
    UNDECIDED = "undecided"


_NODE_TOL = 1e-9  # relative; neighbouring nodes are O(1/angular_n) apart


def _scale_map(mesh: HalfDiscMesh, r: float):
    """Node index hit by ``r x`` for every node ``x`` (``-1`` where none)."""
    if not 0.0 < r <= 1.0 + 1e-12 or not mesh.is_aligned(r * mesh.radius):
        raise UnalignedScale(f"scale {r!r} is not a ring radius of the mesh")
    cache = mesh.__dict__.setdefault("_scale_maps", {})
    key = round(math.log(r), 12)
    if key not in cache:
        tgt = r * mesh.nodes
        tree = mesh.__dict__.get("_node_tree")
        if tree is None:
            tree = mesh.__dict__["_node_tree"] = cKDTree(mesh.nodes)
        d, idx = tree.query(tgt)
        ok = d <= _NODE_TOL * np.hypot(tgt[:, 0], tgt[:, 1])
        cache[key] = np.where(ok, idx, -1)
    return cache[key]


def exact_nodes(mesh: HalfDiscMesh, r: float) -> np.ndarray:
    """Mask of nodes whose rescaled image is itself a node."""
    return _scale_map(mesh, r) >= 0


def rescale(field: ScalarField, r: float) -> ScalarField:
    """``v(x) = u(r x) / r`` on the same mesh.

    Nodes whose image ``r x`` is a mesh node (every node of the graded
    rings that stays outside the core) take that node's value; the few
    remaining core nodes are interpolated.
    """
    mesh = field.mesh
    idx = _scale_map(mesh, r)
    out = np.empty(mesh.n_nodes)
    hit = idx >= 0
    out[hit] = field.values[idx[hit]]
    if not hit.all():
        out[~hit] = field.evaluate(r * mesh.nodes[~hit])
    return ScalarField(mesh, out / r)


def residual(field: ScalarField, sol: GlobalSolution, inner: float) -> float:
    """Max nodal distance to the interpolant of ``sol`` on ``inner <= |x| <= 1``."""
    r = field.mesh.node_radius
    sel = (r >= inner * (1 - 1e-12)) & (r <= field.mesh.radius * (1 + 1e-12))
    return float(np.max(np.abs(field.values[sel] - eval_global(sol, field.mesh.nodes[sel]))))


@dataclass
class BlowupSequence:
    base: ScalarField
    scales: list
    fields: list
    residuals_S: list
    residuals_L: list
    tol_class: float
    verdict: Verdict = Verdict.UNDECIDED
    inner: float = 0.5

    def as_dict(self) -> dict:
        return dict(scales=self.scales, residuals_S=self.residuals_S, residuals_L=self.residuals_L,
                    tol_class=self.tol_class, verdict=self.verdict.value, inner=self.inner)


def default_scales(mesh: HalfDiscMesh) -> list:
    """``q^j`` for every ``j`` whose annulus ``[q^(j+1), q^j]`` is still graded."""
    major = mesh.major_radii
    return [float(r) for r in major[:-1]]


def blowup_sequence(field: ScalarField, spec: ProblemSpec, scales: Optional[Sequence[float]] = None,
                    tol_class: Optional[float] = None) -> BlowupSequence:
    """Rescaled fields and their distances to ``v_S`` and ``v_L`` on ``B_1 \\ B_q``."""
    mesh = field.mesh
    spec.require_gamma()
    scales = default_scales(mesh) if scales is None else [float(s) for s in scales]
    q = mesh.ratio if mesh.ratio is not None else 0.5
    S, L = GlobalSolution(Variant.SMALL, spec), GlobalSolution(Variant.LARGE, spec)
    fields, rs, rl = [], [], []
    for s in scales:
        v = rescale(field, s)
        fields.append(v)
        rs.append(residual(v, S, q))
        rl.append(residual(v, L, q))
    tol = 10.0 * mesh.h if tol_class is None else float(tol_class)
    seq = BlowupSequence(field, scales, fields, rs, rl, tol, inner=q)
    if len(scales) >= 3:
        seq.verdict = classify(seq, spec, tol)
    return seq


def _settles(res, tol) -> bool:
    res = np.asarray(res)
    # eventually within tolerance, with no growth beyond half of it overall
    return bool(np.all(res[-2:] <= tol) and res[-1] <= res[0] + 0.5 * tol)


def classify(seq: BlowupSequence, spec: ProblemSpec, tol_class: Optional[float] = None) -> Verdict:
    """Small, Large or Undecided from the residual sequences."""
    if len(seq.scales) < 3:
        raise TooFewScales(f"need at least 3 scales, got {len(seq.scales)}")
    tol = seq.tol_class if tol_class is None else float(tol_class)
    s, l = _settles(seq.residuals_S, tol), _settles(seq.residuals_L, tol)
    if s and not l:
        return Verdict.SMALL
    if l and not s:
        return Verdict.LARGE
    return Verdict.UNDECIDED


# ---- free-boundary distance -----------------------------------------------------------

def ray_curve(spec: ProblemSpec, variant, length: float = 1.0, n: int = 2) -> FreeBoundaryCurve:
    """The zero ray of ``v_S``/``v_L`` from the origin as a polyline."""
    d, _ = free_boundary_ray(GlobalSolution(Variant(variant), spec))
    t = np.linspace(0.0, length, max(2, n))
    return FreeBoundaryCurve.from_polyline(t[:, None] * d[None, :])


def _segments(curve):
    if isinstance(curve, FreeBoundaryCurve):
        a, b = curve.segment_points()
        pts = curve.points
    else:
        pts = np.asarray(curve, dtype=float).reshape(-1, 2)
        a, b = pts[:-1], pts[1:]
    return a, b, pts


def _clip_segment(p, q, a, b):
    """Pieces of segment ``pq`` inside the closed annulus ``a <= |x| <= b``."""
    d = q - p
    dd = float(d @ d)
    if dd == 0.0:
        r = math.hypot(*p)
        return [(p, q)] if a <= r <= b else []

    def roots(rad):
        # |p + t d|^2 = rad^2
        B = 2 * float(p @ d)
        C = float(p @ p) - rad * rad
        disc = B * B - 4 * dd * C
        if disc < 0:
            return None
        s = math.sqrt(disc)
        return (-B - s) / (2 * dd), (-B + s) / (2 * dd)

    rb = roots(b)
    if rb is None:
        return []
    lo, hi = max(0.0, rb[0]), min(1.0, rb[1])
    if lo > hi:
        return []
    pieces = [(lo, hi)]
    ra = roots(a) if a > 0 else None
    if ra is not None:
        # remove the open interval (ra0, ra1) where the segment is inside radius a
        pieces = [(lo, min(hi, ra[0])), (max(lo, ra[1]), hi)]
        pieces = [(x, y) for x, y in pieces if y >= x]
    return [(p + s0 * d, p + s1 * d) for s0, s1 in pieces]


def _clipped(curve, a, b):
    A, B, pts = _segments(curve)
    segs = []
    for p, q in zip(A, B):
        segs.extend(_clip_segment(p, q, a, b))
    r = np.hypot(pts[:, 0], pts[:, 1]) if len(pts) else np.zeros(0)
    iso = pts[(r >= a) & (r <= b)] if len(pts) else pts
    return segs, iso


def _dist_to_segments(x, segs):
    P = np.array([s[0] for s in segs])
    Q = np.array([s[1] for s in segs])
    d = Q - P
    dd = np.einsum("ij,ij->i", d, d)
    t = np.where(dd > 0, np.einsum("kij,ij->ki", x[:, None, :] - P[None], d) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = P[None] + t[..., None] * d[None]
    return np.min(np.hypot(*(x[:, None, :] - proj).transpose(2, 0, 1)), axis=1)


def _directed(segs_a, iso_a, segs_b, dense: int):
    s = np.linspace(0.0, 1.0, dense)
    samples = [iso_a] if len(iso_a) else []
    for p, q in segs_a:
        samples.append(p[None] + s[:, None] * (q - p)[None])
    X = np.concatenate(samples) if samples else np.zeros((0, 2))
    return float(np.max(_dist_to_segments(X, segs_b))) if len(X) else 0.0


def fb_hausdorff(curve1, curve2, annulus=(0.0, 1.0), dense: int = 65) -> float:
    """Symmetric Hausdorff distance between two polylines clipped to an annulus.

    Segments are clipped exactly; points of one set are the clipped vertices
    plus ``dense`` samples per segment, measured against the other set's
    clipped segments exactly.
    """
    a, b = float(annulus[0]), float(annulus[1])
    s1, i1 = _clipped(curve1, a, b)
    s2, i2 = _clipped(curve2, a, b)
    if (not s1 and not len(i1)) or (not s2 and not len(i2)):
        raise EmptyInAnnulus(f"a curve has no points in [{a}, {b}]")
    s1 = s1 or [(p, p) for p in i1]
    s2 = s2 or [(p, p) for p in i2]
    return max(_directed(s1, i1, s2, dense), _directed(s2, i2, s1, dense))


# ---- export -----------------------------------------------------------------------------

def write_sequence(seq: BlowupSequence, outdir) -> list:
    """JSON manifest plus one CSV of nodal values per scale; returns the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    files = []
    mesh = seq.base.mesh
    for j, (s, v) in enumerate(zip(seq.scales, seq.fields)):
        p = out / f"blowup_{j:02d}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "x1", "x2", "value"])
            for i, (x, val) in enumerate(zip(mesh.nodes, v.values)):
                w.writerow([i, repr(float(x[0])), repr(float(x[1])), repr(float(val))])
        files.append(p.name)
        paths.append(p)
    man = out / "blowup.json"
    doc = {"schema_version": 1, "sequence": seq.as_dict(), "files": files}
    with open(man, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [man] + paths


def read_sequence_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
