"""Graded triangulations of the upper half-disc ``{|x| < 1, x1 > 0}``.

The mesh is built from concentric polygonal rings.  Between the ``q^k`` ring
radii each dyadic annulus is split into ``m`` geometric sub-layers with
ratio ``q**(1/m)``, all carrying the same number of angular intervals, so a
rescaling by any power of the layer ratio maps ring nodes onto ring nodes.
Inside the innermost major ring the angular count is halved until a small
fan closes the mesh at the origin.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .closed_form import GlobalSolution, ProblemSpec, Variant, eval_global
from .errors import BudgetExceeded, MeshMismatch, TraceMismatch, UnalignedRadius

ALIGN_TOL = 1e-12
CORNER_TOL = 1e-12
_FAN_MAX = 9  # 180/9 = 20 degree apex angle at the origin
_TRANSITION_GAP = 1.7  # radial gap of a halving layer, in fine arc spacings
DEFAULT_MAX_TRIANGLES = 500_000


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    FIXED = 1  # on the flat boundary {x1 = 0}
    ARC = 2
    CORNER = 3


@dataclass(frozen=True)
class Ring:
    radius: float
    nodes: np.ndarray  # node indices ordered by polar angle from +x2


class HalfDiscMesh:
    """Conforming, positively oriented triangulation of a half-disc.

    Triangles are stored in a canonical order (each triangle rotated so its
    lexicographically smallest vertex comes first, then sorted by centroid),
    which makes every reduction over triangles independent of how the mesh
    was numbered.
    """

    def __init__(self, nodes, triangles, node_class=None, ratio: Optional[float] = None,
                 angular_n: Optional[int] = None):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        tris = np.ascontiguousarray(triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must have shape (M, 3)")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise ValueError("triangle index out of range")
        self.nodes = nodes
        self.triangles = _canonical_triangles(nodes, tris)
        self.radius = float(np.max(np.hypot(nodes[:, 0], nodes[:, 1])))
        if node_class is None:
            node_class = classify_nodes(nodes, self.radius)
        self.node_class = np.asarray(node_class, dtype=np.int8)
        self.ratio = ratio
        self.angular_n = angular_n
        for arr in (self.nodes, self.triangles, self.node_class):
            arr.setflags(write=False)

    def __repr__(self):
        return f"HalfDiscMesh(nodes={self.n_nodes}, triangles={self.n_triangles}, radius={self.radius:g})"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # ---- geometry -------------------------------------------------------
    @cached_property
    def node_radius(self) -> np.ndarray:
        return np.hypot(self.nodes[:, 0], self.nodes[:, 1])

    @cached_property
    def node_angle(self) -> np.ndarray:
        """Polar angle measured from the positive x2-axis toward +x1."""
        return np.arctan2(self.nodes[:, 0], self.nodes[:, 1])

    @cached_property
    def tri_coords(self) -> np.ndarray:
        return self.nodes[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.tri_coords
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def grad_basis(self) -> np.ndarray:
        """Gradients of the three hat functions on each triangle, (M, 3, 2)."""
        p = self.tri_coords
        g = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            # rotate the opposite edge b - a by -90 degrees
            g[:, i, 0] = a[:, 1] - b[:, 1]
            g[:, i, 1] = b[:, 0] - a[:, 0]
        return g / (2.0 * self.areas)[:, None, None]

    @cached_property
    def tri_radius_max(self) -> np.ndarray:
        return self.node_radius[self.triangles].max(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 0]] - self.nodes[self.edges[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def tri_max_edge(self) -> np.ndarray:
        p = self.tri_coords
        lens = [np.hypot(*(p[:, (i + 1) % 3] - p[:, i]).T) for i in range(3)]
        return np.max(lens, axis=0)

    @cached_property
    def edge_triangles(self) -> dict:
        """Map sorted node pair -> list of adjacent triangle indices."""
        out: dict = {}
        for t, tri in enumerate(self.triangles.tolist()):
            for i in range(3):
                a, b = tri[i], tri[(i + 1) % 3]
                out.setdefault((a, b) if a < b else (b, a), []).append(t)
        return out

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.array([e for e, ts in self.edge_triangles.items() if len(ts) == 1], dtype=np.int64)

    @property
    def h(self) -> float:
        """Outer mesh size: longest edge of the triangles touching the arc."""
        arc = np.isin(self.node_class[self.triangles], (NodeClass.ARC, NodeClass.CORNER)).any(axis=1)
        return float(self.tri_max_edge[arc].max())

    @property
    def h_min(self) -> float:
        return float(self.edge_lengths.min())

    def local_h(self, r: float) -> float:
        """Shortest edge incident to the ring of radius ``r``."""
        ring = self.ring(r)
        touch = np.isin(self.edges, ring.nodes).any(axis=1)
        return float(self.edge_lengths[touch].min())

    @cached_property
    def min_angle(self) -> float:
        p = self.tri_coords
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, v) / (np.hypot(*u.T) * np.hypot(*v.T))
            angles.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(angles))

    # ---- topology ---------------------------------------------------------
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """P1 stiffness matrix ``K_ij = int grad phi_i . grad phi_j``."""
        G = self.grad_basis
        local = np.einsum("tik,tjk->tij", G, G) * self.areas[:, None, None]
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        return K.tocsr()

    @cached_property
    def node_triangles(self):
        """CSR-style incidence ``(indptr, tri_index, local_vertex)``."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, (order // 3).astype(np.int64), (order % 3).astype(np.int64)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.node_class != NodeClass.INTERIOR

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def euler_characteristic(self) -> int:
        return self.n_nodes - len(self.edges) + self.n_triangles

    # ---- rings ---------------------------------------------------------------
    @cached_property
    def rings(self) -> list:
        """Concentric rings, outermost first."""
        r = self.node_radius
        idx = np.flatnonzero(r > 0.0)
        idx = idx[np.argsort(-r[idx], kind="stable")]
        rs = r[idx]
        breaks = np.flatnonzero(rs[:-1] - rs[1:] > 1e-9 * rs[:-1]) + 1
        rings = []
        for group in np.split(idx, breaks):
            group = group[np.argsort(self.node_angle[group], kind="stable")]
            # the node at angle 0 sits at (0, r) exactly
            radius = float(self.nodes[group[0], 1]) if self.nodes[group[0], 0] == 0.0 else float(r[group].mean())
            rings.append(Ring(radius, group))
        return rings

    @cached_property
    def ring_radii(self) -> np.ndarray:
        return np.array([ring.radius for ring in self.rings])

    @property
    def major_radii(self) -> np.ndarray:
        """Ring radii that are integer powers of the grading ratio."""
        if self.ratio is None:
            return self.ring_radii.copy()
        k = np.log(self.ring_radii) / math.log(self.ratio)
        keep = np.abs(k - np.round(k)) < 1e-9
        return self.ring_radii[keep]

    def ring_index(self, r: float) -> int:
        j = int(np.argmin(np.abs(self.ring_radii - r)))
        if abs(self.ring_radii[j] - r) > ALIGN_TOL * max(1.0, r):
            raise UnalignedRadius(f"radius {r!r} is not a ring radius of the mesh")
        return j

    def ring(self, r: float) -> Ring:
        return self.rings[self.ring_index(r)]

    def is_aligned(self, r: float) -> bool:
        try:
            self.ring_index(r)
        except UnalignedRadius:
            return False
        return True

    def triangles_within(self, r: float) -> np.ndarray:
        """Boolean mask of triangles inside the closed ball of ring radius ``r``."""
        r = self.ring_radii[self.ring_index(r)] if r < self.radius * (1 - ALIGN_TOL) else self.radius
        return self.tri_radius_max <= r * (1.0 + 1e-9)

    def ring_edges(self, r: float):
        """Polygon edges of ring ``r`` with the adjacent triangle inside it.

        Returns ``(edges, tris)`` with ``edges`` of shape (E, 2) ordered by
        polar angle.
        """
        ring = self.ring(r)
        nodes = ring.nodes
        edges = np.stack([nodes[:-1], nodes[1:]], axis=1)
        rad = self.node_radius
        tris = np.empty(len(edges), dtype=np.int64)
        for k, (a, b) in enumerate(edges.tolist()):
            ts = self.edge_triangles[(a, b) if a < b else (b, a)]
            inner = [t for t in ts if rad[self.triangles[t]].min() < rad[a] * (1 - 1e-9)]
            if len(inner) != 1:
                raise UnalignedRadius(f"ring {r!r} is not a polygon of mesh edges")
            tris[k] = inner[0]
        return edges, tris

    # ---- point location -------------------------------------------------------
    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.tri_coords.mean(axis=1))

    def locate(self, points):
        """Containing triangle and barycentric coordinates for each point.

        Points marginally outside the polygonal domain are clamped to the
        nearest triangle found.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, self.n_triangles)
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.atleast_2d(cand)
        tri_out = np.empty(len(pts), dtype=np.int64)
        bary_out = np.empty((len(pts), 3))
        for n, p in enumerate(pts):
            best, best_bc, best_score = -1, None, -np.inf
            for t in cand[n]:
                bc = self._barycentric(t, p)
                score = bc.min()
                if score > best_score:
                    best, best_bc, best_score = t, bc, score
                if score >= -1e-12:
                    break
            if best_score < -1e-12:
                bcs = self._barycentric_all(p)
                t = int(np.argmax(bcs.min(axis=1)))
                best, best_bc, best_score = t, bcs[t], bcs[t].min()
            if best_score < 0:
                best_bc = np.clip(best_bc, 0.0, None)
                best_bc /= best_bc.sum()
            tri_out[n], bary_out[n] = best, best_bc
        return tri_out, bary_out

    def _barycentric(self, t, p):
        a, b, c = self.tri_coords[t]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (p[1] - a[1]) * (c[0] - a[0])) / det
        l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / det
        return np.array([1.0 - l1 - l2, l1, l2])

    def _barycentric_all(self, p):
        a, b, c = self.tri_coords[:, 0], self.tri_coords[:, 1], self.tri_coords[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        l1 = ((p[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (p[1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


@dataclass(eq=False)
class ScalarField:
    """Nodal values of a continuous piecewise-linear function."""

    mesh: HalfDiscMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.shape != (self.mesh.n_nodes,):
            raise MeshMismatch(f"expected {self.mesh.n_nodes} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    def __call__(self, points):
        return self.evaluate(points)

    def evaluate(self, points):
        tri, bc = self.mesh.locate(points)
        return np.einsum("ij,ij->i", self.values[self.mesh.triangles[tri]], bc)

    def copy(self) -> "ScalarField":
        return ScalarField(self.mesh, self.values.copy())

    @classmethod
    def interpolate(cls, mesh: HalfDiscMesh, fn: Callable) -> "ScalarField":
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float))

    @classmethod
    def zeros(cls, mesh: HalfDiscMesh) -> "ScalarField":
        return cls(mesh, np.zeros(mesh.n_nodes))


def classify_nodes(nodes: np.ndarray, radius: float = 1.0) -> np.ndarray:
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    on_pi = nodes[:, 0] == 0.0
    on_arc = np.abs(r - radius) <= 1e-12 * radius
    cls = np.full(len(nodes), NodeClass.INTERIOR, dtype=np.int8)
    cls[on_arc] = NodeClass.ARC
    cls[on_pi] = NodeClass.FIXED
    cls[on_pi & on_arc] = NodeClass.CORNER
    return cls


def _canonical_triangles(nodes, tris):
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    p = nodes[tris]
    # rotate so the lexicographically smallest vertex (x1, then x2) is first
    rows = np.arange(len(tris))
    first = np.zeros(len(tris), dtype=np.int64)
    for i in (1, 2):
        bx, by = p[rows, first, 0], p[rows, first, 1]
        better = (p[:, i, 0] < bx) | ((p[:, i, 0] == bx) & (p[:, i, 1] < by))
        first[better] = i
    rot = (first[:, None] + np.arange(3)[None, :]) % 3
    tris = np.take_along_axis(tris, rot, axis=1)
    p = nodes[tris]
    c = p[:, 0] + p[:, 1] + p[:, 2]
    order = np.lexsort((c[:, 1], c[:, 0]))
    return np.ascontiguousarray(tris[order])


# ---- construction ------------------------------------------------------------

def _unit_ring(c: int) -> np.ndarray:
    """``c + 1`` points on the unit half-circle at angles ``i*pi/c``.

    Evaluated through the reflection symmetries about the x1-axis and (when
    ``4 | c``) the diagonals so mirrored nodes are bit-identical mirrors.
    """
    i = np.arange(c + 1)
    j = np.minimum(i, c - i)
    s = np.sin(j * math.pi / c)
    co = np.cos(j * math.pi / c)
    if c % 4 == 0:
        jj = c // 2 - j
        swap = 4 * j > c
        s = np.where(swap, np.cos(jj * math.pi / c), s)
        co = np.where(swap, np.sin(jj * math.pi / c), co)
        diag = 4 * j == c
        s[diag] = co[diag] = math.sqrt(0.5)
    x2 = np.where(2 * i <= c, co, -co)
    s[0] = s[c] = 0.0
    if c % 2 == 0:
        s[c // 2], x2[c // 2] = 1.0, 0.0
    x2[0], x2[c] = 1.0, -1.0
    return np.stack([s, x2], axis=1)


def sublayers(ratio: float, angular_n: int) -> int:
    """Number of geometric sub-layers per major annulus (aspect ratio ~ 1)."""
    return max(1, int(round(math.log(1.0 / ratio) * angular_n / math.pi)))


def _fan_count(angular_n: int) -> int:
    c = angular_n
    while c > _FAN_MAX:
        if c % 2:
            raise ValueError(
                f"angular_n={angular_n} cannot be halved down to <= {_FAN_MAX} intervals; "
                "use a value of the form c*2^p with c <= 9"
            )
        c //= 2
    return c


def estimate_triangle_count(rings: int, ratio: float, angular_n: int) -> int:
    m = sublayers(ratio, angular_n)
    core, c = 0, angular_n
    while c > _FAN_MAX:
        core += 3 * (c // 2)
        c //= 2
    return 2 * angular_n * m * (rings - 1) + core + c


def build_mesh(rings: int = 12, ratio: float = 0.5, angular_n: int = 64,
               max_triangles: int = DEFAULT_MAX_TRIANGLES) -> HalfDiscMesh:
    """Graded half-disc mesh with major ring radii ``ratio**k``, ``k < rings``."""
    if rings < 3:
        raise ValueError("need rings >= 3")
    if not 0.3 < ratio < 0.9:
        raise ValueError("need 0.3 < ratio < 0.9")
    if angular_n < 8:
        raise ValueError("need angular_n >= 8")
    _fan_count(angular_n)
    est = estimate_triangle_count(rings, ratio, angular_n)
    if est > max_triangles:
        raise BudgetExceeded(f"mesh would have {est} triangles (cap {max_triangles})")

    n = angular_n
    m = sublayers(ratio, n)
    rho = ratio ** (1.0 / m)
    unit = _unit_ring(n)
    nodes = [np.zeros((1, 2))]  # origin first
    count = 1
    layers = []  # (first node index, angular count)
    for k in range(m * (rings - 1) + 1):
        r = ratio ** (k // m) * rho ** (k % m)
        nodes.append(r * unit)
        layers.append((count, n))
        count += n + 1
    tris = []
    for k in range(len(layers) - 1):
        tris.extend(_band(layers[k][0], layers[k + 1][0], n, k))

    r = ratio ** (rings - 1)
    c = n
    while c > _FAN_MAX:
        c2 = c // 2
        r_new = r * (1.0 - _TRANSITION_GAP * math.pi / c)
        nodes.append(r_new * _unit_ring(c2))
        outer = layers[-1][0]
        layers.append((count, c2))
        count += c2 + 1
        tris.extend(_transition(outer, layers[-1][0], c2))
        r, c = r_new, c2
    inner = layers[-1][0]
    tris.extend((0, inner + i, inner + i + 1) for i in range(c))

    mesh = HalfDiscMesh(np.concatenate(nodes), np.array(tris), ratio=ratio, angular_n=angular_n)
    if mesh.n_triangles > max_triangles:
        raise BudgetExceeded(f"mesh has {mesh.n_triangles} triangles (cap {max_triangles})")
    return mesh


def _band(a0, b0, c, k):
    out = []
    for i in range(c):
        a, a1, b, b1 = a0 + i, a0 + i + 1, b0 + i, b0 + i + 1
        if (i + k) % 2 == 0:
            out += [(a, b, b1), (a, b1, a1)]
        else:
            out += [(a, b, a1), (a1, b, b1)]
    return out


def _transition(f0, c0, c):
    """Triangles between a ring of ``2c`` intervals and one of ``c``."""
    out = []
    for j in range(c):
        f, I = f0 + 2 * j, c0 + j
        out += [(I, f, f + 1), (I, f + 1, I + 1), (I + 1, f + 1, f + 2)]
    return out


# ---- boundary data --------------------------------------------------------------

@dataclass(eq=False)
class BoundaryValues:
    """Dirichlet values on the boundary nodes of a mesh."""

    mesh: HalfDiscMesh
    nodes: np.ndarray
    values: np.ndarray

    def full(self, interior=0.0) -> np.ndarray:
        out = np.full(self.mesh.n_nodes, float(interior))
        out[self.nodes] = self.values
        return out

    def as_field(self, interior=0.0) -> ScalarField:
        return ScalarField(self.mesh, self.full(interior))


Outer = Union[str, Variant, Callable]


def boundary_trace(mesh: HalfDiscMesh, spec: ProblemSpec, outer: Outer = "small") -> BoundaryValues:
    """Dirichlet datum: ``f`` on the flat part, an outer datum on the arc.

    ``outer`` is ``"small"``/``"large"`` for the trace of ``v_S + g`` /
    ``v_L + g`` or a callable ``points -> values``.  Corners take the flat
    value and must agree with the outer datum to ``1e-12``.
    """
    cls = mesh.node_class
    x = mesh.nodes
    if callable(outer) and not isinstance(outer, (str, Variant)):
        outer_fn = outer
    else:
        sol = GlobalSolution(Variant(outer), spec)
        outer_fn = lambda pts: eval_global(sol, pts) + spec.g(pts)  # noqa: E731

    flat = np.flatnonzero((cls == NodeClass.FIXED) | (cls == NodeClass.CORNER))
    arc = np.flatnonzero(cls == NodeClass.ARC)
    corners = np.flatnonzero(cls == NodeClass.CORNER)
    vals = np.empty(mesh.n_nodes)
    vals[flat] = spec.pi_datum(x[flat, 1]) + spec.g(x[flat])
    vals[arc] = np.asarray(outer_fn(x[arc]), dtype=float)
    if len(corners):
        oc = np.asarray(outer_fn(x[corners]), dtype=float)
        bad = np.abs(oc - vals[corners]) > CORNER_TOL * np.maximum(1.0, np.abs(vals[corners]))
        if bad.any():
            raise TraceMismatch(
                f"outer datum {oc[bad]} disagrees with f={vals[corners][bad]} at corners {x[corners][bad].tolist()}"
            )
    idx = np.flatnonzero(mesh.boundary_mask)
    return BoundaryValues(mesh, idx, vals[idx])


# ---- restriction --------------------------------------------------------------------

def restrict_to_ball(mesh: HalfDiscMesh, field: Optional[ScalarField], r: float):
    """Sub-mesh of the triangles inside the ball of ring radius ``r``.

    Returns ``(submesh, subfield, node_map)`` where ``node_map[i]`` is the
    parent index of sub-mesh node ``i``.
    """
    if not 0.0 < r <= mesh.radius * (1.0 + ALIGN_TOL):
        raise UnalignedRadius(f"radius {r!r} outside (0, {mesh.radius}]")
    keep = mesh.triangles_within(r)
    if keep.all():
        return mesh, field, np.arange(mesh.n_nodes)
    tris = mesh.triangles[keep]
    node_map = np.unique(tris)
    inverse = np.full(mesh.n_nodes, -1, dtype=np.int64)
    inverse[node_map] = np.arange(len(node_map))
    sub_nodes = mesh.nodes[node_map]
    radius = mesh.ring_radii[mesh.ring_index(r)]
    cls = classify_nodes(sub_nodes, radius)
    sub = HalfDiscMesh(sub_nodes, inverse[tris], cls, ratio=mesh.ratio, angular_n=mesh.angular_n)
    sub_field = None if field is None else ScalarField(sub, field.values[node_map])
    return sub, sub_field, node_map


# ---- file format -------------------------------------------------------------------

_HEADER = "halfdisc-mesh v1"
_CLASS_NAMES = {c: c.name.lower() for c in NodeClass}
_CLASS_BY_NAME = {v: k for k, v in _CLASS_NAMES.items()}


def write_mesh(mesh: HalfDiscMesh, path) -> None:
    lines = [_HEADER, f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g} {_CLASS_NAMES[NodeClass(c)]}" for (x, y), c in zip(mesh.nodes.tolist(), mesh.node_class)]
    lines.append(f"tris {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, ratio: Optional[float] = None) -> HalfDiscMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise ValueError(f"{path}: not a '{_HEADER}' file")
    tag, n = lines[1].split()
    if tag != "nodes":
        raise ValueError(f"{path}: expected 'nodes N'")
    n = int(n)
    nodes = np.empty((n, 2))
    cls = np.empty(n, dtype=np.int8)
    for i, line in enumerate(lines[2:2 + n]):
        x, y, c = line.split()
        nodes[i] = float(x), float(y)
        cls[i] = _CLASS_BY_NAME[c]
    tag, m = lines[2 + n].split()
    if tag != "tris":
        raise ValueError(f"{path}: expected 'tris M'")
    tris = np.array([[int(v) for v in line.split()] for line in lines[3 + n:3 + n + int(m)]], dtype=np.int64)
    return HalfDiscMesh(nodes, tris.reshape(-1, 3), cls, ratio=ratio)
