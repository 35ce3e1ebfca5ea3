"""Discrete local minimizers of the two-phase energy under Dirichlet data.

Two stages:

1. continuation on the smoothed energy, one preconditioned L-BFGS run per
   band width with Armijo backtracking (the Dirichlet Hessian ``2 K_FF``
   serves as the initial inverse-Hessian model);
2. an exact polish: Gauss-Seidel sweeps where each free node moves to the
   exact minimizer of the true energy in its own value, alternated with
   block harmonic solves on nodes whose whole star keeps one strict sign.
"""
from __future__ import annotations

import enum
import logging
import time
import weakref
from collections import deque
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels as K
from .closed_form import GlobalSolution, ProblemSpec, Variant, eval_global
from .errors import InconsistentBoundary, MeshMismatch, NotConverged, SingularSystem
from .functional import EnergyBreakdown, SmoothingSchedule, energy_exact, per_triangle_energy, smoothed_values
from .mesh import BoundaryValues, HalfDiscMesh, ScalarField, restrict_to_ball

log = logging.getLogger(__name__)

MULTIPLE_BASINS = "multiple basins"


class Init(str, enum.Enum):
    ZERO = "zero"
    SMALL = "small"
    LARGE = "large"
    LIFT = "lift"
    FIELD = "field"


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    ``warm_eps_max`` drops wider band widths when starting from a given
    field (``small``, ``large``, ``field``) so continuation does not wash
    the start out.  ``schedule=None`` skips the smoothed stage.
    """

    schedule: Optional[SmoothingSchedule] = dc_field(default_factory=SmoothingSchedule)
    max_outer: int = 1000
    grad_tol: float = 1e-12
    polish_sweeps: int = 400
    polish_rounds: int = 60
    init: Init = Init.ZERO
    init_values: Optional[np.ndarray] = None
    seed: Optional[int] = None
    stage1_tol: float = 1e-10
    warm_eps_max: float = 1.0
    lbfgs_memory: int = 10
    nsample: int = 12
    nested_step: int = 3
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "init", Init(self.init))
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.init is Init.FIELD and self.init_values is None:
            raise ValueError("init='field' needs init_values")

    def replace(self, **kw) -> "SolveConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SolveConfig(**d)


@dataclass
class SolveReport:
    field: ScalarField
    energy: EnergyBreakdown
    outer_iters: int
    polish_moves_accepted: int
    converged: bool
    stationarity: float
    stage1_converged: bool = True
    polish_converged: bool = True
    polish_sweeps: int = 0
    energy_history: list = dc_field(default_factory=list)
    flags: set = dc_field(default_factory=set)
    wall_time: float = 0.0
    runs: list = dc_field(default_factory=list)

    def summary(self) -> dict:
        return dict(energy=self.energy.as_dict(), outer_iters=self.outer_iters,
                    polish_moves_accepted=self.polish_moves_accepted, polish_sweeps=self.polish_sweeps,
                    converged=self.converged, stage1_converged=self.stage1_converged,
                    polish_converged=self.polish_converged, stationarity=self.stationarity,
                    flags=sorted(self.flags), wall_time=self.wall_time)


def _as_boundary(mesh: HalfDiscMesh, boundary) -> BoundaryValues:
    if isinstance(boundary, BoundaryValues):
        if boundary.mesh is not mesh:
            raise MeshMismatch("boundary values belong to another mesh")
        bv = boundary
    elif isinstance(boundary, ScalarField):
        if boundary.mesh is not mesh:
            raise MeshMismatch("boundary field belongs to another mesh")
        idx = np.flatnonzero(mesh.boundary_mask)
        bv = BoundaryValues(mesh, idx, boundary.values[idx])
    else:
        vals = np.asarray(boundary, dtype=float)
        if vals.shape != (mesh.n_nodes,):
            raise InconsistentBoundary("boundary array must hold one value per node")
        idx = np.flatnonzero(mesh.boundary_mask)
        bv = BoundaryValues(mesh, idx, vals[idx])
    want = np.flatnonzero(mesh.boundary_mask)
    if not np.array_equal(np.sort(bv.nodes), want):
        raise InconsistentBoundary("boundary values must cover exactly the boundary nodes")
    if not np.all(np.isfinite(bv.values)):
        raise InconsistentBoundary("non-finite boundary values")
    return bv


def spd_factor(A):
    """Sparse LU of a symmetric positive definite matrix (symmetric ordering, no pivoting)."""
    return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))


class _System:
    """Free/fixed partition with a cached factorization of ``K_FF``."""

    def __init__(self, mesh: HalfDiscMesh):
        self.mesh = mesh
        self.free = mesh.free_nodes
        self.fixed = np.flatnonzero(mesh.boundary_mask)
        Kmat = mesh.stiffness.tocsc()
        self.K_FF = Kmat[self.free][:, self.free].tocsc()
        self.K_FB = Kmat[self.free][:, self.fixed].tocsc()
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            if len(self.free) == 0:
                raise SingularSystem("mesh has no free nodes")
            try:
                self._lu = spd_factor(self.K_FF)
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from None
        return self._lu


_SYSTEMS: dict = {}


def _system(mesh: HalfDiscMesh) -> _System:
    key = id(mesh)
    entry = _SYSTEMS.get(key)
    if entry is None or entry[0]() is not mesh:
        entry = (weakref.ref(mesh), _System(mesh))
        _SYSTEMS[key] = entry
    return entry[1]


def harmonic_lift(mesh: HalfDiscMesh, boundary) -> ScalarField:
    """Discrete harmonic extension of the boundary values."""
    bv = _as_boundary(mesh, boundary)
    sysm = _system(mesh)
    u = bv.full()
    if len(sysm.free):
        rhs = -(sysm.K_FB @ u[sysm.fixed])
        uf = sysm.lu.solve(rhs)
        res = np.linalg.norm(sysm.K_FF @ uf - rhs)
        if not np.isfinite(res) or res > 1e-10 * max(np.linalg.norm(rhs), 1e-300):
            if np.linalg.norm(rhs) > 0:
                raise SingularSystem(f"harmonic solve residual {res:.3e}")
        u[sysm.free] = uf
    return ScalarField(mesh, u)


def _initial_values(mesh, spec, bv, config: SolveConfig) -> np.ndarray:
    init = config.init
    if init is Init.ZERO:
        u = np.zeros(mesh.n_nodes)
    elif init is Init.LIFT:
        u = harmonic_lift(mesh, bv).values.copy()
    elif init in (Init.SMALL, Init.LARGE):
        sol = GlobalSolution(Variant.SMALL if init is Init.SMALL else Variant.LARGE, spec)
        u = eval_global(sol, mesh.nodes) + spec.g(mesh.nodes)
    else:
        u = np.array(config.init_values, dtype=float).reshape(-1)
        if u.shape != (mesh.n_nodes,):
            raise MeshMismatch("init_values has the wrong length")
    u[bv.nodes] = bv.values
    return u


def _lbfgs(x, fg, precond, max_iter, tol, memory):
    """Preconditioned L-BFGS with Armijo backtracking (c=1e-4, factor 0.5)."""
    f, g = fg(x)
    hist: deque = deque(maxlen=memory)
    scale = 1.0
    it = 0
    pg = precond(g)
    stat = float(g @ pg)
    while it < max_iter and stat > tol:
        it += 1
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(hist):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        r = precond(q)
        if hist:
            r *= scale
        for (s, y, rho), a in zip(hist, reversed(alphas)):
            b = rho * (y @ r)
            r += s * (a - b)
        d = -r
        slope = g @ d
        if not slope < 0:
            hist.clear()
            d = -pg
            slope = -stat
        step = 1.0
        for _ in range(50):
            xn = x + step * d
            fn, gn = fg(xn)
            if fn <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        s = xn - x
        y = gn - g
        sy = s @ y
        pgn = precond(gn)
        if sy > 1e-16 * np.sqrt((s @ s) * (y @ y)):
            hist.append((s, y, 1.0 / sy))
            # initial inverse-Hessian scaling s.y / y.P^-1 y
            yPy = y @ (pgn - pg)
            if yPy > 0:
                scale = sy / yPy
        x, f, g, pg = xn, fn, gn, pgn
        stat = float(g @ pg)
    return x, f, it, stat


def _continuation(mesh, u, Lam, sched, levels, tol, config):
    """Smoothed continuation in place on ``u``; returns (iterations, last stationarity)."""
    sysm = _system(mesh)
    free = sysm.free
    lu = sysm.lu
    precond = lambda g: lu.solve(0.5 * g)  # noqa: E731
    work = u.copy()
    total = 0
    stat = 0.0
    for k in levels:
        eps = sched.widths(mesh, k)

        def fg(xf, eps=eps):
            work[free] = xf
            val, grad = smoothed_values(mesh, work, Lam, eps)
            return val, grad[free]

        xf, _, it, stat = _lbfgs(u[free].copy(), fg, precond, config.max_outer, tol, config.lbfgs_memory)
        u[free] = xf
        total += it
        log.debug("n=%d eps level %d: %d iterations, stationarity %.3e", len(u), k, it, stat)
    return total, stat


def _nested_radii(mesh: HalfDiscMesh, step: int):
    """Major ring radii every ``step`` rings, keeping >= 2 major annuli inside."""
    if not step or mesh.ratio is None:
        return []
    major = mesh.major_radii
    return [float(r) for r in major[step:-2:step]]


def _same_sign_block(mesh: HalfDiscMesh, u: np.ndarray, free_mask: np.ndarray) -> np.ndarray:
    """Free nodes whose value and every neighbour's value share one strict sign."""
    Kc = mesh.stiffness
    sgn = np.sign(u)
    nb_min = np.full(mesh.n_nodes, np.inf)
    nb_max = np.full(mesh.n_nodes, -np.inf)
    rows = np.repeat(np.arange(mesh.n_nodes), np.diff(Kc.indptr))
    np.minimum.at(nb_min, rows, sgn[Kc.indices])
    np.maximum.at(nb_max, rows, sgn[Kc.indices])
    return np.flatnonzero(free_mask & (sgn != 0) & (nb_min == sgn) & (nb_max == sgn))


def _block_step(mesh: HalfDiscMesh, u: np.ndarray, free_mask: np.ndarray) -> bool:
    """Harmonic solve on the same-sign block; the phase pattern is kept."""
    S = _same_sign_block(mesh, u, free_mask)
    if len(S) == 0:
        return False
    Kc = mesh.stiffness.tocsr()
    K_SS = Kc[S][:, S].tocsc()
    rest = np.ones(mesh.n_nodes, bool)
    rest[S] = False
    rhs = -(Kc[S][:, rest] @ u[rest])
    try:
        target = spd_factor(K_SS).solve(rhs)
    except RuntimeError:
        return False
    d = target - u[S]
    # largest step keeping every block node strictly on its side
    flip = (np.sign(u[S] + d) != np.sign(u[S]))
    step = 1.0
    if flip.any():
        ratio = -u[S][flip] / d[flip]
        step = 0.9 * float(ratio.min())
    if step <= 0:
        return False
    u[S] += step * d
    return True


def solve(mesh: HalfDiscMesh, spec: ProblemSpec, boundary, config: Optional[SolveConfig] = None) -> SolveReport:
    """Local minimizer of ``J`` with the given Dirichlet values."""
    config = config or SolveConfig()
    t0 = time.perf_counter()
    bv = _as_boundary(mesh, boundary)
    sysm = _system(mesh)
    free = sysm.free
    u = _initial_values(mesh, spec, bv, config)
    Lam = spec.Lambda

    # ---- stage 1: smoothed continuation ---------------------------------
    outer = 0
    stat = 0.0
    stage1_ok = True
    sched = config.schedule
    if sched is not None and len(free):
        sched.check(mesh)
        levels = list(range(len(sched.eps_list)))
        warm = [k for k in levels if sched.eps_list[k] <= config.warm_eps_max] or levels[-1:]
        if config.init in (Init.SMALL, Init.LARGE, Init.FIELD):
            levels = warm
        outer, stat = _continuation(mesh, u, Lam, sched, levels, config.stage1_tol, config)
        stage1_ok = stat <= config.stage1_tol
        # inner balls again with a tolerance scaled to their energy (~R^2)
        for R in _nested_radii(mesh, config.nested_step):
            sub, _, nmap = restrict_to_ball(mesh, None, R)
            if len(sub.free_nodes) == 0:
                continue
            w = u[nmap]
            it, st = _continuation(sub, w, Lam, sched, warm, config.stage1_tol * R * R, config)
            u[nmap] = w
            outer += it
            stage1_ok = stage1_ok and st <= config.stage1_tol * R * R

    # ---- stage 2: exact polish ----------------------------------------------
    free_mask = np.zeros(mesh.n_nodes, bool)
    free_mask[free] = True
    order = free.copy()
    if config.seed is not None:
        np.random.default_rng(config.seed).shuffle(order)
    Kc = mesh.stiffness.tocsr()
    nptr, ntri, nloc = mesh.node_triangles
    history = [energy_exact(ScalarField(mesh, u), spec).total]
    moves = sweeps = 0
    polish_ok = False
    def sweep(nodes, max_sweeps):
        return K.gs_sweeps(u, nodes, Lam, Kc.indptr, Kc.indices, Kc.data, nptr, ntri, nloc, mesh.triangles,
                           mesh.areas, config.grad_tol, max_sweeps, config.nsample)

    for _ in range(config.polish_rounds):
        # smooth modes: harmonic solve where the phase pattern cannot change
        before = history[-1]
        trial = u.copy()
        block_dec = 0.0
        if _block_step(mesh, trial, free_mask):
            after = energy_exact(ScalarField(mesh, trial), spec).total
            if after < before:
                u[:] = trial
                block_dec = before - after
                history.append(after)
        # interface nodes by Gauss-Seidel, then one full verification sweep
        inner = np.zeros(mesh.n_nodes, bool)
        inner[_same_sign_block(mesh, u, free_mask)] = True
        iface = order[~inner[order]]
        sw, mv, _, _ = sweep(iface, config.polish_sweeps)
        sweeps += sw
        moves += mv
        sw, mv, maxdec, _ = sweep(order, 1)
        sweeps += sw
        moves += mv
        history.append(energy_exact(ScalarField(mesh, u), spec).total)
        if maxdec <= config.grad_tol and block_dec <= config.grad_tol:
            polish_ok = True
            break
    if len(free) == 0:
        polish_ok = True

    for a, b in zip(history, history[1:]):
        assert b <= a + 1e-12 * max(1.0, abs(a)), f"energy increased in polish: {a!r} -> {b!r}"

    fld = ScalarField(mesh, u)
    rep = SolveReport(
        field=fld,
        energy=energy_exact(fld, spec),
        outer_iters=outer,
        polish_moves_accepted=moves,
        converged=stage1_ok and polish_ok,
        stationarity=float(np.sqrt(max(stat, 0.0))),
        stage1_converged=stage1_ok,
        polish_converged=polish_ok,
        polish_sweeps=sweeps,
        energy_history=history,
        wall_time=time.perf_counter() - t0,
    )
    if config.strict and not rep.converged:
        raise NotConverged("solver did not reach its tolerances", rep)
    return rep


# ---- ordered combinations ---------------------------------------------------------

@dataclass
class CombineResult:
    field: ScalarField
    defect: float
    order_change: np.ndarray  # triangles where v1 - v2 changes strict sign
    triangle_defects: np.ndarray


def _combine(v1: ScalarField, v2: ScalarField, spec: ProblemSpec, take_max: bool) -> CombineResult:
    if v1.mesh is not v2.mesh:
        raise MeshMismatch("fields live on different meshes")
    mesh = v1.mesh
    hi = np.maximum(v1.values, v2.values)
    lo = np.minimum(v1.values, v2.values)
    tri_def = (per_triangle_energy(ScalarField(mesh, hi), spec) + per_triangle_energy(ScalarField(mesh, lo), spec)
               - per_triangle_energy(v1, spec) - per_triangle_energy(v2, spec))
    diff = (v1.values - v2.values)[mesh.triangles]
    change = np.flatnonzero((diff > 0).any(axis=1) & (diff < 0).any(axis=1))
    defect = abs(float(np.sum(tri_def)))
    return CombineResult(ScalarField(mesh, hi if take_max else lo), defect, change, tri_def)


def combine_max(v1: ScalarField, v2: ScalarField, spec: ProblemSpec) -> CombineResult:
    """Nodal maximum plus the defect ``|J(max)+J(min)-J(v1)-J(v2)|``."""
    return _combine(v1, v2, spec, True)


def combine_min(v1: ScalarField, v2: ScalarField, spec: ProblemSpec) -> CombineResult:
    return _combine(v1, v2, spec, False)


def _extreme_minimizer(mesh, spec, boundary, config, largest: bool, tau: Optional[float]):
    config = config or SolveConfig()
    starts = (Init.LARGE if largest else Init.SMALL, Init.ZERO, Init.LIFT)
    runs = []
    for s in starts:
        try:
            runs.append(solve(mesh, spec, boundary, config.replace(init=s, strict=False)))
        except Exception as exc:  # gamma may be undefined for the homogeneous starts
            if s in (Init.SMALL, Init.LARGE):
                log.info("skipping %s start: %s", s.value, exc)
                continue
            raise
    good = [r for r in runs if r.converged] or runs
    stack = np.stack([r.field.values for r in good])
    env = stack.max(axis=0) if largest else stack.min(axis=0)
    final = solve(mesh, spec, boundary, config.replace(init=Init.FIELD, init_values=env, schedule=None, strict=False))
    final.runs = runs
    final.outer_iters += sum(r.outer_iters for r in runs)
    tau = 5.0 * mesh.h if tau is None else tau
    spread = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    if spread > tau:
        final.flags.add(MULTIPLE_BASINS)
    best = min(r.energy.total for r in good)
    if final.energy.total > best + config.grad_tol:
        final.flags.add("envelope above best run")
    final.converged = final.converged and all(r.converged for r in good)
    if config.strict and not final.converged:
        raise NotConverged("extreme minimizer did not converge", final)
    return final


def smallest_minimizer(mesh, spec, boundary, config: Optional[SolveConfig] = None, tau: Optional[float] = None):
    """Nodal minimum of multi-start minimizers, re-polished."""
    return _extreme_minimizer(mesh, spec, boundary, config, False, tau)


def largest_minimizer(mesh, spec, boundary, config: Optional[SolveConfig] = None, tau: Optional[float] = None):
    """Nodal maximum of multi-start minimizers, re-polished."""
    return _extreme_minimizer(mesh, spec, boundary, config, True, tau)
