"""Scenario runner for the named experiments.

Each ``run_*`` function takes a :class:`Scenario`, performs its solves and
diagnostics, and returns a :class:`ScenarioResult` whose checks carry the
value, the tolerance and a tri-state status.  Solves are memoised per
process on (mesh, spec, data, solver settings).
"""
from __future__ import annotations

import configparser
import enum
import json
import math
import platform
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__
from .blowup import Verdict, blowup_sequence, fb_hausdorff, ray_curve
from .closed_form import (Cone, ConeKind, GlobalSolution, ProblemSpec, Variant, cone_contains, derive_params,
                          eval_global, weiss_closed_form, weiss_gap_closed_form)
from .errors import BadConeParam, ConfigError, CurveTooShort, NoCrossing
from .freeboundary import (Side, angle_profile, curve_side, extract, gradbound_report, growth_report, jump_report,
                           nt_check)
from .functional import SmoothingSchedule
from .mesh import BoundaryValues, HalfDiscMesh, ScalarField, boundary_trace, build_mesh
from .minimize import Init, SolveConfig, SolveReport, smallest_minimizer, solve
from .weiss import weiss_energy

DEFAULT_LAMBDA_PLUS = math.sqrt(2.0)


class Status(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class ScenarioName(str, enum.Enum):
    GROWTH_A = "growth_a"
    CLASSIFY_C = "classify_c"
    ANGLE_D = "angle_d"
    INSTABILITY_E = "instability_e"
    WEISS_GAP = "weiss_gap"
    CONSISTENCY = "consistency"


@dataclass(frozen=True)
class MeshParams:
    rings: int = 12
    ratio: float = 0.5
    angular_n: int = 64

    def build(self) -> HalfDiscMesh:
        return _mesh(self)

    def refined(self) -> "MeshParams":
        """Same grading with half the mesh size."""
        return MeshParams(self.rings, self.ratio, 2 * self.angular_n)

    def as_dict(self) -> dict:
        return dict(rings=self.rings, ratio=self.ratio, angular_n=self.angular_n)


_MESHES: dict = {}
_SOLVES: dict = {}


def _mesh(p: MeshParams) -> HalfDiscMesh:
    if p not in _MESHES:
        _MESHES[p] = build_mesh(p.rings, p.ratio, p.angular_n)
    return _MESHES[p]


def clear_caches() -> None:
    _MESHES.clear()
    _SOLVES.clear()


# ---- scenario -----------------------------------------------------------------------

PARAM_DEFAULTS = {
    "outer": "small",
    "refine": False,
    "levels": 5,
    "delta": 0.5,
    "radii": (0.25, 0.125, 0.0625),
    "tol_grad": 0.1,
    "tol_class": None,
    "jump_tol": 0.2,
    "angle_tol_deg": 6.0,
    "sigma_factor": 1.05,
    "eps_list": (0.2, 0.1, 0.05),
    "arc_datum": "printed",
    "detach_radius": 0.05,
    "rel_tol": 1e-3,
    "solve_minimizers": True,
    "err_factor": 5.0,
}


@dataclass
class Scenario:
    name: ScenarioName
    spec: ProblemSpec
    mesh: MeshParams = dc_field(default_factory=MeshParams)
    solve: SolveConfig = dc_field(default_factory=SolveConfig)
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.name = ScenarioName(self.name)
        unknown = set(self.params) - set(PARAM_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown scenario parameter(s): {', '.join(sorted(unknown))}")

    def param(self, key):
        return self.params.get(key, PARAM_DEFAULTS[key])

    def as_dict(self) -> dict:
        sc = self.solve
        solve_d = dict(max_outer=sc.max_outer, grad_tol=sc.grad_tol, polish_sweeps=sc.polish_sweeps,
                       polish_rounds=sc.polish_rounds, init=sc.init.value, seed=sc.seed, stage1_tol=sc.stage1_tol,
                       nested_step=sc.nested_step, lbfgs_memory=sc.lbfgs_memory, strict=sc.strict,
                       eps_list=None if sc.schedule is None else list(sc.schedule.eps_list))
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in
                  sorted({**PARAM_DEFAULTS, **self.params}.items())}
        return dict(name=self.name.value, spec=self.spec.as_dict(), mesh=self.mesh.as_dict(), solve=solve_d,
                    params=params)


def default_spec(g_coeff: float = 0.0, g_exponent: float = 0.5) -> ProblemSpec:
    return derive_params(1.0, 0.0, DEFAULT_LAMBDA_PLUS, 0.0, g_coeff, g_exponent)


# ---- results ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    status: Status
    value: Any
    tolerance: Any
    detail: str = ""

    @classmethod
    def of(cls, name, ok: bool, value, tolerance, detail="") -> "Check":
        return cls(name, Status.PASS if ok else Status.FAIL, value, tolerance, detail)

    def as_dict(self) -> dict:
        return dict(name=self.name, status=self.status.value, value=_plain(self.value),
                    tolerance=_plain(self.tolerance), detail=self.detail)


@dataclass
class ScenarioResult:
    scenario: Scenario
    checks: list = dc_field(default_factory=list)
    outputs: dict = dc_field(default_factory=dict)
    objects: dict = dc_field(default_factory=dict)  # reports and fields, not serialised
    wall_time: float = 0.0

    @property
    def status(self) -> Status:
        st = [c.status for c in self.checks]
        if Status.INCONCLUSIVE in st:
            return Status.INCONCLUSIVE
        if Status.FAIL in st:
            return Status.FAIL
        return Status.PASS

    def manifest(self) -> "RunManifest":
        return RunManifest(self.scenario.as_dict(), _plain(self.outputs), [c.as_dict() for c in self.checks],
                           self.status.value, versions(), self.wall_time)


@dataclass
class RunManifest:
    scenario: dict
    outputs: dict
    verdicts: list
    status: str
    versions: dict
    wall_time: float

    def deterministic(self) -> dict:
        return {"schema_version": 1, "scenario": self.scenario, "outputs": self.outputs,
                "verdicts": self.verdicts, "status": self.status}

    def write(self, outdir) -> list:
        """``manifest.json`` (inputs and outputs only) and ``run_meta.json`` (timing, versions)."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        p1, p2 = out / "manifest.json", out / "run_meta.json"
        _dump(self.deterministic(), p1)
        _dump({"schema_version": 1, "versions": self.versions, "wall_time": self.wall_time}, p2)
        return [p1, p2]


def versions() -> dict:
    import numba
    import scipy
    return {"bernoulli_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _dump(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, (set, frozenset)):
        return sorted(_plain(v) for v in o)
    return o


# ---- data and memoised solves ---------------------------------------------------------------

def boundary_for(mesh: HalfDiscMesh, spec: ProblemSpec, data) -> BoundaryValues:
    """Dirichlet values for a data key.

    ``"small"``/``"large"``: trace of ``v_S + g`` / ``v_L + g``;
    ``"zero"``: all zeros; ``"tilted"``: flat datum ``f`` with arc datum
    ``f + alpha_+ x1`` (used when there is no homogeneous free boundary);
    ``("perturbed", variant, eps)``: flat datum ``(alpha_+ - eps) x2^+`` with
    arc datum ``(alpha_+ - eps)(-+gamma x1 + x2)^+`` using the unperturbed
    ``gamma`` (``variant`` ``"printed"`` takes the small-solution sign).
    """
    if data in ("small", "large"):
        return boundary_trace(mesh, spec, data)
    if data == "zero":
        idx = np.flatnonzero(mesh.boundary_mask)
        return BoundaryValues(mesh, idx, np.zeros(len(idx)))
    if data == "tilted":
        return boundary_trace(mesh, spec, lambda x: spec.pi_datum(x[..., 1]) + spec.g(x) + spec.alpha_plus * x[..., 0])
    if isinstance(data, tuple) and data[0] == "perturbed":
        _, variant, eps = data
        return boundary_trace(mesh, perturbed_spec(spec, eps), perturbed_arc(spec, variant, eps))
    raise ConfigError(f"unknown data key {data!r}")


def perturbed_spec(spec: ProblemSpec, eps: float) -> ProblemSpec:
    """Same energy constants, flat datum slope ``alpha_+ - eps``."""
    return derive_params(spec.alpha_plus - eps, spec.alpha_minus, spec.lambda_plus, spec.lambda_minus,
                         spec.g_coeff, spec.g_exponent)


def perturbed_arc(spec: ProblemSpec, variant: str, eps: float) -> Callable:
    gam = spec.require_gamma()
    if variant not in ("printed", "large"):
        raise ConfigError(f"arc_datum must be 'printed' or 'large', got {variant!r}")
    s = -1.0 if variant == "printed" else 1.0
    a = spec.alpha_plus - eps
    return lambda x: a * np.maximum(s * gam * x[..., 0] + x[..., 1], 0.0)


def _config_key(c: SolveConfig):
    return (None if c.schedule is None else c.schedule.eps_list, c.max_outer, c.grad_tol, c.polish_sweeps,
            c.polish_rounds, c.init.value, c.seed, c.stage1_tol, c.warm_eps_max, c.lbfgs_memory, c.nsample,
            c.nested_step)


def solve_case(mp: MeshParams, spec: ProblemSpec, data, config: SolveConfig, smallest: bool = False) -> SolveReport:
    """Memoised solve for a data key (see :func:`boundary_for`)."""
    key = (mp, spec, data, _config_key(config), smallest)
    if key not in _SOLVES:
        mesh = mp.build()
        sp = perturbed_spec(spec, data[2]) if isinstance(data, tuple) else spec
        bv = boundary_for(mesh, spec, data)
        fn = smallest_minimizer if smallest else solve
        _SOLVES[key] = fn(mesh, sp, bv, config.replace(strict=False))
    return _SOLVES[key]


def _converged_check(name, rep: SolveReport) -> Check:
    st = Status.PASS if rep.converged else Status.INCONCLUSIVE
    return Check(name, st, bool(rep.converged), "solver tolerances", "" if rep.converged else "NotConverged")


# ---- helpers ----------------------------------------------------------------------------

def interpolant(mesh: HalfDiscMesh, spec: ProblemSpec, variant) -> ScalarField:
    sol = GlobalSolution(Variant(variant), spec)
    return ScalarField.interpolate(mesh, lambda x: eval_global(sol, x))


def x1_axis_crossings(curve) -> list:
    """Radii where the polyline meets ``{x2 = 0, x1 > 0}``."""
    if curve.empty:
        return []
    a, b = curve.segment_points()
    out = set()
    for p, q in zip(a, b):
        if p[1] == 0.0 and p[0] > 0:
            out.add(float(p[0]))
        if q[1] == 0.0 and q[0] > 0:
            out.add(float(q[0]))
        if (p[1] > 0 > q[1]) or (p[1] < 0 < q[1]):
            t = p[1] / (p[1] - q[1])
            x = p[0] + t * (q[0] - p[0])
            if x > 0:
                out.add(float(x))
    return sorted(out)


def consistency_errors(mp: MeshParams, spec: ProblemSpec, variant: str, config: SolveConfig) -> dict:
    """Nodal max error and free-boundary-to-ray distance of the solve with trace data."""
    rep = solve_case(mp, spec, variant, config)
    mesh = mp.build()
    ref = interpolant(mesh, spec, variant)
    err = float(np.max(np.abs(rep.field.values - ref.values)))
    curve = extract(rep.field, spec)
    haus = fb_hausdorff(curve, ray_curve(spec, variant), (0.0, 1.0)) if not curve.empty else float("inf")
    return dict(h=mesh.h, max_error=err, hausdorff=haus, converged=rep.converged, report=rep, curve=curve)


# ---- scenarios ------------------------------------------------------------------------------

def run_growth_a(scn: Scenario) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    data = scn.param("outer")
    levels = int(scn.param("levels"))
    delta = float(scn.param("delta"))
    cfits = []
    meshes = [scn.mesh, scn.mesh.refined()] if scn.param("refine") else [scn.mesh]
    for k, mp in enumerate(meshes):
        rep = solve_case(mp, scn.spec, data, scn.solve)
        res.checks.append(_converged_check(f"converged[n={mp.angular_n}]", rep))
        gr = growth_report(rep.field, levels)
        cfits.append(gr.c_fit)
        res.outputs[f"growth[n={mp.angular_n}]"] = gr.as_dict()
        res.objects[f"growth[n={mp.angular_n}]"] = gr
        res.checks.append(Check.of(f"recursion_ok[n={mp.angular_n}]", gr.recursion_ok, gr.recursion_ok, "rtol 1e-12"))
        if data in ("small", "large"):
            curve = extract(rep.field, scn.spec)
            nt = nt_check(curve, rep.field, delta, "strong")
            expected = delta < 1.0 / scn.spec.require_gamma() if scn.spec.gamma > 0 else False
            res.outputs[f"nt[n={mp.angular_n}]"] = dict(radii=nt.radii, per_annulus=nt.per_annulus,
                                                       verdict=nt.verdict, expected=expected)
            res.checks.append(Check.of(f"nt_matches_hypothesis[n={mp.angular_n}]", nt.verdict == expected,
                                       nt.verdict, f"delta={delta}"))
    if len(cfits) == 2:
        ratio = cfits[1] / cfits[0] if cfits[0] > 0 else float("nan")
        ok = (cfits[0] == cfits[1] == 0.0) or 0.5 <= ratio <= 2.0
        res.checks.append(Check.of("c_fit_stable_under_refinement", ok, ratio, "[0.5, 2]"))
    res.wall_time = time.perf_counter() - t0
    return res


def run_classify_c(scn: Scenario) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    spec = scn.spec
    if spec.no_free_boundary or not spec.has_gamma:
        rep = solve_case(scn.mesh, spec, "tilted", scn.solve)
        res.checks.append(_converged_check("converged", rep))
        curve = extract(rep.field, spec)
        res.outputs["free_boundary_points"] = int(len(curve.points))
        res.checks.append(Check.of("no_free_boundary", curve.empty, int(len(curve.points)), 0,
                                   "interior free boundary absent"))
        res.wall_time = time.perf_counter() - t0
        return res
    mesh = scn.mesh.build()
    tol_class = scn.param("tol_class")
    for variant in ("small", "large"):
        rep = solve_case(scn.mesh, spec, variant, scn.solve)
        res.checks.append(_converged_check(f"converged[{variant}]", rep))
        seq = blowup_sequence(rep.field, spec, tol_class=tol_class)
        res.objects[f"blowup[{variant}]"] = seq
        res.outputs[f"blowup[{variant}]"] = seq.as_dict()
        if seq.verdict is Verdict.UNDECIDED:
            st = Status.INCONCLUSIVE
        else:
            st = Status.PASS if seq.verdict.value == variant else Status.FAIL
        res.checks.append(Check(f"classify[{variant}]", st, seq.verdict.value, seq.tol_class))
        curve = extract(rep.field, spec)
        jt = float(scn.param("jump_tol")) * spec.Lambda
        try:
            jr = jump_report(rep.field, curve, spec)
            res.outputs[f"jump[{variant}]"] = jr.as_dict()
            res.checks.append(Check.of(f"jump_defect[{variant}]", jr.median_defect <= jt, jr.median_defect, jt))
        except CurveTooShort as exc:
            res.checks.append(Check(f"jump_defect[{variant}]", Status.FAIL, None, jt, str(exc)))
        if spec.one_phase:
            gb = gradbound_report(rep.field, spec, curve)
            tg = spec.Lambda * (1.0 + float(scn.param("tol_grad")))
            res.outputs[f"gradbound[{variant}]"] = gb.as_dict()
            res.checks.append(Check.of(f"gradbound[{variant}]", gb.max_grad_sq <= tg, gb.max_grad_sq, tg))
    res.wall_time = time.perf_counter() - t0
    return res


def run_consistency(scn: Scenario) -> ScenarioResult:
    """Trace data reproduce ``v_S``/``v_L``: error and distance within ``err_factor * h``."""
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    fac = float(scn.param("err_factor"))
    meshes = [scn.mesh, scn.mesh.refined()] if scn.param("refine") else [scn.mesh]
    for variant in ("small", "large"):
        errs = []
        for mp in meshes:
            e = consistency_errors(mp, scn.spec, variant, scn.solve)
            res.checks.append(_converged_check(f"converged[{variant},n={mp.angular_n}]", e["report"]))
            tol = fac * e["h"]
            res.checks.append(Check.of(f"max_error[{variant},n={mp.angular_n}]", e["max_error"] <= tol,
                                       e["max_error"], tol))
            res.checks.append(Check.of(f"hausdorff[{variant},n={mp.angular_n}]", e["hausdorff"] <= tol,
                                       e["hausdorff"], tol))
            res.outputs[f"errors[{variant},n={mp.angular_n}]"] = {k: e[k] for k in ("h", "max_error", "hausdorff")}
            errs.append(e["max_error"])
        if len(errs) == 2:
            ratio = errs[0] / errs[1] if errs[1] > 0 else float("inf")
            res.checks.append(Check.of(f"error_ratio[{variant}]", 1.5 <= ratio <= 3.0, ratio, "[1.5, 3]"))
    res.wall_time = time.perf_counter() - t0
    return res


def run_angle_d(scn: Scenario) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    spec = scn.spec
    gam = spec.require_gamma()
    data = scn.param("outer")
    radii = sorted((float(r) for r in scn.param("radii")), reverse=True)
    rep = solve_case(scn.mesh, spec, data, scn.solve)
    res.checks.append(_converged_check("converged", rep))
    curve = extract(rep.field, spec)
    want = Side.SMALL if data == "small" else Side.LARGE
    prof = angle_profile(curve, spec, radii, side=want)
    res.objects.update(profile=prof, curve=curve, report=rep)
    res.outputs["profile"] = prof.as_dict()
    side = curve_side(curve, spec=spec)
    res.checks.append(Check.of("side", side is want, side.value, want.value))
    far = (curve.points[:, 0] >= 0.5 * math.sin(spec.theta) * curve.radius) if not curve.empty else np.zeros(0, bool)
    res.outputs["pi_branch_points"] = int(np.sum(~far & ~curve.contact)) if not curve.empty else 0
    sig = prof.sigma
    dec = all(b < a for a, b in zip(sig, sig[1:])) and not prof.missing
    res.checks.append(Check.of("sigma_strictly_decreasing", dec, sig, "strict"))
    ref = prof.theta_ref
    tol_deg = float(scn.param("angle_tol_deg"))
    mean_dev = abs(math.degrees(prof.phi_mean[-1] - ref)) if prof.counts[-1] else float("nan")
    res.checks.append(Check.of("finest_mean_angle", mean_dev <= tol_deg, mean_dev, tol_deg, "degrees from ray"))
    sigma = sig[0] * float(scn.param("sigma_factor"))
    r_f = radii[-1]
    pts = curve.points[(curve.radius >= r_f) & (curve.radius <= 2 * r_f) & ~curve.contact]
    kind = ConeKind.SIGMA_PLUS if want is Side.SMALL else ConeKind.SIGMA_MINUS
    try:
        cone = Cone(kind, sigma, gamma=gam)
        inside = [cone_contains(cone, p) for p in pts]
        ok = bool(inside) and all(inside)
        res.checks.append(Check.of("finest_annulus_in_cone", ok, f"{sum(inside)}/{len(inside)}", sigma))
        # same test restricted to the branch on the expected side of Pi
        half = pts[:, 1] > 0 if want is Side.SMALL else pts[:, 1] < 0
        br = [c for c, h in zip(inside, half) if h]
        res.checks.append(Check.of("finest_annulus_in_cone[branch]", bool(br) and all(br),
                                   f"{sum(br)}/{len(br)}", sigma, "diagnostic: expected-side branch only"))
    except BadConeParam as exc:
        res.checks.append(Check("finest_annulus_in_cone", Status.FAIL, None, sigma, str(exc)))
    res.wall_time = time.perf_counter() - t0
    return res


def run_instability_e(scn: Scenario) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    spec = scn.spec
    mesh = scn.mesh.build()
    variant = scn.param("arc_datum")
    rd = float(scn.param("detach_radius"))
    fac = float(scn.param("err_factor"))
    # control: unperturbed trace of v_S
    ctrl = consistency_errors(scn.mesh, spec, "small", scn.solve)
    tol = fac * ctrl["h"]
    res.outputs["control"] = {k: ctrl[k] for k in ("h", "max_error", "hausdorff")}
    res.checks.append(Check.of("control_fb_along_small_ray", ctrl["hausdorff"] <= tol, ctrl["hausdorff"], tol))
    table = []
    for eps in [float(e) for e in scn.param("eps_list")]:
        data = ("perturbed", variant, eps)
        rep = solve_case(scn.mesh, spec, data, scn.solve, smallest=True)
        sp = perturbed_spec(spec, eps)
        curve = extract(rep.field, sp)
        res.objects[f"curve[eps={eps}]"] = curve
        res.objects[f"field[eps={eps}]"] = rep.field
        res.checks.append(_converged_check(f"converged[eps={eps}]", rep))
        r = curve.radius
        near_large = int(np.sum((r > 0) & (r < rd) & (curve.points[:, 1] < 0))) if not curve.empty else 0
        crossings = x1_axis_crossings(curve)
        gb = gradbound_report(rep.field, sp, curve)
        row = dict(eps=eps, r_eps=crossings[0] if crossings else None, crossings=crossings,
                   near_origin_large_side=near_large, grad_max=gb.max_grad_sq, flags=sorted(rep.flags))
        table.append(row)
        res.checks.append(Check.of(f"detached[eps={eps}]", near_large == 0, near_large, f"no FB point r<{rd}, x2<0"))
        if crossings:
            res.checks.append(Check.of(f"r_eps_exists[eps={eps}]", True, crossings[0], "crossing of x1-axis"))
        else:
            res.checks.append(Check(f"r_eps_exists[eps={eps}]", Status.FAIL, None, "crossing of x1-axis",
                                    str(NoCrossing(f"no crossing for eps={eps}"))))
    res.outputs["table"] = table
    rs = [row["r_eps"] for row in table]
    if all(v is not None for v in rs):
        mono = all(b <= a for a, b in zip(rs, rs[1:]))
        res.checks.append(Check.of("r_eps_nonincreasing", mono, rs, "as eps decreases"))
    else:
        res.checks.append(Check("r_eps_nonincreasing", Status.FAIL, rs, "as eps decreases", "missing r_eps"))
    res.wall_time = time.perf_counter() - t0
    return res


def weiss_gap_flux_only(spec: ProblemSpec) -> float:
    """``gamma (alpha_+^2 - alpha_-^2)``: the gap from the flat-boundary flux alone."""
    return spec.require_gamma() * (spec.alpha_plus ** 2 - spec.alpha_minus ** 2)


def run_weiss_gap(scn: Scenario) -> ScenarioResult:
    """Weiss ordering of the homogeneous solutions.

    Checks, as specified, that ``W(1, v_S) - W(1, v_L)`` is positive by more
    than ``tol_W`` and equals ``gamma (alpha_+^2 - alpha_-^2)`` to ``rel_tol``.
    The full closed-form gap (flux plus sector areas) is reported alongside.
    """
    t0 = time.perf_counter()
    res = ScenarioResult(scn)
    spec = scn.spec
    spec.require_gamma()
    mesh = scn.mesh.build()
    tol_W = 10.0 * mesh.h
    ws = {v: weiss_energy(interpolant(mesh, spec, v), spec, 1.0) for v in ("small", "large")}
    gap_q = ws["small"] - ws["large"]
    cf = {v.value: weiss_closed_form(GlobalSolution(v, spec)) for v in Variant}
    gap_cf = weiss_gap_closed_form(spec)
    target = weiss_gap_flux_only(spec)
    res.outputs.update(W_quadrature=ws, W_closed_form=cf, gap_quadrature=gap_q, gap_closed_form=gap_cf,
                       gap_flux_only=target, tol_W=tol_W)
    res.checks.append(Check.of("ordering_small_above_large", gap_q > tol_W, gap_q, tol_W))
    rel = float(scn.param("rel_tol"))
    if target == 0.0:
        ok = abs(gap_q) <= tol_W
        res.checks.append(Check.of("gap_matches_flux_value", ok, gap_q, tol_W))
    else:
        rerr = abs(gap_q - target) / abs(target)
        res.checks.append(Check.of("gap_matches_flux_value", rerr <= rel, rerr, rel, f"target {target}"))
    res.checks.append(Check.of("quadrature_matches_closed_form", abs(gap_q - gap_cf) <= tol_W,
                               abs(gap_q - gap_cf), tol_W))
    if scn.param("solve_minimizers"):
        wm = {}
        for v in ("small", "large"):
            rep = solve_case(scn.mesh, spec, v, scn.solve)
            res.checks.append(_converged_check(f"converged[{v}]", rep))
            wm[v] = weiss_energy(rep.field, spec, 1.0)
        res.outputs["W_minimizers"] = wm
        res.checks.append(Check.of("minimizers_ordering", wm["small"] - wm["large"] > tol_W,
                                   wm["small"] - wm["large"], tol_W))
    res.wall_time = time.perf_counter() - t0
    return res


RUNNERS = {
    ScenarioName.GROWTH_A: run_growth_a,
    ScenarioName.CLASSIFY_C: run_classify_c,
    ScenarioName.ANGLE_D: run_angle_d,
    ScenarioName.INSTABILITY_E: run_instability_e,
    ScenarioName.WEISS_GAP: run_weiss_gap,
    ScenarioName.CONSISTENCY: run_consistency,
}


def run(scn: Scenario) -> ScenarioResult:
    return RUNNERS[scn.name](scn)


# ---- configuration ------------------------------------------------------------------------

_SPEC_KEYS = {"alpha_plus": float, "alpha_minus": float, "lambda_plus": float, "lambda_minus": float,
              "g_coeff": float, "g_exponent": float}
_MESH_KEYS = {"rings": int, "ratio": float, "angular_n": int}
_SOLVE_KEYS = {"max_outer": int, "grad_tol": float, "polish_sweeps": int, "polish_rounds": int, "init": str,
               "seed": int, "stage1_tol": float, "nested_step": int, "lbfgs_memory": int, "strict": "bool",
               "eps_list": "floats"}
_SCENARIO_KEYS = {"name": str, "outer": str, "refine": "bool", "levels": int, "delta": float, "radii": "floats",
                  "tol_grad": float, "tol_class": float, "jump_tol": float, "angle_tol_deg": float,
                  "sigma_factor": float, "eps_list": "floats", "arc_datum": str, "detach_radius": float,
                  "rel_tol": float, "solve_minimizers": "bool", "err_factor": float}
SCHEMA = {"spec": _SPEC_KEYS, "mesh": _MESH_KEYS, "solve": _SOLVE_KEYS, "scenario": _SCENARIO_KEYS}


def _convert(section, key, raw, kind):
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind is float:
            return _parse_float(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None


def _parse_float(raw: str) -> float:
    s = raw.strip()
    if s.startswith("sqrt(") and s.endswith(")"):
        return math.sqrt(float(s[5:-1]))
    return float(s)


def parse_config(text: str, overrides: Sequence[str] = ()) -> dict:
    """INI text plus ``section.key=value`` overrides to typed sections.

    Unknown sections or keys raise :class:`ConfigError` naming them.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        k, v = ov.split("=", 1)
        sec, key = k.split(".", 1)
        raw.setdefault(sec.strip(), {})[key.strip()] = v
    out = {}
    for sec, items in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        out[sec] = {}
        for key, val in items.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key [{sec}] {key}")
            out[sec][key] = _convert(sec, key, val, SCHEMA[sec][key])
    return out


def scenario_from_config(cfg: dict, name: Optional[str] = None) -> Scenario:
    sp = {"alpha_plus": 1.0, "alpha_minus": 0.0, "lambda_plus": DEFAULT_LAMBDA_PLUS, "lambda_minus": 0.0,
          "g_coeff": 0.0, "g_exponent": 0.5}
    sp.update(cfg.get("spec", {}))
    try:
        spec = derive_params(**sp)
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"invalid [spec]: {exc}") from None
    mp = MeshParams(**cfg.get("mesh", {}))
    sv = dict(cfg.get("solve", {}))
    if "eps_list" in sv:
        try:
            sv["schedule"] = SmoothingSchedule(sv.pop("eps_list"))
        except ValueError as exc:
            raise ConfigError(f"invalid [solve] eps_list: {exc}") from None
    try:
        sc = SolveConfig(**sv)
    except ValueError as exc:
        raise ConfigError(f"invalid [solve]: {exc}") from None
    params = dict(cfg.get("scenario", {}))
    nm = params.pop("name", None) or name
    if nm is None:
        raise ConfigError("scenario name missing ([scenario] name)")
    try:
        sname = ScenarioName(nm)
    except ValueError:
        raise ConfigError(f"unknown scenario name {nm!r}") from None
    if "arc_datum" in params and params["arc_datum"] not in ("printed", "large"):
        raise ConfigError(f"arc_datum must be 'printed' or 'large', got {params['arc_datum']!r}")
    return Scenario(sname, spec, mp, sc, params)


def load_config(path, overrides: Sequence[str] = (), name: Optional[str] = None) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return scenario_from_config(parse_config(text, overrides), name)
