"""Command-line entry point.

Exit codes: 0 success or passing verdict, 1 failing verdict, 2 usage or
configuration error, 3 solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as ex
from .blowup import write_sequence
from .closed_form import (Cone, ConeKind, GlobalSolution, Variant, derive_params, free_boundary_ray, jump_defect,
                          weiss_closed_form, weiss_gap_closed_form)
from .errors import ConfigError, LabError, NotConverged
from .freeboundary import FreeBoundaryCurve, extract, write_curve_csv
from .mesh import ScalarField
from .weiss import weiss_profile, write_profile_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

_SUBCOMMAND_SCENARIO = {
    "weiss": ex.ScenarioName.WEISS_GAP,
    "blowup": ex.ScenarioName.CLASSIFY_C,
    "angle": ex.ScenarioName.ANGLE_D,
    "growth": ex.ScenarioName.GROWTH_A,
    "instability": ex.ScenarioName.INSTABILITY_E,
}


class UsageError(Exception):
    pass


# ---- SVG --------------------------------------------------------------------------------

def _f(v: float) -> str:
    return f"{float(v):.6g}"


def _pt(x) -> str:
    # flip x2 so that up is up
    return f"{_f(x[0])},{_f(-x[1])}"


def _color(t: float) -> str:
    """Diverging blue-white-red for ``t`` in [-1, 1]."""
    t = max(-1.0, min(1.0, t))
    if t >= 0:
        r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
    else:
        r, g, b = int(255 * (1 + t)), int(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def emit_svg(path, field: Optional[ScalarField] = None, curve: Optional[FreeBoundaryCurve] = None,
             rays=None, cones: Sequence[Cone] = (), title: str = "") -> Path:
    """Standalone SVG of the half-disc with optional field, free boundary, rays and cones.

    ``rays`` is a spec (both homogeneous rays are drawn) or a list of unit
    directions.  Output is deterministic apart from the timestamp comment.
    """
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f"<!-- generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')} -->",
             '<svg xmlns="http://www.w3.org/2000/svg" viewBox="-0.05 -1.05 1.1 2.1" width="330" height="630">']
    if title:
        parts.append(f"<title>{title}</title>")
    if field is not None:
        m = field.mesh
        vmax = float(np.max(np.abs(field.values))) or 1.0
        parts.append('<g class="field" stroke="none">')
        for tri in m.triangles:
            c = _color(float(np.mean(field.values[tri])) / vmax)
            pts = " ".join(_pt(m.nodes[v]) for v in tri)
            parts.append(f'<polygon class="tri" points="{pts}" fill="{c}"/>')
        parts.append("</g>")
    # outline: flat side and arc
    parts.append('<path class="outline" d="M 0,-1 A 1,1 0 0,1 0,1 Z" fill="none" stroke="black" '
                 'stroke-width="0.005"/>')
    for cone in cones:
        parts.append(_cone_polygon(cone))
    if rays is not None:
        if hasattr(rays, "gamma"):
            dirs = [free_boundary_ray(GlobalSolution(v, rays))[0] for v in Variant]
        else:
            dirs = [np.asarray(d, dtype=float) for d in rays]
        for d in dirs:
            parts.append(f'<line class="ray" x1="0" y1="0" x2="{_f(d[0])}" y2="{_f(-d[1])}" stroke="gray" '
                         'stroke-width="0.004" stroke-dasharray="0.02,0.01"/>')
    if curve is not None and not curve.empty:
        for comp in curve.components:
            pts = " ".join(_pt(curve.points[p]) for p in comp)
            parts.append(f'<polyline class="fb" points="{pts}" fill="none" stroke="black" stroke-width="0.006"/>')
    parts.append("</svg>")
    p = Path(path)
    p.write_text("\n".join(parts) + "\n")
    return p


def _cone_polygon(cone: Cone) -> str:
    if cone.kind is ConeKind.NT:
        # x1 > delta |x2| inside the unit disc
        a = math.atan2(1.0, cone.param)
        angs = np.linspace(-a, a, 33)
    else:
        s = float(cone.param)
        lo, hi = math.atan2(1.0, cone.gamma + s), math.atan2(1.0, cone.gamma - s)  # angle of x2 = c x1 from x1-axis
        angs = np.linspace(lo, hi, 33)
        if cone.kind is ConeKind.SIGMA_MINUS:
            angs = -angs
    pts = [np.zeros(2)] + [np.array([math.cos(t), math.sin(t)]) for t in angs]
    return (f'<polygon class="cone" points="{" ".join(_pt(p) for p in pts)}" fill="orange" fill-opacity="0.25" '
            'stroke="none"/>')


def emit_profile_svg(path, radii, values, title: str = "W profile") -> Path:
    """Line plot of values against log2 of the radius."""
    x = -np.log2(np.asarray(radii, dtype=float))
    y = np.asarray(values, dtype=float)
    x0, x1 = float(x.min()), float(x.max()) or 1.0
    y0, y1 = float(y.min()), float(y.max())
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    sx = lambda v: 10 + 280 * (v - x0) / ((x1 - x0) or 1.0)  # noqa: E731
    sy = lambda v: 190 - 180 * (v - y0) / (y1 - y0)  # noqa: E731
    pts = " ".join(f"{_f(sx(a))},{_f(sy(b))}" for a, b in zip(x, y))
    doc = ['<?xml version="1.0" encoding="UTF-8"?>',
           f"<!-- generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')} -->",
           '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 300 200" width="600" height="400">',
           f"<title>{title}</title>",
           f'<polyline class="profile" points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>',
           "</svg>"]
    p = Path(path)
    p.write_text("\n".join(doc) + "\n")
    return p


# ---- IO helpers -----------------------------------------------------------------------------

def _scalar(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_table(path) -> tuple:
    """CSV header and rows with numeric cells converted."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    return rows[0], [[_scalar(c) for c in r] for r in rows[1:]]


def read_output(path):
    """In-memory value of a JSON or CSV file written by this tool."""
    p = Path(path)
    if p.suffix == ".json":
        with open(p) as fh:
            return json.load(fh)
    if p.suffix == ".csv":
        return read_table(p)
    raise ConfigError(f"{p}: not a .json or .csv output")


def write_field_csv(field: ScalarField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x1", "x2", "value"])
        for i, (x, v) in enumerate(zip(field.mesh.nodes, field.values)):
            w.writerow([i, repr(float(x[0])), repr(float(x[1])), repr(float(v))])


def _write_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(ex._plain(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(out: Path, force: bool) -> Path:
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args, name: Optional[ex.ScenarioName]) -> ex.Scenario:
    if args.config:
        cfg = ex.parse_config(_read(args.config), args.set or [])
    else:
        cfg = ex.parse_config("", args.set or [])
    given = cfg.get("scenario", {}).get("name")
    if name is not None and given is not None and given != name.value:
        raise ConfigError(f"[scenario] name {given!r} does not match subcommand (expects {name.value!r})")
    if name is None:
        cfg.setdefault("scenario", {}).pop("name", None)
        return ex.scenario_from_config(cfg, ex.ScenarioName.CONSISTENCY.value)
    return ex.scenario_from_config(cfg, name.value)


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _exit_for(result: ex.ScenarioResult) -> int:
    st = result.status
    if st is ex.Status.PASS:
        return EXIT_OK
    if st is ex.Status.INCONCLUSIVE and any(c.detail == "NotConverged" for c in result.checks):
        return EXIT_NOT_CONVERGED
    return EXIT_FAIL


def _print_checks(result: ex.ScenarioResult, stream) -> None:
    for c in result.checks:
        print(f"{c.status.value.upper():13s} {c.name}: value={c.value!r} tol={c.tolerance!r} {c.detail}".rstrip(),
              file=stream)
    print(f"verdict: {result.status.value}", file=stream)


# ---- subcommands ----------------------------------------------------------------------------

def cmd_closedform(args, out) -> int:
    if args.config:
        cfg = ex.parse_config(_read(args.config), args.set or []).get("spec", {})
    else:
        cfg = ex.parse_config("", args.set or []).get("spec", {})
    sp = dict(alpha_plus=1.0, alpha_minus=0.0, lambda_plus=ex.DEFAULT_LAMBDA_PLUS, lambda_minus=0.0)
    sp.update(cfg)
    for k in ("alpha_plus", "alpha_minus", "lambda_plus", "lambda_minus"):
        v = getattr(args, k)
        if v is not None:
            sp[k] = v
    try:
        spec = derive_params(**sp)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [("Lambda", spec.Lambda), ("gamma", spec.gamma), ("theta", spec.theta),
            ("theta_deg", None if spec.theta is None else math.degrees(spec.theta))]
    if spec.has_gamma:
        ws = weiss_closed_form(GlobalSolution(Variant.SMALL, spec))
        wl = weiss_closed_form(GlobalSolution(Variant.LARGE, spec))
        rows += [("W_small", ws), ("W_large", wl), ("W_gap", weiss_gap_closed_form(spec)),
                 ("jump_defect", jump_defect(spec))]
    for k, v in rows:
        print(f"{k:12s} {v!r}", file=args.stdout)
    print(f"{'flags':12s} {','.join(sorted(spec.flags)) or '-'}", file=args.stdout)
    if out is not None:
        _write_json({"schema_version": 1, "spec": spec.as_dict(), "values": dict(rows)}, out / "closedform.json")
    return EXIT_OK


def cmd_solve(args, out) -> int:
    scn = _scenario(args, None)
    data = scn.param("outer")
    rep = ex.solve_case(scn.mesh, scn.spec, data, scn.solve)
    curve = extract(rep.field, scn.spec)
    write_field_csv(rep.field, out / "field.csv")
    write_curve_csv(curve, out / "fb.csv")
    _write_json({"schema_version": 1, "scenario": scn.as_dict(), "report": rep.summary()}, out / "solve.json")
    emit_svg(out / "field.svg", field=rep.field, curve=curve, title="field")
    emit_svg(out / "fb.svg", curve=curve, rays=scn.spec if scn.spec.has_gamma else None, title="free boundary")
    print(json.dumps(ex._plain(rep.summary()), sort_keys=True), file=args.stdout)
    if not rep.converged:
        print("solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _finish(result: ex.ScenarioResult, out: Path, args) -> int:
    result.manifest().write(out)
    _print_checks(result, args.stdout)
    return _exit_for(result)


def cmd_weiss(args, out) -> int:
    scn = _scenario(args, ex.ScenarioName.WEISS_GAP)
    res = ex.run_weiss_gap(scn)
    rep = ex.solve_case(scn.mesh, scn.spec, scn.param("outer"), scn.solve)
    radii = [0.5 ** k for k in range(5)]
    prof = weiss_profile(rep.field, scn.spec, radii=radii)
    write_profile_csv(prof, out / "weiss_profile.csv")
    emit_profile_svg(out / "weiss.svg", prof.radii, prof.W_values)
    res.outputs["profile"] = prof.as_dict()
    return _finish(res, out, args)


def cmd_blowup(args, out) -> int:
    scn = _scenario(args, ex.ScenarioName.CLASSIFY_C)
    res = ex.run_classify_c(scn)
    for v in ("small", "large"):
        seq = res.objects.get(f"blowup[{v}]")
        if seq is not None:
            write_sequence(seq, out / v)
    return _finish(res, out, args)


def cmd_angle(args, out) -> int:
    scn = _scenario(args, ex.ScenarioName.ANGLE_D)
    res = ex.run_angle_d(scn)
    prof = res.objects["profile"]
    with open(out / "angle_profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "phi_min", "phi_max", "phi_mean", "sigma", "count"])
        for row in zip(prof.radii, prof.phi_min, prof.phi_max, prof.phi_mean, prof.sigma, prof.counts):
            w.writerow([repr(float(v)) for v in row[:5]] + [int(row[5])])
    write_curve_csv(res.objects["curve"], out / "fb.csv")
    cones = []
    sigma = prof.sigma[0] * float(scn.param("sigma_factor"))
    if np.isfinite(sigma) and 0 < sigma < scn.spec.gamma:
        kind = ConeKind.SIGMA_PLUS if scn.param("outer") == "small" else ConeKind.SIGMA_MINUS
        cones.append(Cone(kind, sigma, gamma=scn.spec.gamma))
    emit_svg(out / "fb.svg", curve=res.objects["curve"], rays=scn.spec, cones=cones, title="touch angle")
    return _finish(res, out, args)


def cmd_growth(args, out) -> int:
    scn = _scenario(args, ex.ScenarioName.GROWTH_A)
    res = ex.run_growth_a(scn)
    for key, gr in res.objects.items():
        tag = key[key.index("[") + 1:-1].replace("=", "")
        with open(out / f"growth_{tag}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "S"])
            for j, s in zip(gr.levels, gr.S_values):
                w.writerow([j, repr(float(s))])
    return _finish(res, out, args)


def cmd_instability(args, out) -> int:
    scn = _scenario(args, ex.ScenarioName.INSTABILITY_E)
    res = ex.run_instability_e(scn)
    with open(out / "instability.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "r_eps", "near_origin_large_side", "grad_max"])
        for row in res.outputs["table"]:
            r = "" if row["r_eps"] is None else repr(float(row["r_eps"]))
            w.writerow([repr(row["eps"]), r, row["near_origin_large_side"], repr(float(row["grad_max"]))])
    for key, obj in res.objects.items():
        if key.startswith("curve["):
            eps = key[len("curve[eps="):-1]
            emit_svg(out / f"fb_eps_{eps}.svg", curve=obj, rays=scn.spec, title=f"eps={eps}")
    return _finish(res, out, args)


def cmd_report(args, out) -> int:
    paths = []
    for p in args.paths:
        p = Path(p)
        if p.is_dir():
            paths.extend(sorted(q for q in p.rglob("*") if q.suffix in (".json", ".csv")))
        elif p.exists():
            paths.append(p)
        else:
            raise UsageError(f"{p} does not exist")
    for p in paths:
        try:
            val = read_output(p)
        except (json.JSONDecodeError, UnicodeDecodeError, csv.Error) as exc:
            raise ConfigError(f"{p}: unreadable ({exc})") from None
        if isinstance(val, dict):
            status = val.get("status")
            keys = ", ".join(sorted(val)[:8])
            print(f"{p}: json schema_version={val.get('schema_version')} status={status} keys=[{keys}]",
                  file=args.stdout)
            for v in val.get("verdicts", []):
                print(f"  {v['status']:13s} {v['name']}", file=args.stdout)
        else:
            header, rows = val
            print(f"{p}: csv columns={header} rows={len(rows)}", file=args.stdout)
    return EXIT_OK


COMMANDS = {
    "closedform": cmd_closedform,
    "solve": cmd_solve,
    "weiss": cmd_weiss,
    "blowup": cmd_blowup,
    "angle": cmd_angle,
    "growth": cmd_growth,
    "instability": cmd_instability,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bernoulli-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "report":
            sp.add_argument("paths", nargs="+", help="output files or directories")
            continue
        sp.add_argument("--config", help="INI file with [spec] [mesh] [solve] [scenario]")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        if name == "closedform":
            for k in ("alpha_plus", "alpha_minus", "lambda_plus", "lambda_minus"):
                sp.add_argument("--" + k.replace("_", "-"), dest=k, type=float)
    return p


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        args.stdout = stdout
        out = None
        if args.command == "report":
            pass
        elif args.command == "closedform":
            out = _prepare_out(Path(args.out), args.force) if args.out else None
        else:
            out = _prepare_out(Path(args.out or "out"), args.force)
        return COMMANDS[args.command](args, out)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except LabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
