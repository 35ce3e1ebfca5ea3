"""Acceptance suite: one test per criterion on the default spec and mesh.

Default spec: alpha_+ = 1, alpha_- = 0, lambda_+ = sqrt(2), lambda_- = 0, so
Lambda = 2, gamma = 1 and theta = 45 degrees.  Default mesh: ratio 0.5, 12
rings, 64 angular segments; ``h/2`` doubles the angular count.  Every test
records one PASS/FAIL line (printed in the terminal summary) and then
asserts the criterion exactly as stated.  Diagnostics that go beyond the
statement are printed but never change the verdict.
"""
import math

import numpy as np
import pytest

from bernoulli_lab import experiments as ex
from bernoulli_lab.closed_form import (Cone, ConeKind, GlobalSolution, Variant, cone_contains, derive_params,
                                       eval_global, jump_defect, weiss_closed_form, weiss_gap_closed_form)
from bernoulli_lab.freeboundary import extract, gradbound_report, nondegeneracy_report
from bernoulli_lab.functional import per_triangle_energy
from bernoulli_lab.mesh import ScalarField
from bernoulli_lab.minimize import combine_max
from bernoulli_lab.weiss import corrected_weiss_profile, subtract_g, weiss_energy, weiss_profile

from conftest import record_criterion

pytestmark = pytest.mark.acceptance

SPEC = ex.default_spec()
SPEC_G01 = ex.default_spec(0.1, 0.5)  # g = 0.1 |x|^1.5
SPEC_G02 = ex.default_spec(0.2, 0.5)  # g = 0.2 |x|^1.5
MP = ex.MeshParams()
MP2 = MP.refined()
CFG = ex.SolveConfig()
DYADIC5 = [1.0, 0.5, 0.25, 0.125, 0.0625]


def random_specs(n, seed, min_gamma=0.05):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ap = rng.uniform(0.2, 3.0)
        am = rng.uniform(0.0, 0.9) * ap
        gam = rng.uniform(min_gamma, 5.0)
        lm = rng.uniform(0.0, 2.0)
        lp = math.sqrt((ap * ap - am * am) * (1 + gam * gam) + lm * lm)
        out.append(derive_params(ap, am, lp, lm))
    return out


def interp(mesh, spec, variant):
    sol = GlobalSolution(Variant(variant), spec)
    return ScalarField.interpolate(mesh, lambda x: eval_global(sol, x))


def fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


# ---- shared runs (solves are memoised inside experiments) ----------------------------------

@pytest.fixture(scope="session")
def consistency():
    return ex.run(ex.Scenario("consistency", SPEC, MP, CFG, params={"refine": True}))


@pytest.fixture(scope="session")
def angle_runs():
    p = {"radii": (0.25, 0.125, 0.0625), "sigma_factor": 1.0}
    return {mp.angular_n: ex.run(ex.Scenario("angle_d", SPEC_G02, mp, CFG, params=p)) for mp in (MP, MP2)}


@pytest.fixture(scope="session")
def instability_runs():
    return {d: ex.run(ex.Scenario("instability_e", SPEC, MP, CFG, params={"arc_datum": d}))
            for d in ("printed", "large")}


def one_phase_minimizer(mp, variant):
    return ex.solve_case(mp, SPEC, variant, CFG).field


# ---- 1. closed-form identities ---------------------------------------------------------------

def test_criterion_01_closed_form_identities():
    specs = random_specs(20, 2024)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(200, 2))
    pts[:, 0] = np.abs(pts[:, 0])
    worst_jump, worst_hom = 0.0, 0.0
    for sp in specs:
        worst_jump = max(worst_jump, abs(jump_defect(sp)))
        for v in Variant:
            sol = GlobalSolution(v, sp)
            base = eval_global(sol, pts)
            for t in (0.25, 0.5, 2.0, 8.0):
                worst_hom = max(worst_hom, float(np.max(np.abs(eval_global(sol, t * pts) - t * base))))
    ok = worst_jump <= 1e-12 and worst_hom == 0.0
    record_criterion(1, ok, f"max jump_defect={worst_jump:.3g} (tol 1e-12); max homogeneity error={worst_hom:.3g} "
                            f"(exact) over 20 specs")
    assert ok


# ---- 2. Weiss ordering -----------------------------------------------------------------------

def quadrature_gap(mesh, sp):
    return weiss_energy(interp(mesh, sp, "small"), sp, 1.0) - weiss_energy(interp(mesh, sp, "large"), sp, 1.0)


def test_criterion_02_weiss_ordering():
    mesh = MP.build()
    gap = quadrature_gap(mesh, SPEC)
    oracle = SPEC.gamma * SPEC.alpha_plus ** 2
    rel = abs(gap - oracle) / oracle
    part_a = rel <= 1e-3
    gaps = [quadrature_gap(mesh, sp) for sp in random_specs(10, 99)]
    part_b = all(g > 0 for g in gaps)
    trend = []
    for gam in (0.5, 0.25, 0.125):
        sp = derive_params(1.0, 0.0, math.sqrt(1 + gam * gam), 0.0)
        trend.append(quadrature_gap(mesh, sp))
    part_c = abs(trend[0]) > abs(trend[1]) > abs(trend[2]) and abs(trend[2]) < 0.1 * abs(trend[0])
    cf_trend = [weiss_gap_closed_form(derive_params(1.0, 0.0, math.sqrt(1 + g * g), 0.0)) for g in (0.5, 0.25, 0.125)]
    print(f"  closed-form trend: {[round(t, 6) for t in cf_trend]}")
    cf = weiss_gap_closed_form(SPEC)
    print(f"  closed form: W_S={weiss_closed_form(GlobalSolution(Variant.SMALL, SPEC)):.12g} "
          f"W_L={weiss_closed_form(GlobalSolution(Variant.LARGE, SPEC)):.12g} gap={cf:.12g} (1 - pi/2)")
    print(f"  random-spec gaps: min={min(gaps):.4g} max={max(gaps):.4g}")
    ok = part_a and part_b and part_c
    record_criterion(2, ok, f"gap={gap:.6g} vs oracle {oracle:g}: rel err {rel:.3g} (tol 1e-3) "
                            f"{'ok' if part_a else 'FAIL'}; positive for 10 specs: "
                            f"{sum(g > 0 for g in gaps)}/10 {'ok' if part_b else 'FAIL'}; "
                            f"trend to 0 {[round(t, 5) for t in trend]} {'ok' if part_c else 'FAIL'}")
    assert ok


# ---- 3. consistency ------------------------------------------------------------------------------

def test_criterion_03_consistency(consistency):
    res = consistency
    bad = [c for c in res.checks if c.status is not ex.Status.PASS]
    for c in res.checks:
        print(f"  {c.status.value:5s} {c.name}: {fmt(c.value)} (tol {fmt(c.tolerance)})")
    ratios = {c.name: c.value for c in res.checks if c.name.startswith("error_ratio")}
    ok = not bad
    record_criterion(3, ok, "errors <= 5h and FB distance <= 5h at h and h/2; "
                            + ", ".join(f"{k}={v:.3g}" for k, v in ratios.items())
                            + " (want [1.5, 3])" + ("" if ok else f"; failing: {[c.name for c in bad]}"))
    assert ok


# ---- 4. Weiss monotonicity ---------------------------------------------------------------------------

def test_criterion_04_weiss_monotonicity(consistency):
    mesh = MP.build()
    notes, ok = [], True
    for v in ("small", "large"):
        prof = weiss_profile(one_phase_minimizer(MP, v), SPEC, radii=DYADIC5)
        tol = 10 * mesh.h
        good = prof.monotonicity_defect <= tol
        ok &= good
        notes.append(f"{v}: defect {prof.monotonicity_defect:.3g} <= {tol:.3g}")
        print(f"  minimizer[{v}] W={[round(w, 6) for w in prof.W_values]}")
    r = mesh.node_radius
    bump = np.where((r > 0.3) & (r < 0.45), np.sin(np.pi * (r - 0.3) / 0.15) ** 2, 0.0)
    ctrl = ScalarField(mesh, interp(mesh, SPEC, "small").values + 0.3 * bump)
    prof = weiss_profile(ctrl, SPEC, radii=DYADIC5)
    tol = 10 * mesh.h
    good = prof.monotonicity_defect > 10 * tol
    ok &= good
    notes.append(f"control: defect {prof.monotonicity_defect:.3g} > {10 * tol:.3g}")
    u = ex.solve_case(MP, SPEC_G01, "small", CFG).field
    cprof = corrected_weiss_profile(subtract_g(u, SPEC_G01), SPEC_G01, radii=DYADIC5)
    good = cprof.monotonicity_defect <= tol
    ok &= good
    notes.append(f"corrected (g=0.1|x|^1.5): defect {cprof.monotonicity_defect:.3g} <= {tol:.3g}")
    print(f"  corrected W={[round(w, 6) for w in cprof.W_values]}")
    record_criterion(4, ok, "; ".join(notes))
    assert ok


# ---- 5. touch angle ------------------------------------------------------------------------------------

def test_criterion_05_touch_angle(angle_runs):
    res = angle_runs[MP.angular_n]
    checks = {c.name: c for c in res.checks}
    need = ("converged", "sigma_strictly_decreasing", "finest_mean_angle", "finest_annulus_in_cone")
    ok = all(checks[n].status is ex.Status.PASS for n in need)
    prof = res.objects["profile"]
    for n in (MP.angular_n, MP2.angular_n):
        r = angle_runs[n]
        for c in r.checks:
            print(f"  n={n} {c.status.value:5s} {c.name}: {fmt(c.value)} (tol {fmt(c.tolerance)})")
        # diagnostic: the cone with sigma read as an angle instead of a slope bound
        p, curve = r.objects["profile"], r.objects["curve"]
        rf = 0.0625
        sel = (curve.radius >= rf) & (curve.radius <= 2 * rf) & ~curve.contact & (curve.points[:, 1] > 0)
        dev = np.abs(curve.phi[sel] - SPEC.theta)
        print(f"  n={n} diagnostic: upper-branch points within sigma(0.25)={p.sigma[0]:.4g} rad of theta: "
              f"{int(np.sum(dev <= p.sigma[0]))}/{int(sel.sum())}")
    record_criterion(5, ok, f"sigma={[round(s, 4) for s in prof.sigma]} decreasing "
                            f"{checks['sigma_strictly_decreasing'].status.value}; finest mean angle "
                            f"{checks['finest_mean_angle'].value:.3g} deg (tol 6) "
                            f"{checks['finest_mean_angle'].status.value}; in K_sigma+ "
                            f"{checks['finest_annulus_in_cone'].value} {checks['finest_annulus_in_cone'].status.value}")
    assert ok


# ---- 6. linear growth ------------------------------------------------------------------------------------

def test_criterion_06_linear_growth(angle_runs):
    # the minimizers of criterion 5 at h and h/2
    res = ex.run(ex.Scenario("growth_a", SPEC_G02, MP, CFG, params={"refine": True}))
    for c in res.checks:
        print(f"  {c.status.value:5s} {c.name}: {fmt(c.value)} (tol {fmt(c.tolerance)})")
    checks = {c.name: c for c in res.checks}
    rec = [checks[f"recursion_ok[n={n}]"].status is ex.Status.PASS for n in (MP.angular_n, MP2.angular_n)]
    ratio = checks["c_fit_stable_under_refinement"]
    c_fits = [res.outputs[f"growth[n={n}]"]["c_fit"] for n in (MP.angular_n, MP2.angular_n)]
    ok = all(rec) and ratio.status is ex.Status.PASS
    record_criterion(6, ok, f"recursion_ok={rec}; c_fit={[round(c, 5) for c in c_fits]} ratio "
                            f"{ratio.value:.4g} (want [0.5, 2])")
    assert ok


# ---- 7. min/max identity ---------------------------------------------------------------------------------

def pair_defects(spec, shift=None):
    out = []
    for mp in (MP, MP2):
        mesh = mp.build()
        a = interp(mesh, spec, "small")
        if shift is None:
            b = interp(mesh, spec, "large")
        else:
            sol = GlobalSolution(Variant.LARGE, spec)
            b = ScalarField.interpolate(mesh, lambda x: eval_global(sol, x - np.asarray(shift)))
        r = combine_max(a, b, spec)
        lo = np.minimum(a.values, b.values)
        lhs = per_triangle_energy(r.field, spec) + per_triangle_energy(ScalarField(mesh, lo), spec)
        rhs = per_triangle_energy(a, spec) + per_triangle_energy(b, spec)
        off = np.ones(mesh.n_triangles, bool)
        off[r.order_change] = False
        per_tri = float(np.max(np.abs(lhs - rhs)[off])) if off.any() else 0.0
        out.append(dict(h=mesh.h, defect=r.defect, n_change=len(r.order_change), per_tri=per_tri))
    return out


def test_criterion_07_min_max_identity():
    C = SPEC.Lambda
    ok = True
    notes = []
    for name, sp in (("one-phase", SPEC), ("two-phase", derive_params(1.0, 0.5, math.sqrt(2.0), 0.0))):
        d = pair_defects(sp)
        bound = all(x["defect"] <= C * x["h"] for x in d)
        ratio = d[0]["defect"] / d[1]["defect"] if d[1]["defect"] > 0 else float("nan")
        halves = 1.4 <= ratio <= 2.6
        exact = all(x["per_tri"] <= 1e-12 for x in d)
        ok &= bound and halves and exact
        notes.append(f"{name}: defects {d[0]['defect']:.3g}, {d[1]['defect']:.3g} (order-change triangles "
                     f"{d[0]['n_change']}, {d[1]['n_change']}) <= {C:g}h {bound}; ratio {ratio:.3g} in [1.4, 2.6] "
                     f"{halves}; per-triangle exact {exact}")
    # diagnostic: a crossing pair (v_L translated by (0, 0.3)) exercises the order-change set
    d = pair_defects(SPEC, shift=(0.0, 0.3))
    print(f"  diagnostic crossing pair: defect/h = {d[0]['defect'] / d[0]['h']:.3g}, "
          f"{d[1]['defect'] / d[1]['h']:.3g}; ratio {d[0]['defect'] / d[1]['defect']:.3g}; "
          f"per-triangle off change {max(x['per_tri'] for x in d):.2g}")
    for n in notes:
        print("  " + n)
    record_criterion(7, ok, " | ".join(notes))
    assert ok


# ---- 8. instability ----------------------------------------------------------------------------------------

def test_criterion_08_instability(instability_runs):
    verdicts = {}
    for datum, res in instability_runs.items():
        for c in res.checks:
            print(f"  [{datum}] {c.status.value:5s} {c.name}: {fmt(c.value)} ({c.tolerance})")
        verdicts[datum] = res.status is ex.Status.PASS
    ok = all(verdicts.values())
    parts = []
    for datum, res in instability_runs.items():
        rs = [row["r_eps"] for row in res.outputs["table"]]
        near = [row["near_origin_large_side"] for row in res.outputs["table"]]
        parts.append(f"{datum} arc datum: r_eps={[None if r is None else round(r, 5) for r in rs]}, "
                     f"large-side points r<0.05: {near}, {res.status.value}")
    record_criterion(8, ok, "; ".join(parts))
    assert ok


# ---- 9. nondegeneracy ----------------------------------------------------------------------------------------

def test_criterion_09_nondegeneracy(consistency):
    radii = [0.1, 0.05]
    ok = True
    notes = []
    for v in ("small", "large"):
        cs = []
        for mp in (MP, MP2):
            u = one_phase_minimizer(mp, v)
            cs.append(nondegeneracy_report(u, extract(u, SPEC), radii).c_emp)
        lower = all(c >= 0.2 * SPEC.alpha_plus for c in cs)
        stable = 0.5 <= cs[1] / cs[0] <= 1.5
        ok &= lower and stable
        notes.append(f"{v}: c_emp={[round(c, 4) for c in cs]} (>= 0.2) {lower}, ratio {cs[1] / cs[0]:.3g} "
                     f"(+-50%) {stable}")
    record_criterion(9, ok, "; ".join(notes))
    assert ok


# ---- 10. gradient bound ----------------------------------------------------------------------------------------

def test_criterion_10_gradient_bound(consistency, instability_runs):
    lam = SPEC.Lambda
    ok = True
    notes = []
    for v in ("small", "large"):
        u = one_phase_minimizer(MP, v)
        g = gradbound_report(u, SPEC, extract(u, SPEC)).max_grad_sq
        good = g <= 1.1 * lam
        ok &= good
        notes.append(f"{v} minimizer max|grad u|^2={g:.5g} <= {1.1 * lam:.3g} {good}")
    for datum, res in instability_runs.items():
        gm = [row["grad_max"] for row in res.outputs["table"]]
        good = max(gm) > lam
        ok &= good
        notes.append(f"E construction ({datum}) max|grad u|^2 per eps={[round(x, 4) for x in gm]} > {lam:g} {good}")
    record_criterion(10, ok, "; ".join(notes))
    assert ok
