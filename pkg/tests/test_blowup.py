import json
import math

import numpy as np
import pytest

from bernoulli_lab.blowup import (Verdict, blowup_sequence, classify, default_scales, exact_nodes,
                                  fb_hausdorff, ray_curve, read_sequence_manifest, rescale, write_sequence)
from bernoulli_lab.closed_form import GlobalSolution, Variant, derive_params, eval_global
from bernoulli_lab.errors import EmptyInAnnulus, TooFewScales, UnalignedScale
from bernoulli_lab.freeboundary import angle_profile, curve_side, dyadic_annuli, extract
from bernoulli_lab.mesh import ScalarField, boundary_trace, build_mesh
from bernoulli_lab.minimize import solve
from bernoulli_lab.weiss import weiss_energy

SQ2 = math.sqrt(2.0)
SPEC = derive_params(1.0, 0.0, SQ2, 0.0)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(8, 0.5, 32)


def interp(mesh, variant, spec=SPEC):
    sol = GlobalSolution(variant, spec)
    return ScalarField.interpolate(mesh, lambda x: eval_global(sol, x))


def smooth(mesh):
    return ScalarField.interpolate(mesh, lambda x: x[:, 1] + x[:, 0] ** 2 - 0.3 * x[:, 0] * x[:, 1] ** 2)


# ---- rescale -------------------------------------------------------------------------------

def test_rescale_identity_at_one(mesh):
    f = smooth(mesh)
    assert np.array_equal(rescale(f, 1.0).values, f.values)


def test_rescale_homogeneous_is_identity(mesh):
    f = interp(mesh, Variant.LARGE)
    for r in (0.5, 0.25):
        np.testing.assert_allclose(rescale(f, r).values, f.values, atol=1e-15)


def test_rescale_exact_on_mapped_nodes(mesh):
    f = smooth(mesh)
    r = 0.25
    v = rescale(f, r)
    hit = exact_nodes(mesh, r)
    # every node outside the two innermost graded rings maps onto a node
    assert hit[mesh.node_radius >= mesh.major_radii[-3] * (1 - 1e-12)].all()
    expect = (mesh.nodes[hit, 1] * r + (r * mesh.nodes[hit, 0]) ** 2
              - 0.3 * r * mesh.nodes[hit, 0] * (r * mesh.nodes[hit, 1]) ** 2) / r
    np.testing.assert_allclose(v.values[hit], expect, rtol=1e-13, atol=1e-15)


def test_rescale_semigroup(mesh):
    f = smooth(mesh)
    twice = rescale(rescale(f, 0.5), 0.5)
    once = rescale(f, 0.25)
    hit = exact_nodes(mesh, 0.25)
    np.testing.assert_allclose(twice.values[hit], once.values[hit], rtol=1e-13, atol=1e-15)


def test_rescale_unaligned(mesh):
    with pytest.raises(UnalignedScale):
        rescale(smooth(mesh), 0.3)
    with pytest.raises(UnalignedScale):
        rescale(smooth(mesh), 2.0)


def test_weiss_compatibility(mesh):
    f = smooth(mesh)
    for r in (0.5, 0.25):
        assert weiss_energy(rescale(f, r), SPEC, 1.0) == pytest.approx(weiss_energy(f, SPEC, r), rel=1e-4)


# ---- classification ----------------------------------------------------------------------------

def test_classify_small(mesh):
    seq = blowup_sequence(interp(mesh, Variant.SMALL), SPEC)
    assert seq.verdict == Verdict.SMALL
    assert max(seq.residuals_S) <= 1e-14
    assert len(seq.residuals_S) == len(seq.residuals_L) == len(seq.scales) == len(seq.fields)


def test_classify_large(mesh):
    assert blowup_sequence(interp(mesh, Variant.LARGE), SPEC).verdict == Verdict.LARGE


def test_classify_mixture_is_undecided(mesh):
    vs, vl = interp(mesh, Variant.SMALL), interp(mesh, Variant.LARGE)
    f = ScalarField(mesh, 0.5 * (vs.values + vl.values))
    assert blowup_sequence(f, SPEC).verdict == Verdict.UNDECIDED


def test_too_few_scales(mesh):
    seq = blowup_sequence(interp(mesh, Variant.SMALL), SPEC, scales=[1.0, 0.5])
    assert seq.verdict == Verdict.UNDECIDED
    with pytest.raises(TooFewScales):
        classify(seq, SPEC)


def test_default_scales(mesh):
    s = default_scales(mesh)
    assert s[0] == 1.0 and len(s) == 7
    assert all(b == pytest.approx(a / 2, rel=1e-15) for a, b in zip(s, s[1:]))


def test_small_verdict_matches_angle_side(mesh):
    f = interp(mesh, Variant.SMALL)
    assert blowup_sequence(f, SPEC).verdict == Verdict.SMALL
    curve = extract(f, SPEC)
    assert curve_side(curve, spec=SPEC).value == "small"
    prof = angle_profile(curve, SPEC, dyadic_annuli(mesh)[-2:])
    assert prof.side.value == "small" and not prof.missing


# ---- Hausdorff distance ----------------------------------------------------------------------

def test_hausdorff_between_rays():
    s, l = ray_curve(SPEC, "small"), ray_curve(SPEC, "large")
    # perpendicular rays: the far end of one ray is at distance 1 from the other's apex
    assert fb_hausdorff(s, l, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-12)
    assert fb_hausdorff(s, l, (0.5, 1.0)) == pytest.approx(math.hypot(1.0, 0.5), abs=1e-12)


def test_hausdorff_identical_and_symmetric():
    s, l = ray_curve(SPEC, "small", n=7), ray_curve(SPEC, "large")
    assert fb_hausdorff(s, s) <= 1e-15
    assert fb_hausdorff(s, l, (0.2, 0.9)) == fb_hausdorff(l, s, (0.2, 0.9))


def test_hausdorff_empty_annulus():
    s = ray_curve(SPEC, "small", length=0.4)
    with pytest.raises(EmptyInAnnulus):
        fb_hausdorff(s, ray_curve(SPEC, "large"), (0.5, 1.0))


def test_solved_free_boundary_near_ray():
    m = build_mesh(7, 0.5, 32)
    rep = solve(m, SPEC, boundary_trace(m, SPEC, "small"))
    curve = extract(rep.field, SPEC)
    assert fb_hausdorff(curve, ray_curve(SPEC, "small"), (0.0, 1.0)) <= 5 * m.h


# ---- export ---------------------------------------------------------------------------------

def test_write_sequence(tmp_path, mesh):
    seq = blowup_sequence(interp(mesh, Variant.SMALL), SPEC, scales=[1.0, 0.5, 0.25])
    paths = write_sequence(seq, tmp_path / "bu")
    assert len(paths) == 4
    doc = read_sequence_manifest(paths[0])
    assert doc["sequence"]["verdict"] == "small"
    assert doc["files"] == [p.name for p in paths[1:]]
    rows = paths[2].read_text().splitlines()
    assert rows[0] == "node,x1,x2,value" and len(rows) == mesh.n_nodes + 1
    assert float(rows[5].split(",")[3]) == seq.fields[1].values[4]
    assert json.loads(json.dumps(seq.as_dict())) == doc["sequence"]
