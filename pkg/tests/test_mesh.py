import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bernoulli_lab.closed_form import derive_params
from bernoulli_lab.errors import BudgetExceeded, TraceMismatch, UnalignedRadius
from bernoulli_lab.mesh import (NodeClass, ScalarField, boundary_trace, build_mesh, estimate_triangle_count,
                                read_mesh, restrict_to_ball, write_mesh)

SQ2 = math.sqrt(2.0)

mesh_params = st.tuples(st.integers(3, 6), st.sampled_from([0.35, 0.5, 0.6, 0.75, 0.85]),
                        st.sampled_from([8, 12, 16, 24, 32, 48]))


@pytest.fixture(scope="module")
def small_mesh():
    return build_mesh(3, 0.5, 8)


def test_small_example(small_mesh):
    m = small_mesh
    np.testing.assert_allclose(m.major_radii, [1.0, 0.5, 0.25], rtol=0, atol=1e-15)
    assert np.any(np.all(m.nodes == 0.0, axis=1))
    corners = m.nodes[m.node_class == NodeClass.CORNER]
    assert sorted(map(tuple, corners)) == [(0.0, -1.0), (0.0, 1.0)]


def test_deterministic():
    a, b = build_mesh(4, 0.5, 16), build_mesh(4, 0.5, 16)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.triangles, b.triangles)


def _check_mesh(m):
    x = m.nodes
    r = np.hypot(x[:, 0], x[:, 1])
    assert np.all(x[:, 0] >= 0.0) and np.all(r <= 1.0 + 1e-15)
    # positive orientation
    assert np.all(m.areas > 0)
    # conforming: interior edges shared by two triangles, boundary edges by one
    e = np.sort(np.concatenate([m.triangles[:, [0, 1]], m.triangles[:, [1, 2]], m.triangles[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert set(np.unique(counts)) <= {1, 2}
    # exact placement of boundary nodes
    cls = m.node_class
    assert np.all(x[cls == NodeClass.FIXED, 0] == 0.0)
    assert np.all(np.abs(r[(cls == NodeClass.ARC) | (cls == NodeClass.CORNER)] - 1.0) <= 2e-16)
    assert m.min_angle >= 20.0
    assert m.euler_characteristic() == 1
    # edges on x1 = 0 join flat/corner nodes only
    bnd = m.boundary_edges
    on_pi = np.all(x[bnd, 0] == 0.0, axis=1)
    assert np.all(np.isin(cls[bnd[on_pi]], (NodeClass.FIXED, NodeClass.CORNER)))


@given(mesh_params)
@settings(max_examples=15, deadline=None)
def test_mesh_invariants(p):
    _check_mesh(build_mesh(*p))


def test_default_mesh_invariants():
    m = build_mesh()
    _check_mesh(m)
    assert m.n_triangles == estimate_triangle_count(12, 0.5, 64)


@given(mesh_params)
@settings(max_examples=15, deadline=None)
def test_triangle_count_estimate_exact(p):
    assert build_mesh(*p).n_triangles == estimate_triangle_count(*p)


def test_budget_exceeded():
    with pytest.raises(BudgetExceeded):
        build_mesh(12, 0.5, 64, max_triangles=1000)


@pytest.mark.parametrize("args", [(2, 0.5, 8), (3, 0.3, 8), (3, 0.9, 8), (3, 0.5, 7)])
def test_build_mesh_bad_args(args):
    with pytest.raises(ValueError):
        build_mesh(*args)


@pytest.mark.parametrize("n", [16, 32, 64, 128])
def test_area_is_inscribed_polygon(n):
    m = build_mesh(3, 0.5, n)
    assert m.areas.sum() == pytest.approx(0.5 * n * math.sin(math.pi / n), abs=1e-14)


def test_area_error_bound_as_stated():
    # stated bound 2/n^2; any inscribed n-gon misses by pi^3/(12 n^2) ~ 2.58/n^2
    errs = {n: abs(build_mesh(3, 0.5, n).areas.sum() - math.pi / 2) * n ** 2 for n in (16, 32, 64)}
    assert all(e <= 2.0 for e in errs.values()), errs


@pytest.mark.parametrize("n", [8, 16, 64])
def test_arc_hausdorff_error(n):
    m = build_mesh(3, 0.5, n)
    h_arc = 2 * math.sin(math.pi / (2 * n))
    sagitta = 1 - math.cos(math.pi / (2 * n))
    assert sagitta <= h_arc ** 2
    # midpoints of arc edges are the farthest polygon points from the circle
    bnd = m.boundary_edges
    arc = np.all(np.abs(np.hypot(*m.nodes[bnd].transpose(2, 0, 1)) - 1) < 1e-15, axis=1)
    mid = m.nodes[bnd[arc]].mean(axis=1)
    assert np.max(1 - np.hypot(mid[:, 0], mid[:, 1])) == pytest.approx(sagitta, rel=1e-9)


def test_ring_rescaling_maps_nodes_to_nodes():
    m = build_mesh(6, 0.5, 16)
    ring = m.ring(0.5)
    outer = m.ring(1.0)
    np.testing.assert_allclose(0.5 * m.nodes[outer.nodes], m.nodes[ring.nodes], atol=1e-16)


# ---- boundary data ---------------------------------------------------------------------

def _node(m, p):
    i = np.flatnonzero(np.all(np.abs(m.nodes - np.asarray(p)) < 1e-15, axis=1))
    assert len(i) == 1
    return int(i[0])


def test_trace_examples():
    m = build_mesh(3, 0.5, 8)
    sp = derive_params(1.0, 0.0, SQ2, 0.0)
    u = boundary_trace(m, sp, "small").full()
    assert u[_node(m, (0, 1))] == 1.0 and u[_node(m, (0, -1))] == 0.0
    u = boundary_trace(m, sp, "large").full()
    assert u[_node(m, (1 / SQ2, 1 / SQ2))] == pytest.approx(SQ2, abs=1e-15)
    spg = derive_params(1.0, 0.0, SQ2, 0.0, 0.1, 0.5)
    u = boundary_trace(m, spg, "small").full()
    assert u[_node(m, (0, 0.25))] == pytest.approx(0.25 + 0.1 * 0.25 ** 1.5, abs=1e-15)


def test_trace_custom_and_mismatch():
    m = build_mesh(3, 0.5, 8)
    sp = derive_params(1.0, 0.0, SQ2, 0.0)
    bv = boundary_trace(m, sp, lambda x: np.maximum(x[:, 1], 0.0) + x[:, 0])
    assert bv.full()[_node(m, (1, 0))] == 1.0
    with pytest.raises(TraceMismatch):
        boundary_trace(m, sp, lambda x: np.ones(len(x)))


# ---- restriction ----------------------------------------------------------------------

def test_restrict_to_ball():
    m = build_mesh(4, 0.5, 16)
    f = ScalarField.interpolate(m, lambda x: x[:, 0] + 2 * x[:, 1])
    sub, sf, nmap = restrict_to_ball(m, f, 1.0)
    assert sub is m and sf is f
    sub, sf, nmap = restrict_to_ball(m, f, 0.5)
    assert sub.n_triangles < m.n_triangles
    assert np.array_equal(sf.values, f.values[nmap])
    assert np.max(np.hypot(sub.nodes[:, 0], sub.nodes[:, 1])) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(UnalignedRadius):
        restrict_to_ball(m, f, 0.4)


# ---- fields and file format -------------------------------------------------------------

@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_interpolant_reproduces_linear(a, b, c):
    m = build_mesh(3, 0.5, 8)
    f = ScalarField.interpolate(m, lambda x: a + b * x[:, 0] + c * x[:, 1])
    p = np.array([[0.3, 0.2], [0.1, -0.7], [0.01, 0.0]])
    np.testing.assert_allclose(f(p), a + b * p[:, 0] + c * p[:, 1], atol=1e-12)


def test_nonfinite_field_rejected():
    m = build_mesh(3, 0.5, 8)
    vals = np.zeros(m.n_nodes)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(m, vals)


def test_mesh_file_roundtrip(tmp_path):
    m = build_mesh(4, 0.5, 16)
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    assert p.read_text().splitlines()[0] == "halfdisc-mesh v1"
    m2 = read_mesh(p, ratio=0.5)
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.node_class, m2.node_class)
