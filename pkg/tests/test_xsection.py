import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rodjunction import reference
from rodjunction.xsection import (
    Material,
    MeshingError,
    SectionError,
    SectionGeometry,
    StiffnessForm,
    WarpingProblem,
    compute_H,
    normalize_section,
    polygon_moments,
    q3_isotropic,
    refine_uniform,
    solve_warping,
    stiffness_from_problem,
    triangulate,
)

# mpmath, 30 digits, full series: a^4 (1/3 - 64/pi^5 sum tanh(n pi/2)/n^5)
SQUARE_TORSION_EXACT = 0.14057701495515372
STEEL_LIKE = Material(1.0, 1.0)
UNIT = Material(0.0, 1.0)


@pytest.fixture(scope="module")
def square_mesh():
    geom, _ = normalize_section(SectionGeometry.rectangle(1.0, 1.0))
    return triangulate(geom, 0.1)


# ----------------------------------------------------------- normalization


def test_normalize_unit_square():
    geom, norm = normalize_section(SectionGeometry.polygon([(0, 0), (1, 0), (1, 1), (0, 1)]))
    assert norm.centroid == pytest.approx((0.5, 0.5))
    assert norm.rotation_angle == 0.0
    assert np.allclose(np.sort(geom.vertices[:, 0]), [-0.5, -0.5, 0.5, 0.5])


def test_normalize_offset_circle():
    geom, norm = normalize_section(SectionGeometry.circle(1.0, (2.0, 3.0)))
    assert geom.center == pytest.approx((0.0, 0.0), abs=1e-15)
    assert norm.rotation_angle == 0.0


def test_normalize_right_triangle():
    tri = SectionGeometry.polygon([(0, 0), (1, 0), (0, 1)])
    geom, norm = normalize_section(tri)
    assert norm.centroid == pytest.approx((1 / 3, 1 / 3))
    A, Sx, Sy, _, _, Ixy = polygon_moments(geom.vertices)
    bound = 1e-12 * A * geom.diameter() ** 2
    assert abs(Sx) < bound and abs(Sy) < bound and abs(Ixy) < bound
    # principal axes of an isosceles right triangle sit at 45 degrees
    assert abs(abs(norm.rotation_angle) - math.pi / 4) < 1e-12


@given(
    st.lists(st.tuples(st.floats(0.1, 3.0), st.floats(0.0, 2 * math.pi)), min_size=3, max_size=9),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_normalize_star_shaped_polygons(polar, cx, cy):
    polar = sorted(polar, key=lambda p: p[1])
    angles = np.array([a for _, a in polar])
    if np.min(np.diff(np.r_[angles, angles[0] + 2 * math.pi])) < 0.05:
        return
    v = np.array([(cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in polar])
    try:
        geom = SectionGeometry.polygon(v)
    except SectionError:
        return
    if abs(polygon_moments(v)[0]) < 1e-3:
        return
    out, _ = normalize_section(geom)
    A, Sx, Sy, _, _, Ixy = polygon_moments(out.vertices)
    bound = 1e-11 * A * out.diameter() ** 2
    assert abs(Sx) < bound and abs(Sy) < bound and abs(Ixy) < bound
    assert A == pytest.approx(abs(polygon_moments(v)[0]), rel=1e-12)


def test_zero_area_polygon_rejected():
    with pytest.raises(SectionError):
        SectionGeometry.polygon([(0, 0), (1, 0), (2, 0)])


def test_self_intersecting_polygon_rejected():
    with pytest.raises(SectionError, match="intersect"):
        SectionGeometry.polygon([(0, 0), (1, 1), (1, 0), (0, 1)])


def test_repeated_vertex_reports_index():
    with pytest.raises(MeshingError, match="vertex index 1"):
        SectionGeometry.polygon([(0, 0), (1, 0), (1, 0), (0, 1)])


# ------------------------------------------------------------- meshing


def test_square_mesh_area_exact():
    mesh = triangulate(normalize_section(SectionGeometry.rectangle(1, 1))[0], 0.5)
    assert mesh.n_triangles >= 8
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-12)
    assert mesh.edge_lengths().max() <= 0.75


def test_circle_mesh_area():
    mesh = triangulate(SectionGeometry.circle(1.0), 0.2)
    assert abs(mesh.areas.sum() - math.pi) < 0.01 * math.pi
    # boundary resolution is tighter than the mesh-size rule alone
    assert abs(mesh.areas.sum() - math.pi) < 1e-3 * math.pi


def test_refinement_counts_increase():
    geom = SectionGeometry.circle(1.0)
    counts = [triangulate(geom, h).n_triangles for h in (0.4, 0.2, 0.1)]
    assert counts[0] < counts[1] < counts[2]


def test_mesh_has_no_orphans(square_mesh):
    assert set(np.unique(square_mesh.triangles)) == set(range(square_mesh.n_nodes))
    assert np.all(square_mesh.areas > 0)


def test_bad_target_edge():
    with pytest.raises(SectionError):
        triangulate(SectionGeometry.circle(1.0), 0.0)


# ---------------------------------------------------------------- q3


def test_q3_examples():
    assert q3_isotropic(np.array([[0, 1, 2], [-1, 0, 3], [-2, -3, 0.0]]), Material(2.0, 5.0)) == 0.0
    assert q3_isotropic(np.eye(3), Material(0.0, 1.0)) == pytest.approx(6.0)
    assert q3_isotropic(np.diag([1.0, 0, 0]), Material(1.0, 1.0)) == pytest.approx(3.0)


@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9), st.floats(0, 5), st.floats(0.01, 5))
def test_q3_nonnegative_and_kernel(entries, lam, mu):
    G = np.array(entries).reshape(3, 3)
    mat = Material(lam, mu)
    assert q3_isotropic(G, mat) >= 0.0
    assert abs(q3_isotropic(G - G.T, mat)) < 1e-12


def test_material_validation():
    with pytest.raises(SectionError):
        Material(-0.1, 1.0)
    with pytest.raises(SectionError):
        Material(0.0, 0.0)


# ------------------------------------------------------------- warping


def test_zero_strain_zero_warping(square_mesh):
    w = solve_warping(square_mesh, UNIT, np.zeros(3))
    assert np.all(w.values == 0.0)
    assert w.minimum == 0.0


def test_warping_linear_in_strain(square_mesh, rng):
    prob = WarpingProblem(square_mesh, STEEL_LIKE)
    sa, sb = rng.standard_normal(3), rng.standard_normal(3)
    a, b, ab = prob.solve(sa).values, prob.solve(sb).values, prob.solve(sa + sb).values
    assert np.abs(ab - a - b).max() <= 1e-10 * np.abs(ab).max()


def test_warping_satisfies_constraints(square_mesh, rng):
    prob = WarpingProblem(square_mesh, STEEL_LIKE)
    a = prob.solve(rng.standard_normal(3)).values.ravel()
    assert np.abs(prob.constraints @ a).max() < 1e-12


def test_circle_torsion_tends_to_polar_moment():
    mesh = triangulate(SectionGeometry.circle(1.0), 0.1)
    w = solve_warping(mesh, UNIT, [1.0, 0.0, 0.0])
    assert w.minimum == pytest.approx(math.pi / 2, rel=5e-3)


def test_nested_refinement_lowers_minimum():
    geom = normalize_section(SectionGeometry.polygon([(0, 0), (2, 0), (0.5, 1.2)]))[0]
    coarse = triangulate(geom, 0.4)
    fine = refine_uniform(coarse)
    assert fine.areas.sum() == pytest.approx(coarse.areas.sum(), rel=1e-13)
    for s in ([1, 0, 0], [0, 1, 0], [0.3, -0.2, 1.0]):
        q_c = solve_warping(coarse, STEEL_LIKE, s).minimum
        q_f = solve_warping(fine, STEEL_LIKE, s).minimum
        assert q_f <= q_c * (1 + 1e-12)


# ------------------------------------------------------------- stiffness


def test_circle_H_matches_classical():
    form = compute_H(SectionGeometry.circle(1.0), UNIT, 0.05)
    c = reference.classical_constants("circle", 0.0, 1.0, radius=1.0)
    assert np.allclose(np.diag(form.H), [c["torsion"], c["bending2"], c["bending3"]], rtol=1e-2)
    assert np.abs(form.H - np.diag(np.diag(form.H))).max() < 1e-6


def test_circle_bending_with_poisson_effect():
    # lambda > 0: bending goes with E = mu (3 lam + 2 mu) / (lam + mu)
    form = compute_H(SectionGeometry.circle(1.0), Material(1.0, 1.0), 0.05)
    c = reference.classical_constants("circle", 1.0, 1.0, radius=1.0)
    assert form.H[1, 1] == pytest.approx(c["bending2"], rel=1e-2)
    assert form.H[0, 0] == pytest.approx(c["torsion"], rel=1e-2)


def test_square_H():
    form = compute_H(SectionGeometry.rectangle(1.0, 1.0), UNIT, 0.05)
    H = form.H
    assert H[0, 0] == pytest.approx(SQUARE_TORSION_EXACT, rel=1e-2)
    # lambda = 0: bending is 2 mu int x3^2 = 1/6 exactly for P1 (no warping needed)
    assert H[1, 1] == pytest.approx(1 / 6, rel=1e-9)
    assert H[2, 2] == pytest.approx(1 / 6, rel=1e-9)
    off = H - np.diag(np.diag(H))
    assert np.abs(off).max() < 1e-3 * np.linalg.norm(H)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_scaling_law(c, square_mesh):
    base = stiffness_from_problem(WarpingProblem(square_mesh, UNIT))
    scaled = stiffness_from_problem(WarpingProblem(square_mesh.scaled(c), UNIT))
    assert np.allclose(scaled, c**4 * base, rtol=1e-9, atol=1e-12 * c**4)


def test_material_scaling_exact(square_mesh):
    base = stiffness_from_problem(WarpingProblem(square_mesh, STEEL_LIKE))
    scaled = stiffness_from_problem(WarpingProblem(square_mesh, STEEL_LIKE.scaled(3.0)))
    assert np.allclose(scaled, 3.0 * base, rtol=1e-12, atol=1e-14)


def test_rotated_section_gives_same_H():
    tri = [(0, 0), (2, 0), (0.5, 1.2)]
    a = compute_H(SectionGeometry.polygon(tri), STEEL_LIKE, 0.1).H
    rot = np.array([[math.cos(0.7), -math.sin(0.7)], [math.sin(0.7), math.cos(0.7)]])
    b = compute_H(SectionGeometry.polygon(np.array(tri) @ rot.T + [3.0, -1.0]), STEEL_LIKE, 0.1).H
    # principal-axis normalization makes H frame independent up to mesh effects
    assert np.allclose(np.diag(a), np.diag(b), rtol=2e-2)


def test_stiffness_form_checks():
    with pytest.raises(SectionError, match="symmetric"):
        StiffnessForm(np.array([[1, 0.1, 0], [0, 1, 0], [0, 0, 1.0]]))
    with pytest.raises(SectionError, match="positive definite"):
        StiffnessForm(np.diag([1.0, 1.0, -1.0]))
    f = StiffnessForm(np.eye(3))
    assert f.to_json() == {"H": np.eye(3).tolist()}


def test_warping_nullspace_leaves_energy(square_mesh):
    # shifts and in-plane infinitesimal rotations are zero-energy; only four
    # constraints are imposed, so any such field may be added to the minimizer
    prob = WarpingProblem(square_mesh, STEEL_LIKE)
    s = np.array([0.3, -1.0, 0.7])
    w = prob.solve(s)
    x2, x3 = square_mesh.nodes[:, 0], square_mesh.nodes[:, 1]
    null = np.column_stack([np.full_like(x2, 0.4), -0.9 * x3 - 0.2, 0.9 * x2 + 1.1])
    shifted = prob.energy(w.values + null, s)
    assert shifted == pytest.approx(w.minimum, rel=1e-12, abs=1e-14)
    assert np.abs(prob.constraints @ w.values.ravel()).max() < 1e-12
