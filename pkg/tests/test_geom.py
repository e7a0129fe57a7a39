import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnidensity.errors import AtProjectionCenter, InvalidRotation, ZeroVector
from omnidensity.geom import (
    NORTH,
    SOUTH,
    ProjectionParams,
    SphereRotation,
    equirect_to_sphere,
    pixel_to_plane,
    pixel_to_sphere,
    plane_to_pixel,
    project_to_sphere,
    rotate_sphere,
    sphere_to_equirect,
    sphere_to_pixel,
    stereographic_project,
    stereographic_unproject,
)

from .conftest import kasa_circle, random_unit

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


def ray_hit(s, d):
    """Where the line from N through s meets z = -d, in exact arithmetic."""
    x, y, z = (Fraction(c) for c in s)
    t = (1 + Fraction(d)) / (1 - z)
    return (t * x, t * y)


# --- project_to_sphere ------------------------------------------------------

@pytest.mark.parametrize("p, expected", [
    ((0, 0, 5), (0, 0, 1)),
    ((3, 4, 0), (0.6, 0.8, 0)),
    ((1, 1, 1), (1 / math.sqrt(3),) * 3),
])
def test_project_to_sphere_examples(p, expected):
    assert project_to_sphere(p) == pytest.approx(expected, abs=1e-15)


def test_project_to_sphere_rejects_origin():
    with pytest.raises(ZeroVector):
        project_to_sphere((0.0, 0.0, 0.0))
    with pytest.raises(ZeroVector):
        project_to_sphere((1e-16, 0.0, 0.0))


@given(finite, finite, finite)
def test_project_to_sphere_unit_norm(x, y, z):
    if math.sqrt(x * x + y * y + z * z) < 1e-6:
        return
    s = project_to_sphere((x, y, z))
    assert math.isclose(math.hypot(*s), 1.0, abs_tol=1e-12)


# --- stereographic ------------------------------------------------------------

@pytest.mark.parametrize("s, q", [
    ((0, 0, -1), (0, 0)),
    ((1, 0, 0), (2, 0)),
    ((0, 0.6, -0.8), (0, 2 / 3)),
])
def test_stereographic_examples(s, q):
    assert stereographic_project(s, 1.0) == pytest.approx(q, abs=1e-15)
    assert stereographic_unproject(q, 1.0) == pytest.approx(s, abs=1e-12)


def test_south_pole_maps_exactly_to_plane_centre():
    assert tuple(stereographic_project(SOUTH, 3.0)) == (0.0, 0.0)


def test_north_pole_rejected():
    with pytest.raises(AtProjectionCenter):
        stereographic_project(NORTH)
    with pytest.raises(AtProjectionCenter):
        stereographic_project(np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]))


@pytest.mark.parametrize("d", [1.0, 1.5, 4.0])
def test_stereographic_matches_exact_ray_intersection(d, rng):
    pts = random_unit(rng, 200)
    pts = pts[pts[:, 2] < 0.99]
    got = stereographic_project(pts, d)
    for s, q in zip(pts, got):
        ex = ray_hit(s, d)
        assert q[0] == pytest.approx(float(ex[0]), rel=1e-13, abs=1e-13)
        assert q[1] == pytest.approx(float(ex[1]), rel=1e-13, abs=1e-13)


@given(finite, finite, st.floats(1.0, 5.0))
def test_unproject_then_project_round_trip(px, py, d):
    s = stereographic_unproject((px, py), d)
    assert math.isclose(math.hypot(*s), 1.0, abs_tol=1e-12)
    q = stereographic_project(s, d)
    tol = 1e-9 * max(1.0, math.hypot(px, py)) ** 2
    assert q == pytest.approx((px, py), abs=tol)


def test_radial_symmetry_depends_only_on_z(rng):
    pts = random_unit(rng, 500)
    pts = pts[pts[:, 2] < 0.99]
    rho = np.hypot(*stereographic_project(pts, 1.0).T)
    expected = 2.0 * np.sqrt((1 + pts[:, 2]) / (1 - pts[:, 2]))
    np.testing.assert_allclose(rho, expected, rtol=1e-12)


@given(angles)
def test_azimuthal_rotation_commutes_with_projection(phi):
    rng = np.random.default_rng(1)
    pts = random_unit(rng, 64)
    pts = pts[pts[:, 2] < 0.95]
    rz = SphereRotation.about_axis((0, 0, 1), phi)
    lhs = stereographic_project(rotate_sphere(pts, rz), 1.0)
    c, s = math.cos(phi), math.sin(phi)
    rhs = stereographic_project(pts, 1.0) @ np.array([[c, s], [-s, c]])
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_scene_plane_points_at_equal_radius_share_image_radius():
    k = -2.0
    params = ProjectionParams.for_size(512)
    for rho in (0.5, 2.0, 7.5):
        phis = np.linspace(0, 2 * math.pi, 17)
        pts = np.column_stack([rho * np.cos(phis), rho * np.sin(phis), np.full_like(phis, k)])
        uv = plane_to_pixel(stereographic_project(project_to_sphere(pts), params), params)
        radii = np.hypot(uv[:, 0] - params.center_u, uv[:, 1] - params.center_v)
        assert np.ptp(radii) < 1e-9


def test_small_circles_project_to_circles(rng):
    for c in random_unit(rng, 40):
        if c[2] > 0.9:
            continue
        e1 = np.cross(c, [1.0, 0.0, 0.0] if abs(c[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(c, e1)
        t = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        eps = 0.02
        ring = math.cos(eps) * c + math.sin(eps) * (np.outer(np.cos(t), e1) + np.outer(np.sin(t), e2))
        _, _, resid = kasa_circle(stereographic_project(ring, 1.0))
        assert resid < 1e-6


# --- pixels -------------------------------------------------------------------

def test_plane_pixel_examples():
    p = ProjectionParams(2688, 2688, 100.0, 1344.0, 1344.0)
    assert plane_to_pixel((0, 0), p) == (1344.0, 1344.0)
    assert plane_to_pixel((2, 0), p) == (1544.0, 1344.0)
    assert plane_to_pixel(pixel_to_plane((0, 0), p), p) == pytest.approx((0.0, 0.0), abs=1e-12)


@given(st.floats(-5000, 5000), st.floats(-5000, 5000))
def test_pixel_round_trip(u, v):
    p = ProjectionParams.for_size(2688)
    assert plane_to_pixel(pixel_to_plane((u, v), p), p) == pytest.approx((u, v), abs=1e-9)


def test_projection_params_validation():
    with pytest.raises(ValueError):
        ProjectionParams(10, 10, 1.0, 5, 5, d=0.5)
    with pytest.raises(ValueError):
        ProjectionParams(10, 10, 0.0, 5, 5)
    with pytest.raises(ValueError):
        ProjectionParams(10, 10, 1.0, 10, 5)
    p = ProjectionParams.for_size(100, d=2.0, span=2.0)
    assert p.center == (49.5, 49.5) and p.scale == 25.0
    assert ProjectionParams.from_dict(p.to_dict()) == p


def test_sphere_pixel_chain_round_trip(rng):
    p = ProjectionParams.for_size(1024)
    rot = SphereRotation.from_euler(0.3, -0.2, 1.1)
    pts = random_unit(rng, 1000)
    pts = pts[rotate_sphere(pts, rot)[:, 2] < 0.999]
    back = pixel_to_sphere(sphere_to_pixel(pts, p, rot), p, rot)
    np.testing.assert_allclose(back, pts, atol=1e-9)


# --- rotations ------------------------------------------------------------------

def test_rotation_examples():
    assert SphereRotation.identity().to_list() == np.eye(3).tolist()
    rz = SphereRotation.about_axis((0, 0, 1), math.pi / 2)
    assert rotate_sphere((1, 0, 0), rz) == pytest.approx((0, 1, 0), abs=1e-15)
    rx = SphereRotation.about_axis((1, 0, 0), math.pi)
    assert rotate_sphere(NORTH, rx) == pytest.approx(SOUTH, abs=1e-15)


def test_invalid_rotation_rejected():
    with pytest.raises(InvalidRotation):
        SphereRotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidRotation):
        SphereRotation(np.eye(3) * 1.01)
    with pytest.raises(InvalidRotation):
        rotate_sphere((1, 0, 0), np.ones((3, 3)))
    with pytest.raises(ZeroVector):
        SphereRotation.about_axis((0, 0, 0), 1.0)


@given(angles, angles, angles)
def test_rotation_preserves_angles_between_points(a, b, c):
    rot = SphereRotation.from_euler(a, b, c)
    m = rot.matrix
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12) and math.isclose(np.linalg.det(m), 1, abs_tol=1e-12)
    pts = random_unit(np.random.default_rng(2), 20)
    out = rotate_sphere(pts, rot)
    np.testing.assert_allclose(out @ out.T, pts @ pts.T, atol=1e-9)
    np.testing.assert_allclose(rotate_sphere(out, rot.inverse()), pts, atol=1e-12)


def test_euler_composition_order():
    r = SphereRotation.from_euler(0.1, 0.2, 0.3).matrix
    expected = (SphereRotation.about_axis((0, 0, 1), 0.3).matrix
                @ SphereRotation.about_axis((0, 1, 0), 0.2).matrix
                @ SphereRotation.about_axis((1, 0, 0), 0.1).matrix)
    np.testing.assert_allclose(r, expected, atol=1e-15)


# --- equirectangular ----------------------------------------------------------

def test_equirect_examples():
    assert equirect_to_sphere((0, 0)) == pytest.approx((1, 0, 0), abs=1e-15)
    assert equirect_to_sphere((math.pi / 2, 0)) == pytest.approx((0, 1, 0), abs=1e-15)
    for lon in (-3.0, 0.0, 1.7):
        assert equirect_to_sphere((lon, math.pi / 2)) == pytest.approx((0, 0, 1), abs=1e-15)


@given(st.floats(-math.pi, math.pi, exclude_max=True), st.floats(-1.5, 1.5))
def test_equirect_round_trip(lon, lat):
    back = sphere_to_equirect(equirect_to_sphere((lon, lat)))
    dlon = (back[0] - lon + math.pi) % (2 * math.pi) - math.pi
    assert abs(dlon) < 1e-9 and abs(back[1] - lat) < 1e-9
    assert -math.pi <= back[0] < math.pi


def test_array_inputs_follow_shape():
    pts = np.zeros((4, 5, 3))
    pts[..., 2] = -1
    assert stereographic_project(pts).shape == (4, 5, 2)
    assert stereographic_unproject(np.zeros((7, 2))).shape == (7, 3)
    with pytest.raises(ValueError):
        project_to_sphere((1.0, 2.0))
