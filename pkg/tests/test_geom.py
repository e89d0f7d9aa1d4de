import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusiondet.geom import (
    Box3D,
    CameraCalib,
    DetectionRange,
    GeometryError,
    backproject,
    bev_center_distance,
    bev_project,
    cart_to_spherical,
    denormalize_point,
    make_camera,
    normalize_point,
    project_points,
    project_to_image,
    sincos_to_yaw,
    spherical_to_cart,
    wrap_angle,
    yaw_to_sincos,
)


def test_spherical_examples():
    r, th, ph = cart_to_spherical([1.0, 0.0, 0.0])
    assert (r, th, ph) == (1.0, 0.0, 0.0)
    r, th, ph = cart_to_spherical([0.0, 0.0, 2.0])
    assert r == 2.0 and th == pytest.approx(math.pi / 2, abs=1e-15)
    # 45° elevation
    _, th, ph = cart_to_spherical([1.0, 0.0, 1.0])
    assert th == pytest.approx(math.pi / 4, abs=1e-12)
    _, _, ph = cart_to_spherical([0.0, 1.0, 0.0])
    assert ph == pytest.approx(math.pi / 2, abs=1e-15)
    r, th, ph = cart_to_spherical([3.0, 4.0, 0.0])
    assert (r, th, ph) == (5.0, 0.0, math.atan2(4.0, 3.0))


def test_spherical_origin_rejected():
    with pytest.raises(GeometryError):
        cart_to_spherical([0.0, 0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3))
def test_spherical_round_trip(p):
    p = np.array(p)
    if np.linalg.norm(p) < 1e-3:
        return
    s = cart_to_spherical(p)
    assert -math.pi / 2 <= s[1] <= math.pi / 2
    assert -math.pi <= s[2] <= math.pi
    np.testing.assert_allclose(spherical_to_cart(s), p, atol=1e-9)


def test_projection_examples():
    cam = make_camera(0.0, 90.0, 64, 64)
    # dead ahead lands on the principal point
    u, v, d, vis = project_to_image([10.0, 0.0, 0.0], cam)
    assert (u, v) == pytest.approx((cam.cx, cam.cy)) and d == pytest.approx(10.0) and vis
    # behind the camera: invisible, coordinates stay finite
    u, v, d, vis = project_to_image([-5.0, 0.0, 0.0], cam)
    assert not vis and np.isfinite([u, v]).all() and d < 0
    # the left of the car (+y) is the left of the image (small u)
    u, _, _, _ = project_to_image([10.0, 3.0, 0.0], cam)
    assert u < cam.cx
    # above the sensor is the top of the image
    _, v, _, _ = project_to_image([10.0, 0.0, 3.0], cam)
    assert v < cam.cy


def test_projection_round_trip():
    rng = np.random.default_rng(0)
    for yaw in (0.0, math.pi / 2, -2.0):
        cam = make_camera(yaw, 100.0, 80, 60, position=(0.5, -0.2, 1.5))
        pts = rng.uniform(-30, 30, size=(500, 3))
        uv, depth, vis = project_points(pts, cam)
        assert vis.any()
        for (u, v), d, p in zip(uv[vis], depth[vis], pts[vis]):
            np.testing.assert_allclose(backproject(u, v, d, cam), p, atol=1e-9)


def test_calib_validation():
    with pytest.raises(GeometryError):
        CameraCalib(np.diag([0.0, 1.0, 1.0]), np.eye(3), np.zeros(3), 4, 4)
    with pytest.raises(GeometryError):
        CameraCalib(np.eye(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3), 4, 4)
    cam = make_camera(0.3, 70.0, 32, 24)
    again = CameraCalib.from_array(cam.to_array())
    np.testing.assert_array_equal(again.K, cam.K)
    assert (again.width, again.height) == (32, 24)


def test_normalize_examples_and_inverse():
    r = DetectionRange()
    np.testing.assert_array_equal(normalize_point([0.0, 0.0, 1.0], r), [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(normalize_point([32.0, -32.0, -3.0], r), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(normalize_point(r.lo, r), [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(normalize_point([100.0, -100.0, 0.0], r)[:2], [1.0, 0.0])
    pts = np.random.default_rng(3).uniform(r.lo, r.hi, size=(200, 3))
    assert np.max(np.abs(denormalize_point(normalize_point(pts, r), r) - pts)) < 1e-12
    rng = np.random.default_rng(1)
    c = rng.uniform(0.01, 0.99, size=(200, 3))
    np.testing.assert_allclose(normalize_point(denormalize_point(c, r), r), c, atol=1e-15)


def test_detection_range_rejects_empty_axis():
    with pytest.raises(GeometryError):
        DetectionRange(x_min=1.0, x_max=1.0)


def test_bev_project_examples():
    np.testing.assert_array_equal(bev_project([0.0, 0.0, 0.3], (64, 64)), [0.0, 0.0])
    np.testing.assert_array_equal(bev_project([1.0, 1.0, 0.3], (64, 64)), [63.0, 63.0])
    np.testing.assert_array_equal(bev_project([0.5, 0.5, 0.3], (64, 64)), [31.5, 31.5])


def test_bev_distance():
    a = Box3D((0, 0, 0), (1, 1, 1), 0.0)
    b = Box3D((3, 4, 9), (2, 2, 2), 1.0)
    assert bev_center_distance(a, a) == 0.0
    assert bev_center_distance(a, b) == 5.0
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = Box3D(tuple(rng.normal(size=3)), (1, 1, 1), 0.0)
        q = Box3D(tuple(rng.normal(size=3)), (1, 1, 1), 0.0)
        assert bev_center_distance(p, q) == bev_center_distance(q, p)


def test_yaw_round_trip():
    assert yaw_to_sincos(0.0) == (0.0, 1.0)
    grid = np.linspace(-math.pi, math.pi, 721)[1:]
    s, c = yaw_to_sincos(grid)
    assert np.max(np.abs(sincos_to_yaw(s, c) - grid)) < 1e-12
    assert sincos_to_yaw(2.0, 0.0) == pytest.approx(math.pi / 2, abs=1e-15)
    with pytest.raises(GeometryError):
        sincos_to_yaw(0.0, 0.0)


def test_wrap_angle_interval():
    for t in np.linspace(-20, 20, 401):
        w = wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(t), abs=1e-12)
    assert wrap_angle(-math.pi) == math.pi


def test_box_corners_and_size():
    b = Box3D((1.0, 2.0, 0.5), (2.0, 1.0, 4.0), math.pi / 2)
    corners = b.corners()
    # length runs along +y after a quarter turn
    assert np.ptp(corners[:, 1]) == pytest.approx(4.0)
    assert np.ptp(corners[:, 0]) == pytest.approx(2.0)
    assert b.longest_edge == 4.0
    with pytest.raises(GeometryError):
        Box3D((0, 0, 0), (0.0, 1.0, 1.0), 0.0)
    again = Box3D.from_array(b.to_array())
    assert again == b
