import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lineloc.errors import BehindCameraError, DegenerateSegmentError
from lineloc.geometry import (
    CameraIntrinsics,
    Line2D,
    LineSegment3D,
    Pose,
    Twist,
    apply_left_perturbation,
    exp_map,
    foot_point,
    line_from_endpoints,
    log_map,
    project,
    signed_distance,
    skew,
    world_to_camera,
)


def random_pose(rng) -> Pose:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(q, rng.uniform(-5.0, 5.0, size=3))


def random_twist(rng, max_angle=math.pi - 1e-3) -> Twist:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Twist(rng.uniform(-5.0, 5.0, size=3), angle * axis)


finite_coord = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)


class TestPose:
    def test_identity(self):
        e = Pose.identity()
        assert np.allclose(e.rotation_matrix, np.eye(3))
        assert np.allclose(e.translation, 0.0)

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(ValueError):
            Pose(np.array([1.0, 1.0, 0.0, 0.0]), np.zeros(3))

    def test_rotation_matrix_is_special_orthogonal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = random_pose(rng).rotation_matrix
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)

    def test_rotation_matrix_matches_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            pose = random_pose(rng)
            w, x, y, z = pose.rotation
            ref = Rotation.from_quat([x, y, z, w]).as_matrix()
            assert np.allclose(pose.rotation_matrix, ref, atol=1e-12)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p1, p2 = random_pose(rng), random_pose(rng)
            assert np.allclose(p1.compose(p2).matrix(), p1.matrix() @ p2.matrix(), atol=1e-12)

    def test_inverse(self):
        rng = np.random.default_rng(3)
        pose = random_pose(rng)
        assert np.allclose(pose.compose(pose.inverse()).matrix(), np.eye(4), atol=1e-12)

    def test_camera_center(self):
        rng = np.random.default_rng(4)
        pose = random_pose(rng)
        assert np.allclose(pose.transform(pose.camera_center()), 0.0, atol=1e-12)


class TestExpLog:
    def test_zero_twist_is_identity(self):
        pose = exp_map(Twist.zero())
        assert np.allclose(pose.rotation, [1.0, 0.0, 0.0, 0.0])
        assert np.allclose(pose.translation, 0.0)

    def test_pure_yaw(self):
        pose = exp_map(Twist(np.zeros(3), np.array([0.0, 0.0, math.pi / 2])))
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(pose.rotation_matrix, expected, atol=1e-12)
        assert np.allclose(pose.translation, 0.0)

    def test_round_trip_random(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            xi = random_twist(rng)
            back = log_map(exp_map(xi))
            assert np.linalg.norm(back.vector() - xi.vector()) < 1e-9

    @settings(max_examples=150, deadline=None)
    @given(
        rho=st.tuples(finite_coord, finite_coord, finite_coord),
        axis=st.tuples(
            st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False),
            st.floats(-1, 1, allow_nan=False),
        ),
        angle=st.floats(0.0, math.pi - 1e-3, allow_nan=False),
    )
    def test_round_trip_property(self, rho, axis, angle):
        axis = np.asarray(axis)
        norm = np.linalg.norm(axis)
        phi = angle * axis / norm if norm > 1e-6 else np.zeros(3)
        xi = Twist(np.asarray(rho), phi)
        back = log_map(exp_map(xi))
        assert np.linalg.norm(back.vector() - xi.vector()) < 1e-9

    def test_small_angle_stability(self):
        xi = Twist(np.array([1.0, -2.0, 3.0]), np.array([1e-10, -1e-10, 1e-10]))
        back = log_map(exp_map(xi))
        assert np.linalg.norm(back.vector() - xi.vector()) < 1e-12


class TestLeftPerturbation:
    def test_zero_delta_is_identity_operation(self):
        rng = np.random.default_rng(6)
        pose = random_pose(rng)
        moved = apply_left_perturbation(pose, Twist.zero())
        assert np.allclose(moved.matrix(), pose.matrix(), atol=1e-15)

    def test_on_identity_equals_exp(self):
        rng = np.random.default_rng(7)
        delta = random_twist(rng, max_angle=1.0)
        assert np.allclose(
            apply_left_perturbation(Pose.identity(), delta).matrix(),
            exp_map(delta).matrix(),
            atol=1e-14,
        )

    def test_point_derivative_matches_finite_difference(self):
        # d(T p)/d(delta) must equal [I | -skew(T p)] column by column.
        rng = np.random.default_rng(8)
        pose = random_pose(rng)
        p = rng.uniform(-3, 3, size=3)
        p_cam = pose.transform(p)
        analytic = np.hstack([np.eye(3), -skew(p_cam)])
        h = 1e-6
        for k in range(6):
            e = np.zeros(6)
            e[k] = h
            plus = apply_left_perturbation(pose, Twist.from_vector(e)).transform(p)
            minus = apply_left_perturbation(pose, Twist.from_vector(-e)).transform(p)
            fd = (plus - minus) / (2 * h)
            assert np.allclose(fd, analytic[:, k], atol=1e-5)


class TestWorldToCamera:
    def test_identity_extrinsic(self):
        rng = np.random.default_rng(9)
        pose = random_pose(rng)
        out = world_to_camera(pose, Pose.identity())
        assert np.allclose(out.matrix(), pose.matrix(), atol=1e-15)

    def test_identity_body_pose(self):
        rng = np.random.default_rng(10)
        extrinsic = random_pose(rng)
        out = world_to_camera(Pose.identity(), extrinsic)
        assert np.allclose(out.matrix(), extrinsic.matrix(), atol=1e-15)

    def test_matches_matrix_product(self):
        rng = np.random.default_rng(11)
        pose_wb, extrinsic = random_pose(rng), random_pose(rng)
        out = world_to_camera(pose_wb, extrinsic)
        assert np.allclose(out.matrix(), extrinsic.matrix() @ pose_wb.matrix(), atol=1e-12)


class TestProjection:
    def test_unit_camera(self):
        k = CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 10.0, 10.0)
        assert np.allclose(project(Pose.identity(), k, [0.0, 0.0, 1.0]), [0.0, 0.0])

    def test_pinhole_arithmetic(self):
        # (fx*X/Z + cx, fy*Y/Z + cy) = (100*1/2 + 50, 100*2/2 + 50)
        k = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100.0, 100.0)
        assert np.allclose(project(Pose.identity(), k, [1.0, 2.0, 2.0]), [100.0, 150.0])

    def test_behind_camera(self):
        k = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100.0, 100.0)
        with pytest.raises(BehindCameraError):
            project(Pose.identity(), k, [0.0, 0.0, -1.0])

    def test_identity_composition_is_bitwise_stable(self):
        rng = np.random.default_rng(12)
        pose = random_pose(rng)
        k = CameraIntrinsics(300.0, 310.0, 320.0, 240.0, 640.0, 480.0)
        p = pose.inverse().transform([0.1, -0.2, 2.0])  # guaranteed in front
        a = project(pose, k, p)
        b = project(Pose.identity().compose(pose), k, p)
        assert np.array_equal(a, b)

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(-1.0, 1.0, 0.0, 0.0, 10.0, 10.0)
        with pytest.raises(ValueError):
            CameraIntrinsics(1.0, 1.0, 20.0, 0.0, 10.0, 10.0)


class TestLine2D:
    def test_horizontal_axis(self):
        line = line_from_endpoints([0.0, 0.0], [1.0, 0.0])
        assert (line.a, line.b, line.c) == (0.0, 1.0, 0.0)

    def test_vertical_axis(self):
        line = line_from_endpoints([0.0, 0.0], [0.0, 1.0])
        assert (line.a, line.b, line.c) == (1.0, 0.0, 0.0)

    def test_diagonal(self):
        line = line_from_endpoints([0.0, 1.0], [1.0, 0.0])
        s = 1.0 / math.sqrt(2.0)
        assert np.allclose([line.a, line.b, line.c], [s, s, -s], atol=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateSegmentError):
            line_from_endpoints([1.0, 1.0], [1.0, 1.0])

    @settings(max_examples=150, deadline=None)
    @given(
        x1=finite_coord, y1=finite_coord, x2=finite_coord, y2=finite_coord
    )
    def test_normalization_idempotence(self, x1, y1, x2, y2):
        if math.hypot(x2 - x1, y2 - y1) <= 1e-6:
            return
        line = line_from_endpoints([x1, y1], [x2, y2])
        again = line_from_endpoints(line.p_start, line.p_end)
        assert (again.a, again.b, again.c) == (line.a, line.b, line.c)

    def test_invariant_enforcement(self):
        with pytest.raises(ValueError):
            Line2D(1.0, 1.0, 0.0, np.zeros(2), np.ones(2))  # not normalized
        with pytest.raises(ValueError):
            Line2D(0.0, 1.0, 0.0, np.array([0.0, 3.0]), np.array([1.0, 0.0]))


class TestFootPointAndDistance:
    def test_point_on_line(self):
        line = line_from_endpoints([0.0, 0.0], [2.0, 1.0])
        p = np.array([1.0, 0.5])
        assert np.allclose(foot_point(line, p), p, atol=1e-12)
        assert signed_distance(line, p) == pytest.approx(0.0, abs=1e-12)

    def test_axis_case(self):
        line = line_from_endpoints([0.0, 0.0], [1.0, 0.0])
        assert np.allclose(foot_point(line, [3.0, 4.0]), [3.0, 0.0])
        assert abs(signed_distance(line, [3.0, 4.0])) == pytest.approx(4.0)

    def test_diagonal_midpoint(self):
        line = line_from_endpoints([0.0, 1.0], [1.0, 0.0])  # x + y - 1 = 0
        assert np.allclose(foot_point(line, [1.0, 1.0]), [0.5, 0.5], atol=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(
        x1=finite_coord, y1=finite_coord, x2=finite_coord, y2=finite_coord,
        px=finite_coord, py=finite_coord,
    )
    def test_orthogonality_and_distance_identity(self, x1, y1, x2, y2, px, py):
        if math.hypot(x2 - x1, y2 - y1) <= 1e-6:
            return
        line = line_from_endpoints([x1, y1], [x2, y2])
        p = np.array([px, py])
        foot = foot_point(line, p)
        assert abs(signed_distance(line, foot)) < 1e-10
        assert abs(np.dot(p - foot, line.direction)) < 1e-10 * (1 + np.linalg.norm(p - foot))
        assert abs(abs(signed_distance(line, p)) - np.linalg.norm(p - foot)) < 1e-12


class TestLineSegment3D:
    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            LineSegment3D(0, np.zeros(3), np.zeros(3))

    def test_endpoints_stacked(self):
        seg = LineSegment3D(3, np.zeros(3), np.array([1.0, 0.0, 0.0]))
        assert seg.endpoints.shape == (2, 3)
