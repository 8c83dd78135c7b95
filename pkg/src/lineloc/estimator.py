"""Gauss-Newton pose estimation on per-endpoint line reprojection residuals.

Each correspondence contributes two scalar residuals, one per 3D segment
endpoint: the signed distance from the endpoint's projection to the
detected line. With normalized lines the squared residual equals the
point-to-foot-point distance squared, so the weighted sum of squares is
exactly the reprojection cost being minimized.

The analytic Jacobian row of a residual with respect to a left
perturbation ``[d_rho, d_phi]`` of the world-to-camera pose is

    (a, b) @ pinhole_partials @ [I | -skew(p_cam)]

with ``pinhole_partials = [[fx/z, 0, -fx*x/z^2], [0, fy/z, -fy*y/z^2]]``.
Signs were pinned against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    InsufficientObservationsError,
    SingularNormalEquationsError,
)
from .geometry import (
    DEPTH_EPSILON,
    CameraIntrinsics,
    Pose,
    Twist,
    apply_left_perturbation,
    foot_point,
    project,
    signed_distance,
)
from .matching import Correspondence

MIN_CORRESPONDENCES = 4

_ENDPOINT_ATTR = {"start": "p_start", "end": "p_end"}


@dataclass
class LinearizedSystem:
    """Stacked per-endpoint residuals and Jacobian at one linearization point.

    Rows come in pairs: rows ``2k`` and ``2k + 1`` belong to the two
    endpoints of correspondence ``k`` and share a ``row_owner`` entry.
    ``weights`` holds the diagonal of ``W = Q^-1`` in 1/px^2.
    """

    jacobian: np.ndarray  # (n, 6)
    residuals: np.ndarray  # (n,)
    weights: np.ndarray  # (n,)
    row_owner: np.ndarray  # (n,) map line id per row
    dropped_line_ids: tuple[int, ...] = ()

    @property
    def n_rows(self) -> int:
        return self.residuals.shape[0]

    @property
    def line_ids(self) -> list[int]:
        """Unique owning line ids in row order."""
        return [int(i) for i in self.row_owner[::2]]

    def rows_of(self, line_id: int) -> np.ndarray:
        return np.flatnonzero(self.row_owner == line_id)

    def cost(self) -> float:
        return float(np.sum(self.weights * self.residuals**2))


@dataclass
class SolverOptions:
    max_iterations: int = 50
    step_tolerance: float = 1e-8
    damping_initial: float = 1e-4
    damping_factor: float = 10.0
    damping_max: float = 1e8
    max_condition: float = 1e14


@dataclass
class SolveReport:
    """Outcome of one Gauss-Newton solve.

    ``final_system`` is relinearized at the returned pose so its
    residuals can feed the integrity tests directly.
    """

    pose: Pose
    iterations: int
    converged: bool
    final_cost: float
    final_system: LinearizedSystem
    dropped_line_ids: tuple[int, ...] = ()


def _endpoint_world(corr: Correspondence, endpoint_index: str) -> np.ndarray:
    try:
        return getattr(corr.map_segment, _ENDPOINT_ATTR[endpoint_index])
    except KeyError:
        raise ValueError(f"endpoint_index must be 'start' or 'end', got {endpoint_index!r}")


def endpoint_residual(
    corr: Correspondence, endpoint_index: str, pose_wc: Pose, k: CameraIntrinsics
) -> float:
    """Signed distance from the projected 3D endpoint to the detected line."""
    pixel = project(pose_wc, k, _endpoint_world(corr, endpoint_index))
    return signed_distance(corr.detected_line, pixel)


def _jacobian_row(line_a: float, line_b: float, p_cam: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    x, y, z = p_cam
    g = np.array(
        [
            line_a * k.fx / z,
            line_b * k.fy / z,
            -(line_a * k.fx * x + line_b * k.fy * y) / (z * z),
        ]
    )
    return np.concatenate([g, np.cross(p_cam, g)])


def endpoint_jacobian(
    corr: Correspondence, endpoint_index: str, pose_wc: Pose, k: CameraIntrinsics
) -> np.ndarray:
    """Derivative of the signed-distance residual w.r.t. a left pose perturbation.

    Column order is ``[d_rho_x, d_rho_y, d_rho_z, d_phi_x, d_phi_y, d_phi_z]``.
    """
    p_cam = pose_wc.transform(_endpoint_world(corr, endpoint_index))
    if p_cam[2] <= DEPTH_EPSILON:
        raise BehindCameraError(f"endpoint depth {p_cam[2]:.3g} m is not in front of the camera")
    return _jacobian_row(corr.detected_line.a, corr.detected_line.b, p_cam, k)


def squared_distance_jacobian(
    corr: Correspondence, endpoint_index: str, pose_wc: Pose, k: CameraIntrinsics
) -> np.ndarray:
    """Jacobian of the squared foot-point error ``e = |p_f - p|^2``.

    Written in the foot-point form, with the error gradient expressed
    through ``m = a^2*(uf - u) + a*b*(vf - v)`` and
    ``n = a*b*(uf - u) + b^2*(vf - v)``. Analytically this equals
    ``2 * r * endpoint_jacobian`` for the signed-distance residual ``r``;
    the identity is exercised by the test suite as an independent check
    on the signed-distance chain rule.
    """
    p_world = _endpoint_world(corr, endpoint_index)
    p_cam = pose_wc.transform(p_world)
    if p_cam[2] <= DEPTH_EPSILON:
        raise BehindCameraError(f"endpoint depth {p_cam[2]:.3g} m is not in front of the camera")
    pixel = project(pose_wc, k, p_world)
    line = corr.detected_line
    foot = foot_point(line, pixel)
    du, dv = foot - pixel
    a, b = line.a, line.b
    m = a * a * du + a * b * dv
    n = a * b * du + b * b * dv
    norm = a * a + b * b
    x, y, z = p_cam
    pixel_grad = np.array(
        [
            m * k.fx / z,
            n * k.fy / z,
            -(m * k.fx * x + n * k.fy * y) / (z * z),
        ]
    )
    return -2.0 / norm * np.concatenate([pixel_grad, np.cross(p_cam, pixel_grad)])


def assemble_system(
    correspondences: list[Correspondence],
    pose_wc: Pose,
    k: CameraIntrinsics,
    sigma_px: float,
) -> LinearizedSystem:
    """Stack two rows per correspondence at the given linearization point.

    Correspondences with an endpoint behind the camera are dropped as a
    pair and reported in ``dropped_line_ids``. Raises
    :class:`InsufficientObservationsError` when fewer than four
    correspondences survive.
    """
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    if not correspondences:
        raise InsufficientObservationsError("no correspondences to assemble")

    points = np.array([c.map_segment.endpoints for c in correspondences])  # (N, 2, 3)
    coeffs = np.array([[c.detected_line.a, c.detected_line.b, c.detected_line.c] for c in correspondences])
    owners = np.array([c.map_line_id for c in correspondences])

    rotation = pose_wc.rotation_matrix
    p_cam = points.reshape(-1, 3) @ rotation.T + pose_wc.translation  # (2N, 3)
    p_cam = p_cam.reshape(len(correspondences), 2, 3)
    keep = np.all(p_cam[:, :, 2] > DEPTH_EPSILON, axis=1)
    dropped = tuple(int(i) for i in owners[~keep])
    if int(keep.sum()) < MIN_CORRESPONDENCES:
        raise InsufficientObservationsError(
            f"{int(keep.sum())} correspondences survive the depth cull; need {MIN_CORRESPONDENCES}"
        )

    p_cam = p_cam[keep].reshape(-1, 3)  # (n, 3)
    ab = np.repeat(coeffs[keep], 2, axis=0)  # (n, 3) rows of (a, b, c)
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    u = k.fx * x / z + k.cx
    v = k.fy * y / z + k.cy
    residuals = ab[:, 0] * u + ab[:, 1] * v + ab[:, 2]

    g = np.empty_like(p_cam)
    g[:, 0] = ab[:, 0] * k.fx / z
    g[:, 1] = ab[:, 1] * k.fy / z
    g[:, 2] = -(ab[:, 0] * k.fx * x + ab[:, 1] * k.fy * y) / (z * z)
    jacobian = np.hstack([g, np.cross(p_cam, g)])

    n = residuals.shape[0]
    weights = np.full(n, 1.0 / sigma_px**2)
    row_owner = np.repeat(owners[keep], 2)
    return LinearizedSystem(jacobian, residuals, weights, row_owner, dropped)


def _normal_equations(system: LinearizedSystem, max_condition: float):
    jw = system.jacobian * system.weights[:, None]
    h = system.jacobian.T @ jw
    if np.linalg.cond(h) > max_condition:
        raise SingularNormalEquationsError(
            "normal equations are rank deficient (degenerate line geometry)"
        )
    g = jw.T @ system.residuals
    return h, g


def gauss_newton_solve(
    correspondences: list[Correspondence],
    initial: Pose,
    k: CameraIntrinsics,
    sigma_px: float,
    options: SolverOptions | None = None,
) -> SolveReport:
    """Iterate damped Gauss-Newton steps from the initial pose.

    Relinearizes every iteration and applies a left-perturbation update
    ``pose <- exp(step) @ pose``. A pure Gauss-Newton step is attempted
    first; if it raises the cost, Levenberg damping (lambda starting at
    ``damping_initial``, multiplied by ``damping_factor``) is escalated
    until the cost decreases. Accepted iterations therefore never
    increase the cost. Convergence is declared when the accepted step
    norm falls below ``step_tolerance``; hitting the iteration cap
    returns ``converged=False`` instead of raising.
    """
    opts = options or SolverOptions()
    pose = initial
    system = assemble_system(correspondences, pose, k, sigma_px)
    cost = system.cost()
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        h, g = _normal_equations(system, opts.max_condition)
        step = np.linalg.solve(h, -g)
        if float(np.linalg.norm(step)) < opts.step_tolerance:
            converged = True  # already at a stationary point
            break
        candidate_pose = apply_left_perturbation(pose, Twist.from_vector(step))
        candidate_system = assemble_system(correspondences, candidate_pose, k, sigma_px)
        candidate_cost = candidate_system.cost()
        # cost comparisons tolerate float rounding so steps at the noise
        # floor of the cost surface are not spuriously rejected
        slack = 1.0 + 1e-12
        if candidate_cost > cost * slack:
            lam = opts.damping_initial
            improved = False
            while lam <= opts.damping_max:
                step = np.linalg.solve(h + lam * np.eye(6), -g)
                candidate_pose = apply_left_perturbation(pose, Twist.from_vector(step))
                candidate_system = assemble_system(correspondences, candidate_pose, k, sigma_px)
                candidate_cost = candidate_system.cost()
                if candidate_cost <= cost * slack:
                    improved = True
                    break
                lam *= opts.damping_factor
            if not improved:
                # even heavily damped steps cannot lower the cost; declare
                # convergence only if the last step is below tolerance
                converged = float(np.linalg.norm(step)) < opts.step_tolerance
                break
        pose, system, cost = candidate_pose, candidate_system, candidate_cost
        if float(np.linalg.norm(step)) < opts.step_tolerance:
            converged = True
            break
    return SolveReport(
        pose=pose,
        iterations=iterations,
        converged=converged,
        final_cost=cost,
        final_system=system,
        dropped_line_ids=system.dropped_line_ids,
    )
