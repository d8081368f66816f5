"""Pinhole projection, backprojection, reprojection, and their Jacobians.

Pixel convention: p = (u, v) with u = column, v = row, origin at the center
of the top-left pixel. The camera looks down +z; only points with
z > Z_EPSILON project.

The pose Jacobian uses the same 6-parameter convention everywhere in this
package: columns 0..2 are a left-multiplicative rotation perturbation
(R <- exp(delta^) @ R), columns 3..5 additive translation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import BehindCameraError
from .se3 import SE3Transform, hat

# Points with camera-frame z at or below this are treated as behind the camera.
Z_EPSILON = 1e-6


class Pixel(NamedTuple):
    """Continuous pixel location, u = column, v = row."""

    u: float
    v: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (square-pixel model with independent fx, fy)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.fx, 0.0, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )


def backproject(p: Pixel, depth: float, k: CameraIntrinsics) -> np.ndarray:
    """Lift a pixel at a known depth into camera coordinates.

    Args:
        p: pixel location.
        depth: camera-frame z of the 3D point; must be > 0.

    Returns:
        (3,) point D * K^-1 * (u, v, 1).
    """
    if not np.isfinite(depth) or depth <= 0:
        raise ValueError(f"depth must be positive and finite, got {depth}")
    return depth * np.array(
        [(p[0] - k.cx) / k.fx, (p[1] - k.cy) / k.fy, 1.0]
    )


def project(point: np.ndarray, k: CameraIntrinsics) -> Pixel:
    """Pinhole projection of a camera-frame point.

    Raises:
        BehindCameraError: z <= 1e-6 (homogeneous normalization undefined).
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (3,):
        raise ValueError(f"point must have shape (3,), got {point.shape}")
    if not np.all(np.isfinite(point)):
        raise ValueError("point must be finite")
    z = point[2]
    if z <= Z_EPSILON:
        raise BehindCameraError(f"point z = {z:.3e} is behind the camera")
    return Pixel(k.fx * point[0] / z + k.cx, k.fy * point[1] / z + k.cy)


def reproject(
    p_t: Pixel, depth: float, t: SE3Transform, k: CameraIntrinsics
) -> Pixel:
    """Map a target pixel with known depth into the source view.

    p_s = project(T @ backproject(p_t, depth)); the homogeneous scale cancels,
    so an identity transform returns p_t up to a few ulps for any depth.
    """
    x_src = t.apply(backproject(p_t, depth, k))
    return project(x_src, k)


def reproject_jacobian(
    p_t: Pixel, depth: float, t: SE3Transform, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic derivatives of the reprojected pixel.

    With X = backproject(p_t, depth), X' = R X + t, and the projection
    J_pi = d(p_s)/d(X'), the chain rule gives:

      d(p_s)/d(depth) = J_pi @ (R @ (X / depth))         (X / depth = K^-1 p~)
      d(p_s)/d(delta_rot) = J_pi @ (-hat(R @ X))          (left perturbation)
      d(p_s)/d(t) = J_pi

    Args:
        p_t: target pixel.
        depth: target depth, > 0.
        t: target-to-source transform.
        k: shared intrinsics.

    Returns:
        (d_depth, d_pose): shapes (2,) and (2, 6), pose columns ordered
        (rotation 0..2, translation 3..5).

    Raises:
        BehindCameraError: transformed point has z <= 1e-6.
    """
    x = backproject(p_t, depth, k)
    rx = t.r.m @ x
    x_src = rx + t.t
    z = x_src[2]
    if z <= Z_EPSILON:
        raise BehindCameraError(f"point z = {z:.3e} is behind the camera")
    j_pi = np.array(
        [
            [k.fx / z, 0.0, -k.fx * x_src[0] / (z * z)],
            [0.0, k.fy / z, -k.fy * x_src[1] / (z * z)],
        ]
    )
    d_depth = j_pi @ (rx / depth)
    d_pose = np.empty((2, 6))
    d_pose[:, :3] = j_pi @ (-hat(rx))
    d_pose[:, 3:] = j_pi
    return d_depth, d_pose


# Vectorized variants used by the warping module. Invalid entries are masked
# rather than raised so whole images can be processed in one call.


def reproject_grid(
    uv: np.ndarray, depth: np.ndarray, t: SE3Transform, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reproject many pixels at once.

    Args:
        uv: (..., 2) pixel coordinates.
        depth: (...,) positive depths.

    Returns:
        (uv_src, z_src, valid): source coordinates (..., 2), source-frame
        depth (...,), and a bool mask, False where z_src <= 1e-6 (those
        uv_src rows are zero-filled).
    """
    uv = np.asarray(uv, dtype=float)
    depth = np.asarray(depth, dtype=float)
    x = depth[..., None] * np.stack(
        [
            (uv[..., 0] - k.cx) / k.fx,
            (uv[..., 1] - k.cy) / k.fy,
            np.ones_like(depth),
        ],
        axis=-1,
    )
    x_src = x @ t.r.m.T + t.t
    z = x_src[..., 2]
    valid = z > Z_EPSILON
    z_safe = np.where(valid, z, 1.0)
    uv_src = np.stack(
        [
            k.fx * x_src[..., 0] / z_safe + k.cx,
            k.fy * x_src[..., 1] / z_safe + k.cy,
        ],
        axis=-1,
    )
    uv_src = np.where(valid[..., None], uv_src, 0.0)
    return uv_src, z, valid


def reproject_jacobian_grid(
    uv: np.ndarray, depth: np.ndarray, t: SE3Transform, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized reproject_jacobian.

    Returns:
        (d_depth, d_pose, valid): shapes (..., 2), (..., 2, 6), (...,).
        Rows for invalid (behind-camera) pixels are zero.
    """
    uv = np.asarray(uv, dtype=float)
    depth = np.asarray(depth, dtype=float)
    ray = np.stack(
        [
            (uv[..., 0] - k.cx) / k.fx,
            (uv[..., 1] - k.cy) / k.fy,
            np.ones_like(depth),
        ],
        axis=-1,
    )
    x = depth[..., None] * ray
    rx = x @ t.r.m.T
    x_src = rx + t.t
    z = x_src[..., 2]
    valid = z > Z_EPSILON
    z_safe = np.where(valid, z, 1.0)

    j_pi = np.zeros(uv.shape[:-1] + (2, 3))
    j_pi[..., 0, 0] = k.fx / z_safe
    j_pi[..., 0, 2] = -k.fx * x_src[..., 0] / (z_safe * z_safe)
    j_pi[..., 1, 1] = k.fy / z_safe
    j_pi[..., 1, 2] = -k.fy * x_src[..., 1] / (z_safe * z_safe)

    d_depth = np.einsum("...ij,...j->...i", j_pi, rx / depth[..., None])
    # hat(rx) rows expressed without forming per-pixel 3x3s:
    # (-hat(w)) columns are (w x e_k), so J_pi @ (-hat(w)) = cross terms.
    minus_hat = np.zeros(uv.shape[:-1] + (3, 3))
    minus_hat[..., 0, 1] = rx[..., 2]
    minus_hat[..., 0, 2] = -rx[..., 1]
    minus_hat[..., 1, 0] = -rx[..., 2]
    minus_hat[..., 1, 2] = rx[..., 0]
    minus_hat[..., 2, 0] = rx[..., 1]
    minus_hat[..., 2, 1] = -rx[..., 0]
    d_pose = np.concatenate(
        [np.einsum("...ij,...jk->...ik", j_pi, minus_hat), j_pi], axis=-1
    )
    d_depth = np.where(valid[..., None], d_depth, 0.0)
    d_pose = np.where(valid[..., None, None], d_pose, 0.0)
    return d_depth, d_pose, valid
