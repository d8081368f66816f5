"""Differentiable bilinear sampling and depth-based inverse warping.

Sampling convention: a continuous point p = (u, v) is valid iff it lies in
[0, w-1] x [0, h-1] (pixel centers at integer coordinates, up to a 1e-9
border epsilon so that identity reprojection never flags border pixels).
Out-of-bounds samples return 0 and are marked invalid (zero fill, never
clamped). On integer grid lines the gradient takes the right/lower cell's
linear piece (floor binning).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, Pixel, reproject_grid, reproject_jacobian_grid
from .se3 import SE3Transform

# Tolerance for the in-bounds test; absorbs reprojection round-off at borders.
BORDER_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Dense image, shape (h, w, c), c in {1, 3}, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(
                f"image data must be (h, w, c) with c in {{1, 3}}, got {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        if not np.all(np.isfinite(data)):
            raise ValueError("image values must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @classmethod
    def grayscale(cls, plane: np.ndarray) -> "ImageBuffer":
        """Wrap an (h, w) array as a single-channel image."""
        plane = np.asarray(plane, dtype=float)
        if plane.ndim != 2:
            raise ValueError(f"expected (h, w) array, got {plane.shape}")
        return cls(plane[:, :, None])

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel positive depth, shape (h, w)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"depth data must be (h, w), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("depth values must be finite")
        if data.min() <= 0.0:
            raise ValueError("depth values must be > 0")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class ValidityMask:
    """Boolean per-pixel validity, shape (h, w)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"mask data must be (h, w), got {data.shape}")
        if data.dtype != np.bool_:
            if not np.all((data == 0) | (data == 1)):
                raise ValueError("validity mask entries must be 0/1")
            data = data.astype(bool)
        object.__setattr__(self, "data", data)

    @classmethod
    def all_valid(cls, height: int, width: int) -> "ValidityMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def count(self) -> int:
        return int(self.data.sum())


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(h, w, 2) array of (u, v) pixel-center coordinates."""
    v, u = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([u, v], axis=-1)


def _gather_corners(
    data: np.ndarray, uv: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Corner values and interpolation offsets for (...,) sample points.

    Returns (i00, i10, i01, i11, fu, fv) where iXY is the value at
    (u0 + X, v0 + Y), zero-filled outside the image, and fu, fv are the
    fractional offsets in [0, 1). Binning uses floor, so points on grid
    lines belong to the right/lower cell.
    """
    h, w = data.shape[:2]
    u = uv[..., 0]
    v = uv[..., 1]
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    fu = u - u0
    fv = v - v0

    def at(ui, vi):
        inside = (ui >= 0) & (ui <= w - 1) & (vi >= 0) & (vi <= h - 1)
        uc = np.clip(ui, 0, w - 1)
        vc = np.clip(vi, 0, h - 1)
        vals = data[vc, uc]
        return np.where(inside[..., None], vals, 0.0)

    return (
        at(u0, v0),
        at(u0 + 1, v0),
        at(u0, v0 + 1),
        at(u0 + 1, v0 + 1),
        fu,
        fv,
    )


def sample_grid(img: ImageBuffer, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear-sample an image at many points.

    Args:
        img: source image.
        uv: (..., 2) sample coordinates.

    Returns:
        (values, valid): (..., c) interpolated values (0 where invalid) and
        the bool in-bounds mask.
    """
    uv = np.asarray(uv, dtype=float)
    h, w = img.height, img.width
    u = uv[..., 0]
    v = uv[..., 1]
    valid = (
        (u >= -BORDER_EPS)
        & (u <= w - 1 + BORDER_EPS)
        & (v >= -BORDER_EPS)
        & (v <= h - 1 + BORDER_EPS)
    )
    uv_c = np.stack(
        [np.clip(u, 0.0, float(w - 1)), np.clip(v, 0.0, float(h - 1))], axis=-1
    )
    i00, i10, i01, i11, fu, fv = _gather_corners(img.data, uv_c)
    fu = fu[..., None]
    fv = fv[..., None]
    vals = (
        i00 * (1.0 - fu) * (1.0 - fv)
        + i10 * fu * (1.0 - fv)
        + i01 * (1.0 - fu) * fv
        + i11 * fu * fv
    )
    return np.where(valid[..., None], vals, 0.0), valid


def sample_grad_grid(img: ImageBuffer, uv: np.ndarray) -> np.ndarray:
    """d(sampled value)/d(u, v) at many points.

    Returns:
        (..., 2, c) array; row 0 is d/du, row 1 is d/dv. Out-of-bounds points
        get zeros (callers mask them anyway).
    """
    uv = np.asarray(uv, dtype=float)
    h, w = img.height, img.width
    u = uv[..., 0]
    v = uv[..., 1]
    valid = (
        (u >= -BORDER_EPS)
        & (u <= w - 1 + BORDER_EPS)
        & (v >= -BORDER_EPS)
        & (v <= h - 1 + BORDER_EPS)
    )
    uv_c = np.stack(
        [np.clip(u, 0.0, float(w - 1)), np.clip(v, 0.0, float(h - 1))], axis=-1
    )
    i00, i10, i01, i11, fu, fv = _gather_corners(img.data, uv_c)
    fu = fu[..., None]
    fv = fv[..., None]
    d_u = (i10 - i00) * (1.0 - fv) + (i11 - i01) * fv
    d_v = (i01 - i00) * (1.0 - fu) + (i11 - i10) * fu
    grad = np.stack([d_u, d_v], axis=-2)
    return np.where(valid[..., None, None], grad, 0.0)


def bilinear_sample(img: ImageBuffer, p: Pixel) -> tuple[np.ndarray, bool]:
    """Sample one point; see sample_grid.

    Returns:
        ((c,) values, valid flag). Out of bounds gives zeros and False.
    """
    vals, valid = sample_grid(img, np.array([p[0], p[1]]))
    return vals, bool(valid)


def bilinear_sample_grad(img: ImageBuffer, p: Pixel) -> np.ndarray:
    """(2, c) derivative of bilinear_sample w.r.t. (u, v) at one point.

    On integer grid lines this is the right/lower cell's linear piece; the
    sampled value is continuous there but the derivative jumps.
    """
    return sample_grad_grid(img, np.array([p[0], p[1]]))


def inverse_warp(
    source: ImageBuffer, depth: DepthMap, pose: SE3Transform, k: CameraIntrinsics
) -> tuple[ImageBuffer, ValidityMask]:
    """Reconstruct the target view by sampling the source at reprojections.

    recon(p_t) = bilinear_sample(source, reproject(p_t, depth(p_t), pose, k)).

    Args:
        source: source view image.
        depth: target-view depth, same spatial size.
        pose: target-to-source transform.
        k: shared intrinsics.

    Returns:
        (recon, mask): reconstruction (clamped to [0, 1]; zero where invalid)
        and validity mask, False where the reprojection lands out of bounds
        or behind the camera.
    """
    if (source.height, source.width) != (depth.height, depth.width):
        raise ValueError(
            f"source {source.height}x{source.width} and depth "
            f"{depth.height}x{depth.width} sizes differ"
        )
    uv = pixel_grid(depth.height, depth.width)
    uv_src, _, in_front = reproject_grid(uv, depth.data, pose, k)
    vals, in_bounds = sample_grid(source, uv_src)
    valid = in_front & in_bounds
    vals = np.where(valid[..., None], vals, 0.0)
    return ImageBuffer(np.clip(vals, 0.0, 1.0)), ValidityMask(valid)


def warp_jacobians(
    source: ImageBuffer, depth: DepthMap, pose: SE3Transform, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel derivatives of the reconstruction.

    Chain rule through the sampler: with g = d(sample)/d(u, v) at the
    reprojected point, d(recon)/d(depth) = g^T @ d(p_s)/d(depth) and
    d(recon)/d(pose) = g^T @ d(p_s)/d(pose).

    Returns:
        (d_depth, d_pose): shapes (h, w, c) and (h, w, c, 6). Rows of
        invalid pixels are zero. Values are one-sided on bilinear grid
        lines and undefined across validity flips; gradient checks exclude
        those pixels.
    """
    if (source.height, source.width) != (depth.height, depth.width):
        raise ValueError("source and depth sizes differ")
    uv = pixel_grid(depth.height, depth.width)
    uv_src, _, in_front = reproject_grid(uv, depth.data, pose, k)
    d_depth_px, d_pose_px, _ = reproject_jacobian_grid(uv, depth.data, pose, k)
    grad = sample_grad_grid(source, uv_src)  # (h, w, 2, c)
    _, in_bounds = sample_grid(source, uv_src)
    valid = in_front & in_bounds
    # (h, w, c) = sum over axis of (h, w, 2, c) * (h, w, 2, 1)
    d_depth = np.einsum("hwic,hwi->hwc", grad, d_depth_px)
    d_pose = np.einsum("hwic,hwip->hwcp", grad, d_pose_px)
    d_depth = np.where(valid[..., None], d_depth, 0.0)
    d_pose = np.where(valid[..., None, None], d_pose, 0.0)
    return d_depth, d_pose
