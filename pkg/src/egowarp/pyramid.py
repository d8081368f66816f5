"""2x area-average pyramids and matching intrinsic rescaling.

Used by the multi-scale smoothness loss and the coarse-to-fine aligner. Odd
trailing rows/columns are cropped before averaging.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraIntrinsics
from .warp import DepthMap, ImageBuffer


def downsample2x(arr: np.ndarray) -> np.ndarray:
    """Average 2x2 blocks of an (h, w) or (h, w, c) array."""
    arr = np.asarray(arr, dtype=float)
    h, w = arr.shape[0] // 2 * 2, arr.shape[1] // 2 * 2
    if h < 2 or w < 2:
        raise ValueError(f"array {arr.shape} too small to downsample")
    a = arr[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def downscale_intrinsics(k: CameraIntrinsics) -> CameraIntrinsics:
    """Intrinsics after one 2x downsample.

    Pixel centers sit at integers, so the coordinate map is
    u' = (u + 0.5) / 2 - 0.5, giving f' = f/2 and c' = (c + 0.5)/2 - 0.5.
    """
    return CameraIntrinsics(
        fx=k.fx / 2.0,
        fy=k.fy / 2.0,
        cx=(k.cx + 0.5) / 2.0 - 0.5,
        cy=(k.cy + 0.5) / 2.0 - 0.5,
    )


def image_pyramid(img: ImageBuffer, levels: int) -> list[ImageBuffer]:
    """Fine-to-coarse list of `levels` images (index 0 = full resolution)."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = [img]
    for _ in range(levels - 1):
        out.append(ImageBuffer(np.clip(downsample2x(out[-1].data), 0.0, 1.0)))
    return out


def depth_pyramid(depth: DepthMap, levels: int) -> list[DepthMap]:
    """Fine-to-coarse list of `levels` depth maps."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = [depth]
    for _ in range(levels - 1):
        out.append(DepthMap(downsample2x(out[-1].data)))
    return out


def intrinsics_pyramid(k: CameraIntrinsics, levels: int) -> list[CameraIntrinsics]:
    out = [k]
    for _ in range(levels - 1):
        out.append(downscale_intrinsics(out[-1]))
    return out


def upsample2x(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample of an (h, w) array to (out_h, out_w), align-corners."""
    arr = np.asarray(arr, dtype=float)
    h, w = arr.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    sv = (h - 1) / (out_h - 1) if out_h > 1 else 0.0
    su = (w - 1) / (out_w - 1) if out_w > 1 else 0.0
    v = np.arange(out_h) * sv
    u = np.arange(out_w) * su
    v0 = np.minimum(np.floor(v).astype(int), h - 1)
    u0 = np.minimum(np.floor(u).astype(int), w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    u1 = np.minimum(u0 + 1, w - 1)
    fv = (v - v0)[:, None]
    fu = (u - u0)[None, :]
    if arr.ndim == 3:
        fv = fv[..., None]
        fu = fu[..., None]
    a = arr[np.ix_(v0, u0)]
    b = arr[np.ix_(v0, u1)]
    c = arr[np.ix_(v1, u0)]
    d = arr[np.ix_(v1, u1)]
    return (
        a * (1 - fu) * (1 - fv)
        + b * fu * (1 - fv)
        + c * (1 - fu) * fv
        + d * fu * fv
    )
