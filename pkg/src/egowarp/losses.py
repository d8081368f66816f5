"""Self-supervised photometric loss stack and its analytic gradients.

Components: masked photometric L1 on an inverse-warped reconstruction,
explainability regularization (cross entropy of the mask against constant 1),
edge-aware first-order depth smoothness, and the weighted total that also
accepts a backward-forward pose consistency term computed elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .camera import CameraIntrinsics
from .exceptions import DegenerateInputError
from .se3 import SE3Transform
from .warp import DepthMap, ImageBuffer, ValidityMask, inverse_warp, warp_jacobians

# Explainability masks are clamped here before the log; keeps the
# regularizer finite when a mask collapses toward zero.
MASK_FLOOR = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total loss. Defaults follow the reference training setup."""

    lambda_smo: float = 0.1
    lambda_reg: float = 0.1
    lambda_bf: float = 0.1

    def __post_init__(self) -> None:
        vals = (self.lambda_smo, self.lambda_reg, self.lambda_bf)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("loss weights must be finite")
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True, eq=False)
class WeightMask:
    """Continuous per-pixel weight in [0, 1], shape (h, w)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"weight mask must be (h, w), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("weight mask must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("weight mask values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @classmethod
    def ones(cls, height: int, width: int) -> "WeightMask":
        return cls(np.ones((height, width)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


class LossGradients(NamedTuple):
    """Analytic gradients of the single-pair total (photo + smo + reg)."""

    d_depth: np.ndarray  # (h, w)
    d_pose: np.ndarray  # (6,)
    d_mask: np.ndarray  # (h, w)


def _check_same_size(a, b, name_a: str, name_b: str) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"{name_a} {a.height}x{a.width} and {name_b} {b.height}x{b.width} differ"
        )


def photometric_l1(
    target: ImageBuffer, recon: ImageBuffer, mask: WeightMask, valid: ValidityMask
) -> float:
    """Masked mean absolute reconstruction error.

    (1 / |V|) * sum_p mask(p) * valid(p) * sum_c |target - recon|, where
    |V| is the number of valid pixels (not the mask weight sum).

    Raises:
        DegenerateInputError: no valid pixels.
    """
    _check_same_size(target, recon, "target", "recon")
    _check_same_size(target, mask, "target", "mask")
    if target.channels != recon.channels:
        raise ValueError("target and recon channel counts differ")
    if valid.data.shape != (target.height, target.width):
        raise ValueError("validity mask size differs from target")
    n_valid = valid.count
    if n_valid == 0:
        raise DegenerateInputError("photometric loss undefined: no valid pixels")
    per_pixel = np.sum(np.abs(target.data - recon.data), axis=2)
    return float(np.sum(per_pixel * mask.data * valid.data) / n_valid)


def explainability_reg(mask: WeightMask) -> float:
    """Mean cross entropy of the mask against the constant-1 label.

    (1 / N) * sum_p -log(mask(p)); mask values are clamped to >= 1e-7 so the
    regularizer diverges no further once a mask pixel collapses.
    """
    clamped = np.maximum(mask.data, MASK_FLOOR)
    return float(np.mean(-np.log(clamped)))


def _forward_diff_weights(image: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    """exp(-|grad I|) weights, image gradient magnitude averaged over channels."""
    img = image.data
    gx = np.mean(np.abs(img[:, 1:, :] - img[:, :-1, :]), axis=2)
    gy = np.mean(np.abs(img[1:, :, :] - img[:-1, :, :]), axis=2)
    return np.exp(-gx), np.exp(-gy)


def smoothness(depth: DepthMap, image: ImageBuffer) -> float:
    """Edge-aware first-order depth smoothness.

    Forward differences; each axis contributes the mean of
    |dD| * exp(-|dI|) over its defined entries (x: h*(w-1), y: (h-1)*w).
    The last column (x) / last row (y) has no forward difference and is
    excluded. An axis without defined entries contributes 0.
    """
    _check_same_size(depth, image, "depth", "image")
    wx, wy = _forward_diff_weights(image)
    d = depth.data
    total = 0.0
    if d.shape[1] > 1:
        total += float(np.mean(np.abs(d[:, 1:] - d[:, :-1]) * wx))
    if d.shape[0] > 1:
        total += float(np.mean(np.abs(d[1:, :] - d[:-1, :]) * wy))
    return total


def multiscale_smoothness(
    depths: list[DepthMap], images: list[ImageBuffer]
) -> float:
    """Unweighted sum of smoothness across scales (canonically 4)."""
    if len(depths) != len(images):
        raise ValueError(
            f"got {len(depths)} depth scales but {len(images)} image scales"
        )
    if len(depths) == 0:
        raise ValueError("multiscale smoothness needs at least one scale")
    return float(sum(smoothness(d, i) for d, i in zip(depths, images)))


def total_loss(
    photo: float, smo: float, reg: float, bf: float, weights: LossWeights
) -> float:
    """photo + lambda_smo * smo + lambda_reg * reg + lambda_bf * bf."""
    parts = (photo, smo, reg, bf)
    if not all(np.isfinite(p) for p in parts):
        raise ValueError(f"loss components must be finite, got {parts}")
    return float(
        photo
        + weights.lambda_smo * smo
        + weights.lambda_reg * reg
        + weights.lambda_bf * bf
    )


def _smoothness_grad_depth(depth: DepthMap, image: ImageBuffer) -> np.ndarray:
    """d(smoothness)/d(depth), scatter of the per-difference subgradients."""
    wx, wy = _forward_diff_weights(image)
    d = depth.data
    grad = np.zeros_like(d)
    h, w = d.shape
    if w > 1:
        n_x = h * (w - 1)
        sx = np.sign(d[:, 1:] - d[:, :-1]) * wx / n_x
        grad[:, 1:] += sx
        grad[:, :-1] -= sx
    if h > 1:
        n_y = (h - 1) * w
        sy = np.sign(d[1:, :] - d[:-1, :]) * wy / n_y
        grad[1:, :] += sy
        grad[:-1, :] -= sy
    return grad


def loss_gradients(
    target: ImageBuffer,
    source: ImageBuffer,
    depth: DepthMap,
    pose: SE3Transform,
    k: CameraIntrinsics,
    mask: WeightMask,
    weights: LossWeights,
) -> LossGradients:
    """Gradients of photo + lambda_smo*smo + lambda_reg*reg for one pair.

    The bf term has no gradient w.r.t. a single pose and is handled by the
    pose aligner's pair mode. Validity is treated as locally constant: the
    subgradients are one-sided at L1 kinks, bilinear grid lines, and
    visibility flips, and checks exclude those sets.

    Returns:
        LossGradients(d_depth (h, w), d_pose (6,), d_mask (h, w)); the pose
        entries follow the left-perturbation rotation convention.
    """
    _check_same_size(target, source, "target", "source")
    _check_same_size(target, depth, "target", "depth")
    _check_same_size(target, mask, "target", "mask")
    recon, valid = inverse_warp(source, depth, pose, k)
    n_valid = valid.count
    if n_valid == 0:
        raise DegenerateInputError("loss gradients undefined: no valid pixels")
    d_recon_depth, d_recon_pose = warp_jacobians(source, depth, pose, k)

    diff = target.data - recon.data
    sgn = np.sign(diff)
    pix_weight = mask.data * valid.data / n_valid  # (h, w)

    # d|t - r|/d(r) = -sign(t - r), chained through the reconstruction.
    d_photo_depth = -np.einsum("hwc,hwc->hw", sgn, d_recon_depth) * pix_weight
    d_photo_pose = -np.einsum(
        "hwc,hwcp,hw->p", sgn, d_recon_pose, pix_weight
    )
    d_photo_mask = np.sum(np.abs(diff), axis=2) * valid.data / n_valid

    d_depth = d_photo_depth + weights.lambda_smo * _smoothness_grad_depth(
        depth, target
    )

    n_pix = mask.data.size
    d_reg_mask = np.where(
        mask.data > MASK_FLOOR, -1.0 / (n_pix * np.maximum(mask.data, MASK_FLOOR)), 0.0
    )
    d_mask = d_photo_mask + weights.lambda_reg * d_reg_mask
    return LossGradients(d_depth, d_photo_pose, d_mask)
