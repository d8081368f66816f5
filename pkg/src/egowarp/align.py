"""Desk-scale direct pose (and depth) alignment by gradient descent.

Minimizes the single-pair total loss (photometric + weighted smoothness,
mask fixed at 1) over the 6 pose parameters, optionally alternating with
projected depth steps, coarse-to-fine over an area-averaged pyramid. Steps
use Armijo backtracking (factor 0.5, c = 1e-4), so accepted steps never
increase the loss. A pair variant optimizes forward and backward poses
jointly with the backward-forward consistency term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics
from .exceptions import DegenerateInputError
from .losses import (
    LossWeights,
    WeightMask,
    explainability_reg,
    loss_gradients,
    photometric_l1,
    smoothness,
    total_loss,
)
from .pyramid import depth_pyramid, image_pyramid, intrinsics_pyramid, upsample2x
from .se3 import (
    Pose6DoF,
    Rotation,
    SE3Transform,
    bf_consistency_grad,
    bf_consistency_loss,
    exp_so3,
    log_so3,
)
from .warp import DepthMap, ImageBuffer, inverse_warp

ARMIJO_C = 1e-4
ARMIJO_FACTOR = 0.5
_MAX_BACKTRACKS = 60
# Depth estimates are kept above this during projected steps.
DEPTH_FLOOR = 1e-3

MODES = ("pose_only", "pose_and_depth")


@dataclass(frozen=True)
class AlignOptions:
    """Optimizer settings.

    max_iters applies per pyramid level. step is the initial Armijo step for
    pose parameters; depth steps reuse it on the pixel-count-scaled gradient.
    """

    mode: str = "pose_only"
    max_iters: int = 100
    step: float = 0.1
    tol_grad: float = 1e-9
    tol_step: float = 1e-12
    pyramid_levels: int = 3
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step <= 0 or self.tol_grad < 0 or self.tol_step < 0:
            raise ValueError("step must be > 0 and tolerances >= 0")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")


@dataclass(frozen=True, eq=False)
class AlignReport:
    """Outcome of align_pose.

    converged is True iff the finest level stopped because no parameter
    moved more than tol_step (gradient below tol_grad or line search
    exhausted at an L1 kink bottom); hitting max_iters reports False.
    loss_history holds the finest level's total loss: the initial value, then
    one entry per accepted step (non-increasing by construction).
    """

    converged: bool
    iters: int
    final_loss: float
    pose: Pose6DoF
    loss_history: tuple[float, ...]
    depth: DepthMap | None = None


@dataclass(frozen=True, eq=False)
class AlignPairReport:
    """Outcome of align_pose_pair (joint forward/backward optimization)."""

    converged: bool
    iters: int
    final_loss: float
    pose_forward: Pose6DoF
    pose_backward: Pose6DoF
    bf_term: float
    loss_history: tuple[float, ...]


def retract_pose(pose: SE3Transform, delta: np.ndarray) -> SE3Transform:
    """Apply a 6-vector step: left-multiplicative rotation, additive translation."""
    return SE3Transform(
        Rotation(exp_so3(delta[:3]).m @ pose.r.m), pose.t + delta[3:]
    )


def perturb_pose(
    pose: Pose6DoF, rot_deg: float, trans_frac: float, seed: int
) -> Pose6DoF:
    """Perturb by rot_deg about a random axis and trans_frac of ||t|| along
    a random direction (absolute units if the translation is zero)."""
    rng = np.random.default_rng(seed)

    def unit() -> np.ndarray:
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)

    t = pose.to_transform()
    rotated = retract_pose(t, np.concatenate([np.deg2rad(rot_deg) * unit(), np.zeros(3)]))
    scale = np.linalg.norm(pose.trans)
    offset = trans_frac * (scale if scale > 0 else 1.0) * unit()
    return Pose6DoF(log_so3(rotated.r), rotated.t + offset)


def _pair_total(
    target: ImageBuffer,
    source: ImageBuffer,
    depth: DepthMap,
    pose: SE3Transform,
    k: CameraIntrinsics,
    weights: LossWeights,
) -> float:
    """Single-pair total with an all-ones mask; +inf when nothing is valid."""
    try:
        recon, valid = inverse_warp(source, depth, pose, k)
        mask = WeightMask.ones(target.height, target.width)
        photo = photometric_l1(target, recon, mask, valid)
    except DegenerateInputError:
        return float("inf")
    return total_loss(
        photo, smoothness(depth, target), explainability_reg(mask), 0.0, weights
    )


def _backtrack(loss_fn, retract, x, loss0, grad, direction, step0, tol_step):
    """One Armijo line search. Returns (x_new, loss_new, step_used) or None."""
    slope = float(np.sum(grad * direction))
    if slope >= 0.0:
        return None
    dir_norm = float(np.linalg.norm(direction))
    step = float(step0)
    for _ in range(_MAX_BACKTRACKS):
        if step * dir_norm < tol_step:
            return None
        cand = retract(x, step * direction)
        cand_loss = loss_fn(cand)
        if np.isfinite(cand_loss) and cand_loss <= loss0 + ARMIJO_C * step * slope:
            return cand, cand_loss, step
        step *= ARMIJO_FACTOR
    return None


def _bb_step(delta: np.ndarray | None, grad: np.ndarray, prev_grad: np.ndarray | None,
             fallback: float) -> float:
    """Barzilai-Borwein trial step for the next steepest-descent iteration.

    s^T s / s^T y adapts the step to the local curvature along the trajectory,
    which plain fixed-step descent needs thousands of iterations to match on
    ill-conditioned pose problems. Armijo backtracking still guards every
    step, so accepted losses remain non-increasing. Falls back to the
    configured step on the first iteration or when curvature is non-convex.
    """
    if delta is None or prev_grad is None:
        return fallback
    y = grad - prev_grad
    denom = float(delta @ y)
    if denom <= 0.0:
        return fallback
    return float(np.clip((delta @ delta) / denom, 1e-12, 1e6))


def align_pose(
    target: ImageBuffer,
    source: ImageBuffer,
    depth: DepthMap,
    k: CameraIntrinsics,
    init: Pose6DoF,
    opts: AlignOptions | None = None,
) -> AlignReport:
    """Recover the target-to-source pose by direct photometric descent.

    Args:
        target: image whose reconstruction error is minimized.
        source: image sampled by the warp.
        depth: target depth; fixed in pose_only mode, refined (projected to
            > 1e-3) in pose_and_depth mode.
        init: starting pose; must be within the photometric basin for the
            report to be meaningful (a far-off init ends in converged=False
            or a visibly large final_loss).

    Returns:
        AlignReport; depth is the refined map in pose_and_depth mode.
    """
    if opts is None:
        opts = AlignOptions()
    levels = opts.pyramid_levels
    imgs_t = image_pyramid(target, levels)
    imgs_s = image_pyramid(source, levels)
    depths = depth_pyramid(depth, levels)
    ks = intrinsics_pyramid(k, levels)
    refine_depth = opts.mode == "pose_and_depth"

    pose = init.to_transform()
    depth_est = depths[-1] if refine_depth else None
    iters = 0
    converged = False
    history: list[float] = []
    loss0 = float("inf")

    for li in range(levels - 1, -1, -1):
        t_l, s_l, k_l = imgs_t[li], imgs_s[li], ks[li]
        d_l = depth_est if refine_depth else depths[li]
        finest = li == 0
        ones = WeightMask.ones(t_l.height, t_l.width)
        loss0 = _pair_total(t_l, s_l, d_l, pose, k_l, opts.weights)
        if finest:
            history.append(loss0)
        if not np.isfinite(loss0):
            break
        pose_delta = pose_prev_g = None
        depth_delta = depth_prev_g = None
        for _ in range(opts.max_iters):
            iters += 1
            moved = False
            grads = loss_gradients(t_l, s_l, d_l, pose, k_l, ones, opts.weights)
            if float(np.linalg.norm(grads.d_pose)) >= opts.tol_grad:
                direction = -grads.d_pose
                step0 = _bb_step(pose_delta, grads.d_pose, pose_prev_g, opts.step)
                res = _backtrack(
                    lambda p: _pair_total(t_l, s_l, d_l, p, k_l, opts.weights),
                    retract_pose,
                    pose,
                    loss0,
                    grads.d_pose,
                    direction,
                    step0,
                    opts.tol_step,
                )
                if res is not None:
                    pose, loss0, used = res
                    pose_delta, pose_prev_g = used * direction, grads.d_pose
                    moved = True
                    if finest:
                        history.append(loss0)
            if refine_depth:
                grads = loss_gradients(t_l, s_l, d_l, pose, k_l, ones, opts.weights)
                g_d = grads.d_depth
                direction = -g_d * g_d.size  # pixel-count preconditioner
                if float(np.linalg.norm(g_d)) >= opts.tol_grad:
                    step0 = _bb_step(
                        depth_delta, g_d.ravel(), depth_prev_g, opts.step
                    )
                    res = _backtrack(
                        lambda dd: _pair_total(
                            t_l, s_l, DepthMap(dd), pose, k_l, opts.weights
                        ),
                        lambda dd, step: np.maximum(dd + step, DEPTH_FLOOR),
                        d_l.data,
                        loss0,
                        g_d,
                        direction,
                        step0,
                        opts.tol_step,
                    )
                    if res is not None:
                        d_l, loss0 = DepthMap(res[0]), res[1]
                        depth_delta = res[2] * direction.ravel()
                        depth_prev_g = g_d.ravel()
                        moved = True
                        if finest:
                            history.append(loss0)
            if not moved:
                if finest:
                    converged = True
                break
        if refine_depth:
            if li > 0:
                target_shape = imgs_t[li - 1].data.shape[:2]
                depth_est = DepthMap(
                    np.maximum(
                        upsample2x(d_l.data, target_shape[0], target_shape[1]),
                        DEPTH_FLOOR,
                    )
                )
            else:
                depth_est = d_l

    return AlignReport(
        converged=converged,
        iters=iters,
        final_loss=loss0,
        pose=Pose6DoF(log_so3(pose.r), pose.t),
        loss_history=tuple(history),
        depth=depth_est if refine_depth else None,
    )


def align_pose_pair(
    target: ImageBuffer,
    source: ImageBuffer,
    depth_target: DepthMap,
    depth_source: DepthMap,
    k: CameraIntrinsics,
    init_forward: Pose6DoF,
    init_backward: Pose6DoF,
    opts: AlignOptions | None = None,
) -> AlignPairReport:
    """Jointly optimize forward and backward poses with the bf penalty.

    Loss: photometric(target | source, forward) + photometric(source |
    target, backward) + lambda_smo * (both smoothness terms) + lambda_bf *
    bf_consistency_loss([(forward, backward)]). Depths stay fixed.
    """
    if opts is None:
        opts = AlignOptions()
    levels = opts.pyramid_levels
    imgs_t = image_pyramid(target, levels)
    imgs_s = image_pyramid(source, levels)
    depths_t = depth_pyramid(depth_target, levels)
    depths_s = depth_pyramid(depth_source, levels)
    ks = intrinsics_pyramid(k, levels)
    w = opts.weights

    def level_loss(li: int, poses: tuple[SE3Transform, SE3Transform]) -> float:
        fwd, bwd = poses
        l_f = _pair_total(imgs_t[li], imgs_s[li], depths_t[li], fwd, ks[li], w)
        l_b = _pair_total(imgs_s[li], imgs_t[li], depths_s[li], bwd, ks[li], w)
        if not (np.isfinite(l_f) and np.isfinite(l_b)):
            return float("inf")
        return l_f + l_b + w.lambda_bf * bf_consistency_loss([(fwd, bwd)])

    def level_grad(li: int, poses: tuple[SE3Transform, SE3Transform]) -> np.ndarray:
        fwd, bwd = poses
        ones_t = WeightMask.ones(imgs_t[li].height, imgs_t[li].width)
        ones_s = WeightMask.ones(imgs_s[li].height, imgs_s[li].width)
        g_f = loss_gradients(imgs_t[li], imgs_s[li], depths_t[li], fwd, ks[li], ones_t, w)
        g_b = loss_gradients(imgs_s[li], imgs_t[li], depths_s[li], bwd, ks[li], ones_s, w)
        bf_f, bf_b = bf_consistency_grad([(fwd, bwd)])[0]
        return np.concatenate(
            [g_f.d_pose + w.lambda_bf * bf_f, g_b.d_pose + w.lambda_bf * bf_b]
        )

    def retract(poses: tuple[SE3Transform, SE3Transform], delta: np.ndarray):
        return (retract_pose(poses[0], delta[:6]), retract_pose(poses[1], delta[6:]))

    poses = (init_forward.to_transform(), init_backward.to_transform())
    iters = 0
    converged = False
    history: list[float] = []
    loss0 = float("inf")

    for li in range(levels - 1, -1, -1):
        finest = li == 0
        loss0 = level_loss(li, poses)
        if finest:
            history.append(loss0)
        if not np.isfinite(loss0):
            break
        delta = prev_g = None
        for _ in range(opts.max_iters):
            iters += 1
            g = level_grad(li, poses)
            if float(np.linalg.norm(g)) < opts.tol_grad:
                if finest:
                    converged = True
                break
            step0 = _bb_step(delta, g, prev_g, opts.step)
            res = _backtrack(
                lambda p: level_loss(li, p), retract, poses, loss0, g, -g,
                step0, opts.tol_step,
            )
            if res is None:
                if finest:
                    converged = True
                break
            poses, loss0, used = res
            delta, prev_g = -used * g, g
            if finest:
                history.append(loss0)

    fwd, bwd = poses
    return AlignPairReport(
        converged=converged,
        iters=iters,
        final_loss=loss0,
        pose_forward=Pose6DoF(log_so3(fwd.r), fwd.t),
        pose_backward=Pose6DoF(log_so3(bwd.r), bwd.t),
        bf_term=bf_consistency_loss([(fwd, bwd)]),
        loss_history=tuple(history),
    )
