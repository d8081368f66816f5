"""Differentiable rigid-warping toolkit for view synthesis supervision.

Numpy implementations, with analytic gradients throughout, of the geometry
underlying self-supervised depth and ego-motion training: SE(3) pose algebra,
pinhole reprojection, bilinear inverse warping, the photometric /
explainability / smoothness loss stack, additive attention gating, depth and
trajectory metrics, a synthetic plane-scene oracle, and a coarse-to-fine
photometric pose aligner.
"""

from .align import (
    AlignOptions,
    AlignPairReport,
    AlignReport,
    align_pose,
    align_pose_pair,
    perturb_pose,
    retract_pose,
)
from .attention import (
    AttentionGateParams,
    AttentionMap,
    FeatureMap,
    ag_backward,
    ag_forward,
    alpha_to_loss_mask,
    resample_gating,
)
from .camera import (
    CameraIntrinsics,
    Pixel,
    backproject,
    project,
    reproject,
    reproject_grid,
    reproject_jacobian,
    reproject_jacobian_grid,
)
from .exceptions import (
    AmbiguousLogError,
    AssociationError,
    BehindCameraError,
    DegenerateInputError,
    DegenerateSnippetError,
)
from .fileio import (
    read_depth,
    read_image,
    read_intrinsics,
    read_pfm,
    read_pose,
    read_report,
    read_timestamps,
    read_trajectory,
    write_depth,
    write_image,
    write_intrinsics,
    write_pfm,
    write_pose,
    write_report,
    write_timestamps,
    write_trajectory,
)
from .gradcheck import COMPONENTS, GradCheckReport, grad_check
from .losses import (
    LossGradients,
    LossWeights,
    WeightMask,
    explainability_reg,
    loss_gradients,
    multiscale_smoothness,
    photometric_l1,
    smoothness,
    total_loss,
)
from .metrics import (
    AteResult,
    DepthMetrics,
    Trajectory,
    ate_snippet,
    depth_metrics,
    median_scale_align,
)
from .pyramid import (
    depth_pyramid,
    downsample2x,
    downscale_intrinsics,
    image_pyramid,
    intrinsics_pyramid,
    upsample2x,
)
from .se3 import (
    Pose6DoF,
    Rotation,
    SE3Transform,
    bf_consistency_grad,
    bf_consistency_loss,
    compose,
    exp_so3,
    hat,
    inverse,
    log_so3,
)
from .synthetic import (
    PlaneSpec,
    RenderedPair,
    SceneSpec,
    default_intrinsics,
    make_scene,
    psnr,
    render_pair,
    render_view,
)
from .warp import (
    DepthMap,
    ImageBuffer,
    ValidityMask,
    bilinear_sample,
    bilinear_sample_grad,
    inverse_warp,
    pixel_grid,
    warp_jacobians,
)

__version__ = "0.1.0"

__all__ = [
    "ag_backward",
    "ag_forward",
    "align_pose",
    "align_pose_pair",
    "AlignOptions",
    "AlignPairReport",
    "AlignReport",
    "alpha_to_loss_mask",
    "AmbiguousLogError",
    "AssociationError",
    "ate_snippet",
    "AteResult",
    "AttentionGateParams",
    "AttentionMap",
    "backproject",
    "BehindCameraError",
    "bf_consistency_grad",
    "bf_consistency_loss",
    "bilinear_sample",
    "bilinear_sample_grad",
    "CameraIntrinsics",
    "COMPONENTS",
    "compose",
    "default_intrinsics",
    "DegenerateInputError",
    "DegenerateSnippetError",
    "depth_metrics",
    "depth_pyramid",
    "DepthMap",
    "DepthMetrics",
    "downsample2x",
    "downscale_intrinsics",
    "exp_so3",
    "explainability_reg",
    "FeatureMap",
    "grad_check",
    "GradCheckReport",
    "hat",
    "image_pyramid",
    "ImageBuffer",
    "intrinsics_pyramid",
    "inverse",
    "inverse_warp",
    "log_so3",
    "loss_gradients",
    "LossGradients",
    "LossWeights",
    "make_scene",
    "median_scale_align",
    "multiscale_smoothness",
    "perturb_pose",
    "photometric_l1",
    "Pixel",
    "pixel_grid",
    "PlaneSpec",
    "Pose6DoF",
    "project",
    "psnr",
    "read_depth",
    "read_image",
    "read_intrinsics",
    "read_pfm",
    "read_pose",
    "read_report",
    "read_timestamps",
    "read_trajectory",
    "render_pair",
    "render_view",
    "RenderedPair",
    "reproject",
    "reproject_grid",
    "reproject_jacobian",
    "reproject_jacobian_grid",
    "resample_gating",
    "retract_pose",
    "Rotation",
    "SceneSpec",
    "SE3Transform",
    "smoothness",
    "total_loss",
    "Trajectory",
    "upsample2x",
    "ValidityMask",
    "warp_jacobians",
    "WeightMask",
    "write_depth",
    "write_image",
    "write_intrinsics",
    "write_pfm",
    "write_pose",
    "write_report",
    "write_timestamps",
    "write_trajectory",
]
