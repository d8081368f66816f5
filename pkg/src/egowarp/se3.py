"""Rigid-body transforms on SO(3)/SE(3) and the backward-forward pose loss.

Conventions:
  - Rotations are 3x3 row-major matrices acting on column vectors (X' = R @ X).
  - Rotation vectors are axis-angle: direction = axis, norm = angle in radians.
  - SE(3) transforms act as X' = R @ X + t and compose left-to-right as
    matrices: compose(a, b) applies b first, then a.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AmbiguousLogError

# Below this angle Rodrigues coefficients switch to 2nd-order Taylor series.
SMALL_ANGLE = 1e-8
# log is refused within this distance of pi, where the axis sign is ambiguous.
PI_MARGIN = 1e-6

_ORTHO_TOL = 1e-9


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix W with W @ x = v x x (cross product)."""
    v = np.asarray(v, dtype=float)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _check_vec3(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True, eq=False)
class Rotation:
    """Orthonormal 3x3 matrix with determinant +1.

    Attributes:
        m: the matrix. Orthonormality and det are checked to 1e-9 on
            construction; exp_so3 output is exact to machine precision.
    """

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation matrix must be finite")
        if np.max(np.abs(m.T @ m - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation matrix determinant is not +1 within 1e-9")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))


@dataclass(frozen=True, eq=False)
class SE3Transform:
    """Rigid transform X' = r.m @ X + t."""

    r: Rotation
    t: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", _check_vec3(self.t, "translation"))

    @classmethod
    def identity(cls) -> "SE3Transform":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "SE3Transform":
        return cls(Rotation.identity(), np.asarray(t, dtype=float))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SE3Transform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"homogeneous transform must be 4x4, got {m.shape}")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 0:
            raise ValueError("bottom row must be [0, 0, 0, 1]")
        return cls(Rotation(m[:3, :3]), m[:3, 3])

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.r.m
        m[:3, 3] = self.t
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        points = np.asarray(points, dtype=float)
        return points @ self.r.m.T + self.t

    def to_pose(self) -> "Pose6DoF":
        return Pose6DoF(log_so3(self.r), self.t.copy())


@dataclass(frozen=True, eq=False)
class Pose6DoF:
    """Minimal 6-parameter pose: axis-angle rotation vector + translation.

    The rotation-vector norm must be < pi so the parameterization stays
    single-valued (and continuous near the identity, where pose networks and
    the aligner operate).
    """

    rot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        rot = _check_vec3(self.rot, "rotation vector")
        trans = _check_vec3(self.trans, "translation")
        if np.linalg.norm(rot) >= np.pi:
            raise ValueError("rotation-vector norm must be < pi")
        object.__setattr__(self, "rot", rot)
        object.__setattr__(self, "trans", trans)

    def to_transform(self) -> SE3Transform:
        return SE3Transform(exp_so3(self.rot), self.trans.copy())


def exp_so3(rot: np.ndarray) -> Rotation:
    """Rodrigues exponential map from a rotation vector.

    R = I + A*W + B*W^2 with W = hat(rot), A = sin(th)/th, B = (1-cos(th))/th^2.
    For th < 1e-8 the coefficients use their 2nd-order Taylor expansions,
    which agree with the closed form to ~th^4 (continuous at the threshold).

    Args:
        rot: (3,) axis-angle vector.

    Returns:
        Rotation with angle norm(rot) about rot/norm(rot).
    """
    rot = _check_vec3(rot, "rotation vector")
    theta = np.linalg.norm(rot)
    w = hat(rot)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return Rotation(np.eye(3) + a * w + b * (w @ w))


def log_so3(r: Rotation) -> np.ndarray:
    """Inverse of exp_so3.

    Args:
        r: rotation with angle < pi - 1e-6.

    Returns:
        (3,) rotation vector with norm in [0, pi).

    Raises:
        AmbiguousLogError: angle within 1e-6 of pi (axis sign undetermined).
    """
    m = r.m
    cos_theta = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta >= np.pi - PI_MARGIN:
        raise AmbiguousLogError(
            f"rotation angle {theta:.9f} is within 1e-6 of pi; log is ambiguous"
        )
    # vee(R - R^T) = 2 sin(theta) * axis
    vee = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if theta < SMALL_ANGLE:
        # theta/sin(theta) -> 1 + theta^2/6
        return vee * (1.0 + theta * theta / 6.0)
    return vee * (theta / np.sin(theta))


def compose(a: SE3Transform, b: SE3Transform) -> SE3Transform:
    """a compose b: the transform that applies b first, then a."""
    return SE3Transform(Rotation(a.r.m @ b.r.m), a.r.m @ b.t + a.t)


def inverse(a: SE3Transform) -> SE3Transform:
    """Transform undoing a: R^T, -R^T t."""
    rt = a.r.m.T
    return SE3Transform(Rotation(rt), -(rt @ a.t))


def bf_consistency_loss(pairs: list[tuple[SE3Transform, SE3Transform]]) -> float:
    """Backward-forward pose consistency penalty.

    Each pair holds the forward transform (target -> source) and the backward
    transform (source -> target) estimated independently; their composition
    should be the identity. The penalty is the sum over pairs of the
    elementwise L1 norm of (backward o forward - I4).

    Args:
        pairs: non-empty list of (forward, backward) transforms.

    Returns:
        Non-negative scalar, zero iff every backward is the exact inverse.
    """
    if len(pairs) == 0:
        raise ValueError("bf_consistency_loss needs at least one pose pair")
    total = 0.0
    for forward, backward in pairs:
        m = backward.matrix() @ forward.matrix()
        total += float(np.sum(np.abs(m - np.eye(4))))
    return total


def bf_consistency_grad(
    pairs: list[tuple[SE3Transform, SE3Transform]],
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Subgradients of bf_consistency_loss w.r.t. each pose's 6 parameters.

    Parameterization matches the reprojection Jacobian: columns 0..2 perturb
    the rotation left-multiplicatively (exp(d^) @ R), columns 3..5 are
    additive translation. At entries where (backward o forward - I) is exactly
    zero the subgradient 0 is used.

    Returns:
        One (d_forward, d_backward) pair of (6,) arrays per input pair.
    """
    if len(pairs) == 0:
        raise ValueError("bf_consistency_grad needs at least one pose pair")
    grads = []
    basis = np.eye(3)
    for forward, backward in pairs:
        f = forward.matrix()
        b = backward.matrix()
        s = np.sign(b @ f - np.eye(4))
        d_f = np.zeros(6)
        d_b = np.zeros(6)
        for k in range(3):
            g = hat(basis[k])
            # d(B @ F)/d(delta_f,k): rotation block and its action on t_f are
            # both captured by perturbing the 3x3 block of F; t column fixed.
            df = np.zeros((4, 4))
            df[:3, :3] = g @ forward.r.m
            d_f[k] = np.sum(s * (b @ df))
            db = np.zeros((4, 4))
            db[:3, :3] = g @ backward.r.m
            d_b[k] = np.sum(s * (db @ f))
        for k in range(3):
            df = np.zeros((4, 4))
            df[:3, 3] = basis[k]
            d_f[3 + k] = np.sum(s * (b @ df))
            db = np.zeros((4, 4))
            db[:3, 3] = basis[k]
            d_b[3 + k] = np.sum(s * (db @ f))
        grads.append((d_f, d_b))
    return grads
