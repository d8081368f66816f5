"""Additive attention gate over skip-connection features.

Per position i: q_i = psi^T relu(W_x^T x_i + W_g^T g_i + b_xg) + b_psi,
alpha_i = sigmoid(q_i), gated_i = alpha_i * x_i. The backward pass includes
the alpha path through x (product rule), which is what distinguishes a gate
from a fixed mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import WeightMask
from .pyramid import upsample2x


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense feature grid, shape (h, w, f), finite values."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"feature map must be (h, w, f), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def features(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """Per-position gate activations in [0, 1], shape (h, w)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"attention map must be (h, w), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("attention values must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("attention values must lie in [0, 1]")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True, eq=False)
class AttentionGateParams:
    """Gate parameters.

    Shapes: w_x (f_x, f_int), w_g (f_g, f_int), psi (f_int,), b_xg (f_int,),
    b_psi scalar.
    """

    w_x: np.ndarray
    w_g: np.ndarray
    psi: np.ndarray
    b_xg: np.ndarray
    b_psi: float

    def __post_init__(self) -> None:
        w_x = np.asarray(self.w_x, dtype=float)
        w_g = np.asarray(self.w_g, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        b_xg = np.asarray(self.b_xg, dtype=float)
        if w_x.ndim != 2 or w_g.ndim != 2:
            raise ValueError("w_x and w_g must be 2-d")
        f_int = w_x.shape[1]
        if w_g.shape[1] != f_int or psi.shape != (f_int,) or b_xg.shape != (f_int,):
            raise ValueError("inner dimensions of gate parameters disagree")
        for name, arr in (("w_x", w_x), ("w_g", w_g), ("psi", psi), ("b_xg", b_xg)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if not np.isfinite(self.b_psi):
            raise ValueError("b_psi must be finite")
        object.__setattr__(self, "w_x", w_x)
        object.__setattr__(self, "w_g", w_g)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "b_xg", b_xg)
        object.__setattr__(self, "b_psi", float(self.b_psi))

    @classmethod
    def zeros(cls, f_x: int, f_g: int, f_int: int) -> "AttentionGateParams":
        return cls(
            np.zeros((f_x, f_int)),
            np.zeros((f_g, f_int)),
            np.zeros(f_int),
            np.zeros(f_int),
            0.0,
        )


def _check_gate_inputs(
    x: FeatureMap, g: FeatureMap, params: AttentionGateParams
) -> None:
    if (x.height, x.width) != (g.height, g.width):
        raise ValueError(
            f"x {x.height}x{x.width} and g {g.height}x{g.width} sizes differ; "
            "resample_gating first"
        )
    if x.features != params.w_x.shape[0]:
        raise ValueError("x feature count does not match w_x")
    if g.features != params.w_g.shape[0]:
        raise ValueError("g feature count does not match w_g")


def _preactivation(
    x: FeatureMap, g: FeatureMap, params: AttentionGateParams
) -> np.ndarray:
    return x.data @ params.w_x + g.data @ params.w_g + params.b_xg


def ag_forward(
    x: FeatureMap, g: FeatureMap, params: AttentionGateParams
) -> tuple[AttentionMap, FeatureMap]:
    """Gate x by the attention computed from (x, g).

    Returns:
        (alpha, gated): the attention map and alpha * x. All-zero parameters
        give q = 0 everywhere, hence alpha = 0.5 exactly.
    """
    _check_gate_inputs(x, g, params)
    hidden = np.maximum(_preactivation(x, g, params), 0.0)
    q = hidden @ params.psi + params.b_psi
    alpha = 1.0 / (1.0 + np.exp(-q))
    return AttentionMap(alpha), FeatureMap(alpha[:, :, None] * x.data)


def ag_backward(
    x: FeatureMap,
    g: FeatureMap,
    params: AttentionGateParams,
    upstream: FeatureMap,
) -> tuple[AttentionGateParams, FeatureMap, FeatureMap]:
    """Gradients of L = sum_i <upstream_i, gated_i> w.r.t. params, x, and g.

    The x gradient carries both the direct term alpha * upstream and the
    attention term through the preactivation. The ReLU subgradient at 0 is 0,
    so positions in the dead zone propagate nothing into w_x, w_g, b_xg, or
    psi's input, while b_psi still receives signal through the sigmoid.

    Returns:
        (d_params, d_x, d_g) shaped like their primals.
    """
    _check_gate_inputs(x, g, params)
    if (upstream.height, upstream.width, upstream.features) != (
        x.height,
        x.width,
        x.features,
    ):
        raise ValueError("upstream gradient must be shaped like x")
    pre = _preactivation(x, g, params)
    hidden = np.maximum(pre, 0.0)
    q = hidden @ params.psi + params.b_psi
    alpha = 1.0 / (1.0 + np.exp(-q))

    s = np.sum(upstream.data * x.data, axis=2)  # dL/d(alpha)
    c = s * alpha * (1.0 - alpha)  # dL/d(q)
    d_pre = c[:, :, None] * params.psi * (pre > 0.0)

    d_params = AttentionGateParams(
        w_x=np.einsum("hwl,hwi->li", x.data, d_pre),
        w_g=np.einsum("hwg,hwi->gi", g.data, d_pre),
        psi=np.einsum("hw,hwi->i", c, hidden),
        b_xg=np.sum(d_pre, axis=(0, 1)),
        b_psi=float(np.sum(c)),
    )
    d_x = alpha[:, :, None] * upstream.data + d_pre @ params.w_x.T
    d_g = d_pre @ params.w_g.T
    return d_params, FeatureMap(d_x), FeatureMap(d_g)


def resample_gating(g: FeatureMap, out_height: int, out_width: int) -> FeatureMap:
    """Bilinear, align-corners resampling of the gating signal to x's grid.

    A 1x1 gating signal broadcasts to a constant map.
    """
    if out_height < 1 or out_width < 1:
        raise ValueError("output size must be positive")
    return FeatureMap(upsample2x(g.data, out_height, out_width))


def alpha_to_loss_mask(
    alpha: AttentionMap, out_height: int, out_width: int
) -> WeightMask:
    """Resample an attention map to image resolution for use as a loss mask.

    Bilinear align-corners interpolation of values in [0, 1] stays in [0, 1];
    the clip only sweeps float dust.
    """
    up = upsample2x(alpha.data, out_height, out_width)
    return WeightMask(np.clip(up, 0.0, 1.0))
