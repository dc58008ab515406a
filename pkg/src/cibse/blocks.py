"""Composite network blocks: Conv-BN-SiLU, bottleneck, C2f, CIB, C2fCIB, SE
attention, SPPF, and the anchor-free decoupled detect head.

Blocks are frozen value objects; the forward functions are pure, so one set of
weights can serve any number of concurrent forward calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor_ops import (
    BnParams,
    ConvParams,
    Tensor,
    check_tensor,
    concat_channels,
    conv2d,
    fold_batchnorm,
    global_avg_pool,
    maxpool2d,
    silu,
)


@dataclass(frozen=True)
class ConvBlock:
    """Convolution + batch norm (+ SiLU unless act is False)."""

    conv: ConvParams
    bn: BnParams
    act: bool = True

    def __post_init__(self):
        if self.bn.channels != self.conv.c_out:
            raise ShapeError(
                f"ConvBlock: bn channels {self.bn.channels} != conv c_out {self.conv.c_out}"
            )


def conv_block_forward(x: Tensor, b: ConvBlock) -> Tensor:
    # bn folded into the conv: the inference path carries the bias it produces
    y = conv2d(x, fold_batchnorm(b.conv, b.bn))
    return silu(y) if b.act else y


@dataclass(frozen=True)
class SEBlock:
    """Squeeze-and-excitation channel attention.

    fc1: (c/r, c) reduces the pooled descriptor, fc2: (c, c/r) expands it back;
    the sigmoid of the result rescales every channel. Biases are optional and
    absent in the built model variants.
    """

    channels: int
    reduction: int
    fc1: np.ndarray
    fc2: np.ndarray
    fc1_bias: np.ndarray | None = None
    fc2_bias: np.ndarray | None = None

    def __post_init__(self):
        c, r = self.channels, self.reduction
        if c % r != 0:
            raise ShapeError(f"SEBlock: channels {c} not divisible by reduction {r}")
        if self.fc1.shape != (c // r, c):
            raise ShapeError(f"SEBlock: fc1 shape {self.fc1.shape} != ({c // r}, {c})")
        if self.fc2.shape != (c, c // r):
            raise ShapeError(f"SEBlock: fc2 shape {self.fc2.shape} != ({c}, {c // r})")


def se_forward(x: Tensor, se: SEBlock) -> Tensor:
    """x rescaled per channel by s = sigmoid(fc2(relu(fc1(gap(x))))).

    Every component of s lies strictly in (0, 1) for finite inputs, so
    |out| <= |x| elementwise and the shape never changes.
    """
    check_tensor(x, "se input")
    if x.shape[1] != se.channels:
        raise ShapeError(f"se_forward: input has {x.shape[1]} channels, block has {se.channels}")
    d = global_avg_pool(x)[:, :, 0, 0].astype(np.float64)  # (n, c)
    h = d @ se.fc1.astype(np.float64).T
    if se.fc1_bias is not None:
        h = h + se.fc1_bias.astype(np.float64)
    h = np.maximum(h, 0.0)
    z = h @ se.fc2.astype(np.float64).T
    if se.fc2_bias is not None:
        z = z + se.fc2_bias.astype(np.float64)
    s = 1.0 / (1.0 + np.exp(-z))
    out = x.astype(np.float64) * s[:, :, None, None]
    return np.ascontiguousarray(out, dtype=np.float32)


@dataclass(frozen=True)
class Bottleneck:
    """Two 3x3 conv blocks; adds the input when shortcut is set."""

    cv1: ConvBlock
    cv2: ConvBlock
    add: bool


def bottleneck_forward(x: Tensor, b: Bottleneck) -> Tensor:
    y = conv_block_forward(conv_block_forward(x, b.cv1), b.cv2)
    return np.ascontiguousarray(x + y) if b.add else y


@dataclass(frozen=True)
class C2fBlock:
    """Split features in half, chain bottlenecks on one half, concat everything, fuse 1x1."""

    cv1: ConvBlock  # c_in -> 2 * c_hidden, 1x1
    cv2: ConvBlock  # (2 + n) * c_hidden -> c_out, 1x1
    inner: tuple[Bottleneck, ...]


@dataclass(frozen=True)
class CIBBlock:
    """Compact inverted block: dw3x3, pw expand, dw3x3, pw project, dw3x3.

    residual is on iff c_in == c_out and a shortcut was requested.
    """

    cv: tuple[ConvBlock, ConvBlock, ConvBlock, ConvBlock, ConvBlock]
    residual: bool


def cib_forward(x: Tensor, b: CIBBlock) -> Tensor:
    y = x
    for stage in b.cv:
        y = conv_block_forward(y, stage)
    return np.ascontiguousarray(x + y) if b.residual else y


@dataclass(frozen=True)
class C2fCIBBlock:
    """C2f skeleton with the inner bottlenecks replaced by compact inverted blocks."""

    cv1: ConvBlock
    cv2: ConvBlock
    inner: tuple[CIBBlock, ...]


def _c2f_like_forward(x, cv1, cv2, inner, inner_forward):
    y = conv_block_forward(x, cv1)
    half = y.shape[1] // 2
    ys = [np.ascontiguousarray(y[:, :half]), np.ascontiguousarray(y[:, half:])]
    for m in inner:
        ys.append(inner_forward(ys[-1], m))
    return conv_block_forward(concat_channels(ys), cv2)


def c2f_forward(x: Tensor, b: C2fBlock) -> Tensor:
    return _c2f_like_forward(x, b.cv1, b.cv2, b.inner, bottleneck_forward)


def c2fcib_forward(x: Tensor, b: C2fCIBBlock) -> Tensor:
    return _c2f_like_forward(x, b.cv1, b.cv2, b.inner, cib_forward)


@dataclass(frozen=True)
class SPPFBlock:
    """Chained 5x5 max-pool pyramid over a 1x1-reduced map, fused by a 1x1 conv."""

    cv1: ConvBlock  # c -> c/2, 1x1
    cv2: ConvBlock  # 2c -> c_out, 1x1 over the 4-way concat


def sppf_forward(x: Tensor, b: SPPFBlock) -> Tensor:
    y = conv_block_forward(x, b.cv1)
    p1 = maxpool2d(y, 5, 1, 2)
    p2 = maxpool2d(p1, 5, 1, 2)
    p3 = maxpool2d(p2, 5, 1, 2)
    return conv_block_forward(concat_channels([y, p1, p2, p3]), b.cv2)


def head_hidden_channels(ch_p3: int, reg_max: int, nc: int) -> tuple[int, int]:
    """Hidden widths of the detect branches (box, cls) for a given P3 width."""
    c_box = max(16, ch_p3 // 4, 4 * reg_max)
    c_cls = max(ch_p3, min(nc, 100))
    return c_box, c_cls


@dataclass(frozen=True)
class DetectBranch:
    """Two 3x3 conv blocks followed by a plain 1x1 conv (bias, no BN)."""

    cv1: ConvBlock
    cv2: ConvBlock
    out: ConvParams


@dataclass(frozen=True)
class DetectHead:
    """Anchor-free decoupled head over three scales (strides 8/16/32).

    Raw output per scale has 4*reg_max box channels first, then nc class
    channels; no activation is applied here.
    """

    nc: int
    reg_max: int
    strides: tuple[int, int, int]
    box: tuple[DetectBranch, DetectBranch, DetectBranch]
    cls: tuple[DetectBranch, DetectBranch, DetectBranch]
    dfl_bins: np.ndarray  # (reg_max,) fixed projection values, not applied in forward


def _branch_forward(x: Tensor, br: DetectBranch) -> Tensor:
    y = conv_block_forward(conv_block_forward(x, br.cv1), br.cv2)
    return conv2d(y, br.out)


def detect_forward(features: list[Tensor], head: DetectHead) -> tuple[Tensor, Tensor, Tensor]:
    if len(features) != 3:
        raise ShapeError(f"detect_forward: expected 3 feature maps, got {len(features)}")
    outs = []
    for i, f in enumerate(features):
        want = head.box[i].cv1.conv.c_in
        if f.shape[1] != want:
            raise ShapeError(
                f"detect_forward: scale {i} has {f.shape[1]} channels, head expects {want}"
            )
        outs.append(concat_channels([_branch_forward(f, head.box[i]), _branch_forward(f, head.cls[i])]))
    return tuple(outs)
