"""Dense NCHW float32 tensors and the numeric kernels every block is built from.

A feature map is a plain ``numpy.ndarray`` with shape (n, c, h, w), dtype
float32, C-contiguous. All kernels here are pure functions: they never mutate
their inputs, so sharing tensors across threads is safe. Reductions
(convolution, average pooling) accumulate in float64 and round to float32 on
store, which keeps agreement with the brute-force oracles tight at the
13x13..52x52 map sizes this engine runs at.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray  # alias for readability: (n, c, h, w) float32


def check_tensor(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate that x is a 4-D float32 NCHW array; returns it unchanged."""
    if not isinstance(x, np.ndarray):
        raise ShapeError(f"{name}: expected ndarray, got {type(x).__name__}")
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected 4-D (n, c, h, w), got {x.ndim}-D shape {x.shape}")
    if x.dtype != np.float32:
        raise ShapeError(f"{name}: expected float32, got {x.dtype}")
    return x


def _f32(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass(frozen=True)
class ConvParams:
    """2-D convolution parameters.

    weight: (c_out, c_in // groups, k, k) float32
    bias:   optional (c_out,) float32
    groups = c_in = c_out identifies a depthwise convolution.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        w = self.weight
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv weight must be (c_out, c_in/groups, k, k), got {w.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        if self.groups < 1 or w.shape[0] % self.groups != 0:
            raise ShapeError(f"groups {self.groups} must divide c_out {w.shape[0]}")
        if self.bias is not None and self.bias.shape != (w.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match c_out {w.shape[0]}"
            )

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


@dataclass(frozen=True)
class BnParams:
    """Inference-time batch-norm parameters (per-channel vectors of length c)."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-3

    def __post_init__(self):
        c = self.gamma.shape
        for nm in ("beta", "mean", "var"):
            if getattr(self, nm).shape != c:
                raise ShapeError(f"bn {nm} shape {getattr(self, nm).shape} != gamma shape {c}")
        if self.eps < 0:
            raise ShapeError(f"bn eps must be >= 0, got {self.eps}")
        if np.any(self.var < 0):
            raise ShapeError("bn running_var has negative entries")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def _out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Direct 2-D cross-correlation with zero padding.

    Output shape (n, c_out, (h+2p-k)//s+1, (w+2p-k)//s+1). Accumulates in
    float64 via a sliding-window contraction.
    """
    check_tensor(x, "conv2d input")
    n, c, h, w = x.shape
    if c != p.c_in:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects c_in={p.c_in}")
    k, s = p.kernel, p.stride
    ho, wo = _out_dim(h, k, s, p.padding), _out_dim(w, k, s, p.padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: output dims {ho}x{wo} < 1 for input {h}x{w}, k={k}, s={s}, pad={p.padding}")

    if p.padding > 0:
        xp = np.pad(x, ((0, 0), (0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    else:
        xp = x
    xp = xp.astype(np.float64)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    w64 = p.weight.astype(np.float64)

    if p.groups == 1:
        out = np.tensordot(win, w64, axes=([1, 4, 5], [1, 2, 3]))  # (n, ho, wo, c_out)
        out = np.moveaxis(out, 3, 1)
    elif p.groups == c and p.c_out == c:
        # depthwise: one k x k filter per channel
        out = np.einsum("nchwij,cij->nchw", win, w64[:, 0], optimize=True)
    else:
        cg, og = c // p.groups, p.c_out // p.groups
        out = np.empty((n, p.c_out, ho, wo), dtype=np.float64)
        for g in range(p.groups):
            part = np.tensordot(
                win[:, g * cg : (g + 1) * cg], w64[g * og : (g + 1) * og],
                axes=([1, 4, 5], [1, 2, 3]),
            )
            out[:, g * og : (g + 1) * og] = np.moveaxis(part, 3, 1)

    if p.bias is not None:
        out = out + p.bias.astype(np.float64)[:, None, None]
    return _f32(out)


def bn_apply(x: Tensor, bn: BnParams) -> Tensor:
    """Inference batch norm: (x - mean) * gamma / sqrt(var + eps) + beta."""
    check_tensor(x, "bn input")
    if x.shape[1] != bn.channels:
        raise ShapeError(f"bn_apply: input has {x.shape[1]} channels, bn has {bn.channels}")
    scale = (bn.gamma.astype(np.float64) / np.sqrt(bn.var.astype(np.float64) + bn.eps))
    shift = bn.beta.astype(np.float64) - scale * bn.mean.astype(np.float64)
    out = x.astype(np.float64) * scale[:, None, None] + shift[:, None, None]
    return _f32(out)


def fold_batchnorm(p: ConvParams, bn: BnParams) -> ConvParams:
    """Fold batch norm into the preceding convolution.

    Returns params satisfying conv2d(x, folded) == bn_apply(conv2d(x, p), bn)
    for all x (within float rounding). Scale = gamma/sqrt(var+eps) multiplies
    the weights; bias becomes beta - scale*mean (+ scale*old_bias).
    """
    if bn.channels != p.c_out:
        raise ShapeError(f"fold_batchnorm: bn has {bn.channels} channels, conv c_out={p.c_out}")
    scale = bn.gamma.astype(np.float64) / np.sqrt(bn.var.astype(np.float64) + bn.eps)
    w = _f32(p.weight.astype(np.float64) * scale[:, None, None, None])
    b = bn.beta.astype(np.float64) - scale * bn.mean.astype(np.float64)
    if p.bias is not None:
        b = b + scale * p.bias.astype(np.float64)
    return ConvParams(w, _f32(b), p.stride, p.padding, p.groups)


def silu(x: Tensor) -> Tensor:
    """Elementwise x * sigmoid(x), computed stably in float64."""
    check_tensor(x, "silu input")
    x64 = x.astype(np.float64)
    out = x64 * _sigmoid64(x64)
    return _f32(out)


def _sigmoid64(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel; output shape (n, c, 1, 1)."""
    check_tensor(x, "global_avg_pool input")
    if x.shape[2] * x.shape[3] < 1:
        raise ShapeError(f"global_avg_pool: empty spatial extent {x.shape[2]}x{x.shape[3]}")
    return _f32(x.mean(axis=(2, 3), keepdims=True, dtype=np.float64))


def maxpool2d(x: Tensor, k: int, stride: int, pad: int) -> Tensor:
    """Sliding-window maximum. Padding contributes -inf (never selected from finite inputs)."""
    check_tensor(x, "maxpool2d input")
    n, c, h, w = x.shape
    ho, wo = _out_dim(h, k, stride, pad), _out_dim(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d: output dims {ho}x{wo} < 1")
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    return _f32(win.max(axis=(4, 5)))


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate each pixel into a 2x2 block; output (n, c, 2h, 2w)."""
    check_tensor(x, "upsample input")
    return _f32(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis; inputs must share n, h, w."""
    if not xs:
        raise ShapeError("concat_channels: empty input list")
    for i, x in enumerate(xs):
        check_tensor(x, f"concat input {i}")
    ref = xs[0].shape
    for i, x in enumerate(xs[1:], 1):
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError(
                f"concat_channels: input {i} shape {x.shape} incompatible with {ref} (n, h, w must match)"
            )
    return _f32(np.concatenate(xs, axis=1))
