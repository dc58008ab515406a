"""Model graphs for the four detector variants, whole-model forward execution,
and the parameter / GFLOP profiler.

The baseline is the standard YOLOv8 "n" graph (width 0.25 / depth 0.33:
channels 16/32/64/128/256, C2f repeats 1/2/2/1 in the backbone, 1 each in the
head). The other variants edit it:

  yolov8n-c2fcib  backbone C2f layers 6 and 8 become C2fCIB (shortcut on)
  yolov8n-se      SE blocks follow the head C2f layers 15, 18 and 21; every
                  downstream consumer (detect head, downsampling convs) takes
                  the SE output
  cib-se-yolov8   both edits

SE insertion never renumbers existing layers: the published layer indices
6/8/15/18/21 stay valid, SE nodes get fresh indices 23/24/25 and sit directly
after their producers in execution order.

Parameter counting reports the deployable (BN-folded) form — each conv+BN
block counts its weight plus the per-channel bias the fold produces — which is
how fused model summaries report detector sizes. GFLOPs are 2x the
multiply-accumulates of conv and FC layers at the given input size; everything
else (pooling, upsample, concat, activations) is ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

from .blocks import (
    Bottleneck,
    C2fBlock,
    C2fCIBBlock,
    CIBBlock,
    ConvBlock,
    DetectBranch,
    DetectHead,
    SEBlock,
    SPPFBlock,
    c2f_forward,
    c2fcib_forward,
    conv_block_forward,
    detect_forward,
    head_hidden_channels,
    se_forward,
    sppf_forward,
)
from .errors import BindingError, ShapeError
from .tensor_ops import BnParams, ConvParams, Tensor, check_tensor, concat_channels, upsample_nearest2x

VARIANTS = ("yolov8n", "yolov8n-se", "yolov8n-c2fcib", "cib-se-yolov8")

_ALIASES = {
    "base": "yolov8n",
    "se": "yolov8n-se",
    "se-only": "yolov8n-se",
    "cib": "yolov8n-c2fcib",
    "cib-only": "yolov8n-c2fcib",
    "cibse": "cib-se-yolov8",
}

SE_REDUCTION = 16
REG_MAX = 16
STRIDES = (8, 16, 32)


def normalize_variant(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown model variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return key


@dataclass(frozen=True)
class LayerSpec:
    """One node of the layer graph.

    index is the stable layer id (the published numbering); the position in
    ModelGraph.layers is the execution order. inputs refer to producer ids;
    -1 means the immediately preceding layer in execution order (the image
    for the first layer).
    """

    index: int
    kind: str  # Conv | C2f | C2fCIB | SE | SPPF | Upsample | Concat | Detect
    inputs: tuple[int, ...]
    args: dict


@dataclass(frozen=True)
class ModelGraph:
    layers: tuple[LayerSpec, ...]
    variant: str
    nc: int

    @property
    def detect_inputs(self) -> tuple[int, int, int]:
        return self.layers[self._detect_pos].inputs

    @property
    def _detect_pos(self) -> int:
        positions = [i for i, l in enumerate(self.layers) if l.kind == "Detect"]
        if len(positions) != 1:
            raise ShapeError(f"graph must contain exactly one Detect layer, found {len(positions)}")
        return positions[0]


def _base_table(nc: int) -> list[LayerSpec]:
    t = [
        ("Conv", (-1,), dict(c_out=16, k=3, s=2)),
        ("Conv", (-1,), dict(c_out=32, k=3, s=2)),
        ("C2f", (-1,), dict(c_out=32, n=1, shortcut=True)),
        ("Conv", (-1,), dict(c_out=64, k=3, s=2)),
        ("C2f", (-1,), dict(c_out=64, n=2, shortcut=True)),
        ("Conv", (-1,), dict(c_out=128, k=3, s=2)),
        ("C2f", (-1,), dict(c_out=128, n=2, shortcut=True)),
        ("Conv", (-1,), dict(c_out=256, k=3, s=2)),
        ("C2f", (-1,), dict(c_out=256, n=1, shortcut=True)),
        ("SPPF", (-1,), dict(c_out=256)),
        ("Upsample", (-1,), {}),
        ("Concat", (-1, 6), {}),
        ("C2f", (-1,), dict(c_out=128, n=1, shortcut=False)),
        ("Upsample", (-1,), {}),
        ("Concat", (-1, 4), {}),
        ("C2f", (-1,), dict(c_out=64, n=1, shortcut=False)),
        ("Conv", (-1,), dict(c_out=64, k=3, s=2)),
        ("Concat", (-1, 12), {}),
        ("C2f", (-1,), dict(c_out=128, n=1, shortcut=False)),
        ("Conv", (-1,), dict(c_out=128, k=3, s=2)),
        ("Concat", (-1, 9), {}),
        ("C2f", (-1,), dict(c_out=256, n=1, shortcut=False)),
        ("Detect", (15, 18, 21), dict(nc=nc, reg_max=REG_MAX, strides=STRIDES)),
    ]
    return [LayerSpec(i, kind, inputs, args) for i, (kind, inputs, args) in enumerate(t)]


def build_variant(variant: str, nc: int = 2) -> ModelGraph:
    """Construct the layer graph for one of the four variants."""
    variant = normalize_variant(variant)
    if nc < 1:
        raise ValueError(f"nc must be >= 1, got {nc}")
    layers = _base_table(nc)

    if variant in ("yolov8n-c2fcib", "cib-se-yolov8"):
        for pos in (6, 8):
            layers[pos] = replace(layers[pos], kind="C2fCIB")

    if variant in ("yolov8n-se", "cib-se-yolov8"):
        se_after = {15: 23, 18: 24, 21: 25}
        rewired = []
        for spec in layers:
            # explicit references to a wrapped layer move to its SE output;
            # -1 references resolve by execution position and need no edit
            new_inputs = tuple(se_after.get(i, i) if i >= 0 else i for i in spec.inputs)
            rewired.append(replace(spec, inputs=new_inputs))
            if spec.index in se_after:
                rewired.append(
                    LayerSpec(se_after[spec.index], "SE", (spec.index,), dict(reduction=SE_REDUCTION))
                )
        layers = rewired

    graph = ModelGraph(tuple(layers), variant, nc)
    validate_graph(graph)
    return graph


class LayerShape(NamedTuple):
    c: int
    h: int | None
    w: int | None


def _resolve_positions(graph: ModelGraph) -> dict[int, int]:
    pos = {}
    for p, spec in enumerate(graph.layers):
        if spec.index in pos:
            raise ShapeError(f"duplicate layer index {spec.index}")
        pos[spec.index] = p
    return pos


def _input_positions(graph: ModelGraph, pos_by_index: dict[int, int], p: int) -> list[int]:
    spec = graph.layers[p]
    out = []
    for i in spec.inputs:
        if i == -1:
            out.append(p - 1)  # -1 at position 0 means the image input
        else:
            if i not in pos_by_index or pos_by_index[i] >= p:
                raise ShapeError(
                    f"layer {spec.index} ({spec.kind}) input {i} does not precede it in execution order"
                )
            out.append(pos_by_index[i])
    return out


def trace_shapes(graph: ModelGraph, imgsz: int | None = None) -> list[LayerShape]:
    """Per-layer output (channels, height, width); spatial dims are None
    without an imgsz. Detect rows report the raw per-scale channel count."""
    if imgsz is not None and imgsz % 32 != 0:
        raise ShapeError(f"input size {imgsz} not divisible by 32")
    pos_by_index = _resolve_positions(graph)
    shapes: list[LayerShape] = []
    img = LayerShape(3, imgsz, imgsz)

    def src(p_inputs: list[int]) -> list[LayerShape]:
        return [shapes[q] if q >= 0 else img for q in p_inputs]

    for p, spec in enumerate(graph.layers):
        ins = src(_input_positions(graph, pos_by_index, p))
        kind, a = spec.kind, spec.args
        if kind == "Conv":
            s = ins[0]
            h = None if s.h is None else (s.h + 2 * (a["k"] // 2) - a["k"]) // a["s"] + 1
            w = None if s.w is None else (s.w + 2 * (a["k"] // 2) - a["k"]) // a["s"] + 1
            shapes.append(LayerShape(a["c_out"], h, w))
        elif kind in ("C2f", "C2fCIB", "SPPF"):
            s = ins[0]
            shapes.append(LayerShape(a["c_out"], s.h, s.w))
        elif kind == "SE":
            shapes.append(ins[0])
        elif kind == "Upsample":
            s = ins[0]
            shapes.append(LayerShape(s.c, None if s.h is None else 2 * s.h, None if s.w is None else 2 * s.w))
        elif kind == "Concat":
            hs = {(s.h, s.w) for s in ins}
            if len(hs) != 1:
                raise ShapeError(f"layer {spec.index}: concat inputs disagree on spatial dims {hs}")
            shapes.append(LayerShape(sum(s.c for s in ins), ins[0].h, ins[0].w))
        elif kind == "Detect":
            if len(ins) != 3:
                raise ShapeError(f"layer {spec.index}: detect needs 3 inputs, got {len(ins)}")
            shapes.append(LayerShape(4 * a["reg_max"] + a["nc"], None, None))
        else:
            raise ShapeError(f"unknown layer kind {kind!r}")
    return shapes


def validate_graph(graph: ModelGraph) -> None:
    """Topological validity plus end-to-end channel consistency."""
    graph._detect_pos  # exactly one Detect
    trace_shapes(graph)  # raises on ordering or channel problems
    if graph.layers[graph._detect_pos] is not graph.layers[-1]:
        raise ShapeError("Detect must be the final layer")


class WeightSpec(NamedTuple):
    name: str
    shape: tuple[int, ...]
    init: str  # conv_weight | bn_gamma | bn_beta | bn_mean | bn_var | fc_weight | out_weight | bias_box | bias_cls | dfl


def _conv_block_weights(path: str, c_in: int, c_out: int, k: int, groups: int = 1) -> Iterator[WeightSpec]:
    yield WeightSpec(f"{path}.conv.weight", (c_out, c_in // groups, k, k), "conv_weight")
    yield WeightSpec(f"{path}.bn.gamma", (c_out,), "bn_gamma")
    yield WeightSpec(f"{path}.bn.beta", (c_out,), "bn_beta")
    yield WeightSpec(f"{path}.bn.mean", (c_out,), "bn_mean")
    yield WeightSpec(f"{path}.bn.var", (c_out,), "bn_var")


def _c2f_weights(path: str, c_in: int, c_out: int, n: int) -> Iterator[WeightSpec]:
    c = c_out // 2
    yield from _conv_block_weights(f"{path}.cv1", c_in, 2 * c, 1)
    for j in range(n):
        yield from _conv_block_weights(f"{path}.m{j}.cv1", c, c, 3)
        yield from _conv_block_weights(f"{path}.m{j}.cv2", c, c, 3)
    yield from _conv_block_weights(f"{path}.cv2", (2 + n) * c, c_out, 1)


def _c2fcib_weights(path: str, c_in: int, c_out: int, n: int) -> Iterator[WeightSpec]:
    c = c_out // 2
    yield from _conv_block_weights(f"{path}.cv1", c_in, 2 * c, 1)
    for j in range(n):
        # inside the C2f skeleton the inverted block expands to 2c (mid = c)
        yield from _conv_block_weights(f"{path}.m{j}.cv1", c, c, 3, groups=c)
        yield from _conv_block_weights(f"{path}.m{j}.cv2", c, 2 * c, 1)
        yield from _conv_block_weights(f"{path}.m{j}.cv3", 2 * c, 2 * c, 3, groups=2 * c)
        yield from _conv_block_weights(f"{path}.m{j}.cv4", 2 * c, c, 1)
        yield from _conv_block_weights(f"{path}.m{j}.cv5", c, c, 3, groups=c)
    yield from _conv_block_weights(f"{path}.cv2", (2 + n) * c, c_out, 1)


def _detect_weights(path: str, chs: tuple[int, int, int], nc: int, reg_max: int) -> Iterator[WeightSpec]:
    c_box, c_cls = head_hidden_channels(chs[0], reg_max, nc)
    for s, ch in enumerate(chs):
        yield from _conv_block_weights(f"{path}.box{s}.cv1", ch, c_box, 3)
        yield from _conv_block_weights(f"{path}.box{s}.cv2", c_box, c_box, 3)
        yield WeightSpec(f"{path}.box{s}.out.weight", (4 * reg_max, c_box, 1, 1), "out_weight")
        yield WeightSpec(f"{path}.box{s}.out.bias", (4 * reg_max,), "bias_box")
        yield from _conv_block_weights(f"{path}.cls{s}.cv1", ch, c_cls, 3)
        yield from _conv_block_weights(f"{path}.cls{s}.cv2", c_cls, c_cls, 3)
        yield WeightSpec(f"{path}.cls{s}.out.weight", (nc, c_cls, 1, 1), "out_weight")
        yield WeightSpec(f"{path}.cls{s}.out.bias", (nc,), "bias_cls")
    yield WeightSpec(f"{path}.dfl.weight", (reg_max,), "dfl")


def weight_manifest(graph: ModelGraph) -> list[WeightSpec]:
    """Every tensor a checkpoint must provide, with canonical layer-path names."""
    shapes = trace_shapes(graph)
    pos_by_index = _resolve_positions(graph)
    out: list[WeightSpec] = []
    for p, spec in enumerate(graph.layers):
        ins = _input_positions(graph, pos_by_index, p)
        c_in = shapes[ins[0]].c if ins[0] >= 0 else 3
        path = f"layer{spec.index}"
        kind, a = spec.kind, spec.args
        if kind == "Conv":
            out.extend(_conv_block_weights(path, c_in, a["c_out"], a["k"]))
        elif kind == "C2f":
            out.extend(_c2f_weights(path, c_in, a["c_out"], a["n"]))
        elif kind == "C2fCIB":
            out.extend(_c2fcib_weights(path, c_in, a["c_out"], a["n"]))
        elif kind == "SE":
            c, r = c_in, a["reduction"]
            out.append(WeightSpec(f"{path}.fc1.weight", (c // r, c), "fc_weight"))
            out.append(WeightSpec(f"{path}.fc2.weight", (c, c // r), "fc_weight"))
        elif kind == "SPPF":
            out.extend(_conv_block_weights(f"{path}.cv1", c_in, c_in // 2, 1))
            out.extend(_conv_block_weights(f"{path}.cv2", 2 * c_in, a["c_out"], 1))
        elif kind == "Detect":
            chs = tuple(shapes[q].c for q in ins)
            out.extend(_detect_weights(path, chs, a["nc"], a["reg_max"]))
    return out


_DEPLOY_COUNT = {
    # deployable (BN-folded) size: conv weight + the bias folding produces
    "conv_weight": lambda shape: math.prod(shape),
    "bn_gamma": lambda shape: shape[0],
    "bn_beta": lambda shape: 0,
    "bn_mean": lambda shape: 0,
    "bn_var": lambda shape: 0,
    "fc_weight": lambda shape: math.prod(shape),
    "out_weight": lambda shape: math.prod(shape),
    "bias_box": lambda shape: math.prod(shape),
    "bias_cls": lambda shape: math.prod(shape),
    "dfl": lambda shape: math.prod(shape),
}


def count_parameters(graph: ModelGraph) -> int:
    """Deployable parameter count (conv weights, biases after BN folding,
    FC weights, head biases and the fixed distribution-projection bins)."""
    return sum(_DEPLOY_COUNT[w.init](w.shape) for w in weight_manifest(graph))


def _layer_param_counts(graph: ModelGraph) -> dict[int, int]:
    counts: dict[int, int] = {spec.index: 0 for spec in graph.layers}
    for w in weight_manifest(graph):
        idx = int(w.name.split(".", 1)[0][len("layer"):])
        counts[idx] += _DEPLOY_COUNT[w.init](w.shape)
    return counts


def conv_macs(c_in: int, c_out: int, k: int, h_out: int, w_out: int, groups: int = 1) -> int:
    """Multiply-accumulates of one convolution; x2 gives its FLOPs."""
    return c_out * (c_in // groups) * k * k * h_out * w_out


def estimate_flops(graph: ModelGraph, imgsz: int = 640) -> float:
    """GFLOPs = 2 x conv/FC multiply-accumulates at the given input size."""
    shapes = trace_shapes(graph, imgsz)
    pos_by_index = _resolve_positions(graph)
    macs = 0
    for p, spec in enumerate(graph.layers):
        ins = _input_positions(graph, pos_by_index, p)
        cin, hin, win = (shapes[ins[0]] if ins[0] >= 0 else LayerShape(3, imgsz, imgsz))
        kind, a = spec.kind, spec.args
        if kind == "Conv":
            _, ho, wo = shapes[p]
            macs += conv_macs(cin, a["c_out"], a["k"], ho, wo)
        elif kind in ("C2f", "C2fCIB"):
            c = a["c_out"] // 2
            macs += conv_macs(cin, 2 * c, 1, hin, win)
            macs += conv_macs((2 + a["n"]) * c, a["c_out"], 1, hin, win)
            if kind == "C2f":
                macs += a["n"] * 2 * conv_macs(c, c, 3, hin, win)
            else:
                macs += a["n"] * (
                    conv_macs(c, c, 3, hin, win, groups=c)
                    + conv_macs(c, 2 * c, 1, hin, win)
                    + conv_macs(2 * c, 2 * c, 3, hin, win, groups=2 * c)
                    + conv_macs(2 * c, c, 1, hin, win)
                    + conv_macs(c, c, 3, hin, win, groups=c)
                )
        elif kind == "SE":
            macs += 2 * cin * (cin // a["reduction"])
        elif kind == "SPPF":
            c = cin // 2
            macs += conv_macs(cin, c, 1, hin, win) + conv_macs(4 * c, a["c_out"], 1, hin, win)
        elif kind == "Detect":
            chs = [shapes[q] for q in ins]
            c_box, c_cls = head_hidden_channels(chs[0].c, a["reg_max"], a["nc"])
            for s in chs:
                macs += conv_macs(s.c, c_box, 3, s.h, s.w) + conv_macs(c_box, c_box, 3, s.h, s.w)
                macs += conv_macs(c_box, 4 * a["reg_max"], 1, s.h, s.w)
                macs += conv_macs(s.c, c_cls, 3, s.h, s.w) + conv_macs(c_cls, c_cls, 3, s.h, s.w)
                macs += conv_macs(c_cls, a["nc"], 1, s.h, s.w)
    return 2.0 * macs / 1e9


class SummaryRow(NamedTuple):
    index: int
    kind: str
    inputs: tuple[int, ...]
    c_out: int
    params: int


def summarize(graph: ModelGraph) -> list[SummaryRow]:
    """Per-layer table; the params column sums to count_parameters."""
    shapes = trace_shapes(graph)
    counts = _layer_param_counts(graph)
    return [
        SummaryRow(spec.index, spec.kind, spec.inputs, shapes[p].c, counts[spec.index])
        for p, spec in enumerate(graph.layers)
    ]


def format_summary(rows: list[SummaryRow]) -> str:
    headers = ("idx", "kind", "inputs", "c_out", "params")
    body = [(str(r.index), r.kind, ",".join(map(str, r.inputs)), str(r.c_out), str(r.params)) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for b in body:
        lines.append("  ".join(b[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)


def summary_csv(rows: list[SummaryRow]) -> str:
    lines = ["index,kind,inputs,c_out,params"]
    for r in rows:
        lines.append(f"{r.index},{r.kind},{' '.join(map(str, r.inputs))},{r.c_out},{r.params}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# binding a checkpoint and running the graph


def _need(weights: dict, name: str, shape: tuple[int, ...]) -> np.ndarray:
    if name not in weights:
        raise BindingError(f"checkpoint missing tensor {name!r}")
    t = weights[name]
    if tuple(t.shape) != shape:
        raise BindingError(f"tensor {name!r} has shape {tuple(t.shape)}, graph requires {shape}")
    return np.ascontiguousarray(t, dtype=np.float32)


def _bind_conv_block(weights, path, c_in, c_out, k, stride=1, groups=1, act=True) -> ConvBlock:
    conv = ConvParams(
        _need(weights, f"{path}.conv.weight", (c_out, c_in // groups, k, k)),
        None, stride, k // 2, groups,
    )
    bn = BnParams(
        _need(weights, f"{path}.bn.gamma", (c_out,)),
        _need(weights, f"{path}.bn.beta", (c_out,)),
        _need(weights, f"{path}.bn.mean", (c_out,)),
        _need(weights, f"{path}.bn.var", (c_out,)),
    )
    return ConvBlock(conv, bn, act)


def _bind_layer(spec: LayerSpec, c_in: int, chs: tuple[int, ...], weights: dict):
    path = f"layer{spec.index}"
    kind, a = spec.kind, spec.args
    if kind == "Conv":
        return _bind_conv_block(weights, path, c_in, a["c_out"], a["k"], stride=a["s"])
    if kind == "C2f":
        c = a["c_out"] // 2
        inner = tuple(
            Bottleneck(
                _bind_conv_block(weights, f"{path}.m{j}.cv1", c, c, 3),
                _bind_conv_block(weights, f"{path}.m{j}.cv2", c, c, 3),
                a["shortcut"],
            )
            for j in range(a["n"])
        )
        return C2fBlock(
            _bind_conv_block(weights, f"{path}.cv1", c_in, 2 * c, 1),
            _bind_conv_block(weights, f"{path}.cv2", (2 + a["n"]) * c, a["c_out"], 1),
            inner,
        )
    if kind == "C2fCIB":
        c = a["c_out"] // 2
        inner = tuple(
            CIBBlock(
                (
                    _bind_conv_block(weights, f"{path}.m{j}.cv1", c, c, 3, groups=c),
                    _bind_conv_block(weights, f"{path}.m{j}.cv2", c, 2 * c, 1),
                    _bind_conv_block(weights, f"{path}.m{j}.cv3", 2 * c, 2 * c, 3, groups=2 * c),
                    _bind_conv_block(weights, f"{path}.m{j}.cv4", 2 * c, c, 1),
                    _bind_conv_block(weights, f"{path}.m{j}.cv5", c, c, 3, groups=c),
                ),
                a["shortcut"],
            )
            for j in range(a["n"])
        )
        return C2fCIBBlock(
            _bind_conv_block(weights, f"{path}.cv1", c_in, 2 * c, 1),
            _bind_conv_block(weights, f"{path}.cv2", (2 + a["n"]) * c, a["c_out"], 1),
            inner,
        )
    if kind == "SE":
        c, r = c_in, a["reduction"]
        return SEBlock(
            c, r,
            _need(weights, f"{path}.fc1.weight", (c // r, c)),
            _need(weights, f"{path}.fc2.weight", (c, c // r)),
        )
    if kind == "SPPF":
        return SPPFBlock(
            _bind_conv_block(weights, f"{path}.cv1", c_in, c_in // 2, 1),
            _bind_conv_block(weights, f"{path}.cv2", 2 * c_in, a["c_out"], 1),
        )
    if kind == "Detect":
        nc, reg_max = a["nc"], a["reg_max"]
        c_box, c_cls = head_hidden_channels(chs[0], reg_max, nc)
        box, cls = [], []
        for s, ch in enumerate(chs):
            box.append(
                DetectBranch(
                    _bind_conv_block(weights, f"{path}.box{s}.cv1", ch, c_box, 3),
                    _bind_conv_block(weights, f"{path}.box{s}.cv2", c_box, c_box, 3),
                    ConvParams(
                        _need(weights, f"{path}.box{s}.out.weight", (4 * reg_max, c_box, 1, 1)),
                        _need(weights, f"{path}.box{s}.out.bias", (4 * reg_max,)),
                    ),
                )
            )
            cls.append(
                DetectBranch(
                    _bind_conv_block(weights, f"{path}.cls{s}.cv1", ch, c_cls, 3),
                    _bind_conv_block(weights, f"{path}.cls{s}.cv2", c_cls, c_cls, 3),
                    ConvParams(
                        _need(weights, f"{path}.cls{s}.out.weight", (nc, c_cls, 1, 1)),
                        _need(weights, f"{path}.cls{s}.out.bias", (nc,)),
                    ),
                )
            )
        return DetectHead(
            nc, reg_max, a["strides"], tuple(box), tuple(cls),
            _need(weights, f"{path}.dfl.weight", (reg_max,)),
        )
    if kind in ("Upsample", "Concat"):
        return None
    raise ShapeError(f"unknown layer kind {kind!r}")


class Model:
    """A graph bound to a checkpoint, ready to run.

    Binding validates every required tensor (exact shape, named errors) and,
    unless permissive, rejects extra tensors. The bound model is immutable and
    safe to share across threads.
    """

    def __init__(self, graph: ModelGraph, weights: dict, permissive: bool = False):
        required = weight_manifest(graph)
        if not permissive:
            extra = set(weights) - {w.name for w in required}
            if extra:
                raise BindingError(f"checkpoint has unexpected tensors: {sorted(extra)[:8]}")
        for w in required:
            _need(weights, w.name, w.shape)  # raises with the layer path on problems
        self.graph = graph
        self._shapes = trace_shapes(graph)
        self._pos = _resolve_positions(graph)
        self._blocks = []
        for p, spec in enumerate(graph.layers):
            ins = _input_positions(graph, self._pos, p)
            c_in = self._shapes[ins[0]].c if ins[0] >= 0 else 3
            chs = tuple(self._shapes[q].c for q in ins)
            self._blocks.append(_bind_layer(spec, c_in, chs, weights))

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Raw detect maps at strides 8/16/32. Deterministic: identical
        inputs and weights produce bit-identical outputs."""
        check_tensor(x, "model input")
        if x.shape[1] != 3:
            raise ShapeError(f"model input must have 3 channels, got {x.shape[1]}")
        if x.shape[2] % 32 != 0 or x.shape[3] % 32 != 0:
            raise ShapeError(f"input spatial dims {x.shape[2]}x{x.shape[3]} not divisible by 32")
        outputs: list[Tensor | None] = [None] * len(self.graph.layers)
        result = None
        for p, spec in enumerate(self.graph.layers):
            ins = [outputs[q] if q >= 0 else x for q in _input_positions(self.graph, self._pos, p)]
            blk = self._blocks[p]
            kind = spec.kind
            if kind == "Conv":
                y = conv_block_forward(ins[0], blk)
            elif kind == "C2f":
                y = c2f_forward(ins[0], blk)
            elif kind == "C2fCIB":
                y = c2fcib_forward(ins[0], blk)
            elif kind == "SE":
                y = se_forward(ins[0], blk)
            elif kind == "SPPF":
                y = sppf_forward(ins[0], blk)
            elif kind == "Upsample":
                y = upsample_nearest2x(ins[0])
            elif kind == "Concat":
                y = concat_channels(ins)
            else:  # Detect
                result = detect_forward(ins, blk)
                y = None
            outputs[p] = y
        return result

    @property
    def strides(self) -> tuple[int, int, int]:
        return self.graph.layers[self.graph._detect_pos].args["strides"]

    @property
    def reg_max(self) -> int:
        return self.graph.layers[self.graph._detect_pos].args["reg_max"]


def forward(graph: ModelGraph, weights: dict, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """One-shot bind + run; prefer Model for repeated inference."""
    return Model(graph, weights).forward(x)
