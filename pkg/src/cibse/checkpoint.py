"""Checkpoint binary format and deterministic synthetic weights.

File layout (all integers little-endian):

    magic   8 bytes  "CIBSE1\\0\\0"
    version u32      (= 1)
    count   u32      number of entries
    entry   repeated count times:
        name_len u16, name UTF-8, rank u8, dims rank x u32,
        data prod(dims) x f32 (IEEE-754 LE)

Names must be unique and the file length is consumed exactly. A checkpoint in
memory is a plain dict mapping canonical layer-path names to float32 arrays;
insertion order is preserved on save, so save -> load -> save is a byte-level
fixed point.

Synthetic weights come from a splitmix64 stream keyed by (seed, tensor-name
hash), not by generation order: adding unrelated layers never changes the
values of existing ones, and the bytes are identical across platforms.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateNameError,
    TruncatedError,
    VersionError,
)
from .model import ModelGraph, weight_manifest

MAGIC = b"CIBSE1\x00\x00"
FORMAT_VERSION = 1

CLS_BIAS_INIT = -4.6  # sigmoid^-1(~0.01): untrained models emit near-zero confidences


def save_checkpoint(ckpt: dict[str, np.ndarray], path) -> None:
    blobs = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(ckpt))]
    for name, tensor in ckpt.items():
        nb = name.encode("utf-8")
        arr = np.asarray(tensor, dtype="<f4")  # keeps rank 0; n-d made contiguous below
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        blobs.append(struct.pack("<H", len(nb)))
        blobs.append(nb)
        blobs.append(struct.pack("<B", arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(arr.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(blobs))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 8 or buf[:8] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file (bad magic)")
    if len(buf) < 16:
        raise TruncatedError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")

    out: dict[str, np.ndarray] = {}
    off = 16
    for i in range(count):
        entry = f"entry {i}" if not out else f"entry {i} (after {next(reversed(out))!r})"
        if off + 2 > len(buf):
            raise TruncatedError(f"{path}: truncated at name length of {entry}")
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        if off + name_len + 1 > len(buf):
            raise TruncatedError(f"{path}: truncated inside name of {entry}")
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        rank = buf[off]
        off += 1
        if off + 4 * rank > len(buf):
            raise TruncatedError(f"{path}: truncated inside dims of {name!r}")
        dims = struct.unpack_from(f"<{rank}I", buf, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if off + 4 * n > len(buf):
            raise TruncatedError(f"{path}: truncated inside payload of {name!r}")
        data = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        if name in out:
            raise DuplicateNameError(f"{path}: duplicate tensor name {name!r}")
        out[name] = data.astype(np.float32)  # own, writable copy; preserves rank 0
    if off != len(buf):
        raise TruncatedError(f"{path}: {len(buf) - off} trailing bytes after the last entry")
    return out


# ---------------------------------------------------------------------------
# deterministic pseudo-random weights

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def fnv1a64(name: str) -> int:
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def named_uniform(seed: int, name: str, n: int) -> np.ndarray:
    """n doubles in [0, 1) from a splitmix64 stream keyed by (seed, name)."""
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _GOLDEN + _GOLDEN) ^ np.uint64(fnv1a64(name))
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = _mix64(key + idx * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def synth_weights(graph: ModelGraph, seed: int = 0) -> dict[str, np.ndarray]:
    """Every tensor the graph requires, generated deterministically.

    Conv and FC weights ~ uniform(-b, b) with b = sqrt(1/fan_in); BN is the
    identity (gamma 1, beta 0, mean 0, var 1); class-head biases -4.6,
    box-head biases 0; the distribution projection is the bin index vector.
    """
    out: dict[str, np.ndarray] = {}
    for spec in weight_manifest(graph):
        n = int(np.prod(spec.shape))
        if spec.init in ("conv_weight", "out_weight", "fc_weight"):
            fan_in = int(np.prod(spec.shape[1:]))
            b = float(np.sqrt(1.0 / fan_in))
            u = named_uniform(seed, spec.name, n)
            arr = ((2.0 * u - 1.0) * b).astype(np.float32).reshape(spec.shape)
        elif spec.init in ("bn_gamma", "bn_var"):
            arr = np.ones(spec.shape, dtype=np.float32)
        elif spec.init in ("bn_beta", "bn_mean", "bias_box"):
            arr = np.zeros(spec.shape, dtype=np.float32)
        elif spec.init == "bias_cls":
            arr = np.full(spec.shape, CLS_BIAS_INIT, dtype=np.float32)
        elif spec.init == "dfl":
            arr = np.arange(spec.shape[0], dtype=np.float32)
        else:
            raise ValueError(f"unknown init kind {spec.init!r}")
        out[spec.name] = arr
    return out
