"""Binary portable pixmap (P6, maxval 255) reader and writer.

The only built-in image codec: bit-exactly specifiable without third-party
decoders. Header comments (# ... newline) are tolerated anywhere whitespace
may appear, per the pixmap grammar.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

_WS = b" \t\r\n\x0b\x0c"


def _token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos : pos + 1]
        if c in (b"#",):
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif c and c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and buf[pos : pos + 1] not in _WS and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DataError(f"{path}: malformed pixmap header (unexpected end)")
    return buf[start:pos], pos


def read_image(path) -> np.ndarray:
    """Load a P6 pixmap as an (h, w, 3) uint8 RGB array."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _token(buf, 0, path)
    if magic != b"P6":
        raise DataError(f"{path}: not a P6 pixmap (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _token(buf, pos, path)
        try:
            fields.append(int(tok))
        except ValueError:
            raise DataError(f"{path}: non-numeric header field {tok!r}") from None
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise DataError(f"{path}: invalid dimensions {w}x{h}")
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval} (only 255)")
    pos += 1  # exactly one whitespace byte separates header and payload
    need = 3 * w * h
    if len(buf) - pos < need:
        raise DataError(f"{path}: payload has {len(buf) - pos} bytes, expected {need}")
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3).copy()


def write_image(path, img: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 RGB array as a P6 pixmap."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise DataError(f"write_image expects (h, w, 3) uint8, got {arr.shape} {arr.dtype}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(arr).tobytes())
