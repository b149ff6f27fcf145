"""Plain PGM image input/output (binary P5 and ASCII P2, 8-bit).

Pixels are clamped to [0, maxval] and rounded on write only; reads
return float64 grids with the file's maxval as the dynamic range.
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_pgm", "write_pgm"]


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping
    comment lines, plus the offset just past the last token."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
            i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() \
                    and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P5 or P2 PGM file; returns (pixels, maxval).

    ``pixels`` is a float64 array of shape (rows, cols).
    """
    with open(path, "rb") as f:
        data = f.read()
    tokens, off = _read_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"unsupported PGM magic {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"only 8-bit PGM supported, maxval={maxval}")
    if magic == b"P5":
        raster = data[off + 1:off + 1 + width * height]
        if len(raster) < width * height:
            raise ValueError("truncated P5 raster")
        pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    else:
        values = data[off:].split()
        if len(values) < width * height:
            raise ValueError("truncated P2 raster")
        pixels = np.array(
            [int(v) for v in values[: width * height]], dtype=np.float64
        )
    return pixels.reshape(height, width), maxval


def write_pgm(path, pixels: np.ndarray, maxval: int = 255,
              ascii_format: bool = False) -> None:
    """Write a float grid as P5 (default) or P2 with clamping/rounding."""
    if not 0 < maxval <= 255:
        raise ValueError("maxval must be in (0, 255]")
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D pixel array")
    q = np.clip(np.rint(arr), 0, maxval).astype(np.uint8)
    height, width = q.shape
    header = f"{'P2' if ascii_format else 'P5'}\n{width} {height}\n{maxval}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if ascii_format:
            lines = [" ".join(str(v) for v in row) for row in q]
            f.write(("\n".join(lines) + "\n").encode("ascii"))
        else:
            f.write(q.tobytes())
