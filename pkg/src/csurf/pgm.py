"""8-bit grayscale images and binary PGM (P5) parsing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidParams

MIN_DIMENSION = 9  # smallest box filter must fit


@dataclass(frozen=True)
class GrayImage:
    """Integer grayscale image, pixels in [0, B]."""

    pixels: np.ndarray  # (m, n) = (height, width), integer dtype
    B: int = 255

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise InvalidParams("image must be 2-D")
        m, n = px.shape
        if m < MIN_DIMENSION or n < MIN_DIMENSION:
            raise InvalidParams(
                f"image must be at least {MIN_DIMENSION}x{MIN_DIMENSION}, got {m}x{n}"
            )
        if px.min() < 0 or px.max() > self.B:
            raise InvalidParams(f"pixels must lie in [0, {self.B}]")
        object.__setattr__(self, "pixels", px.astype(np.int64))

    @property
    def height(self) -> int:  # m
        return self.pixels.shape[0]

    @property
    def width(self) -> int:  # n
        return self.pixels.shape[1]


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited token, skipping '#' comment lines."""
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return data[start:pos], pos


def load_pgm(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    try:
        w_tok, pos = _read_token(data, pos)
        h_tok, pos = _read_token(data, pos)
        max_tok, pos = _read_token(data, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (8-bit only)")
    pos += 1  # single whitespace byte separates header from raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FormatError(f"{path}: truncated raster data")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels=pixels.astype(np.int64), B=255)


def save_pgm(path, img: GrayImage):
    """Write a binary PGM (P5, maxval 255)."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(img.pixels.astype(np.uint8).tobytes())
