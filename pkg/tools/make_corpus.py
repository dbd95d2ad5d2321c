"""Regenerate the bundled test corpus from the scikit-image sample gallery.

Eleven grayscale images, center-cropped to a square multiple of 64 and
block-averaged down to 64x64 and 32x32, written as binary PGMs into
src/csurf/data/corpus/.  Run from the repository root:

    python tools/make_corpus.py

Requires scikit-image (build-time only; the package itself never imports it).
"""

import pathlib
import sys

import numpy as np
import skimage.data

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))
from csurf.pgm import GrayImage, save_pgm  # noqa: E402

NAMES = [
    "camera",
    "coins",
    "moon",
    "text",
    "page",
    "clock",
    "checkerboard",
    "brick",
    "grass",
    "gravel",
    "coffee",
]

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "csurf" / "data" / "corpus"


def to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img.astype(np.float64)


def center_crop_multiple(img: np.ndarray, unit: int = 64) -> np.ndarray:
    side = (min(img.shape) // unit) * unit
    if side == 0:
        raise ValueError("image smaller than one block unit")
    r0 = (img.shape[0] - side) // 2
    c0 = (img.shape[1] - side) // 2
    return img[r0 : r0 + side, c0 : c0 + side]


def block_mean(img: np.ndarray, out_side: int) -> np.ndarray:
    f = img.shape[0] // out_side
    reduced = img.reshape(out_side, f, out_side, f).mean(axis=(1, 3))
    return np.clip(np.rint(reduced), 0, 255).astype(np.int64)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        source = to_gray(getattr(skimage.data, name)())
        square = center_crop_multiple(source)
        for side in (32, 64):
            pixels = block_mean(square, side)
            path = OUT / f"{name}_{side}.pgm"
            save_pgm(path, GrayImage(pixels=pixels, B=255))
            print(f"wrote {path} ({side}x{side})")


if __name__ == "__main__":
    main()
