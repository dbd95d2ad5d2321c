"""Access to the bundled 11-image grayscale test corpus (32x32 and 64x64)."""

from __future__ import annotations

from importlib import resources

from .pgm import GrayImage, load_pgm

CORPUS_NAMES = [
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

CORPUS_SIZES = (32, 64)


def corpus_path(name: str, side: int):
    """Filesystem path of one bundled corpus PGM."""
    if name not in CORPUS_NAMES or side not in CORPUS_SIZES:
        raise KeyError(f"no corpus image {name!r} at {side}x{side}")
    return resources.files("csurf").joinpath(f"data/corpus/{name}_{side}.pgm")


def load_corpus_image(name: str, side: int) -> GrayImage:
    with resources.as_file(corpus_path(name, side)) as path:
        return load_pgm(path)


def load_corpus(side: int) -> dict[str, GrayImage]:
    """All 11 images at one size, keyed by name, in stable order."""
    return {name: load_corpus_image(name, side) for name in CORPUS_NAMES}
