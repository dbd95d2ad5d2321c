"""Box-filter geometry for the Hessian detector pyramid.

Filter sizes follow the standard detector ladder: 9, 15, 21, 27 in octave 0,
with both the base and the spacing doubling per octave (15, 27, 39, 51; then
27, 51, 75, 99; ...), i.e. L(o, l) = 6 * 2**o * (l + 1) + 3.  Each L x L
filter approximates a second-derivative Gaussian with rectangular lobes:

* d_xx: three lobes side by side along x, each (L/3) wide and (2L/3 - 1)
  tall, weights (1, -2, 1); d_yy is the transpose.
* d_xy: four (L/3) x (L/3) lobes in the corners of a cross-shaped gap,
  weights (1, -1, -1, 1).

Lobe rectangles are stored as inclusive pixel offsets relative to the filter
center.  Responses are normalized by the filter area L^2 so they are
comparable across scales.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParams

#: (weight, (dx0, dy0, dx1, dy1)) relative inclusive rectangle
Lobe = tuple[int, tuple[int, int, int, int]]


def filter_size(octave: int, layer: int) -> int:
    return 6 * (1 << octave) * (layer + 1) + 3


@dataclass(frozen=True)
class FilterGeometry:
    octave: int
    layer: int
    size: int  # L, odd
    dxx_lobes: tuple[Lobe, ...]
    dyy_lobes: tuple[Lobe, ...]
    dxy_lobes: tuple[Lobe, ...]

    @property
    def norm_area(self) -> int:
        return self.size * self.size

    @property
    def half(self) -> int:
        """Footprint radius; the filter spans [c-half, c+half] each axis."""
        return (self.size - 1) // 2


def _second_derivative_lobes(s: int) -> tuple[Lobe, ...]:
    """Three lobes along x for d_xx; s = L/3 is the lobe unit (odd)."""
    y0, y1 = -(s - 1), s - 1
    edge = (3 * s - 1) // 2
    return (
        (1, (-edge, y0, -edge + s - 1, y1)),
        (-2, (-(s - 1) // 2, y0, (s - 1) // 2, y1)),
        (1, (edge - s + 1, y0, edge, y1)),
    )


def _transpose(lobes: tuple[Lobe, ...]) -> tuple[Lobe, ...]:
    return tuple((w, (y0, x0, y1, x1)) for w, (x0, y0, x1, y1) in lobes)


def _cross_derivative_lobes(s: int) -> tuple[Lobe, ...]:
    """Four corner lobes for d_xy, one-pixel gap on both axes."""
    return (
        (1, (-s, -s, -1, -1)),
        (-1, (1, -s, s, -1)),
        (-1, (-s, 1, -1, s)),
        (1, (1, 1, s, s)),
    )


def filter_geometry(
    octave: int, layer: int, octaves: int = 3, layers: int = 4
) -> FilterGeometry:
    """Lobe layout for one pyramid slot; raises on out-of-range indices."""
    if not 0 <= octave < octaves:
        raise InvalidParams(f"octave {octave} out of range [0, {octaves})")
    if not 0 <= layer < layers:
        raise InvalidParams(f"layer {layer} out of range [0, {layers})")
    L = filter_size(octave, layer)
    s = L // 3
    dxx = _second_derivative_lobes(s)
    return FilterGeometry(
        octave=octave,
        layer=layer,
        size=L,
        dxx_lobes=dxx,
        dyy_lobes=_transpose(dxx),
        dxy_lobes=_cross_derivative_lobes(s),
    )


@dataclass(frozen=True)
class PyramidConfig:
    """Pyramid shape: octave/layer counts and per-octave sampling stride."""

    octaves: int = 3
    layers: int = 4

    def __post_init__(self):
        if self.octaves < 1 or self.layers < 1:
            raise InvalidParams("pyramid needs at least one octave and layer")

    def step(self, octave: int) -> int:
        return 1 << octave

    def grid_shape(self, m: int, n: int, octave: int) -> tuple[int, int]:
        """(rows, cols) of the sample grid: image pixels at multiples of step."""
        st = self.step(octave)
        return ((m - 1) // st + 1, (n - 1) // st + 1)

    def slots(self):
        for o in range(self.octaves):
            for l in range(self.layers):
                yield o, l


def footprint_fits(x: int, y: int, half: int, m: int, n: int) -> bool:
    """True when the filter centered at image pixel (x, y) stays in bounds."""
    return x - half >= 0 and x + half <= n - 1 and y - half >= 0 and y + half <= m - 1
