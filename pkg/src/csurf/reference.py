"""Cleartext reference pipelines used as oracles for the encrypted detector.

Two independent implementations of the same detector:

* ``reference_pyramid`` -- double precision, exact fractional constants
  w / L**2 (no quantization).  This is the baseline the decrypted pyramid is
  compared against for accuracy and keypoint fidelity.
* ``exact_pyramid`` -- plain-integer arithmetic with the same quantized
  constants round(w * V / L**2) the encrypted pipeline uses, carried as
  unreduced numerator/denominator pairs.  The encrypted pipelines must match
  it bit for bit; it deliberately shares no code with the ciphertext path.
"""

from __future__ import annotations

import numpy as np

from .geometry import PyramidConfig, filter_geometry
from .pgm import GrayImage
from .pipeline import FloatPyramid, RationalCell, RationalPyramid
from .rationals import PlainRational, quantize_constant


def _integral(img: GrayImage) -> np.ndarray:
    """(m+1) x (n+1) zero-padded prefix sums, exact in int64."""
    padded = np.zeros((img.height + 1, img.width + 1), dtype=np.int64)
    padded[1:, 1:] = np.cumsum(np.cumsum(img.pixels, axis=0), axis=1)
    return padded


def _box_grid(I: np.ndarray, xs, ys, rect) -> np.ndarray:
    """Box sums for one lobe rectangle at every center in the sample grid."""
    dx0, dy0, dx1, dy1 = rect
    return (
        I[ys + dy1 + 1, xs + dx1 + 1]
        - I[ys + dy0, xs + dx1 + 1]
        - I[ys + dy1 + 1, xs + dx0]
        + I[ys + dy0, xs + dx0]
    )


def reference_pyramid(img: GrayImage, config: PyramidConfig = PyramidConfig()) -> FloatPyramid:
    """Double-precision detector responses; NaN where the filter does not fit."""
    I = _integral(img)
    m, n = img.height, img.width
    grids = {}
    for o, l in config.slots():
        geom = filter_geometry(o, l, config.octaves, config.layers)
        st = config.step(o)
        gh, gw = config.grid_shape(m, n, o)
        xs = np.arange(gw) * st
        ys = np.arange(gh) * st
        if geom.half > n - 1 - geom.half or geom.half > m - 1 - geom.half:
            # filter larger than the image: every point is skipped
            grids[(o, l)] = (np.full((gh, gw), np.nan), np.full((gh, gw), np.nan))
            continue
        valid = (
            (xs[None, :] >= geom.half)
            & (xs[None, :] <= n - 1 - geom.half)
            & (ys[:, None] >= geom.half)
            & (ys[:, None] <= m - 1 - geom.half)
        )
        xg, yg = np.meshgrid(xs, ys)
        # clamp so the fancy indexing stays legal; invalid cells get NaN below
        xg = np.clip(xg, geom.half, n - 1 - geom.half)
        yg = np.clip(yg, geom.half, m - 1 - geom.half)
        L2 = float(geom.norm_area)
        dxx = sum(w / L2 * _box_grid(I, xg, yg, r) for w, r in geom.dxx_lobes)
        dyy = sum(w / L2 * _box_grid(I, xg, yg, r) for w, r in geom.dyy_lobes)
        dxy = sum(w / L2 * _box_grid(I, xg, yg, r) for w, r in geom.dxy_lobes)
        det = dxx * dyy - 0.81 * dxy * dxy
        trace = dxx + dyy
        det = np.where(valid, det, np.nan)
        trace = np.where(valid, trace, np.nan)
        grids[(o, l)] = (det, trace)
    return FloatPyramid(config=config, m=m, n=n, grids=grids)


def exact_pyramid(
    img: GrayImage, config: PyramidConfig = PyramidConfig(), V: int = 10000
) -> RationalPyramid:
    """Quantized-constant detector on plain integers, no encryption involved.

    Responses are unreduced pairs: filter responses carry denominator V,
    the trace V**2 and the determinant 100*V**2, exactly like the encrypted
    pipeline's schedule.
    """
    I = _integral(img)
    m, n = img.height, img.width
    grids = {}
    for o, l in config.slots():
        geom = filter_geometry(o, l, config.octaves, config.layers)
        st = config.step(o)
        gh, gw = config.grid_shape(m, n, o)
        weights = {
            "dxx": [(quantize_constant(w, geom.norm_area, V), r) for w, r in geom.dxx_lobes],
            "dyy": [(quantize_constant(w, geom.norm_area, V), r) for w, r in geom.dyy_lobes],
            "dxy": [(quantize_constant(w, geom.norm_area, V), r) for w, r in geom.dxy_lobes],
        }
        grid = [[None] * gw for _ in range(gh)]
        for gy in range(gh):
            y = gy * st
            for gx in range(gw):
                x = gx * st
                if not (
                    geom.half <= x <= n - 1 - geom.half
                    and geom.half <= y <= m - 1 - geom.half
                ):
                    continue
                nums = {}
                for key, lobes in weights.items():
                    acc = 0
                    for cu, (dx0, dy0, dx1, dy1) in lobes:
                        rs = int(
                            I[y + dy1 + 1, x + dx1 + 1]
                            - I[y + dy0, x + dx1 + 1]
                            - I[y + dy1 + 1, x + dx0]
                            + I[y + dy0, x + dx0]
                        )
                        acc += cu * rs
                    nums[key] = acc
                det_num = 100 * nums["dxx"] * nums["dyy"] - 81 * nums["dxy"] ** 2
                trace_num = nums["dxx"] * V + nums["dyy"] * V
                grid[gy][gx] = RationalCell(
                    det=PlainRational(det_num, 100 * V * V),
                    trace=PlainRational(trace_num, V * V),
                )
        grids[(o, l)] = grid
    return RationalPyramid(config=config, V=V, m=m, n=n, B=img.B, grids=grids)
