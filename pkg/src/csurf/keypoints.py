"""Keypoint extraction, comparison statistics, and intensity-map export.

Extraction runs on decrypted or reference float pyramids: a keypoint is a
strict maximum of the determinant response over its 26-cell neighborhood
(3x3 spatially, across the adjacent layers of the same octave) whose value
exceeds the detection threshold.  Ties are not strict maxima and are
rejected, which makes extraction deterministic.  Positions are image-pixel
coordinates at the detection stride, so no sub-pixel interpolation happens
anywhere.

Comparison is a deliberately simple harness convention: greedy closest-first
matching within a pixel radius, restricted to the same octave.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .pipeline import FloatPyramid

#: Detection threshold used when none is configured.  Calibrated on the
#: bundled corpus so 64x64 images yield keypoint counts in the single digits
#: to low tens and 32x32 images yield zero to a few.
DEFAULT_THRESHOLD = 100.0

#: Matching radius (pixels) used when none is configured.
DEFAULT_MATCH_RADIUS = 2.0


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    octave: int
    layer: int
    response: float
    laplacian_sign: int


@dataclass(frozen=True)
class ComparisonStats:
    """Match counts for one image pair; agreement is matched / max(counts)."""

    matched: int
    unmatched_ref: int
    unmatched_enc: int

    @property
    def ref_total(self) -> int:
        return self.matched + self.unmatched_ref

    @property
    def enc_total(self) -> int:
        return self.matched + self.unmatched_enc

    @property
    def agreement(self) -> float:
        biggest = max(self.ref_total, self.enc_total)
        return 1.0 if biggest == 0 else self.matched / biggest


def extract_keypoints(pyr: FloatPyramid, threshold: float = DEFAULT_THRESHOLD) -> list[Keypoint]:
    """Strict 3x3x3 determinant maxima above the threshold."""
    if pyr.config.layers < 3:
        raise InvalidParams("keypoint extraction needs at least 3 layers per octave")
    found = []
    for o in range(pyr.config.octaves):
        st = pyr.config.step(o)
        for l in range(1, pyr.config.layers - 1):
            det_below = pyr.grids[(o, l - 1)][0]
            det_here, trace_here = pyr.grids[(o, l)]
            det_above = pyr.grids[(o, l + 1)][0]
            gh, gw = det_here.shape
            for gy in range(1, gh - 1):
                for gx in range(1, gw - 1):
                    value = det_here[gy, gx]
                    if not value > threshold:  # also rejects NaN
                        continue
                    window = np.stack(
                        [
                            det_below[gy - 1 : gy + 2, gx - 1 : gx + 2],
                            det_here[gy - 1 : gy + 2, gx - 1 : gx + 2],
                            det_above[gy - 1 : gy + 2, gx - 1 : gx + 2],
                        ]
                    )
                    if np.isnan(window).any():
                        continue
                    center = window[1, 1, 1]
                    window = window.copy()
                    window[1, 1, 1] = -np.inf
                    if center > window.max():
                        found.append(
                            Keypoint(
                                x=gx * st,
                                y=gy * st,
                                octave=o,
                                layer=l,
                                response=float(value),
                                laplacian_sign=int(np.sign(trace_here[gy, gx])),
                            )
                        )
    return found


def compare_keypoints(
    ref: list[Keypoint],
    enc: list[Keypoint],
    radius: float = DEFAULT_MATCH_RADIUS,
) -> ComparisonStats:
    """Greedy closest-first matching within ``radius`` pixels, same octave."""
    candidates = []
    for i, r in enumerate(ref):
        for j, e in enumerate(enc):
            if r.octave != e.octave:
                continue
            d2 = (r.x - e.x) ** 2 + (r.y - e.y) ** 2
            if d2 <= radius * radius:
                candidates.append((d2, i, j))
    candidates.sort()
    used_ref, used_enc = set(), set()
    matched = 0
    for _, i, j in candidates:
        if i in used_ref or j in used_enc:
            continue
        used_ref.add(i)
        used_enc.add(j)
        matched += 1
    return ComparisonStats(
        matched=matched,
        unmatched_ref=len(ref) - matched,
        unmatched_enc=len(enc) - matched,
    )


def corpus_agreement(stats: list[ComparisonStats]) -> dict:
    """Corpus-level fidelity metrics.

    ``agreement_ratio`` counts matched pairs against the larger side;
    ``count_ratio`` compares raw totals, which is the other way the headline
    percentage can be read.  Both are reported.
    """
    matched = sum(s.matched for s in stats)
    ref_total = sum(s.ref_total for s in stats)
    enc_total = sum(s.enc_total for s in stats)
    biggest = max(ref_total, enc_total)
    return {
        "matched": matched,
        "ref_total": ref_total,
        "enc_total": enc_total,
        "agreement_ratio": 1.0 if biggest == 0 else matched / biggest,
        "count_ratio": float("nan") if ref_total == 0 else enc_total / ref_total,
        "matched_ratio_vs_ref": 1.0 if ref_total == 0 else matched / ref_total,
    }


# ---------------------------------------------------------------------------
# intensity maps and the near-tie diagnostic


def intensity_map(
    pyr: FloatPyramid, octave: int, layer: int, center: tuple[int, int], radius: int
) -> np.ndarray:
    """(2r+1)^2 grid of determinant responses around an image-space center.

    ``center`` is (x, y) in image pixels; it must sit on the octave's sample
    grid and the window must stay inside it.
    """
    if (octave, layer) not in pyr.grids:
        raise InvalidParams(f"no pyramid slot (octave={octave}, layer={layer})")
    st = pyr.config.step(octave)
    x, y = center
    if x % st or y % st:
        raise InvalidParams(f"center {center} not on the stride-{st} sample grid")
    det = pyr.grids[(octave, layer)][0]
    gx, gy = x // st, y // st
    gh, gw = det.shape
    if not (radius <= gx < gw - radius and radius <= gy < gh - radius):
        raise InvalidParams("intensity-map window leaves the sample grid")
    return det[gy - radius : gy + radius + 1, gx - radius : gx + radius + 1].copy()


def near_tie_report(
    ref_pyr: FloatPyramid,
    quant_pyr: FloatPyramid,
    kp: Keypoint,
    radius: int = 1,
    threshold: float | None = None,
) -> dict:
    """Explain a keypoint disagreement as a quantization-flipped near tie.

    Looks at the reference response neighborhood of the keypoint (its layer,
    the layer below, and the layer above when present) and measures the
    smallest gap between the center response and any competitor, against the
    largest reference-vs-quantized deviation in the same windows.  A flip can
    only happen when that gap (or, when a threshold is supplied, the distance
    of the center response to the threshold) is within twice the deviation.
    """
    layers = [kp.layer]
    if kp.layer - 1 >= 0:
        layers.append(kp.layer - 1)
    if kp.layer + 1 < ref_pyr.config.layers:
        layers.append(kp.layer + 1)
    center = (kp.x, kp.y)
    center_value = float(
        intensity_map(ref_pyr, kp.octave, kp.layer, center, radius)[radius, radius]
    )
    min_gap = math.inf
    max_dev = 0.0
    for l in layers:
        ref_win = intensity_map(ref_pyr, kp.octave, l, center, radius)
        quant_win = intensity_map(quant_pyr, kp.octave, l, center, radius)
        deviations = np.abs(ref_win - quant_win)
        if not np.isnan(deviations).all():
            max_dev = max(max_dev, float(np.nanmax(deviations)))
        competitors = ref_win.copy()
        if l == kp.layer:
            competitors[radius, radius] = np.nan
        if not np.isnan(competitors).all():
            min_gap = min(min_gap, center_value - float(np.nanmax(competitors)))
    if threshold is not None:
        min_gap = min(min_gap, abs(center_value - threshold))
    return {
        "min_gap": min_gap,
        "max_quantization_deviation": max_dev,
        "near_tie": min_gap <= 2.0 * max_dev,
    }


# ---------------------------------------------------------------------------
# CSV / text formats


KEYPOINT_CSV_COLUMNS = ["x", "y", "octave", "layer", "response", "laplacian_sign"]


def write_keypoints_csv(path, keypoints: list[Keypoint]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(KEYPOINT_CSV_COLUMNS)
        for kp in keypoints:
            writer.writerow(
                [kp.x, kp.y, kp.octave, kp.layer, repr(kp.response), kp.laplacian_sign]
            )


def read_keypoints_csv(path) -> list[Keypoint]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                Keypoint(
                    x=int(row["x"]),
                    y=int(row["y"]),
                    octave=int(row["octave"]),
                    layer=int(row["layer"]),
                    response=float(row["response"]),
                    laplacian_sign=int(row["laplacian_sign"]),
                )
            )
    return out


def write_grid_csv(path, grid: np.ndarray):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in np.atleast_2d(grid):
            writer.writerow([repr(float(v)) for v in row])


def render_stats(values: dict) -> str:
    """One metric per line, name=value."""
    return "".join(f"{k}={v}\n" for k, v in values.items())
