"""The encrypted detector pipeline: integral image, box responses, pyramid.

Stages and their exact denominator schedule:

    pixel encryption        v = 1
    integral image          v = 1   (pure additions/subtractions)
    region sums             v = 1
    filter responses        v = V   (one shared base denominator per response)
    trace                   v = V**2
    determinant             v = 100 * V**2

The schedule is asserted at every stage; it is what keeps blind denominator
growth bounded.  Region sums and integral cells carry public magnitude bounds
(pixel range B times covered area) so the multiplicative noise estimates stay
realistic on the matrix backend.

The longest sequential chain is the integral image, so that is where
ciphertext refresh is scheduled: every ``row_interval`` rows, plus a full
refresh once the grid is complete so the (embarrassingly parallel) pyramid
stage starts from fresh ciphertexts.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fhe, rationals
from .errors import InvalidParams, NoiseBudgetExceeded, DecryptionFailure, ParamsMismatch
from .fhe import Ciphertext, RefreshService
from .geometry import FilterGeometry, PyramidConfig, filter_geometry, footprint_fits
from .pgm import GrayImage
from .rationals import EncryptedRational, PlainRational, quantize_constant


@dataclass(frozen=True)
class RefreshPolicy:
    """When to route integral-image ciphertexts through the refresh service.

    ``row_interval=None`` disables periodic refresh.  ``final_refresh`` runs
    the whole grid through the service once the recurrence finishes, which the
    multiplication stage downstream relies on.  Ignored entirely by the
    mirror backend (its noise is identically zero).
    """

    row_interval: int | None = 4
    final_refresh: bool = True


@dataclass
class EncryptedImage:
    cells: list  # m x n of EncryptedRational, all v == 1
    m: int
    n: int
    B: int
    zero: Ciphertext  # fresh encryption of 0 used for grid padding


@dataclass
class EncryptedIntegralImage:
    cells: list  # (m+1) x (n+1) of EncryptedRational, all v == 1
    m: int
    n: int
    B: int


@dataclass(frozen=True)
class HaarResponse:
    """The three filter responses at one sample point, all with v == V."""

    dxx: EncryptedRational
    dyy: EncryptedRational
    dxy: EncryptedRational

    def __post_init__(self):
        if not (self.dxx.v == self.dyy.v == self.dxy.v):
            raise ParamsMismatch("filter responses must share one denominator")

    @property
    def V(self) -> int:
        return self.dxx.v


@dataclass(frozen=True)
class PyramidCell:
    det: EncryptedRational
    trace: EncryptedRational


@dataclass(frozen=True)
class RationalCell:
    det: PlainRational
    trace: PlainRational


@dataclass
class ScaleSpacePyramid:
    """Per-(octave, layer) grids of determinant/trace cells; None = skipped."""

    config: PyramidConfig
    V: int
    m: int
    n: int
    B: int
    backend: str
    grids: dict  # (octave, layer) -> list[list[PyramidCell | None]]


@dataclass
class RationalPyramid:
    config: PyramidConfig
    V: int
    m: int
    n: int
    B: int
    grids: dict  # (octave, layer) -> list[list[RationalCell | None]]

    def to_float(self) -> "FloatPyramid":
        out = {}
        for key, grid in self.grids.items():
            gh, gw = len(grid), len(grid[0])
            det = np.full((gh, gw), np.nan)
            trace = np.full((gh, gw), np.nan)
            for gy in range(gh):
                for gx in range(gw):
                    cell = grid[gy][gx]
                    if cell is not None:
                        det[gy, gx] = cell.det.to_float()
                        trace[gy, gx] = cell.trace.to_float()
            out[key] = (det, trace)
        return FloatPyramid(config=self.config, m=self.m, n=self.n, grids=out)

    def max_observed(self) -> dict:
        """Peak |numerator| and denominator over all cells (instrumentation)."""
        max_num = 0
        max_den = 0
        for grid in self.grids.values():
            for row in grid:
                for cell in row:
                    if cell is None:
                        continue
                    max_num = max(max_num, abs(cell.det.num), abs(cell.trace.num))
                    max_den = max(max_den, cell.det.den, cell.trace.den)
        return {"max_abs_numerator": max_num, "max_denominator": max_den}


@dataclass
class FloatPyramid:
    """Double-precision responses; NaN marks skipped sample points."""

    config: PyramidConfig
    m: int
    n: int
    grids: dict  # (octave, layer) -> (det ndarray, trace ndarray)


# ---------------------------------------------------------------------------
# image encryption and integral image


def encrypt_image(pk, img: GrayImage, rng) -> EncryptedImage:
    """Encrypt pixel-wise; every cell starts with denominator 1."""
    rng = fhe._as_rng(rng)
    cells = []
    for i in range(img.height):
        row = []
        for j in range(img.width):
            ct = fhe.encrypt(pk, int(img.pixels[i, j]), rng)
            ct = fhe.with_message_bound(ct, img.B)
            row.append(rationals.from_int(ct))
        cells.append(row)
    zero = fhe.encrypt(pk, 0, rng)
    return EncryptedImage(cells=cells, m=img.height, n=img.width, B=img.B, zero=zero)


def integral_image(
    enc: EncryptedImage,
    refresh: RefreshService | None = None,
    policy: RefreshPolicy = RefreshPolicy(),
) -> EncryptedIntegralImage:
    """Raster-order prefix-sum recurrence over a zero-padded grid.

    cell(i, j) = pixel(i-1, j-1) + cell(i-1, j) + cell(i, j-1) - cell(i-1, j-1)
    with an encrypted zero row and column at index 0.  Raises
    NoiseBudgetExceeded as soon as a cell's noise estimate is no longer
    decryptable, which is what happens when refresh is disabled on images
    that need it.
    """
    params = enc.zero.params
    threshold = params.decrypt_threshold
    mirror = enc.zero.backend == fhe.MIRROR
    zero = rationals.from_int(enc.zero)
    grid: list[list[EncryptedRational]] = [
        [zero] * (enc.n + 1) for _ in range(enc.m + 1)
    ]
    for i in range(1, enc.m + 1):
        for j in range(1, enc.n + 1):
            pix = enc.cells[i - 1][j - 1]
            if pix.v != 1:
                raise InvalidParams("image cells must have denominator 1")
            acc = fhe.hadd(pix.u, grid[i - 1][j].u)
            acc = fhe.hadd(acc, grid[i][j - 1].u)
            acc = fhe.hsub(acc, grid[i - 1][j - 1].u)
            if acc.noise_level >= threshold and not mirror:
                raise NoiseBudgetExceeded(
                    f"integral cell ({i}, {j}) exceeded the noise budget; "
                    f"enable or tighten the refresh policy"
                )
            acc = fhe.with_message_bound(acc, min(enc.B * i * j, params.q // 2))
            grid[i][j] = EncryptedRational(acc, 1)
        if (
            not mirror
            and refresh is not None
            and policy.row_interval
            and i % policy.row_interval == 0
        ):
            grid[i] = [grid[i][0]] + [
                EncryptedRational(fhe.recrypt(refresh, cell.u), 1)
                for cell in grid[i][1:]
            ]
    if not mirror and refresh is not None and policy.final_refresh:
        fresh = params.fresh_noise
        for i in range(1, enc.m + 1):
            grid[i] = [grid[i][0]] + [
                cell
                if cell.u.noise_level <= fresh
                else EncryptedRational(fhe.recrypt(refresh, cell.u), 1)
                for cell in grid[i][1:]
            ]
    return EncryptedIntegralImage(cells=grid, m=enc.m, n=enc.n, B=enc.B)


def region_sum(
    integral: EncryptedIntegralImage, rect: tuple[int, int, int, int]
) -> EncryptedRational:
    """Box sum over inclusive pixel rectangle (x0, y0, x1, y1).

    Four grid lookups, two subtractions, one addition; the denominator stays
    at 1.  Degenerate rectangles (x1 = x0 - 1 or y1 = y0 - 1) sum to zero.
    """
    x0, y0, x1, y1 = rect
    if x1 < x0 - 1 or y1 < y0 - 1:
        raise InvalidParams(f"malformed rectangle {rect}")
    if not (0 <= x0 and x1 + 1 <= integral.n and 0 <= y0 and y1 + 1 <= integral.m):
        raise InvalidParams(f"rectangle {rect} out of image bounds")
    g = integral.cells
    br = g[y1 + 1][x1 + 1].u
    tr = g[y0][x1 + 1].u
    bl = g[y1 + 1][x0].u
    tl = g[y0][x0].u
    u = fhe.hadd(fhe.hsub(fhe.hsub(br, tr), bl), tl)
    area = max(0, (x1 - x0 + 1)) * max(0, (y1 - y0 + 1))
    u = fhe.with_message_bound(u, min(integral.B * area, u.params.q // 2))
    return EncryptedRational(u, 1)


# ---------------------------------------------------------------------------
# filter responses, determinant, trace


def _weighted_response(
    integral: EncryptedIntegralImage,
    x: int,
    y: int,
    lobes,
    norm_area: int,
    V: int,
) -> EncryptedRational:
    terms = []
    for w, (dx0, dy0, dx1, dy1) in lobes:
        rs = region_sum(integral, (x + dx0, y + dy0, x + dx1, y + dy1))
        terms.append((quantize_constant(w, norm_area, V), rs))
    return rationals.weighted_sum_common_denominator(terms, V)


def haar_response(
    integral: EncryptedIntegralImage,
    x: int,
    y: int,
    geom: FilterGeometry,
    V: int,
) -> HaarResponse | None:
    """All three responses at image point (x, y), or None when the filter
    footprint leaves the image (the point is skipped, no border padding)."""
    if not footprint_fits(x, y, geom.half, integral.m, integral.n):
        return None
    L2 = geom.norm_area
    return HaarResponse(
        dxx=_weighted_response(integral, x, y, geom.dxx_lobes, L2, V),
        dyy=_weighted_response(integral, x, y, geom.dyy_lobes, L2, V),
        dxy=_weighted_response(integral, x, y, geom.dxy_lobes, L2, V),
    )


def hessian_determinant(h: HaarResponse) -> EncryptedRational:
    """dxx*dyy - 0.81*dxy^2 with the shared denominator factored out.

    The numerator is computed as 100*(dxx_u*dyy_u) - 81*(dxy_u)^2 using the
    exact integer constants 100 and 81, so the only remaining denominator is
    100*V^2.
    """
    V = h.V
    q = h.dxx.params.q
    mxx, myy, mxy = h.dxx.u.msg_bound, h.dyy.u.msg_bound, h.dxy.u.msg_bound
    if 2 * (100 * mxx * myy + 81 * mxy * mxy) >= q:
        warnings.warn(
            "determinant numerator may exceed q/2 at these parameters",
            RuntimeWarning,
        )
    p1 = fhe.scalar_mul(fhe.hmul(h.dxx.u, h.dyy.u), 100)
    p2 = fhe.scalar_mul(fhe.hmul(h.dxy.u, h.dxy.u), 81)
    rationals._checked_den(100 * V * V, q)
    return EncryptedRational(fhe.hsub(p1, p2), 100 * V * V)


def hessian_trace(h: HaarResponse) -> EncryptedRational:
    """dxx + dyy by blind rational addition; denominator becomes V^2."""
    return rationals.rat_add(h.dxx, h.dyy)


# ---------------------------------------------------------------------------
# pyramid construction and decryption


def build_pyramid(
    integral: EncryptedIntegralImage,
    config: PyramidConfig,
    V: int,
    workers: int = 1,
) -> ScaleSpacePyramid:
    """Determinant and trace at every in-bounds sample point.

    Sampling stride is 2**octave; every point is an independent pure
    computation over the immutable integral image, so ``workers`` > 1 simply
    fans the points out over a thread pool.
    """
    m, n, B = integral.m, integral.n, integral.B
    params0 = integral.cells[0][0].params
    if 2 * 1296 * B * B * m * m * n * n >= params0.q:
        warnings.warn(
            "worst-case response numerator bound exceeds q/2; "
            "decrypted responses may be wrong",
            RuntimeWarning,
        )
    geoms = {key: filter_geometry(*key, config.octaves, config.layers) for key in config.slots()}
    backend = integral.cells[0][0].u.backend

    def compute(task):
        (o, l), gy, gx = task
        geom = geoms[(o, l)]
        st = config.step(o)
        h = haar_response(integral, gx * st, gy * st, geom, V)
        if h is None:
            return task, None
        det = hessian_determinant(h)
        trace = hessian_trace(h)
        assert det.v == 100 * V * V and trace.v == V * V
        return task, PyramidCell(det=det, trace=trace)

    tasks = []
    grids = {}
    for key in config.slots():
        gh, gw = config.grid_shape(m, n, key[0])
        grids[key] = [[None] * gw for _ in range(gh)]
        tasks += [(key, gy, gx) for gy in range(gh) for gx in range(gw)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(compute, tasks))
    else:
        results = [compute(t) for t in tasks]
    for (key, gy, gx), cell in results:
        grids[key][gy][gx] = cell
    return ScaleSpacePyramid(
        config=config, V=V, m=m, n=n, B=B, backend=backend, grids=grids
    )


def decrypt_pyramid(sk, pyr: ScaleSpacePyramid) -> RationalPyramid:
    """Exact rational responses; failures are reported with their location."""
    grids = {}
    for key, grid in pyr.grids.items():
        out = []
        for gy, row in enumerate(grid):
            out_row = []
            for gx, cell in enumerate(row):
                if cell is None:
                    out_row.append(None)
                    continue
                st = pyr.config.step(key[0])
                try:
                    out_row.append(
                        RationalCell(
                            det=rationals.decrypt_rational(sk, cell.det),
                            trace=rationals.decrypt_rational(sk, cell.trace),
                        )
                    )
                except DecryptionFailure as exc:
                    raise DecryptionFailure(
                        f"decryption failed at octave={key[0]} layer={key[1]} "
                        f"x={gx * st} y={gy * st}: {exc}"
                    ) from exc
            out.append(out_row)
        grids[key] = out
    return RationalPyramid(
        config=pyr.config, V=pyr.V, m=pyr.m, n=pyr.n, B=pyr.B, grids=grids
    )


# ---------------------------------------------------------------------------
# decrypted-pyramid CSV export


PYRAMID_CSV_COLUMNS = [
    "octave",
    "layer",
    "x",
    "y",
    "det_numerator",
    "det_denominator",
    "trace_numerator",
    "trace_denominator",
    "det_float",
    "trace_float",
]


def write_pyramid_csv(path, pyr: RationalPyramid):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PYRAMID_CSV_COLUMNS)
        for (o, l) in sorted(pyr.grids):
            grid = pyr.grids[(o, l)]
            st = pyr.config.step(o)
            for gy, row in enumerate(grid):
                for gx, cell in enumerate(row):
                    if cell is None:
                        continue
                    writer.writerow(
                        [
                            o,
                            l,
                            gx * st,
                            gy * st,
                            cell.det.num,
                            cell.det.den,
                            cell.trace.num,
                            cell.trace.den,
                            repr(cell.det.to_float()),
                            repr(cell.trace.to_float()),
                        ]
                    )


def read_pyramid_csv(path, config: PyramidConfig, m: int, n: int) -> FloatPyramid:
    """Rebuild the float pyramid from an exported CSV."""
    grids = {}
    for key in config.slots():
        gh, gw = config.grid_shape(m, n, key[0])
        grids[key] = (np.full((gh, gw), np.nan), np.full((gh, gw), np.nan))
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            o, l = int(row["octave"]), int(row["layer"])
            st = 1 << o
            gy, gx = int(row["y"]) // st, int(row["x"]) // st
            det_pair = PlainRational(
                int(row["det_numerator"]), int(row["det_denominator"])
            )
            trace_pair = PlainRational(
                int(row["trace_numerator"]), int(row["trace_denominator"])
            )
            grids[(o, l)][0][gy, gx] = det_pair.to_float()
            grids[(o, l)][1][gy, gx] = trace_pair.to_float()
    return FloatPyramid(config=config, m=m, n=n, grids=grids)
