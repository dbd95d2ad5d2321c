import numpy as np
import pytest

from csurf import fhe, pipeline, rationals, reference
from csurf.errors import InvalidParams, NoiseBudgetExceeded, DecryptionFailure
from csurf.fhe import RefreshService
from csurf.geometry import PyramidConfig, filter_geometry
from csurf.params import FheParams
from csurf.pgm import GrayImage
from csurf.pipeline import (
    RefreshPolicy,
    build_pyramid,
    decrypt_pyramid,
    encrypt_image,
    haar_response,
    hessian_determinant,
    hessian_trace,
    integral_image,
    read_pyramid_csv,
    region_sum,
    write_pyramid_csv,
)
from csurf.rationals import EncryptedRational


def mirror_setup(q=256**7, n=10):
    params = FheParams(q=q, n=n, sigma=1)
    sk, pk = fhe.keygen(params, seed=0, backend=fhe.MIRROR)
    return params, sk, pk


def make_integral(pk, pixels, B=255):
    img = GrayImage(pixels=np.asarray(pixels), B=B)
    enc = encrypt_image(pk, img, np.random.default_rng(0))
    return integral_image(enc)


# ---------------------------------------------------------------------------
# image encryption


def test_encrypt_image_pixelwise(mirror_toy):
    _, sk, pk = mirror_toy
    pixels = np.zeros((9, 9), dtype=int)
    pixels[0, :2] = [0, 1]
    pixels[1, :2] = [2, 3]
    enc = encrypt_image(pk, GrayImage(pixels=pixels), np.random.default_rng(0))
    got = [fhe.decrypt(sk, enc.cells[i][j].u) for i in (0, 1) for j in (0, 1)]
    assert got == [0, 1, 2, 3]
    assert all(cell.v == 1 for row in enc.cells for cell in row)


def test_encrypt_image_all_zero(mirror_toy):
    _, sk, pk = mirror_toy
    enc = encrypt_image(pk, GrayImage(pixels=np.zeros((9, 9), dtype=int)),
                        np.random.default_rng(0))
    assert all(fhe.decrypt(sk, c.u) == 0 for row in enc.cells for c in row)


# ---------------------------------------------------------------------------
# integral image


def test_integral_all_ones_closed_form(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.ones((10, 12), dtype=int))
    for i in (0, 1, 5, 10):
        for j in (0, 3, 12):
            assert fhe.decrypt(sk, integral.cells[i][j].u) == i * j


def test_integral_zero_image(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.zeros((9, 9), dtype=int))
    assert all(
        fhe.decrypt(sk, c.u) == 0 for row in integral.cells for c in row
    )


def test_integral_matches_prefix_sum_oracle(mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(8)
    pixels = rng.integers(0, 256, size=(9, 11))
    integral = make_integral(pk, pixels)
    oracle = np.zeros((10, 12), dtype=np.int64)
    oracle[1:, 1:] = np.cumsum(np.cumsum(pixels, axis=0), axis=1)
    for i in range(10):
        for j in range(12):
            assert fhe.decrypt(sk, integral.cells[i][j].u) == oracle[i, j]


def test_integral_noise_exceedance_without_refresh(tiny_params):
    sk, pk = fhe.keygen(tiny_params, seed=0)
    img = GrayImage(pixels=np.full((9, 9), 3), B=255)
    enc = encrypt_image(pk, img, np.random.default_rng(0))
    with pytest.raises(NoiseBudgetExceeded):
        integral_image(enc, refresh=None, policy=RefreshPolicy(row_interval=None))


def test_integral_refresh_keeps_noise_fresh():
    params = FheParams(q=256**4, n=2, sigma=1)
    sk, pk = fhe.keygen(params, seed=0)
    service = RefreshService(sk, pk, seed=1)
    img = GrayImage(pixels=np.full((10, 10), 2), B=3)
    enc = encrypt_image(pk, img, np.random.default_rng(0))
    integral = integral_image(enc, refresh=service, policy=RefreshPolicy(row_interval=4))
    assert service.refresh_count > 0
    for i in range(1, 11):
        for j in range(1, 11):
            cell = integral.cells[i][j]
            assert cell.u.noise_level <= params.fresh_noise
            assert fhe.decrypt(sk, cell.u) == 2 * i * j


# ---------------------------------------------------------------------------
# region sums


def test_region_sum_full_image_area(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.ones((9, 10), dtype=int))
    rs = region_sum(integral, (0, 0, 9, 8))
    assert rs.v == 1
    assert fhe.decrypt(sk, rs.u) == 90


def test_region_sum_empty_rect(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.ones((9, 9), dtype=int))
    assert fhe.decrypt(sk, region_sum(integral, (4, 4, 3, 3)).u) == 0


def test_region_sum_random_oracle(mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(3)
    pixels = rng.integers(0, 256, size=(12, 9))
    integral = make_integral(pk, pixels)
    for _ in range(25):
        x0, y0 = int(rng.integers(0, 9)), int(rng.integers(0, 12))
        x1, y1 = int(rng.integers(x0, 9)), int(rng.integers(y0, 12))
        expected = int(pixels[y0 : y1 + 1, x0 : x1 + 1].sum())
        assert fhe.decrypt(sk, region_sum(integral, (x0, y0, x1, y1)).u) == expected


def test_region_sum_out_of_bounds(mirror_toy):
    _, _, pk = mirror_toy
    integral = make_integral(pk, np.ones((9, 9), dtype=int))
    with pytest.raises(InvalidParams):
        region_sum(integral, (0, 0, 9, 5))
    with pytest.raises(InvalidParams):
        region_sum(integral, (-1, 0, 3, 3))


# ---------------------------------------------------------------------------
# filter responses


def test_haar_zero_image_is_zero(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.zeros((16, 16), dtype=int))
    h = haar_response(integral, 8, 8, filter_geometry(0, 0), 10000)
    for part in (h.dxx, h.dyy, h.dxy):
        assert part.v == 10000
        assert fhe.decrypt(sk, part.u) == 0


def test_haar_constant_image_zero_when_V_divisible(mirror_toy):
    # quantized weights cancel exactly whenever V is a multiple of L^2
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.full((16, 16), 97))
    h = haar_response(integral, 8, 8, filter_geometry(0, 0), V=8100)
    for part in (h.dxx, h.dyy, h.dxy):
        assert fhe.decrypt(sk, part.u) == 0


def test_haar_constant_image_dc_residue_bounded(mirror_toy):
    # at V = 10000 the three quantized d_xx weights sum to -1, so a constant
    # image leaves a small DC residue: -(pixel * lobe_area) / V
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.full((16, 16), 97))
    h = haar_response(integral, 8, 8, filter_geometry(0, 0), V=10000)
    assert fhe.decrypt(sk, h.dxx.u) == -97 * 15
    assert fhe.decrypt(sk, h.dxy.u) == 0  # the +1/-1 pattern always cancels


def test_haar_step_edge_matches_hand_computed_oracle(mirror_toy):
    _, sk, pk = mirror_toy
    pixels = np.zeros((16, 16), dtype=int)
    pixels[:, 8:] = 200
    integral = make_integral(pk, pixels)
    V = 10000
    h = haar_response(integral, 8, 8, filter_geometry(0, 0), V)
    # d_xx lobes at x-offsets [-4,-2], [-1,1], [2,4], 5 rows tall:
    # sums 0, 2000, 3000; weights round(1*V/81), round(-2*V/81), round(1*V/81)
    assert fhe.decrypt(sk, h.dxx.u) == 123 * 0 - 247 * 2000 + 123 * 3000
    # d_yy lobes are 5 wide (x in [6,10], three columns at 200) so each of the
    # three stacked lobes sums to 3 rows * 600
    assert fhe.decrypt(sk, h.dyy.u) == 123 * 1800 - 247 * 1800 + 123 * 1800
    # d_xy corner lobes: left pair entirely at 0, right pair entirely at 200
    assert fhe.decrypt(sk, h.dxy.u) == 123 * 0 - 123 * 1800 - 123 * 0 + 123 * 1800


def test_haar_footprint_clipped_returns_none(mirror_toy):
    _, _, pk = mirror_toy
    integral = make_integral(pk, np.zeros((16, 16), dtype=int))
    assert haar_response(integral, 3, 8, filter_geometry(0, 0), 100) is None
    assert haar_response(integral, 8, 8, filter_geometry(0, 3), 100) is None


def test_haar_stage_numerators_within_proof_bounds(mirror_toy):
    # random 32x32, all valid points: |dxx|,|dyy| <= 3*B*m*n, |dxy| <= 4*B*m*n
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(17)
    pixels = rng.integers(0, 256, size=(32, 32))
    integral = make_integral(pk, pixels)
    B, m, n = 255, 32, 32
    V = 10000
    for o, l in PyramidConfig().slots():
        geom = filter_geometry(o, l)
        step = 1 << o
        for y in range(geom.half, 32 - geom.half, step):
            for x in range(geom.half, 32 - geom.half, step):
                h = haar_response(integral, x, y, geom, V)
                assert abs(fhe.decrypt(sk, h.dxx.u)) <= 3 * B * m * n
                assert abs(fhe.decrypt(sk, h.dyy.u)) <= 3 * B * m * n
                assert abs(fhe.decrypt(sk, h.dxy.u)) <= 4 * B * m * n


# ---------------------------------------------------------------------------
# determinant and trace


def unit_response(pk, V, num_xx, num_yy, num_xy, seed=0):
    rng = np.random.default_rng(seed)
    return pipeline.HaarResponse(
        dxx=EncryptedRational(fhe.encrypt(pk, num_xx, rng), V),
        dyy=EncryptedRational(fhe.encrypt(pk, num_yy, rng), V),
        dxy=EncryptedRational(fhe.encrypt(pk, num_xy, rng), V),
    )


def test_determinant_identity_hessian(mirror_toy):
    _, sk, pk = mirror_toy
    V = 10000
    det = hessian_determinant(unit_response(pk, V, V, V, 0))
    pair = rationals.decrypt_rational(sk, det)
    assert (pair.num, pair.den) == (100 * V * V, 100 * V * V)
    assert pair.to_float() == 1.0


def test_determinant_pure_cross_term(mirror_toy):
    _, sk, pk = mirror_toy
    V = 10000
    det = hessian_determinant(unit_response(pk, V, 0, 0, V))
    pair = rationals.decrypt_rational(sk, det)
    assert pair.to_float() == -0.81
    assert pair.den == 100 * V * V


def test_determinant_and_trace_random_cross_backend():
    # q = 256**3 leaves enough noise budget for the determinant's multiply
    params = FheParams(q=256**3, n=2, sigma=1)
    sk, pk = fhe.keygen(params, seed=0)
    msk, mpk = fhe.keygen(params, seed=0, backend=fhe.MIRROR)
    rng = np.random.default_rng(5)
    V = 12
    for _ in range(10):
        nums = [int(rng.integers(-40, 41)) for _ in range(3)]
        det_g = hessian_determinant(unit_response(pk, V, *nums))
        det_m = hessian_determinant(unit_response(mpk, V, *nums))
        assert rationals.decrypt_rational(sk, det_g) == rationals.decrypt_rational(
            msk, det_m
        )
        tr_g = hessian_trace(unit_response(pk, V, *nums))
        tr_m = hessian_trace(unit_response(mpk, V, *nums))
        assert rationals.decrypt_rational(sk, tr_g) == rationals.decrypt_rational(
            msk, tr_m
        )
        assert tr_g.v == V * V and det_g.v == 100 * V * V


def test_trace_examples(mirror_toy):
    _, sk, pk = mirror_toy
    V = 10000
    zero = hessian_trace(unit_response(pk, V, 0, 0, 0))
    assert (zero.v) == V * V and fhe.decrypt(sk, zero.u) == 0
    tr = hessian_trace(unit_response(pk, V, 7, -3, 99))
    pair = rationals.decrypt_rational(sk, tr)
    assert (pair.num, pair.den) == (7 * V + -3 * V, V * V)


def test_determinant_warns_when_bounds_predict_wrap(tiny_keys):
    _, pk = tiny_keys
    h = unit_response(pk, 12, 500, 500, 500)
    with pytest.warns(RuntimeWarning):
        hessian_determinant(h)


# ---------------------------------------------------------------------------
# full pyramid


def test_pyramid_zero_image_all_zero(mirror_toy):
    _, sk, pk = mirror_toy
    integral = make_integral(pk, np.zeros((32, 32), dtype=int))
    pyr = build_pyramid(integral, PyramidConfig(), 10000)
    dec = decrypt_pyramid(sk, pyr)
    seen = 0
    for grid in dec.grids.values():
        for row in grid:
            for cell in row:
                if cell is None:
                    continue
                seen += 1
                assert cell.det.num == 0 and cell.trace.num == 0
    assert seen > 1000


def test_pyramid_denominator_schedule(mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(2)
    integral = make_integral(pk, rng.integers(0, 256, size=(16, 16)))
    V = 10000
    pyr = build_pyramid(integral, PyramidConfig(), V)
    for grid in pyr.grids.values():
        for row in grid:
            for cell in row:
                if cell is not None:
                    assert cell.det.v == 100 * V * V
                    assert cell.trace.v == V * V


def test_pyramid_mirror_matches_standalone_rational(mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(13)
    pixels = rng.integers(0, 256, size=(32, 32))
    img = GrayImage(pixels=pixels, B=255)
    config = PyramidConfig()
    enc = encrypt_image(pk, img, np.random.default_rng(0))
    dec = decrypt_pyramid(sk, build_pyramid(integral_image(enc), config, 10000))
    oracle = reference.exact_pyramid(img, config, 10000)
    for key in dec.grids:
        for row_a, row_b in zip(dec.grids[key], oracle.grids[key]):
            for a, b in zip(row_a, row_b):
                assert (a is None) == (b is None)
                if a is not None:
                    assert (a.det.num, a.det.den) == (b.det.num, b.det.den)
                    assert (a.trace.num, a.trace.den) == (b.trace.num, b.trace.den)


def test_pyramid_gsw_matches_mirror_small():
    params = FheParams(q=256**4, n=2, sigma=1)
    sk, pk = fhe.keygen(params, seed=0)
    msk, mpk = fhe.keygen(params, seed=0, backend=fhe.MIRROR)
    rng = np.random.default_rng(9)
    img = GrayImage(pixels=rng.integers(0, 4, size=(12, 12)), B=3)
    config = PyramidConfig(octaves=1, layers=4)
    V = 100

    service = RefreshService(sk, pk, seed=2)
    enc = encrypt_image(pk, img, np.random.default_rng(3))
    pyr = build_pyramid(integral_image(enc, service, RefreshPolicy()), config, V)
    dec = decrypt_pyramid(sk, pyr)

    menc = encrypt_image(mpk, img, np.random.default_rng(3))
    mdec = decrypt_pyramid(msk, build_pyramid(integral_image(menc), config, V))

    points = 0
    for key in dec.grids:
        for row_a, row_b in zip(dec.grids[key], mdec.grids[key]):
            for a, b in zip(row_a, row_b):
                assert (a is None) == (b is None)
                if a is not None:
                    points += 1
                    assert a == b
    assert points == 16  # 4x4 valid centers for the 9x9 filter on 12x12


def test_pyramid_worker_count_does_not_change_results(mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(4)
    integral = make_integral(pk, rng.integers(0, 256, size=(16, 16)))
    one = decrypt_pyramid(sk, build_pyramid(integral, PyramidConfig(), 10000, workers=1))
    many = decrypt_pyramid(sk, build_pyramid(integral, PyramidConfig(), 10000, workers=3))
    for key in one.grids:
        assert one.grids[key] == many.grids[key]


def test_pyramid_warns_when_numerator_bound_exceeds_ring():
    params = FheParams(q=256**4, n=2, sigma=1)
    _, pk = fhe.keygen(params, seed=0, backend=fhe.MIRROR)
    img = GrayImage(pixels=np.zeros((9, 9), dtype=int), B=255)
    enc = encrypt_image(pk, img, np.random.default_rng(0))
    integral = integral_image(enc)
    with pytest.warns(RuntimeWarning):
        build_pyramid(integral, PyramidConfig(octaves=1, layers=1), 10)


def test_decrypt_pyramid_reports_tamper_location(mirror_toy):
    params, sk, pk = mirror_toy
    integral = make_integral(pk, np.zeros((16, 16), dtype=int))
    pyr = build_pyramid(integral, PyramidConfig(octaves=1, layers=4), 10000)
    cell = pyr.grids[(0, 0)][8][8]
    bad_u = fhe.Ciphertext(
        cell.det.u.body,
        params.decrypt_threshold + 1,
        cell.det.u.msg_bound,
        params,
        cell.det.u.backend,
    )
    pyr.grids[(0, 0)][8][8] = pipeline.PyramidCell(
        det=EncryptedRational(bad_u, cell.det.v), trace=cell.trace
    )
    with pytest.raises(DecryptionFailure) as err:
        decrypt_pyramid(sk, pyr)
    assert "octave=0" in str(err.value) and "x=8" in str(err.value)


def test_pyramid_csv_roundtrip(tmp_path, mirror_toy):
    _, sk, pk = mirror_toy
    rng = np.random.default_rng(6)
    integral = make_integral(pk, rng.integers(0, 256, size=(16, 16)))
    config = PyramidConfig()
    dec = decrypt_pyramid(sk, build_pyramid(integral, config, 10000))
    path = tmp_path / "pyr.csv"
    write_pyramid_csv(path, dec)
    back = read_pyramid_csv(path, config, 16, 16)
    direct = dec.to_float()
    for key in direct.grids:
        for a, b in zip(direct.grids[key], back.grids[key]):
            np.testing.assert_array_equal(a, b)
