import numpy as np
import pytest

from csurf import fhe, rationals
from csurf.errors import DenominatorOverflow, InvalidParams
from csurf.rationals import (
    EncryptedRational,
    PlainRational,
    from_int,
    quantize_constant,
    rat_add,
    rat_const_mul,
    rat_mul,
    rat_sub,
    weighted_sum_common_denominator,
)


def enc(pk, m, seed=0):
    return fhe.encrypt(pk, m, np.random.default_rng(seed))


def dec_pair(sk, rat):
    pr = rationals.decrypt_rational(sk, rat)
    return pr.num, pr.den


# ---------------------------------------------------------------------------
# plain pairs


def test_plain_rational_never_reduces():
    r = PlainRational(2, 3) * PlainRational(3, 2)
    assert (r.num, r.den) == (6, 6)  # value 1, deliberately unreduced
    s = PlainRational(1, 2) + PlainRational(1, 3)
    assert (s.num, s.den) == (5, 6)
    z = PlainRational(7, 1) - PlainRational(7, 1)
    assert (z.num, z.den) == (0, 1)


def test_plain_rational_rejects_bad_denominator():
    with pytest.raises(InvalidParams):
        PlainRational(1, 0)


def test_quantize_constant_rounds_half_away():
    assert quantize_constant(1, 81, 10000) == 123  # 123.456...
    assert quantize_constant(-2, 81, 10000) == -247  # -246.91...
    assert quantize_constant(1, 2, 1) == 1  # 0.5 rounds away from zero
    assert quantize_constant(-1, 2, 1) == -1
    assert quantize_constant(81, 100, 10000) == 8100  # exact


def test_quantize_constant_error_within_delta():
    V = 10000
    for num, den in [(1, 81), (-2, 81), (1, 2601), (-2, 9801), (3, 7)]:
        k = quantize_constant(num, den, V)
        assert abs(k / V - num / den) <= 1 / (2 * V) + 1e-18


# ---------------------------------------------------------------------------
# encrypted rationals


def test_from_int(tiny_keys):
    sk, pk = tiny_keys
    for m in (5, 0, -3):
        r = from_int(enc(pk, m))
        assert r.v == 1
        assert dec_pair(sk, r) == (m, 1)


def test_rat_add_textbook(tiny_keys):
    sk, pk = tiny_keys
    half = EncryptedRational(enc(pk, 1), 2)
    third = EncryptedRational(enc(pk, 1, 1), 3)
    assert dec_pair(sk, rat_add(half, third)) == (5, 6)


def test_rat_add_blind_denominator_growth(tiny_keys):
    # a/V + b/V keeps the blind form (aV + bV) / V^2: no reduction happens
    sk, pk = tiny_keys
    V = 50
    a = EncryptedRational(enc(pk, 7), V)
    b = EncryptedRational(enc(pk, -2, 1), V)
    total = rat_add(a, b)
    assert total.v == V * V
    assert dec_pair(sk, total) == (7 * V + -2 * V, V * V)


def test_rat_sub_self_cancels(tiny_keys):
    sk, pk = tiny_keys
    x = from_int(enc(pk, 9))
    assert dec_pair(sk, rat_sub(x, x)) == (0, 1)


def test_rat_mul(tiny_keys):
    sk, pk = tiny_keys
    a = EncryptedRational(enc(pk, 2), 3)
    b = EncryptedRational(enc(pk, 3, 1), 2)
    assert dec_pair(sk, rat_mul(a, b)) == (6, 6)
    half_pair = rat_mul(
        EncryptedRational(enc(pk, 5), 50), EncryptedRational(enc(pk, 4, 1), 50)
    )
    assert half_pair.v == 2500


def test_rat_mul_annihilator(tiny_keys):
    sk, pk = tiny_keys
    x = EncryptedRational(enc(pk, 12), 7)
    zero = from_int(enc(pk, 0, 1))
    assert dec_pair(sk, rat_mul(x, zero)) == (0, 7)


def test_rat_const_mul(tiny_keys):
    sk, pk = tiny_keys
    x = from_int(enc(pk, 3))
    assert dec_pair(sk, rat_const_mul(x, PlainRational(81, 100))) == (243, 100)
    y = EncryptedRational(enc(pk, 5), 7)
    assert dec_pair(sk, rat_const_mul(y, PlainRational(1, 1))) == (5, 7)
    z = rat_const_mul(from_int(enc(pk, 2)), PlainRational(-2, 9801))
    assert dec_pair(sk, z) == (-4, 9801)


def test_weighted_sum_common_denominator(tiny_keys):
    sk, pk = tiny_keys
    V = 10000
    terms = [
        (1, from_int(enc(pk, 10))),
        (-2, from_int(enc(pk, 4, 1))),
        (1, from_int(enc(pk, 10, 2))),
    ]
    out = weighted_sum_common_denominator(terms, V)
    assert dec_pair(sk, out) == (12, V)


def test_weighted_sum_edge_cases(tiny_keys):
    sk, pk = tiny_keys
    V = 100
    zeros = [(w, from_int(enc(pk, 0, w + 2))) for w in (1, -2, 1)]
    assert dec_pair(sk, weighted_sum_common_denominator(zeros, V)) == (0, V)
    single = weighted_sum_common_denominator([(1, from_int(enc(pk, 9)))], V)
    assert dec_pair(sk, single) == (9, V)
    with pytest.raises(InvalidParams):
        weighted_sum_common_denominator([], V)
    with pytest.raises(InvalidParams):
        weighted_sum_common_denominator(
            [(1, EncryptedRational(enc(pk, 1), 2))], V
        )


def test_denominator_overflow_detected(tiny_keys, tiny_params):
    _, pk = tiny_keys
    big = tiny_params.q // 2 - 1
    a = EncryptedRational(enc(pk, 1), big)
    with pytest.raises(DenominatorOverflow):
        rat_mul(a, a)
    with pytest.raises(DenominatorOverflow):
        EncryptedRational(enc(pk, 1), tiny_params.q // 2)


def test_decrypt_rational_floats(tiny_keys):
    sk, pk = tiny_keys
    assert rationals.to_float(rationals.decrypt_rational(sk, from_int(enc(pk, 5)))) == 5.0
    pair = EncryptedRational(enc(pk, 81), 100)
    assert rationals.to_float(rationals.decrypt_rational(sk, pair)) == 0.81
    tiny = EncryptedRational(enc(pk, 12), 10000)
    assert rationals.to_float(rationals.decrypt_rational(sk, tiny)) == 0.0012


# ---------------------------------------------------------------------------
# properties


def _gen_rat_tree(rng, depth):
    if depth == 0 or rng.random() < 0.4:
        return ("leaf", int(rng.integers(-6, 7)), int(rng.integers(1, 5)))
    r = rng.random()
    if r < 0.35:
        return ("add", _gen_rat_tree(rng, depth - 1), _gen_rat_tree(rng, depth - 1))
    if r < 0.6:
        return ("sub", _gen_rat_tree(rng, depth - 1), _gen_rat_tree(rng, depth - 1))
    if r < 0.8:
        return (
            "cmul",
            (int(rng.integers(-5, 6)), int(rng.integers(1, 4))),
            _gen_rat_tree(rng, depth - 1),
        )
    return ("mul", _gen_rat_tree(rng, depth - 1), _gen_rat_tree(rng, depth - 1))


def _eval_plain(tree):
    kind = tree[0]
    if kind == "leaf":
        return PlainRational(tree[1], tree[2])
    if kind == "cmul":
        return _eval_plain(tree[2]).__mul__(PlainRational(*tree[1]))
    a, b = _eval_plain(tree[1]), _eval_plain(tree[2])
    return {"add": a.__add__, "sub": a.__sub__, "mul": a.__mul__}[kind](b)


def _eval_encrypted(tree, pk, rng):
    kind = tree[0]
    if kind == "leaf":
        return EncryptedRational(fhe.encrypt(pk, tree[1], rng), tree[2])
    if kind == "cmul":
        return rat_const_mul(_eval_encrypted(tree[2], pk, rng), PlainRational(*tree[1]))
    a = _eval_encrypted(tree[1], pk, rng)
    b = _eval_encrypted(tree[2], pk, rng)
    return {"add": rat_add, "sub": rat_sub, "mul": rat_mul}[kind](a, b)


def _run_exactness(sk, pk, params, trees, depth, seed):
    rng = np.random.default_rng(seed)
    enc_rng = np.random.default_rng(seed + 1)
    checked = 0
    attempts = 0
    while checked < trees and attempts < trees * 6:
        attempts += 1
        tree = _gen_rat_tree(rng, depth)
        expected = _eval_plain(tree)
        if abs(expected.num) >= params.q // 2 or expected.den >= params.q // 2:
            continue
        try:
            got = _eval_encrypted(tree, pk, enc_rng)
        except DenominatorOverflow:
            continue
        if got.u.noise_level >= params.decrypt_threshold:
            continue
        pr = rationals.decrypt_rational(sk, got)
        assert (pr.num, pr.den) == (expected.num, expected.den)
        checked += 1
    assert checked >= trees


def test_exactness_mirror_thousand_trees(mirror_toy):
    params, sk, pk = mirror_toy
    _run_exactness(sk, pk, params, trees=1000, depth=5, seed=50)


def test_exactness_gsw_tiny_trees(tiny_keys, tiny_params):
    sk, pk = tiny_keys
    _run_exactness(sk, pk, tiny_params, trees=40, depth=3, seed=60)


def test_denominator_is_input_determined(mirror_toy):
    # the result's v must not depend on encrypted values, only on structure
    params, sk, pk = mirror_toy
    rng = np.random.default_rng(70)
    for _ in range(50):
        tree = _gen_rat_tree(rng, 4)
        enc_rng = np.random.default_rng(0)
        try:
            v1 = _eval_encrypted(tree, pk, enc_rng).v
        except DenominatorOverflow:
            continue

        def valued(t):
            if t[0] == "leaf":
                return ("leaf", (t[1] + 3) % 7, t[2])  # change numerators only
            if t[0] == "cmul":
                return ("cmul", t[1], valued(t[2]))
            return (t[0], valued(t[1]), valued(t[2]))

        v2 = _eval_encrypted(valued(tree), pk, enc_rng).v
        assert v1 == v2
