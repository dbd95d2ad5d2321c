"""Rational arithmetic over encrypted numerators with plaintext denominators.

A value is represented as u * v^-1 where the numerator u is a ciphertext and
the denominator v is a tracked positive integer.  Nothing is ever reduced:
an encrypted numerator cannot be inspected, so denominators grow blindly
under the textbook cross-multiplication rules.  Because every denominator in
the detector originates from public constants (filter weights, 81/100, the
base denominator V), tracking v in the clear leaks only public algorithm
parameters and halves the ciphertext count.

``PlainRational`` mirrors the exact same no-reduction arithmetic on plain
integers and is the reference model the encrypted layer is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import fhe
from .errors import DenominatorOverflow, InvalidParams, ParamsMismatch
from .fhe import Ciphertext


@dataclass(frozen=True)
class PlainRational:
    """Unreduced integer pair num/den, den >= 1.  No gcd, ever."""

    num: int
    den: int = 1

    def __post_init__(self):
        if self.den < 1:
            raise InvalidParams(f"denominator must be >= 1, got {self.den}")

    def __add__(self, other: "PlainRational") -> "PlainRational":
        return PlainRational(
            self.num * other.den + other.num * self.den, self.den * other.den
        )

    def __sub__(self, other: "PlainRational") -> "PlainRational":
        return PlainRational(
            self.num * other.den - other.num * self.den, self.den * other.den
        )

    def __mul__(self, other: "PlainRational") -> "PlainRational":
        return PlainRational(self.num * other.num, self.den * other.den)

    def scale(self, k: int) -> "PlainRational":
        return PlainRational(self.num * k, self.den)

    def to_float(self) -> float:
        return self.num / self.den

    def __str__(self):
        return f"{self.num}/{self.den}"


def quantize_constant(num: int, den: int, V: int) -> int:
    """round(num/den * V), half away from zero; exact integer arithmetic.

    The quantized constant k satisfies |k/V - num/den| <= 1/(2V), the
    per-constant accuracy the error bounds are stated in.
    """
    if den <= 0 or V < 1:
        raise InvalidParams("denominator and V must be positive")
    a = 2 * abs(num) * V + den
    k = a // (2 * den)
    return k if num >= 0 else -k


@dataclass(frozen=True)
class EncryptedRational:
    """Encrypted numerator with plaintext denominator; value is dec(u)/v."""

    u: Ciphertext
    v: int

    def __post_init__(self):
        if self.v < 1:
            raise InvalidParams(f"denominator must be >= 1, got {self.v}")
        if self.v >= self.u.params.q // 2:
            raise DenominatorOverflow(
                f"denominator {self.v} reached q/2 for q={self.u.params.q}"
            )

    @property
    def params(self):
        return self.u.params


def from_int(ct: Ciphertext) -> EncryptedRational:
    """Wrap an integer ciphertext as the rational dec(ct)/1."""
    return EncryptedRational(ct, 1)


def _check_shared(a: EncryptedRational, b: EncryptedRational):
    if a.params != b.params or a.u.backend != b.u.backend:
        raise ParamsMismatch("rational operands use different parameters")


def _checked_den(v: int, q: int) -> int:
    if v >= q // 2:
        raise DenominatorOverflow(f"denominator {v} reached q/2 for q={q}")
    return v


def rat_add(a: EncryptedRational, b: EncryptedRational) -> EncryptedRational:
    """Blind cross-multiplication: (ua*vb + ub*va) / (va*vb)."""
    _check_shared(a, b)
    v = _checked_den(a.v * b.v, a.params.q)
    u = fhe.hadd(fhe.scalar_mul(a.u, b.v), fhe.scalar_mul(b.u, a.v))
    return EncryptedRational(u, v)


def rat_sub(a: EncryptedRational, b: EncryptedRational) -> EncryptedRational:
    _check_shared(a, b)
    v = _checked_den(a.v * b.v, a.params.q)
    u = fhe.hsub(fhe.scalar_mul(a.u, b.v), fhe.scalar_mul(b.u, a.v))
    return EncryptedRational(u, v)


def rat_mul(a: EncryptedRational, b: EncryptedRational) -> EncryptedRational:
    _check_shared(a, b)
    v = _checked_den(a.v * b.v, a.params.q)
    return EncryptedRational(fhe.hmul(a.u, b.u), v)


def rat_const_mul(a: EncryptedRational, c: PlainRational) -> EncryptedRational:
    """Multiply by a plaintext rational constant."""
    v = _checked_den(a.v * c.den, a.params.q)
    return EncryptedRational(fhe.scalar_mul(a.u, c.num), v)


def weighted_sum_common_denominator(
    terms: list[tuple[int, EncryptedRational]], V: int
) -> EncryptedRational:
    """Compute (sum_i w_i * u_i) / V over integer-valued rationals.

    All inputs must have denominator 1 (region sums off an integral image);
    the single base denominator V is introduced once for the whole sum, which
    is what keeps denominator growth at V per filter response instead of V^k.
    """
    if not terms:
        raise InvalidParams("weighted sum needs at least one term")
    acc = None
    for w, x in terms:
        if x.v != 1:
            raise InvalidParams("weighted-sum terms must have denominator 1")
        scaled = fhe.scalar_mul(x.u, w)
        acc = scaled if acc is None else fhe.hadd(acc, scaled)
    first = terms[0][1]
    _checked_den(V, first.params.q)
    return EncryptedRational(acc, V)


def decrypt_rational(sk, a: EncryptedRational) -> PlainRational:
    """Exact numerator/denominator pair."""
    return PlainRational(fhe.decrypt(sk, a.u), a.v)


def to_float(pr: PlainRational) -> float:
    """Double-precision projection of an exact pair."""
    return pr.to_float()
