"""Leveled homomorphic encryption over Z_q, matrix style, plus a cleartext mirror.

Two backends expose one interface:

* ``gsw`` -- ciphertexts are N x N binary matrices over Z_q (N = (n+1)*ell).
  A ciphertext C of message mu satisfies C @ v = mu*v + e for the secret
  gadget vector v, with |e| small.  Addition is matrix addition, multiplication
  is matrix multiplication, and every result is re-expanded to binary form
  ("flattened"), which preserves C @ v exactly and costs no noise.  Messages
  are full-width ring elements recovered bit by bit from the ciphertext rows
  paired with the powers-of-two entries of v.
* ``mirror`` -- stores the plaintext ring value directly and applies the same
  modular arithmetic with zero noise.  It exists so that full-size pipelines
  can run fast and serve as an exact oracle for the real backend.

The backend requires a power-of-two modulus: then 2**64 wraparound arithmetic
on uint64 arrays is exact modulo q, which is what makes the matrix operations
cheap (plain BLAS does the heavy lifting, see ``_matmul_bits``).

Noise accounting is plaintext-side bookkeeping: every ciphertext carries a
conservative upper bound on |e| (``noise_level``) and on the magnitude of its
signed message (``msg_bound``).  The update rules, with N the ciphertext
dimension and M* the message bounds:

    fresh encryption      m_samples * sigma
    hadd / hsub           n_a + n_b
    scalar_mul by k       max(min(|k|, N), 1) * n_a
    hmul                  min(M_b*n_a + N*n_b, M_a*n_b + N*n_a), floored at
                          max(n_a, n_b)
    recrypt               reset to the fresh bound

Decryption refuses to run when the estimate reaches q/4 (the bit-recovery
threshold).  A ciphertext whose *true* noise overflowed despite a small
estimate decrypts to garbage; the estimates are sound for the rules above,
so that only happens if a caller supplies a wrong ``msg_bound`` override.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import (
    DecryptionFailure,
    InvalidParams,
    MessageRangeError,
    ParamsMismatch,
)
from .params import FheParams

GSW = "gsw"
MIRROR = "mirror"

_U64_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# message space helpers


def signed_to_ring(value: int, q: int) -> int:
    """Map a signed message in [-q/2, q/2) to its ring representative."""
    if not -(q // 2) <= value <= (q - 1) // 2:
        raise MessageRangeError(f"message {value} outside [-q/2, q/2) for q={q}")
    return value % q


def ring_to_signed(r: int, q: int) -> int:
    """Inverse of signed_to_ring (two's-complement reading of Z_q)."""
    r %= q
    return r if r <= (q - 1) // 2 else r - q


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# keys and ciphertexts


@dataclass(frozen=True)
class SecretKey:
    params: FheParams
    s: np.ndarray  # (n+1,) uint64, s[0] == 1
    v: np.ndarray  # (N,) uint64, gadget expansion of s
    backend: str = GSW


@dataclass(frozen=True)
class PublicKey:
    params: FheParams
    A: np.ndarray  # (m, n+1) uint64 with A @ s = e (small)
    backend: str = GSW


@dataclass(frozen=True)
class MirrorSecretKey:
    params: FheParams
    backend: str = MIRROR


@dataclass(frozen=True)
class MirrorPublicKey:
    params: FheParams
    backend: str = MIRROR


@dataclass(frozen=True)
class Ciphertext:
    """One encrypted ring element.

    ``body`` is an (N, N) binary uint8 matrix for the gsw backend, or the
    plain ring value (int) for the mirror backend.  Instances are immutable;
    all operations return new ciphertexts.
    """

    body: object
    noise_level: int
    msg_bound: int
    params: FheParams
    backend: str

    def __repr__(self):  # keep reprs short; bodies are megabytes
        return (
            f"Ciphertext(backend={self.backend}, noise_level={self.noise_level}, "
            f"msg_bound={self.msg_bound}, q={self.params.q})"
        )


def _check_pair(a: Ciphertext, b: Ciphertext):
    if a.params != b.params or a.backend != b.backend:
        raise ParamsMismatch("operands use different parameters or backends")


def _cap_bound(bound: int, q: int) -> int:
    # |signed value| never exceeds q/2, whatever the expression did
    return min(bound, q // 2)


# ---------------------------------------------------------------------------
# gadget arithmetic (all exact mod q thanks to q | 2**64)


def _mask(params: FheParams) -> np.uint64:
    if params.q == 2**64:
        return _U64_FULL
    return np.uint64(params.q - 1)


def _powers_of_two(params: FheParams) -> np.ndarray:
    return (np.uint64(1) << np.arange(params.ell, dtype=np.uint64)) & _mask(params)


def _bit_compose(rows: np.ndarray, params: FheParams) -> np.ndarray:
    """Collapse gadget-expanded rows (r, N) to ring rows (r, n+1)."""
    r = rows.shape[0]
    grouped = rows.astype(np.uint64).reshape(r, params.n + 1, params.ell)
    return (grouped @ _powers_of_two(params)) & _mask(params)


def _bit_decomp(rows: np.ndarray, params: FheParams) -> np.ndarray:
    """Expand ring rows (r, n+1) to their bits, shape (r, N), uint8."""
    shifts = np.arange(params.ell, dtype=np.uint64)
    bits = (rows[:, :, None] >> shifts[None, None, :]) & np.uint64(1)
    return bits.reshape(rows.shape[0], params.N).astype(np.uint8)


def _flatten(mat: np.ndarray, params: FheParams) -> np.ndarray:
    """Re-binarize a matrix while preserving its product with the gadget v."""
    return _bit_decomp(_bit_compose(mat, params), params)


def _matmul_bits(a_bits: np.ndarray, b: np.ndarray, params: FheParams) -> np.ndarray:
    """Exact (a_bits @ b) mod q where a_bits is 0/1.

    Runs on float64 BLAS: the right operand is split into 16-bit limbs so
    every dot product stays below 2**53 and is therefore exact.  When b is
    itself binary a single GEMM suffices.
    """
    af = a_bits.astype(np.float64)
    if b.dtype == np.uint8:  # binary @ binary, accumulation <= N
        prod = af @ b.astype(np.float64)
        return prod.astype(np.uint64) & _mask(params)
    out = np.zeros((a_bits.shape[0],) + b.shape[1:], dtype=np.uint64)
    for k in range(4):
        limb = ((b >> np.uint64(16 * k)) & np.uint64(0xFFFF)).astype(np.float64)
        out += (af @ limb).astype(np.uint64) << np.uint64(16 * k)
    return out & _mask(params)


def _uniform_ring(rng: np.random.Generator, shape, params: FheParams) -> np.ndarray:
    hi = rng.integers(0, 2**32, size=shape, dtype=np.uint64)
    lo = rng.integers(0, 2**32, size=shape, dtype=np.uint64)
    return ((hi << np.uint64(32)) | lo) & _mask(params)


# ---------------------------------------------------------------------------
# key generation / encryption / decryption


def keygen(params: FheParams, seed: int = 0, backend: str = GSW):
    """Deterministic key pair for the given seed."""
    if backend == MIRROR:
        return MirrorSecretKey(params), MirrorPublicKey(params)
    if backend != GSW:
        raise InvalidParams(f"unknown backend {backend!r}")
    if not params.is_power_of_two():
        raise InvalidParams("gsw backend requires a power-of-two modulus")
    rng = np.random.default_rng(seed)
    q, n, m = params.q, params.n, params.num_samples

    t = _uniform_ring(rng, n, params)
    s = np.empty(n + 1, dtype=np.uint64)
    s[0] = 1
    s[1:] = (np.uint64(0) - t) & _mask(params)

    B = _uniform_ring(rng, (m, n), params)
    e = rng.integers(-params.sigma, params.sigma + 1, size=m).astype(np.int64)
    b = (B @ t + e.astype(np.uint64)) & _mask(params)
    A = np.column_stack([b, B])

    v = (s[:, None] * _powers_of_two(params)[None, :]).reshape(-1) & _mask(params)
    return SecretKey(params, s, v), PublicKey(params, A)


def encrypt(pk, message: int, rng) -> Ciphertext:
    """Encrypt a signed message in [-q/2, q/2)."""
    params = pk.params
    mu = signed_to_ring(int(message), params.q)
    if pk.backend == MIRROR:
        return Ciphertext(mu, 0, abs(int(message)), params, MIRROR)
    rng = _as_rng(rng)
    N, m = params.N, params.num_samples
    R = rng.integers(0, 2, size=(N, m), dtype=np.uint8)
    RA = _matmul_bits(R, pk.A, params)
    body = _bit_decomp(RA, params).astype(np.uint64)
    body[np.diag_indices(N)] += np.uint64(mu)
    body &= _mask(params)
    return Ciphertext(
        _flatten(body, params), params.fresh_noise, abs(int(message)), params, GSW
    )


def decrypt(sk, ct: Ciphertext) -> int:
    """Recover the signed message; refuses over-noised ciphertexts."""
    params = ct.params
    if ct.noise_level >= params.decrypt_threshold:
        raise DecryptionFailure(
            f"noise estimate {ct.noise_level} at or above threshold "
            f"{params.decrypt_threshold}"
        )
    if ct.backend == MIRROR:
        return ring_to_signed(int(ct.body), params.q)
    if sk.params != params:
        raise ParamsMismatch("key and ciphertext parameters differ")
    q, ell = params.q, params.ell
    # rows j < ell pair with v_j = 2**j:  x_j = mu * 2**j + e_j  (mod q)
    x = (ct.body[:ell].astype(np.uint64) @ sk.v) & _mask(params)
    mu = 0
    quarter, three_quarters = q // 4, 3 * (q // 4)
    for t in range(ell):
        j = ell - 1 - t
        y = (int(x[j]) - ((mu << j) % q)) % q
        if quarter <= y < three_quarters:
            mu |= 1 << t
    return ring_to_signed(mu, q)


# ---------------------------------------------------------------------------
# homomorphic operations


def hadd(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext addition: decrypts to (m_a + m_b) mod q, signed."""
    _check_pair(a, b)
    q = a.params.q
    bound = _cap_bound(a.msg_bound + b.msg_bound, q)
    noise = a.noise_level + b.noise_level
    if a.backend == MIRROR:
        return Ciphertext((a.body + b.body) % q, noise, bound, a.params, MIRROR)
    raw = a.body.astype(np.uint64) + b.body
    return Ciphertext(_flatten(raw, a.params), noise, bound, a.params, GSW)


def hsub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext subtraction via two's complement."""
    _check_pair(a, b)
    q = a.params.q
    bound = _cap_bound(a.msg_bound + b.msg_bound, q)
    noise = a.noise_level + b.noise_level
    if a.backend == MIRROR:
        return Ciphertext((a.body - b.body) % q, noise, bound, a.params, MIRROR)
    raw = (a.body.astype(np.uint64) - b.body) & _mask(a.params)
    return Ciphertext(_flatten(raw, a.params), noise, bound, a.params, GSW)


@lru_cache(maxsize=64)
def _const_gadget(params: FheParams, k_ring: int) -> np.ndarray:
    """Binary matrix G_k with G_k @ v = k*v; used for large-constant scaling."""
    diag = np.zeros((params.N, params.N), dtype=np.uint64)
    diag[np.diag_indices(params.N)] = np.uint64(k_ring)
    return _flatten(diag, params)


def scalar_mul(a: Ciphertext, k: int) -> Ciphertext:
    """Multiply by a plaintext constant k in [-q/2, q/2)."""
    params = a.params
    k = int(k)
    k_ring = signed_to_ring(k, params.q)
    bound = _cap_bound(abs(k) * a.msg_bound, params.q)
    noise = max(min(abs(k), params.N), 1) * a.noise_level
    if a.backend == MIRROR:
        return Ciphertext((a.body * k_ring) % params.q, noise, bound, params, MIRROR)
    if abs(k) <= params.N:
        # entrywise scaling keeps noise at |k|*e and costs only O(N^2)
        raw = (a.body.astype(np.uint64) * np.uint64(k_ring)) & _mask(params)
        body = _flatten(raw, params)
    else:
        gadget = _const_gadget(params, k_ring)
        body = _flatten(_matmul_bits(gadget, a.body, params), params)
    return Ciphertext(body, noise, bound, params, GSW)


def hmul(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext multiplication: decrypts to (m_a * m_b) mod q, signed.

    The product C_left @ C_right carries noise m_right*e_left + N*e_right,
    so the operand order is chosen to minimize the estimate.
    """
    _check_pair(a, b)
    params = a.params
    N = params.N
    bound = _cap_bound(a.msg_bound * b.msg_bound, params.q)
    cost_ab = b.msg_bound * a.noise_level + N * b.noise_level
    cost_ba = a.msg_bound * b.noise_level + N * a.noise_level
    noise = max(min(cost_ab, cost_ba), a.noise_level, b.noise_level)
    if a.backend == MIRROR:
        return Ciphertext((a.body * b.body) % params.q, noise, bound, params, MIRROR)
    left, right = (a, b) if cost_ab <= cost_ba else (b, a)
    prod = _matmul_bits(left.body, right.body, params)
    return Ciphertext(_flatten(prod, params), noise, bound, params, GSW)


def noise_estimate(ct: Ciphertext) -> int:
    """Conservative upper bound on the ciphertext noise."""
    return ct.noise_level


def with_message_bound(ct: Ciphertext, bound: int) -> Ciphertext:
    """Attach a caller-supplied bound on |signed message|.

    The caller asserts the bound from public knowledge (e.g. pixel range and
    region areas); it feeds the multiplicative noise estimates.  The mirror
    backend verifies the claim against the actual value.
    """
    bound = int(bound)
    if bound < 0:
        raise InvalidParams("message bound must be non-negative")
    if ct.backend == MIRROR:
        actual = abs(ring_to_signed(int(ct.body), ct.params.q))
        if actual > bound:
            raise InvalidParams(
                f"declared message bound {bound} below actual magnitude {actual}"
            )
    return replace(ct, msg_bound=_cap_bound(bound, ct.params.q))


# ---------------------------------------------------------------------------
# refresh boundary


class RefreshService:
    """Decrypt-and-re-encrypt boundary owned by the keyholder.

    Stands in for the client round trip that replaces a noisy ciphertext
    with a fresh encryption of the same value.  Requests are serialized per
    key pair; the message bound is preserved rather than tightened so the
    refreshed ciphertext reveals nothing new.
    """

    def __init__(self, sk, pk, seed: int = 0):
        if sk.params != pk.params or sk.backend != pk.backend:
            raise ParamsMismatch("secret/public key mismatch")
        self.sk = sk
        self.pk = pk
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()
        self.refresh_count = 0

    def refresh(self, ct: Ciphertext) -> Ciphertext:
        if ct.params != self.sk.params or ct.backend != self.sk.backend:
            raise ParamsMismatch("ciphertext does not match this key pair")
        with self._lock:
            value = decrypt(self.sk, ct)
            fresh = encrypt(self.pk, value, self._rng)
            self.refresh_count += 1
        return replace(fresh, msg_bound=ct.msg_bound)


def recrypt(service: RefreshService, ct: Ciphertext) -> Ciphertext:
    """Refresh a ciphertext through the keyholder boundary."""
    return service.refresh(ct)
