"""Versioned binary file formats.

Every object starts with an ASCII magic string and a format-version byte;
the version byte doubles as the backend tag (1 = matrix ciphertexts,
2 = mirror values).  All integers are 64-bit little-endian unsigned words.
A modulus of 2**64 is stored as 0 since it does not fit in a word; moduli
above 2**64 are rejected outright.

Layouts
-------
ciphertext  "CSURF-CT"  ver  q n ell N  body  noise_level
            body: N*N ring elements (version 1) or one value (version 2)
secret key  "CSURF-SK"  ver  q n ell N  sigma label  s[0..n]
public key  "CSURF-PK"  ver  q n ell N  sigma label  A (N rows of n+1)
image       "CSURF-IMG" ver  m n B      m*n ciphertext blocks, zero block
pyramid     "CSURF-PYR" ver  octaves layers m n B V  per-point blocks
            per point: present flag byte; when 1, an encrypted-rational
            block (ciphertext block + denominator word) for the determinant
            then one for the trace, in (octave, layer, row, column) order

Key files carry sigma and the security label after the shared params block
because re-encryption needs them; ciphertext files do not.  Message-bound
bookkeeping is not serialized: loaded ciphertexts get the conservative q/2
bound, and loaders that know better (the image loader knows B) re-tighten.
"""

from __future__ import annotations

import struct

import numpy as np

from . import fhe
from .errors import FormatError
from .fhe import (
    Ciphertext,
    MirrorPublicKey,
    MirrorSecretKey,
    PublicKey,
    SecretKey,
)
from .geometry import PyramidConfig
from .params import FheParams
from .pipeline import EncryptedImage, PyramidCell, ScaleSpacePyramid
from .rationals import EncryptedRational

MAGIC_CT = b"CSURF-CT"
MAGIC_SK = b"CSURF-SK"
MAGIC_PK = b"CSURF-PK"
MAGIC_IMG = b"CSURF-IMG"
MAGIC_PYR = b"CSURF-PYR"

VERSION_GSW = 1
VERSION_MIRROR = 2

_LABELS = {0: "toy", 1: "custom"}
_LABEL_CODES = {"toy": 0, "custom": 1}


def _pack_u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def _read_exact(f, count: int) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise FormatError("unexpected end of file")
    return data


def _read_u64(f) -> int:
    return struct.unpack("<Q", _read_exact(f, 8))[0]


def _read_magic(f, expected: bytes):
    got = _read_exact(f, len(expected))
    if got != expected:
        raise FormatError(f"bad magic {got!r}, expected {expected!r}")


def _version_for(backend: str) -> int:
    return VERSION_GSW if backend == fhe.GSW else VERSION_MIRROR


def _backend_for(version: int) -> str:
    if version == VERSION_GSW:
        return fhe.GSW
    if version == VERSION_MIRROR:
        return fhe.MIRROR
    raise FormatError(f"unsupported format version {version}")


def _encode_q(q: int) -> int:
    return 0 if q == 2**64 else q


def _decode_q(word: int) -> int:
    return 2**64 if word == 0 else word


def _write_params(f, params: FheParams):
    f.write(_pack_u64(_encode_q(params.q)))
    f.write(_pack_u64(params.n))
    f.write(_pack_u64(params.ell))
    f.write(_pack_u64(params.N))


def _read_params_block(f) -> tuple[int, int, int, int]:
    q = _decode_q(_read_u64(f))
    n = _read_u64(f)
    ell = _read_u64(f)
    N = _read_u64(f)
    return q, n, ell, N


def _params_from_block(q, n, ell, N, sigma=0, label="custom") -> FheParams:
    params = FheParams(q=q, n=n, sigma=sigma, security_label=label)
    if params.ell != ell or params.N != N:
        raise FormatError(
            f"inconsistent params block: ell/N = {ell}/{N}, "
            f"expected {params.ell}/{params.N} for q={q}, n={n}"
        )
    return params


# ---------------------------------------------------------------------------
# ciphertext blocks


def write_ciphertext_block(f, ct: Ciphertext):
    f.write(MAGIC_CT)
    f.write(bytes([_version_for(ct.backend)]))
    _write_params(f, ct.params)
    if ct.backend == fhe.GSW:
        f.write(ct.body.astype("<u8").tobytes())
    else:
        f.write(_pack_u64(int(ct.body)))
    f.write(_pack_u64(min(ct.noise_level, 2**64 - 1)))


def read_ciphertext_block(f, params: FheParams | None = None) -> Ciphertext:
    _read_magic(f, MAGIC_CT)
    version = _read_exact(f, 1)[0]
    backend = _backend_for(version)
    q, n, ell, N = _read_params_block(f)
    if params is not None:
        if (params.q, params.n, params.ell, params.N) != (q, n, ell, N):
            raise FormatError("ciphertext params do not match the expected set")
    else:
        params = _params_from_block(q, n, ell, N)
    if backend == fhe.GSW:
        raw = np.frombuffer(_read_exact(f, 8 * N * N), dtype="<u8").reshape(N, N)
        if q < 2**64 and int(raw.max()) >= q:
            raise FormatError("ciphertext contains ring elements >= q")
        body = fhe._flatten(raw.astype(np.uint64), params)
    else:
        body = _read_u64(f)
        if body >= q:
            raise FormatError("ciphertext value >= q")
    noise = _read_u64(f)
    return Ciphertext(body, noise, params.q // 2, params, backend)


def save_ciphertext(path, ct: Ciphertext):
    with open(path, "wb") as f:
        write_ciphertext_block(f, ct)


def load_ciphertext(path, params: FheParams | None = None) -> Ciphertext:
    with open(path, "rb") as f:
        return read_ciphertext_block(f, params)


# ---------------------------------------------------------------------------
# keys


def _write_key_header(f, magic: bytes, params: FheParams, backend: str):
    f.write(magic)
    f.write(bytes([_version_for(backend)]))
    _write_params(f, params)
    f.write(_pack_u64(params.sigma))
    f.write(bytes([_LABEL_CODES.get(params.security_label, 1)]))


def _read_key_header(f, magic: bytes) -> tuple[FheParams, str]:
    _read_magic(f, magic)
    version = _read_exact(f, 1)[0]
    backend = _backend_for(version)
    q, n, ell, N = _read_params_block(f)
    sigma = _read_u64(f)
    label = _LABELS.get(_read_exact(f, 1)[0], "custom")
    return _params_from_block(q, n, ell, N, sigma, label), backend


def save_secret_key(path, sk):
    with open(path, "wb") as f:
        _write_key_header(f, MAGIC_SK, sk.params, sk.backend)
        if sk.backend == fhe.GSW:
            f.write(sk.s.astype("<u8").tobytes())


def load_secret_key(path):
    with open(path, "rb") as f:
        params, backend = _read_key_header(f, MAGIC_SK)
        if backend == fhe.MIRROR:
            return MirrorSecretKey(params)
        s = np.frombuffer(_read_exact(f, 8 * (params.n + 1)), dtype="<u8").astype(
            np.uint64
        )
        v = (s[:, None] * fhe._powers_of_two(params)[None, :]).reshape(-1) & fhe._mask(
            params
        )
        return SecretKey(params, s, v)


def save_public_key(path, pk):
    with open(path, "wb") as f:
        _write_key_header(f, MAGIC_PK, pk.params, pk.backend)
        if pk.backend == fhe.GSW:
            f.write(pk.A.astype("<u8").tobytes())


def load_public_key(path):
    with open(path, "rb") as f:
        params, backend = _read_key_header(f, MAGIC_PK)
        if backend == fhe.MIRROR:
            return MirrorPublicKey(params)
        m = params.num_samples
        A = (
            np.frombuffer(_read_exact(f, 8 * m * (params.n + 1)), dtype="<u8")
            .astype(np.uint64)
            .reshape(m, params.n + 1)
        )
        return PublicKey(params, A)


# ---------------------------------------------------------------------------
# encrypted rationals


def write_encrypted_rational_block(f, rat: EncryptedRational):
    write_ciphertext_block(f, rat.u)
    f.write(_pack_u64(rat.v))


def read_encrypted_rational_block(f, params: FheParams | None = None) -> EncryptedRational:
    u = read_ciphertext_block(f, params)
    v = _read_u64(f)
    return EncryptedRational(u, v)


# ---------------------------------------------------------------------------
# encrypted images


def save_encrypted_image(path, img: EncryptedImage):
    with open(path, "wb") as f:
        f.write(MAGIC_IMG)
        f.write(bytes([_version_for(img.zero.backend)]))
        f.write(_pack_u64(img.m))
        f.write(_pack_u64(img.n))
        f.write(_pack_u64(img.B))
        for row in img.cells:
            for cell in row:
                write_ciphertext_block(f, cell.u)
        write_ciphertext_block(f, img.zero)


def load_encrypted_image(path, params: FheParams | None = None) -> EncryptedImage:
    from .rationals import from_int

    with open(path, "rb") as f:
        _read_magic(f, MAGIC_IMG)
        _backend_for(_read_exact(f, 1)[0])
        m = _read_u64(f)
        n = _read_u64(f)
        B = _read_u64(f)
        cells = []
        for _ in range(m):
            row = []
            for _ in range(n):
                ct = read_ciphertext_block(f, params)
                row.append(from_int(fhe.with_message_bound(ct, B)))
            cells.append(row)
        zero = read_ciphertext_block(f, params)
        zero = fhe.with_message_bound(zero, 0)
    return EncryptedImage(cells=cells, m=m, n=n, B=B, zero=zero)


# ---------------------------------------------------------------------------
# encrypted pyramids


def save_pyramid(path, pyr: ScaleSpacePyramid):
    with open(path, "wb") as f:
        f.write(MAGIC_PYR)
        f.write(bytes([_version_for(pyr.backend)]))
        for word in (
            pyr.config.octaves,
            pyr.config.layers,
            pyr.m,
            pyr.n,
            pyr.B,
            pyr.V,
        ):
            f.write(_pack_u64(word))
        for key in sorted(pyr.grids):
            for row in pyr.grids[key]:
                for cell in row:
                    if cell is None:
                        f.write(b"\x00")
                    else:
                        f.write(b"\x01")
                        write_encrypted_rational_block(f, cell.det)
                        write_encrypted_rational_block(f, cell.trace)


def load_pyramid(path, params: FheParams | None = None) -> ScaleSpacePyramid:
    with open(path, "rb") as f:
        _read_magic(f, MAGIC_PYR)
        backend = _backend_for(_read_exact(f, 1)[0])
        octaves = _read_u64(f)
        layers = _read_u64(f)
        m = _read_u64(f)
        n = _read_u64(f)
        B = _read_u64(f)
        V = _read_u64(f)
        config = PyramidConfig(octaves=octaves, layers=layers)
        grids = {}
        for key in sorted(config.slots()):
            gh, gw = config.grid_shape(m, n, key[0])
            grid = []
            for _ in range(gh):
                row = []
                for _ in range(gw):
                    flag = _read_exact(f, 1)[0]
                    if flag == 0:
                        row.append(None)
                    elif flag == 1:
                        det = read_encrypted_rational_block(f, params)
                        trace = read_encrypted_rational_block(f, params)
                        row.append(PyramidCell(det=det, trace=trace))
                    else:
                        raise FormatError(f"bad presence flag {flag}")
                grid.append(row)
            grids[key] = grid
    return ScaleSpacePyramid(
        config=config, V=V, m=m, n=n, B=B, backend=backend, grids=grids
    )
