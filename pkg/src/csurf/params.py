"""Parameter sets for the encryption scheme and the rational encoding."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidParams


@dataclass(frozen=True)
class FheParams:
    """Ring and lattice parameters.

    q is the ring modulus (messages live in Z_q, interpreted as
    two's-complement signed values in [-q/2, q/2)).  n is the lattice
    dimension, ell the bit length of q, and N = (n+1)*ell the ciphertext
    dimension: a ciphertext is an N x N matrix over Z_q.  sigma bounds the
    magnitude of the uniform encryption error.  The matrix backend only
    supports power-of-two q so that 64-bit wraparound arithmetic is exact
    modulo q.
    """

    q: int
    n: int
    sigma: int = 1
    security_label: str = "custom"
    ell: int = field(init=False)
    N: int = field(init=False)

    def __post_init__(self):
        if self.q < 4:
            raise InvalidParams(f"ring modulus q must be >= 4, got {self.q}")
        if self.q > 2**64:
            raise InvalidParams("moduli above 2**64 are unsupported")
        if self.n < 1:
            raise InvalidParams(f"lattice dimension n must be >= 1, got {self.n}")
        if not 0 <= self.sigma < self.q:
            raise InvalidParams(f"noise bound sigma must satisfy 0 <= sigma < q")
        object.__setattr__(self, "ell", (self.q - 1).bit_length())
        object.__setattr__(self, "N", (self.n + 1) * self.ell)

    @property
    def num_samples(self) -> int:
        """Number of LWE samples in the public key (m = N)."""
        return self.N

    @property
    def decrypt_threshold(self) -> int:
        """Noise must stay strictly below q/4 for bit-by-bit decryption."""
        return self.q // 4

    @property
    def fresh_noise(self) -> int:
        """Upper bound on the noise of a freshly encrypted ciphertext."""
        return self.num_samples * self.sigma

    def is_power_of_two(self) -> bool:
        return self.q & (self.q - 1) == 0


def toy_params() -> FheParams:
    """Default desk-scale parameters: q = 256**7, n = 10, sigma = 1.

    Labeled toy because n is far too small for lattice security; the label
    exists so nobody mistakes test runs for a hardened deployment.
    """
    return FheParams(q=256**7, n=10, sigma=1, security_label="toy")


@dataclass(frozen=True)
class RationalParams:
    """Base denominator V for quantizing fractional filter constants.

    Every fractional constant c is stored as round(c*V)/V, so each carries
    at most delta = 1/(2V) of conversion error.
    """

    V: int
    q: int

    def __post_init__(self):
        if self.V < 1:
            raise InvalidParams(f"base denominator V must be >= 1, got {self.V}")
        # the final determinant denominator 100*V^2 must fit under q/2
        if 200 * self.V * self.V >= self.q:
            raise InvalidParams(f"V={self.V} too large: 100*V^2 must stay below q/2")

    @property
    def delta(self) -> float:
        return 1.0 / (2.0 * self.V)
