"""Exception taxonomy. Each class maps to one CLI error category / exit code."""


class CsurfError(Exception):
    """Base class for all library errors."""

    category = "config"


class InvalidParams(CsurfError):
    """Scheme or pipeline parameters violate an invariant (q < 4, n = 0, ...)."""

    category = "config"


class MessageRangeError(CsurfError):
    """Plaintext outside the signed message space [-q/2, q/2)."""

    category = "config"


class ParamsMismatch(CsurfError):
    """Operands created under different parameter sets or backends."""

    category = "config"


class DecryptionFailure(CsurfError):
    """Noise-level estimate at or above the decryption threshold."""

    category = "decrypt-failure"


class NoiseBudgetExceeded(DecryptionFailure):
    """A computation produced a ciphertext no longer considered decryptable."""


class DenominatorOverflow(CsurfError):
    """A rational denominator reached q/2 and the value can wrap."""

    category = "bounds"


class BoundsError(CsurfError):
    """Modulus-adequacy certification failed."""

    category = "bounds"


class FormatError(CsurfError):
    """Malformed or unsupported input file."""

    category = "io"


#: CLI exit code for each error category (0 is success).
EXIT_CODES = {
    "config": 2,
    "io": 3,
    "bounds": 4,
    "decrypt-failure": 5,
}
