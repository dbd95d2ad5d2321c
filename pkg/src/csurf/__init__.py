"""Scale-space keypoint detection over homomorphically encrypted images.

The package computes the box-filter Hessian response pyramid of the SURF
detector on grayscale images whose pixels are encrypted under a leveled
matrix-FHE scheme, using a rational numerator/denominator encoding for the
fractional filter constants.  The pyramid is decrypted and keypoints are
extracted in the clear; executable bounds certify that numerators and
denominators fit the ring and tie quantization error to the base
denominator V.
"""

from . import bounds, corpus, fhe, geometry, keypoints, pgm, pipeline, rationals, reference, serial
from .errors import (
    BoundsError,
    CsurfError,
    DecryptionFailure,
    DenominatorOverflow,
    FormatError,
    InvalidParams,
    MessageRangeError,
    NoiseBudgetExceeded,
    ParamsMismatch,
)
from .params import FheParams, RationalParams, toy_params

__all__ = [
    "bounds",
    "corpus",
    "fhe",
    "geometry",
    "keypoints",
    "pgm",
    "pipeline",
    "rationals",
    "reference",
    "serial",
    "FheParams",
    "RationalParams",
    "toy_params",
    "CsurfError",
    "InvalidParams",
    "MessageRangeError",
    "ParamsMismatch",
    "DecryptionFailure",
    "NoiseBudgetExceeded",
    "DenominatorOverflow",
    "BoundsError",
    "FormatError",
]

__version__ = "0.1.0"
