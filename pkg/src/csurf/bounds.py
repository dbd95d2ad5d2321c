"""Executable accuracy and overflow bounds, and modulus selection.

The rational encoding introduces error only where fractional constants are
quantized (accuracy delta = 1/(2V) per constant), and the ring wraps silently
once a numerator or denominator reaches q/2.  This module turns the worst
cases into checks:

* quantization error:  det error <= delta*B*m*n*(3*dxx + 3*dyy - 0.81*8*dxy),
  trace error <= 2*delta*B*m*n, with dxx/dyy/dxy bounded by 3*B*m*n and
  4*B*m*n in worst-case mode;
* largest denominator: exactly 100*V**2;
* largest response numerator: 1296*B**2*m**2*n**2;
* the modulus is adequate iff both of the last two stay strictly below q/2.

All comparisons run in exact integer arithmetic so verdicts remain
trustworthy at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParams


def error_bound(
    delta: float, B: int, m: int, n: int, dxx: float, dyy: float, dxy: float
) -> tuple[float, float]:
    """Quantization error bounds given (measured or assumed) responses."""
    det_err = delta * B * m * n * (3 * dxx + 3 * dyy - 0.81 * 8 * dxy)
    trace_err = 2 * delta * B * m * n
    return det_err, trace_err


def worst_case_error_bound(delta: float, B: int, m: int, n: int) -> tuple[float, float]:
    """Error bounds with responses replaced by their worst-case magnitudes.

    Substitutes |dxx| = |dyy| = 3*B*m*n and |dxy| = 4*B*m*n with the signs
    that maximize the expression, yielding 43.92 * delta * (B*m*n)**2 for the
    determinant.
    """
    return error_bound(delta, B, m, n, 3 * B * m * n, 3 * B * m * n, -4 * B * m * n)


def denominator_bound(V: int) -> int:
    """Largest denominator the pipeline produces: 100 * V**2 (determinant)."""
    if V < 1:
        raise InvalidParams(f"V must be >= 1, got {V}")
    return 100 * V * V


def numerator_bound(B: int, m: int, n: int) -> int:
    """Largest response numerator: 1296 * B**2 * m**2 * n**2."""
    if B < 1 or m < 1 or n < 1:
        raise InvalidParams("B, m, n must be positive")
    return 1296 * B * B * m * m * n * n


@dataclass(frozen=True)
class BoundReport:
    """Evaluated bounds plus the two strict modulus-adequacy verdicts."""

    q: int
    V: int
    B: int
    m: int
    n: int
    delta: float
    error_bound_det: float
    error_bound_trace: float
    denom_max: int
    numer_max: int
    denominator_ok: bool
    numerator_ok: bool

    @property
    def passed(self) -> bool:
        return self.denominator_ok and self.numerator_ok

    @property
    def q_half(self) -> float:
        return self.q / 2

    def lines(self) -> str:
        """Machine-readable rendering, one metric per line."""
        return "".join(
            f"{k}={v}\n"
            for k, v in [
                ("q", self.q),
                ("V", self.V),
                ("B", self.B),
                ("m", self.m),
                ("n", self.n),
                ("delta", self.delta),
                ("error_bound_det", self.error_bound_det),
                ("error_bound_trace", self.error_bound_trace),
                ("denominator_max", self.denom_max),
                ("numerator_max", self.numer_max),
                ("q_half", self.q // 2 if self.q % 2 == 0 else self.q / 2),
                ("denominator_ok", self.denominator_ok),
                ("numerator_ok", self.numerator_ok),
                ("passed", self.passed),
            ]
        )

    def render(self) -> str:
        """Human-readable rendering."""
        verdict = lambda ok: "ok" if ok else "FAIL"
        return (
            f"modulus adequacy for q={self.q}, V={self.V}, B={self.B}, "
            f"image {self.m}x{self.n}\n"
            f"  quantization accuracy delta          = {self.delta:.3g}\n"
            f"  worst-case determinant error         = {self.error_bound_det:.6g}\n"
            f"  worst-case trace error               = {self.error_bound_trace:.6g}\n"
            f"  max denominator 100*V^2              = {self.denom_max} "
            f"[{verdict(self.denominator_ok)}]\n"
            f"  max numerator 1296*B^2*m^2*n^2       = {self.numer_max} "
            f"[{verdict(self.numerator_ok)}]\n"
            f"  both must stay strictly below q/2    = {self.q / 2:.6g}\n"
            f"  verdict: {'PASS' if self.passed else 'FAIL'}\n"
        )


def check_theorem(q: int, V: int, B: int, m: int, n: int) -> BoundReport:
    """Evaluate both strict adequacy inequalities in exact integers."""
    if q < 4:
        raise InvalidParams(f"q must be >= 4, got {q}")
    denom_max = denominator_bound(V)
    numer_max = numerator_bound(B, m, n)
    delta = 1.0 / (2.0 * V)
    det_err, trace_err = worst_case_error_bound(delta, B, m, n)
    return BoundReport(
        q=q,
        V=V,
        B=B,
        m=m,
        n=n,
        delta=delta,
        error_bound_det=det_err,
        error_bound_trace=trace_err,
        denom_max=denom_max,
        numer_max=numer_max,
        denominator_ok=2 * denom_max < q,
        numerator_ok=2 * numer_max < q,
    )


def suggest_modulus(V: int, B: int, m: int, n: int) -> int:
    """Smallest power of 256 satisfying both adequacy inequalities."""
    need = 2 * max(denominator_bound(V), numerator_bound(B, m, n))
    q = 256
    while q <= need:
        q *= 256
        if q > 2**64:
            raise InvalidParams(
                "no adequate modulus at or below 2**64 for these parameters"
            )
    return q
