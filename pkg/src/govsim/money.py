"""Fixed-point token and currency arithmetic.

All NXC amounts are Decimal quantized to cents with ROUND_HALF_UP; float drift
would break the exact-match accounting the run reports promise. Reputation
scores use the same scheme at one fractional digit.
"""
from __future__ import annotations

from decimal import Decimal, ROUND_HALF_UP

CENT = Decimal("0.01")
TENTH = Decimal("0.1")

ZERO = Decimal("0.00")


def nxc(value: int | str | float | Decimal) -> Decimal:
    """Coerce a value to an NXC amount (two fractional digits, half-up)."""
    if isinstance(value, float):
        value = repr(value)
    return Decimal(value).quantize(CENT, rounding=ROUND_HALF_UP)


def round2(value: Decimal) -> Decimal:
    return value.quantize(CENT, rounding=ROUND_HALF_UP)


def round1(value: Decimal) -> Decimal:
    return value.quantize(TENTH, rounding=ROUND_HALF_UP)


def fmt(value: Decimal) -> str:
    """Render an amount for reports and ledger payloads: always two decimals."""
    return f"{round2(value):.2f}"


def clamp_score(value: Decimal) -> Decimal:
    """Reputation clamp: [0, 100] at one fractional digit."""
    bounded = min(max(value, Decimal(0)), Decimal(100))
    return round1(bounded)
