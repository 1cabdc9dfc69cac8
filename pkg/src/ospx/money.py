"""Integer money in micro-units.

All prices and bids in this package are non-negative integers counting
10^-6 of one currency unit, so every auction computation is exact.
Floats appear only in Monte Carlo aggregates, never in pricing.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction

from .errors import InvalidMoney

MICROS_PER_UNIT = 1_000_000

Micros = int


def require_micros(value, what: str = "amount") -> int:
    """Validate a micro amount: a non-negative int (bool excluded)."""
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidMoney(f"{what} must be an integer micro amount, got {value!r}")
    if value < 0:
        raise InvalidMoney(f"{what} must be non-negative, got {value}")
    return value


def units_to_micros(text: str) -> int:
    """Parse a decimal amount of currency units into exact micros.

    Accepts up to six fractional digits ("2.75" -> 2_750_000); anything
    finer has no exact micro representation and is rejected.
    """
    try:
        quantity = Decimal(text)
    except InvalidOperation:
        raise InvalidMoney(f"cannot parse money value {text!r}") from None
    scaled = quantity * MICROS_PER_UNIT
    if scaled != scaled.to_integral_value():
        raise InvalidMoney(f"{text!r} is finer than one micro (six decimal places)")
    micros = int(scaled)
    if micros < 0:
        raise InvalidMoney(f"money value {text!r} is negative")
    return micros


def format_micros(micros) -> str:
    """Render micros as decimal units with six fractional digits."""
    if isinstance(micros, Fraction):
        micros = float(micros)
    return f"{micros / MICROS_PER_UNIT:.6f}"
