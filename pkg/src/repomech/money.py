"""Fixed-point helpers for prices and money.

Prices and money carry four decimal places.  Integer quantities times
four-place prices are exact, so nothing here ever rounds a product of a
quantity and a price.  Rounding only happens where a caller divides or
scales by an arbitrary decimal (margin coefficients, FMV adjustments).
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation

PLACES = Decimal("0.0001")
ZERO = Decimal("0.0000")


def to_decimal(value: object) -> Decimal:
    """Parse ``value`` into a Decimal without passing through binary floats.

    Floats are accepted but converted via ``repr`` so ``4.9`` becomes
    ``Decimal("4.9")`` rather than its binary expansion.
    """
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not amounts")
    if isinstance(value, float):
        value = repr(value)
    try:
        return Decimal(str(value).strip().lstrip("$"))
    except InvalidOperation as exc:
        raise ValueError(f"not a decimal amount: {value!r}") from exc


def price(value: object) -> Decimal:
    """A price at four places.  Raises if precision would be lost."""
    d = to_decimal(value)
    q = d.quantize(PLACES)
    if q != d:
        raise ValueError(f"price {value!r} has more than 4 decimal places")
    return q


def money(value: object) -> Decimal:
    """Round to four places (banker's rounding)."""
    return to_decimal(value).quantize(PLACES, rounding=ROUND_HALF_EVEN)


def fmt(value: Decimal) -> str:
    return str(money(value))
