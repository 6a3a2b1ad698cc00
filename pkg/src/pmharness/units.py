"""Fixed-point units shared by every module.

Prices are integer micro-dollars per contract, quantities are integer
milli-shares, and money amounts are integer micro-dollars.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction

ONE_DOLLAR = 1_000_000
ONE_CENT = 10_000
SHARE = 1_000
DEFAULT_STARTING_CAPITAL = 10_000 * ONE_DOLLAR


def notional_exact(qty: int, price: int) -> tuple[int, int]:
    """Return ``(micro_dollars, remainder)`` for ``qty`` milli-shares at ``price``.

    The remainder is in thousandths of a micro-dollar and is always in [0, 1000).
    """
    return divmod(qty * price, SHARE)


def notional(qty: int, price: int) -> int:
    return (qty * price) // SHARE


def pair_credit(pairs: int) -> int:
    """Cash released by ``pairs`` milli-shares of matched YES/NO contracts."""
    return pairs * ONE_DOLLAR // SHARE


def round_half_even(value: Fraction) -> int:
    return div_half_even(value.numerator, value.denominator)


def div_half_even(n: int, d: int) -> int:
    """``n / d`` rounded to the nearest integer, ties to even; ``d`` must be positive."""
    q, r = divmod(n, d)
    twice = 2 * r
    if twice > d or (twice == d and q % 2 == 1):
        q += 1
    return q


def to_pct(value: Fraction) -> Decimal:
    """Convert a ratio to a percentage at 0.01 resolution, round-half-even."""
    hundredths = round_half_even(Fraction(value) * 10_000)
    return Decimal(hundredths).scaleb(-2)


def dollars(micro: int) -> Decimal:
    return Decimal(micro) / ONE_DOLLAR


def to_micro(amount: Decimal | str | int | float) -> int:
    """Parse a dollar amount into micro-dollars (exact for decimal strings)."""
    d = Decimal(str(amount)) * ONE_DOLLAR
    if d != d.to_integral_value():
        raise ValueError(f"amount {amount!r} is finer than one micro-dollar")
    return int(d)
