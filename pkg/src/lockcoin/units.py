"""Exact money arithmetic. All amounts are integer satoshis."""
from decimal import Decimal
from fractions import Fraction

COIN = 100_000_000


def btc(value) -> int:
    """Convert a BTC amount (str, int, Decimal or Fraction) to satoshis, refusing fractions of a satoshi."""
    if isinstance(value, float):
        raise TypeError("floats are not accepted for money; pass a string or Decimal")
    sats = Fraction(Decimal(value) if isinstance(value, str) else value) * COIN
    if sats.denominator != 1:
        raise ValueError(f"{value} BTC is not a whole number of satoshis")
    return int(sats)


def fmt(sats: int) -> str:
    sign = "-" if sats < 0 else ""
    whole, frac = divmod(abs(sats), COIN)
    return f"{sign}{whole}.{frac:08d}"


def ratio(value) -> Fraction:
    """Parse a dimensionless rate such as ``"0.01"`` or ``"3/2"`` exactly."""
    if isinstance(value, float):
        raise TypeError("floats are not accepted for rates; pass a string")
    if isinstance(value, str) and "/" not in value:
        return Fraction(Decimal(value))
    return Fraction(value)


def scale(sats: int, rate: Fraction) -> int:
    """``sats * rate``; the product must land on a whole satoshi."""
    out = sats * rate
    if out.denominator != 1:
        raise ValueError(f"{fmt(sats)} x {rate} is not a whole number of satoshis")
    return int(out)


def fmt_short(sats: int) -> str:
    """Like ``fmt`` without trailing zeros: 100000 -> "0.001"."""
    text = fmt(sats).rstrip("0")
    return text + "0" if text.endswith(".") else text
