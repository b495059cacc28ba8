"""Rigorous intervals with exact rational endpoints.

Transcendental terms are evaluated with mpmath's interval context (outward
rounding at a chosen binary precision); the enclosures are then converted to
exact ``Fraction`` endpoints so that every later operation with rational
scalars is exact.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

from mpmath import iv

DEFAULT_DIGITS = 40


@contextlib.contextmanager
def iv_precision(bits: int):
    """Temporarily set the working precision of mpmath's interval context.

    mpmath keeps this as global state, so callers must not interleave
    different precisions from several threads.
    """
    saved = iv.prec
    iv.prec = int(bits)
    try:
        yield iv
    finally:
        iv.prec = saved


def _raw_to_fraction(raw) -> Fraction:
    sign, man, exp, _ = raw
    if not man:
        if exp:  # +-inf or nan in mpmath's raw encoding
            raise ValueError("non-finite interval endpoint")
        return Fraction(0)
    value = Fraction(int(man)) * (Fraction(2) ** int(exp))
    return -value if sign else value


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with exact rational endpoints."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value) -> "Interval":
        v = Fraction(value)
        return cls(v, v)

    @classmethod
    def from_iv(cls, x) -> "Interval":
        lo, hi = x._mpi_
        return cls(_raw_to_fraction(lo), _raw_to_fraction(hi))

    def to_iv(self):
        # endpoints may need more bits than the current precision; round outward
        lo = iv.mpf(self.lo.numerator) / self.lo.denominator
        hi = iv.mpf(self.hi.numerator) / self.hi.denominator
        return iv.mpf([lo.a, hi.b])

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return float((self.lo + self.hi) / 2)

    def contains(self, value) -> bool:
        v = Fraction(value)
        return self.lo <= v <= self.hi

    def __mul__(self, other) -> "Interval":
        if isinstance(other, Interval):
            prods = [self.lo * other.lo, self.lo * other.hi,
                     self.hi * other.lo, self.hi * other.hi]
            return Interval(min(prods), max(prods))
        c = Fraction(other)
        return Interval(min(self.lo * c, self.hi * c), max(self.lo * c, self.hi * c))

    __rmul__ = __mul__

    def reciprocal(self) -> "Interval":
        if self.lo <= 0 <= self.hi:
            raise ZeroDivisionError("interval contains zero")
        return Interval(1 / self.hi, 1 / self.lo)

    def __repr__(self) -> str:
        return f"Interval[{decimal_down(self.lo, 17)}, {decimal_up(self.hi, 17)}]"


def _directed_decimal(x: Fraction, digits: int, up: bool) -> str:
    x = Fraction(x)
    if x == 0:
        return "0"
    e = math.floor(math.log10(abs(x.numerator)) - math.log10(x.denominator))
    # log10 estimate may be off by one near powers of ten
    while abs(x) >= Fraction(10) ** (e + 1):
        e += 1
    while abs(x) < Fraction(10) ** e:
        e -= 1
    shift = digits - 1 - e
    scaled = x * Fraction(10) ** shift
    n = math.ceil(scaled) if up else math.floor(scaled)
    return str(Decimal(n).scaleb(-shift))


def decimal_down(x: Fraction, digits: int = DEFAULT_DIGITS) -> str:
    """Decimal string ``s`` with ``Fraction(s) <= x`` and ``digits`` significant digits."""
    return _directed_decimal(x, digits, up=False)


def decimal_up(x: Fraction, digits: int = DEFAULT_DIGITS) -> str:
    """Decimal string ``s`` with ``Fraction(s) >= x``."""
    return _directed_decimal(x, digits, up=True)


def interval_to_record(x: Interval, digits: int = DEFAULT_DIGITS) -> dict:
    return {
        "lower": decimal_down(x.lo, digits),
        "lower_rounding": "down",
        "upper": decimal_up(x.hi, digits),
        "upper_rounding": "up",
    }


def interval_from_record(rec: dict) -> Interval:
    if rec.get("lower_rounding") != "down" or rec.get("upper_rounding") != "up":
        raise ValueError("interval record must round lower down and upper up")
    return Interval(Fraction(rec["lower"]), Fraction(rec["upper"]))


def cos_power(n: int, power: int, bits: int) -> Interval:
    """Enclosure of ``cos(pi / (2 n)) ** power``."""
    with iv_precision(bits):
        return Interval.from_iv(iv.cos(iv.pi / (2 * n)) ** power)


def parse_fraction(text: str) -> Fraction:
    """Parse ``"num/den"`` (or an integer) exactly; float-looking strings are rejected."""
    text = text.strip()
    num, sep, den = text.partition("/")
    try:
        if sep:
            return Fraction(int(num), int(den))
        return Fraction(int(num))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"expected a rational 'num/den', got {text!r}") from exc
