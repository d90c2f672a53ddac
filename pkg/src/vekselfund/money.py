"""Exact money, rate and share arithmetic.

Money is an integer count of kopecks. Rates and shares wrap
``fractions.Fraction`` so that every intermediate stays exact; rounding
happens once, when a product is turned back into Money.

Rounding policy: half-up on the magnitude (ties go away from zero), so
``apply_rate(-m, r) == -apply_rate(m, r)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from numbers import Rational

MINOR_PER_UNIT = 100
MAX_MINOR = 2**63 - 1

BP_PER_UNIT = 10_000
PPM_PER_UNIT = 1_000_000

_DECIMAL_RE = re.compile(r"^([+-]?)(\d+)(?:\.(\d+))?$")


class MoneyOverflowError(ArithmeticError):
    """An amount left the supported range of +/-(2**63 - 1) kopecks."""


def round_half_up(q: Rational) -> int:
    """Round an exact rational to the nearest integer, ties away from zero."""
    q = Fraction(q)
    n, d = abs(q.numerator), q.denominator
    r = (2 * n + d) // (2 * d)
    return -r if q < 0 else r


def parse_decimal(text: str, max_places: int | None = None) -> Fraction:
    """Parse a plain decimal literal (``"15"``, ``"-0.25"``) exactly.

    Rejects exponents, separators and anything with more than
    ``max_places`` fractional digits.
    """
    m = _DECIMAL_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a decimal number: {text!r}")
    sign, whole, frac = m.groups()
    frac = frac or ""
    if max_places is not None and len(frac) > max_places:
        raise ValueError(f"{text!r} has more than {max_places} decimal places")
    value = Fraction(int(whole + frac), 10 ** len(frac))
    return -value if sign == "-" else value


def format_fixed(q: Rational, places: int) -> str:
    """Render an exact rational with a fixed number of decimals (half-up)."""
    scaled = round_half_up(Fraction(q) * 10**places)
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(places + 1, "0")
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def _check_range(minor: int) -> int:
    if not -MAX_MINOR <= minor <= MAX_MINOR:
        raise MoneyOverflowError(f"{minor} kopecks is outside the supported range")
    return minor


@dataclass(frozen=True, order=True)
class Money:
    minor: int

    def __post_init__(self) -> None:
        if isinstance(self.minor, bool) or not isinstance(self.minor, int):
            raise TypeError(f"Money needs an integer kopeck amount, got {self.minor!r}")
        _check_range(self.minor)

    @classmethod
    def rubles(cls, value: int | str) -> Money:
        """Build from whole rubles (int) or a decimal ruble string with <= 2 places."""
        if isinstance(value, int):
            return cls(value * MINOR_PER_UNIT)
        q = parse_decimal(value, max_places=2) * MINOR_PER_UNIT
        return cls(int(q))

    @classmethod
    def zero(cls) -> Money:
        return cls(0)

    def __add__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(_check_range(self.minor + other.minor))

    def __sub__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(_check_range(self.minor - other.minor))

    def __neg__(self) -> Money:
        return Money(-self.minor)

    def __bool__(self) -> bool:
        return self.minor != 0

    def scale(self, factor: Rational) -> Money:
        """Exact product with a rational factor, rounded half-up to a kopeck."""
        return Money(_check_range(round_half_up(self.minor * Fraction(factor))))

    def ratio(self, other: Money) -> Fraction:
        return Fraction(self.minor, other.minor)

    def __str__(self) -> str:
        return format_fixed(Fraction(self.minor, MINOR_PER_UNIT), 2)


@dataclass(frozen=True, order=True)
class Rate:
    """An annual rate or yield; ``value`` is the plain fraction (0.15 for 15%)."""

    value: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", Fraction(self.value))

    @classmethod
    def from_bp(cls, bp: int | Rational) -> Rate:
        return cls(Fraction(bp) / BP_PER_UNIT)

    @classmethod
    def percent(cls, text: str | int) -> Rate:
        if isinstance(text, int):
            return cls(Fraction(text, 100))
        return cls(parse_decimal(text, max_places=4) / 100)

    @property
    def bp(self) -> Fraction:
        return self.value * BP_PER_UNIT

    def __add__(self, other: Rate) -> Rate:
        return Rate(self.value + other.value)

    def __sub__(self, other: Rate) -> Rate:
        return Rate(self.value - other.value)

    def __neg__(self) -> Rate:
        return Rate(-self.value)

    def to_percent(self, places: int = 4) -> str:
        return format_fixed(self.value * 100, places)

    def __str__(self) -> str:
        return self.to_percent() + "%"


@dataclass(frozen=True, order=True)
class Share:
    """A portion of a whole in [0, 1]: default shares, guarantee fractions."""

    value: Fraction

    def __post_init__(self) -> None:
        v = Fraction(self.value)
        if not 0 <= v <= 1:
            raise ValueError(f"share must lie in [0, 1], got {v}")
        object.__setattr__(self, "value", v)

    @classmethod
    def from_ppm(cls, ppm: int | Rational) -> Share:
        return cls(Fraction(ppm) / PPM_PER_UNIT)

    @classmethod
    def from_bp(cls, bp: int | Rational) -> Share:
        return cls(Fraction(bp) / BP_PER_UNIT)

    @classmethod
    def percent(cls, text: str | int) -> Share:
        if isinstance(text, int):
            return cls(Fraction(text, 100))
        return cls(parse_decimal(text, max_places=4) / 100)

    @property
    def ppm(self) -> Fraction:
        return self.value * PPM_PER_UNIT

    def complement(self) -> Share:
        return Share(1 - self.value)

    def to_percent(self, places: int = 4) -> str:
        return format_fixed(self.value * 100, places)

    def __str__(self) -> str:
        return self.to_percent() + "%"


def apply_rate(m: Money, r: Rate) -> Money:
    return m.scale(r.value)


def apply_fraction(m: Money, f: Share) -> Money:
    return m.scale(f.value)


def to_decimal(q: Rational, places: int) -> Decimal:
    """Exact rational to a Decimal quantized half-up, for JSON emitters."""
    return Decimal(format_fixed(q, places))
