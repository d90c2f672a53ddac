"""Closed-form portfolio thresholds.

A portfolio lent at rate K that never sees a share X of principal plus
interest returns ``(1 - X)(1 + K) - 1``. Everything here is exact rational
arithmetic; percentages are a rendering concern only.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from vekselfund.money import Rate, Share


class InfeasibleRateError(ValueError):
    """No non-negative lending rate reaches the requested yield."""


@dataclass(frozen=True)
class SectorTier:
    sector: str
    rate_discount: Rate
    safety_margin: Share = Share(0)

    def __post_init__(self) -> None:
        if self.rate_discount.value < 0:
            raise ValueError("rate discount must be non-negative")


@dataclass(frozen=True)
class PortfolioParams:
    rate: Rate
    guarantee: Share
    default_share: Share

    def __post_init__(self) -> None:
        if self.rate.value < 0:
            raise ValueError("rate must be non-negative")
        if self.guarantee.value >= 1:
            raise ValueError("guarantee fraction must be below 100%")

    @property
    def yield_(self) -> Rate:
        return portfolio_yield(self.default_share, self.rate)

    @property
    def break_even(self) -> Share:
        return break_even_default(self.rate)

    @property
    def critical(self) -> Share:
        return critical_default(self.rate, self.guarantee)

    def within_guarantee(self) -> bool:
        """True while losses stay inside what the pledged notes cover."""
        return self.default_share <= self.critical


def portfolio_yield(default_share: Share, rate: Rate) -> Rate:
    return Rate((1 - default_share.value) * (1 + rate.value) - 1)


def break_even_default(rate: Rate) -> Share:
    if rate.value < 0:
        raise ValueError("rate must be non-negative")
    return Share(rate.value / (1 + rate.value))


def critical_default(rate: Rate, guarantee: Share) -> Share:
    """Default share at which the portfolio loses exactly the guaranteed fraction."""
    if rate.value < 0:
        raise ValueError("rate must be non-negative")
    if guarantee.value >= 1:
        raise ValueError("guarantee fraction must be below 100%")
    return Share((rate.value + guarantee.value) / (1 + rate.value))


def _rate_for(default_share: Fraction, target_yield: Fraction) -> Fraction:
    return (target_yield + default_share) / (1 - default_share)


def solve_rate(forecast_default: Share, target_yield: Rate) -> Rate:
    """Lending rate at which a portfolio with the forecast default share yields ``target_yield``."""
    if forecast_default.value == 1:
        raise InfeasibleRateError("a portfolio that never repays has no solving rate")
    k = _rate_for(forecast_default.value, target_yield.value)
    if k < 0:
        raise InfeasibleRateError(
            f"target {target_yield} at default share {forecast_default} needs a negative rate"
        )
    return Rate(k)


def tier_rate(base: Rate, tier: SectorTier, forecast_default: Share, guarantee: Share) -> Rate:
    """Discounted rate for a priority sector, clamped from below.

    The floor is the rate whose critical default threshold equals
    ``forecast_default + safety_margin``; a discount never pushes the rate
    below it, nor below zero.
    """
    stressed = forecast_default.value + tier.safety_margin.value
    if stressed >= 1:
        raise InfeasibleRateError("forecast default plus safety margin reaches 100%")
    floor = _rate_for(stressed, -guarantee.value)
    if floor > base.value:
        raise InfeasibleRateError(
            f"sector {tier.sector!r}: floor rate {Rate(floor)} exceeds base rate {base}"
        )
    return Rate(max(base.value - tier.rate_discount.value, floor, Fraction(0)))
