"""Single-loan calculus for a one-year bullet loan partly guaranteed by municipal notes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from vekselfund.money import Money, Rate, Share, apply_fraction, apply_rate


class CollateralBasis(enum.Enum):
    PRINCIPAL_NET = "principal_net"
    PRINCIPAL_NET_PLUS_INTEREST = "principal_net_plus_interest"


class ScenarioKind(enum.Enum):
    FULL_REPAYMENT = "full_repayment"
    DEFAULT = "default"


@dataclass(frozen=True)
class LoanTerms:
    principal: Money
    rate: Rate
    guarantee: Share
    collateral_coefficient: Fraction = Fraction(1)
    collateral_basis: CollateralBasis = CollateralBasis.PRINCIPAL_NET_PLUS_INTEREST
    sector: str = "general"

    def __post_init__(self) -> None:
        object.__setattr__(self, "collateral_coefficient", Fraction(self.collateral_coefficient))
        if self.principal.minor <= 0:
            raise ValueError("principal must be positive")
        if self.rate.value < 0:
            raise ValueError("lending rate must be non-negative")
        if self.guarantee.value >= 1:
            raise ValueError("guarantee fraction must be below 100%")
        if self.collateral_coefficient < 0:
            raise ValueError("collateral coefficient must be non-negative")


@dataclass(frozen=True)
class DealScenario:
    kind: ScenarioKind
    collateral_value: Money = field(default_factory=Money.zero)
    recovery: Share = Share(1)

    def __post_init__(self) -> None:
        if self.collateral_value.minor < 0:
            raise ValueError("collateral value must be non-negative")

    @classmethod
    def repayment(cls) -> DealScenario:
        return cls(ScenarioKind.FULL_REPAYMENT)

    @classmethod
    def default(cls, collateral_value: Money, recovery: Share = Share(1)) -> DealScenario:
        return cls(ScenarioKind.DEFAULT, collateral_value, recovery)


@dataclass(frozen=True)
class DealOutcome:
    """Result of one loan seen by the fund, the municipality and both together.

    Yields are on principal disbursed. ``municipal_roi_net`` is interest over
    the budget's net cash exposure and is only defined on full repayment.
    """

    kind: ScenarioKind
    principal: Money
    interest: Money
    recovered: Money
    fund_cash_in: Money
    fund_yield: Rate
    municipal_guarantee_draw: Money
    municipal_result: Rate
    municipal_roi_net: Rate | None
    consolidated_yield: Rate


@dataclass(frozen=True)
class YieldBounds:
    """Best/worst yields under two conventions that must not be mixed.

    ``municipal`` is (-PP on principal, K on net exposure);
    ``fund`` is (-PP, K), both on principal.
    """

    municipal: tuple[Rate, Rate]
    fund: tuple[Rate, Rate]


def interest_due(t: LoanTerms) -> Money:
    return apply_rate(t.principal, t.rate)


def total_repayment(t: LoanTerms) -> Money:
    return t.principal + interest_due(t)


def guarantee_face(t: LoanTerms) -> Money:
    # principal only; interest is never note-backed
    return apply_fraction(t.principal, t.guarantee)


def net_principal(t: LoanTerms) -> Money:
    """Principal left uncovered by the notes, L*(1-PP)."""
    return t.principal - guarantee_face(t)


def secured_claim(t: LoanTerms) -> Money:
    """What the borrower's own pledge must secure: net principal plus interest."""
    return net_principal(t) + interest_due(t)


def required_collateral(t: LoanTerms) -> Money:
    if t.collateral_basis is CollateralBasis.PRINCIPAL_NET:
        basis = net_principal(t)
    else:
        basis = secured_claim(t)
    return basis.scale(t.collateral_coefficient)


def evaluate_outcome(t: LoanTerms, s: DealScenario) -> DealOutcome:
    principal = t.principal
    interest = interest_due(t)
    if s.kind is ScenarioKind.FULL_REPAYMENT:
        net = net_principal(t)
        return DealOutcome(
            kind=s.kind,
            principal=principal,
            interest=interest,
            recovered=Money.zero(),
            fund_cash_in=principal + interest,
            fund_yield=t.rate,
            municipal_guarantee_draw=Money.zero(),
            municipal_result=Rate(0),
            municipal_roi_net=Rate(interest.ratio(net)) if net else None,
            consolidated_yield=t.rate,
        )

    claim = secured_claim(t)
    recovered = min(s.collateral_value, claim).scale(s.recovery.value)
    # notes are presented on every default, even a fully collateralised one
    draw = guarantee_face(t)
    cash_in = recovered + draw
    return DealOutcome(
        kind=s.kind,
        principal=principal,
        interest=interest,
        recovered=recovered,
        fund_cash_in=cash_in,
        fund_yield=Rate((cash_in - principal).ratio(principal)),
        municipal_guarantee_draw=draw,
        municipal_result=Rate(-t.guarantee.value),
        municipal_roi_net=None,
        consolidated_yield=Rate((recovered - principal).ratio(principal)),
    )


def yield_bounds(rate: Rate, guarantee: Share) -> YieldBounds:
    if guarantee.value == 1:
        raise ValueError("guarantee fraction of 100% leaves no net exposure")
    low = Rate(-guarantee.value)
    return YieldBounds(
        municipal=(low, Rate(rate.value / (1 - guarantee.value))),
        fund=(low, rate),
    )


def deal_yield_bounds(t: LoanTerms) -> YieldBounds:
    return yield_bounds(t.rate, t.guarantee)
