"""Seeded Monte Carlo loan-book simulator.

Randomness contract
-------------------
Each trial owns a Philox4x64-10 counter-based stream (``numpy.random.Philox``)
keyed by the 128-bit integer ``seed + (trial_index << 64)`` with the counter
starting at zero. Loan ``i`` of the trial consumes raw 64-bit word ``i`` of
that stream, and defaults iff ``word < floor(p * 2**64)`` (always for p = 1).
The stream depends on nothing but (seed, trial_index, loan_index), so trials
can be evaluated in any order or in parallel with identical results.

All accumulation is done on integer kopecks; the report's means, quantiles
and tail share are exact rationals, only the standard error goes through a
square root.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from vekselfund.deal import (
    DealScenario,
    LoanTerms,
    evaluate_outcome,
)
from vekselfund.money import Money, Rate, Share

QUANTILE_LEVELS = (Fraction(1, 100), Fraction(5, 100), Fraction(1, 2), Fraction(95, 100), Fraction(99, 100))

_TWO_64 = 1 << 64


@dataclass(frozen=True)
class CollateralRecovery:
    collateral_value: Money
    recovery_fraction: Share = Share(1)


@dataclass(frozen=True)
class BookLoan:
    """One loan in a book; ``recovery=None`` means nothing is recovered on default."""

    loan_id: str
    terms: LoanTerms
    recovery: CollateralRecovery | None = None


@dataclass(frozen=True)
class SimConfig:
    terms: LoanTerms
    default_prob: Share
    n_loans: int = 1
    recovery: CollateralRecovery | None = None
    trials: int = 1
    seed: int = 0
    book: tuple[BookLoan, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_loans < 1:
            raise ValueError("n_loans must be at least 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < _TWO_64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.book is not None and len(self.book) != self.n_loans:
            raise ValueError("n_loans must match the loan book length")

    @classmethod
    def from_book(
        cls, book: Sequence[BookLoan], default_prob: Share, trials: int = 1, seed: int = 0
    ) -> SimConfig:
        if not book:
            raise ValueError("loan book is empty")
        return cls(book[0].terms, default_prob, len(book), None, trials, seed, tuple(book))

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self).encode()).hexdigest()


def _canonical(cfg: SimConfig) -> str:
    def loan_doc(terms: LoanTerms, recovery: CollateralRecovery | None) -> list:
        doc = [
            terms.principal.minor,
            str(terms.rate.value),
            str(terms.guarantee.value),
            str(terms.collateral_coefficient),
            terms.collateral_basis.value,
            terms.sector,
        ]
        if recovery is not None:
            doc += [recovery.collateral_value.minor, str(recovery.recovery_fraction.value)]
        return doc

    doc = {
        "default_prob": str(cfg.default_prob.value),
        "trials": cfg.trials,
        "n_loans": cfg.n_loans,
    }
    if cfg.book is None:
        doc["loan"] = loan_doc(cfg.terms, cfg.recovery)
    else:
        doc["book"] = [[b.loan_id] + loan_doc(b.terms, b.recovery) for b in cfg.book]
    return json.dumps(doc, separators=(",", ":"))


@dataclass(frozen=True)
class _LoanClass:
    """Loans sharing identical cash flows; evaluated once through the deal engine."""

    count: int
    principal: int
    repaid_net: int  # cash in minus principal on repayment (= interest)
    default_net: int  # recovered minus principal on default, guarantee excluded
    draw: int  # guarantee face presented on default


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    defaults: int
    principal: int
    consolidated_net: int
    draws: int
    # sums of (w*y)^2 and w*(w*y) over loans, w = principal, y = consolidated yield
    sq_net: int
    cross: int

    @property
    def consolidated_yield(self) -> Rate:
        return Rate(Fraction(self.consolidated_net, self.principal))

    @property
    def fund_yield(self) -> Rate:
        return Rate(Fraction(self.consolidated_net + self.draws, self.principal))

    @property
    def municipal_loss(self) -> Share:
        return Share(Fraction(self.draws, self.principal))


@dataclass(frozen=True)
class SimReport:
    mean_fund_yield: Rate
    mean_consolidated_yield: Rate
    std_error: Rate
    mean_municipal_loss: Rate
    quantiles: tuple[tuple[Fraction, Rate], ...]
    fraction_below_guarantee: Share
    guarantee_level: Share
    trials: int
    total_loans: int
    seed: int
    config_digest: str


class _Engine:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        if cfg.book is None:
            self.classes = [_LoanClass(cfg.n_loans, *_flows(cfg.terms, cfg.recovery))]
            self.class_of = None
        else:
            keys: dict[tuple, int] = {}
            class_of = np.empty(cfg.n_loans, dtype=np.intp)
            specs: list[list[int]] = []
            for i, loan in enumerate(cfg.book):
                key = (loan.terms, loan.recovery)
                if key not in keys:
                    keys[key] = len(specs)
                    specs.append([0, *_flows(loan.terms, loan.recovery)])
                specs[keys[key]][0] += 1
                class_of[i] = keys[key]
            self.classes = [_LoanClass(*s) for s in specs]
            self.class_of = class_of
        cls = self.classes
        self.n = cfg.n_loans
        self.principal = sum(c.count * c.principal for c in cls)
        self.face = sum(c.count * c.draw for c in cls)
        self.sum_w2 = sum(c.count * c.principal**2 for c in cls)
        # trial totals when every loan repays; defaults are applied as deltas
        self.base_net = sum(c.count * c.repaid_net for c in cls)
        self.base_sq = sum(c.count * c.repaid_net**2 for c in cls)
        self.base_cross = sum(c.count * c.principal * c.repaid_net for c in cls)
        p = cfg.default_prob.value
        self.threshold = None if p == 1 else int(p * _TWO_64)

    def default_counts(self, trial_index: int) -> list[int]:
        if self.threshold is None:
            return [c.count for c in self.classes]
        if self.threshold == 0:
            return [0] * len(self.classes)
        words = np.random.Philox(key=self.cfg.seed + (trial_index << 64)).random_raw(self.n)
        mask = words < np.uint64(self.threshold)
        if self.class_of is None:
            return [int(np.count_nonzero(mask))]
        return [int(x) for x in np.bincount(self.class_of[mask], minlength=len(self.classes))]

    def trial(self, trial_index: int) -> TrialResult:
        counts = self.default_counts(trial_index)
        net, sq, cross, draws = self.base_net, self.base_sq, self.base_cross, 0
        for c, d in zip(self.classes, counts):
            if d:
                delta = c.default_net - c.repaid_net
                net += d * delta
                sq += d * (c.default_net**2 - c.repaid_net**2)
                cross += d * c.principal * delta
                draws += d * c.draw
        return TrialResult(trial_index, sum(counts), self.principal, net, draws, sq, cross)

    def report(self, results: Iterable[TrialResult]) -> SimReport:
        cfg = self.cfg
        results = sorted(results, key=lambda r: r.trial_index)
        if [r.trial_index for r in results] != list(range(cfg.trials)):
            raise ValueError("trial results do not cover 0..trials-1 exactly once")
        total_w = self.principal * cfg.trials
        total_net = sum(r.consolidated_net for r in results)
        total_draws = sum(r.draws for r in results)
        mean = Fraction(total_net, total_w)

        # sum over every simulated loan of w^2 (y - mean)^2, w = principal
        loans = cfg.n_loans * cfg.trials
        sq = sum(r.sq_net for r in results)
        cross = sum(r.cross for r in results)
        dispersion = sq - 2 * mean * cross + mean * mean * self.sum_w2 * cfg.trials
        if loans > 1:
            dispersion *= Fraction(loans, loans - 1)
        se = math.sqrt(dispersion / (total_w * total_w)) if dispersion > 0 else 0.0

        yields = sorted(Fraction(r.consolidated_net, r.principal) for r in results)
        guarantee = Fraction(self.face, self.principal)
        below = sum(1 for y in yields if y < -guarantee)
        return SimReport(
            mean_fund_yield=Rate(Fraction(total_net + total_draws, total_w)),
            mean_consolidated_yield=Rate(mean),
            std_error=Rate(Fraction(se)),
            mean_municipal_loss=Rate(Fraction(total_draws, total_w)),
            quantiles=tuple((q, Rate(_nearest_rank(yields, q))) for q in QUANTILE_LEVELS),
            fraction_below_guarantee=Share(Fraction(below, cfg.trials)),
            guarantee_level=Share(guarantee),
            trials=cfg.trials,
            total_loans=loans,
            seed=cfg.seed,
            config_digest=cfg.digest(),
        )


def _flows(terms: LoanTerms, recovery: CollateralRecovery | None) -> tuple[int, int, int, int]:
    repaid = evaluate_outcome(terms, DealScenario.repayment())
    if recovery is None:
        scenario = DealScenario.default(Money(0), Share(0))
    else:
        scenario = DealScenario.default(recovery.collateral_value, recovery.recovery_fraction)
    failed = evaluate_outcome(terms, scenario)
    p = terms.principal.minor
    return (
        p,
        (repaid.fund_cash_in - repaid.municipal_guarantee_draw).minor - p,
        (failed.fund_cash_in - failed.municipal_guarantee_draw).minor - p,
        failed.municipal_guarantee_draw.minor,
    )


def run_trial(cfg: SimConfig, trial_index: int) -> TrialResult:
    return _Engine(cfg).trial(trial_index)


def _nearest_rank(sorted_values: list[Fraction], level: Fraction) -> Fraction:
    n = len(sorted_values)
    idx = max(math.ceil(level * n) - 1, 0)
    return sorted_values[min(idx, n - 1)]


def aggregate(cfg: SimConfig, results: Iterable[TrialResult]) -> SimReport:
    """Fold trial results in trial-index order, whatever order they arrived in."""
    return _Engine(cfg).report(results)


def run_sim(cfg: SimConfig, order: Iterable[int] | None = None) -> SimReport:
    """Run every trial and aggregate.

    ``order`` permutes the evaluation order of trial indices; the report
    does not depend on it.
    """
    engine = _Engine(cfg)
    indices = range(cfg.trials) if order is None else order
    return engine.report(engine.trial(i) for i in indices)
