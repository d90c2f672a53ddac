from fractions import Fraction

import numpy as np
import pytest

from vekselfund.deal import LoanTerms, required_collateral
from vekselfund.money import Money, Rate, Share
from vekselfund.portfolio import break_even_default, critical_default, portfolio_yield
from vekselfund.simulator import (
    BookLoan,
    CollateralRecovery,
    SimConfig,
    aggregate,
    run_sim,
    run_trial,
)

EXAMPLE = LoanTerms(Money.rubles(500_000), Rate.percent(15), Share.percent(10))


def cfg(p, n=1000, trials=20, seed=7, recovery=None, terms=EXAMPLE):
    return SimConfig(terms, Share(Fraction(p)), n_loans=n, recovery=recovery, trials=trials, seed=seed)


class TestRunTrial:
    def test_no_defaults_yields_rate(self):
        for i in range(5):
            r = run_trial(cfg(0), i)
            assert r.defaults == 0
            assert r.consolidated_yield == Rate.percent(15)
            assert r.fund_yield == Rate.percent(15)

    def test_all_default_zero_recovery(self):
        r = run_trial(cfg(1), 0)
        assert r.defaults == 1000
        assert r.consolidated_yield == Rate(-1)
        assert r.fund_yield == Rate(Fraction(-9, 10))
        assert r.municipal_loss == Share.percent(10)

    def test_large_book_matches_closed_form(self):
        c = cfg(Fraction(1, 10), n=1_000_000, trials=1, seed=42)
        r = run_trial(c, 0)
        expected = portfolio_yield(Share.percent(10), Rate.percent(15)).value
        assert expected == Fraction(35, 1000)
        # per-loan sigma of the consolidated yield: 1.15 * sqrt(p(1-p))
        se = 1.15 * (0.1 * 0.9) ** 0.5 / 1000
        assert abs(float(r.consolidated_yield.value - expected)) < 3 * se

    def test_stream_is_keyed_by_seed_trial_and_loan(self):
        # loan i of trial t reads raw word i of Philox keyed by seed + (t << 64)
        c = cfg(Fraction(1, 2), n=64, trials=1, seed=99)
        words = np.random.Philox(key=99 + (3 << 64)).random_raw(64)
        expected = int(np.count_nonzero(words < np.uint64(1 << 63)))
        assert run_trial(c, 3).defaults == expected

    def test_prefix_stability(self):
        # loan i's draw does not depend on how many loans follow it
        words_small = np.random.Philox(key=5).random_raw(10)
        words_large = np.random.Philox(key=5).random_raw(1000)[:10]
        assert (words_small == words_large).all()


class TestRunSim:
    def test_deterministic(self):
        assert run_sim(cfg(Fraction(3, 23), trials=1)) == run_sim(cfg(Fraction(3, 23), trials=1))

    def test_seed_matters(self):
        assert run_sim(cfg(Fraction(1, 5), seed=1)) != run_sim(cfg(Fraction(1, 5), seed=2))

    def test_order_independent(self):
        c = cfg(Fraction(1, 10), trials=30)
        forward = run_sim(c)
        shuffled = list(range(30))
        np.random.default_rng(0).shuffle(shuffled)
        assert run_sim(c, order=reversed(range(30))) == forward
        assert run_sim(c, order=shuffled) == forward

    def test_aggregate_rejects_missing_trials(self):
        c = cfg(Fraction(1, 10), trials=3)
        with pytest.raises(ValueError):
            aggregate(c, [run_trial(c, 0), run_trial(c, 2)])

    def test_quantiles_ordered(self):
        r = run_sim(cfg(Fraction(1, 5), n=200, trials=200))
        values = [v for _, v in r.quantiles]
        assert values == sorted(values)
        assert r.std_error.value >= 0

    @pytest.mark.parametrize("p", [Fraction(3, 23), Fraction(5, 23)])
    def test_oracle_at_thresholds(self, p):
        r = run_sim(cfg(p, n=10_000, trials=100, seed=42))
        expected = portfolio_yield(Share(p), EXAMPLE.rate).value
        assert abs(r.mean_consolidated_yield.value - expected) <= 3 * r.std_error.value

    def test_std_error_matches_binomial_formula(self):
        p = Fraction(1, 10)
        r = run_sim(cfg(p, n=10_000, trials=50))
        n = 500_000
        sigma = 1.15 * float(p * (1 - p)) ** 0.5
        assert float(r.std_error.value) == pytest.approx(sigma / n**0.5, rel=0.02)

    def test_tail_fraction(self):
        r = run_sim(cfg(Fraction(1, 2), n=100, trials=50))
        assert r.fraction_below_guarantee == Share(1)
        assert r.guarantee_level == Share.percent(10)

    def test_config_digest_tracks_config(self):
        assert cfg(0).digest() == cfg(0).digest()
        assert cfg(0).digest() != cfg(0, trials=21).digest()
        assert cfg(0).digest() == cfg(0, seed=8).digest()

    def test_validation(self):
        with pytest.raises(ValueError):
            cfg(0, n=0)
        with pytest.raises(ValueError):
            cfg(0, trials=0)
        with pytest.raises(ValueError):
            cfg(0, seed=-1)
        with pytest.raises(ValueError):
            cfg(0, seed=1 << 64)


class TestInvariants:
    @pytest.mark.parametrize("rate", [Rate.percent(10), Rate.percent(15)], ids=["K10", "K15"])
    @pytest.mark.parametrize("point", ["0", "5%", "X0", "15%", "Xcr", "30%"])
    def test_oracle_grid(self, rate, point):
        p = {
            "X0": break_even_default(rate).value,
            "Xcr": critical_default(rate, EXAMPLE.guarantee).value,
        }.get(point) or Fraction(point.rstrip("%")) / 100
        terms = LoanTerms(EXAMPLE.principal, rate, EXAMPLE.guarantee)
        r = run_sim(cfg(p, n=10_000, trials=100, seed=42, terms=terms))
        gap = abs(r.mean_consolidated_yield.value - portfolio_yield(Share(p), rate).value)
        assert gap < 3 * r.std_error.value if p else gap == r.std_error.value == 0

    @pytest.mark.parametrize("p", [Fraction(1, 20), Fraction(1, 5), Fraction(1, 2), Fraction(1)])
    def test_guarantee_cap_per_trial(self, p):
        c = cfg(p, n=500, trials=20)
        for i in range(20):
            assert run_trial(c, i).municipal_loss.value <= Fraction(1, 10)

    @pytest.mark.parametrize("p", [Fraction(0), Fraction(1, 10), Fraction(1, 2), Fraction(1)])
    def test_full_collateral_floor(self, p):
        recovery = CollateralRecovery(required_collateral(EXAMPLE), Share(1))
        c = cfg(p, n=500, trials=20, recovery=recovery)
        for i in range(20):
            assert run_trial(c, i).consolidated_yield >= Rate.percent(5)
        assert run_sim(c).quantiles[0][1] >= Rate.percent(5)

    def test_partial_recovery_between_extremes(self):
        half = CollateralRecovery(required_collateral(EXAMPLE), Share(Fraction(1, 2)))
        c_none, c_half = cfg(Fraction(1, 5)), cfg(Fraction(1, 5), recovery=half)
        for i in range(5):
            assert run_trial(c_none, i).consolidated_yield < run_trial(c_half, i).consolidated_yield


class TestHeterogeneousBook:
    def book(self):
        small = LoanTerms(Money.rubles(100_000), Rate.percent(12), Share.percent(10))
        large = LoanTerms(Money.rubles(900_000), Rate.percent(18), Share.percent(20))
        return [BookLoan(f"S{i}", small) for i in range(50)] + [
            BookLoan(f"B{i}", large, CollateralRecovery(Money.rubles(500_000))) for i in range(50)
        ]

    def test_matches_per_loan_brute_force(self):
        book = self.book()
        c = SimConfig.from_book(book, Share(Fraction(1, 4)), trials=3, seed=11)
        for t in range(3):
            words = np.random.Philox(key=11 + (t << 64)).random_raw(len(book))
            hit = words < np.uint64(int(Fraction(1, 4) * 2**64))
            net = 0
            for loan, d in zip(book, hit):
                p = loan.terms.principal.minor
                if not d:
                    net += p * (100 + (12 if loan.loan_id[0] == "S" else 18)) // 100 - p
                elif loan.recovery is None:
                    net -= p
                else:
                    # claim = 720,000 + 162,000 exceeds collateral, so 500,000 is recovered
                    net += 50_000_000 - p
            assert run_trial(c, t).consolidated_net == net

    def test_from_book_requires_rows(self):
        with pytest.raises(ValueError):
            SimConfig.from_book([], Share(0))
