"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible rate solve,
4 ledger invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from vekselfund import ledger as ledger_mod
from vekselfund import loanbook
from vekselfund.config import ConfigError, ScenarioConfig, load_config, parse_rate, parse_share
from vekselfund.deal import (
    CollateralBasis,
    DealOutcome,
    DealScenario,
    deal_yield_bounds,
    guarantee_face,
    interest_due,
    required_collateral,
    secured_claim,
    total_repayment,
    evaluate_outcome,
)
from vekselfund.ledger import FundAccount, LedgerError, LedgerFormatError, NoteState
from vekselfund.money import Rate, Share, format_fixed, to_decimal
from vekselfund.portfolio import (
    InfeasibleRateError,
    break_even_default,
    critical_default,
    portfolio_yield,
    solve_rate,
    tier_rate,
)
from vekselfund.simulator import SimConfig, SimReport, run_sim

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_LEDGER = 4

# coefficients a commercial lender typically demands, applied to the net principal
MARKET_COEFFICIENTS = (Fraction(3, 2), Fraction(8, 5))


class InputError(Exception):
    pass


def _pct(x: Rate | Share) -> str:
    return x.to_percent()


def _coef(q: Fraction) -> str:
    d = q.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d != 1:
        return str(q)
    return format_fixed(q, 4).rstrip("0").rstrip(".")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False)


def _text(rows: list[tuple[str, str]], indent: str = "  ") -> list[str]:
    width = max(len(k) for k, _ in rows)
    return [f"{indent}{k.ljust(width)}  {v}" for k, v in rows]


def _outcome_doc(o: DealOutcome) -> dict:
    return {
        "fund_cash_in": str(o.fund_cash_in),
        "recovered": str(o.recovered),
        "fund_yield_percent": _pct(o.fund_yield),
        "municipal_guarantee_draw": str(o.municipal_guarantee_draw),
        "municipal_result_percent": _pct(o.municipal_result),
        "municipal_roi_net_percent": None if o.municipal_roi_net is None else _pct(o.municipal_roi_net),
        "consolidated_yield_percent": _pct(o.consolidated_yield),
    }


def deal_report(cfg: ScenarioConfig) -> dict:
    t = cfg.terms
    collateral = cfg.collateral_value if cfg.collateral_value is not None else required_collateral(t)
    repaid = evaluate_outcome(t, DealScenario.repayment())
    failed = evaluate_outcome(t, DealScenario.default(collateral, cfg.recovery_fraction))
    bounds = deal_yield_bounds(t)
    return {
        "terms": {
            "principal": str(t.principal),
            "rate_percent": _pct(t.rate),
            "guarantee_percent": _pct(t.guarantee),
            "collateral_coefficient": _coef(t.collateral_coefficient),
            "collateral_basis": t.collateral_basis.value,
            "sector": t.sector,
        },
        "interest_due": str(interest_due(t)),
        "total_repayment": str(total_repayment(t)),
        "guarantee_face": str(guarantee_face(t)),
        "secured_claim": str(secured_claim(t)),
        "required_collateral": str(required_collateral(t)),
        "market_collateral": {
            _coef(c): str(required_collateral(
                replace(t, collateral_coefficient=c, collateral_basis=CollateralBasis.PRINCIPAL_NET)
            ))
            for c in MARKET_COEFFICIENTS
        },
        "full_repayment": _outcome_doc(repaid),
        "default": {
            "collateral_value": str(collateral),
            "recovery_percent": _pct(cfg.recovery_fraction),
            **_outcome_doc(failed),
        },
        "yield_bounds": {
            "municipal_convention_percent": [_pct(b) for b in bounds.municipal],
            "fund_convention_percent": [_pct(b) for b in bounds.fund],
        },
    }


def _outcome_lines(doc: dict) -> list[str]:
    roi = doc["municipal_roi_net_percent"]
    rows = [
        ("fund cash in", doc["fund_cash_in"]),
        ("fund yield", doc["fund_yield_percent"] + "%"),
        ("municipal guarantee draw", doc["municipal_guarantee_draw"]),
        ("municipal result", doc["municipal_result_percent"] + "%"),
        ("municipal ROI on net exposure", "n/a" if roi is None else roi + "%"),
        ("consolidated yield", doc["consolidated_yield_percent"] + "%"),
    ]
    return _text(rows, "    ")


def render_deal(doc: dict) -> str:
    t = doc["terms"]
    d = doc["default"]
    lo, hi = doc["yield_bounds"]["municipal_convention_percent"]
    flo, fhi = doc["yield_bounds"]["fund_convention_percent"]
    lines = ["Loan terms (1-year bullet)"]
    lines += _text([
        ("principal", t["principal"]),
        ("annual rate", t["rate_percent"] + "%"),
        ("guarantee (municipal notes)", t["guarantee_percent"] + "%"),
        ("collateral", f"coefficient {t['collateral_coefficient']}, basis {t['collateral_basis']}"),
        ("sector", t["sector"]),
    ])
    lines.append("Schedule")
    lines += _text([
        ("interest due", doc["interest_due"]),
        ("total repayment", doc["total_repayment"]),
        ("guarantee face", doc["guarantee_face"]),
        ("secured claim", doc["secured_claim"]),
        ("required collateral", doc["required_collateral"]),
    ])
    lines.append("Market collateral on net principal")
    lines += _text([(f"coefficient {c}", v) for c, v in doc["market_collateral"].items()])
    lines.append("Outcomes")
    lines.append("  Full repayment")
    lines += _outcome_lines(doc["full_repayment"])
    lines.append(f"  Default (collateral {d['collateral_value']}, recovery {d['recovery_percent']}%, recovered {d['recovered']})")
    lines += _outcome_lines(d)
    lines.append("Yield bounds")
    lines += _text([
        ("municipal convention", f"[{lo}%, {hi}%]"),
        ("fund convention", f"[{flo}%, {fhi}%]"),
    ])
    return "\n".join(lines) + "\n"


def portfolio_report(cfg: ScenarioConfig) -> dict:
    t = cfg.terms
    bounds = deal_yield_bounds(t)
    doc = {
        "rate_percent": _pct(t.rate),
        "guarantee_percent": _pct(t.guarantee),
        "break_even_default_percent": _pct(break_even_default(t.rate)),
        "critical_default_percent": _pct(critical_default(t.rate, t.guarantee)),
        "default_share_percent": _pct(cfg.default_prob),
        "yield_at_default_share_percent": _pct(portfolio_yield(cfg.default_prob, t.rate)),
        "municipal_convention_range_percent": [_pct(b) for b in bounds.municipal],
        "fund_convention_range_percent": [_pct(b) for b in bounds.fund],
    }
    if cfg.tier is not None:
        doc["tier"] = {
            "sector": cfg.tier.sector,
            "discount_percent": _pct(cfg.tier.rate_discount),
            "safety_margin_percent": _pct(cfg.tier.safety_margin),
            "rate_percent": _pct(tier_rate(t.rate, cfg.tier, cfg.default_prob, t.guarantee)),
        }
    return doc


def render_portfolio(doc: dict) -> str:
    lo, hi = doc["municipal_convention_range_percent"]
    flo, fhi = doc["fund_convention_range_percent"]
    rows = [
        ("rate K", doc["rate_percent"] + "%"),
        ("guarantee PP", doc["guarantee_percent"] + "%"),
        ("break-even default X0", doc["break_even_default_percent"] + "%"),
        ("critical default Xcr", doc["critical_default_percent"] + "%"),
        (f"yield at X = {doc['default_share_percent']}%", doc["yield_at_default_share_percent"] + "%"),
        ("range, municipal convention", f"[{lo}%, {hi}%]"),
        ("range, fund convention", f"[{flo}%, {fhi}%]"),
    ]
    if "tier" in doc:
        tier = doc["tier"]
        rows.append((f"tier rate ({tier['sector']})", tier["rate_percent"] + "%"))
    return "\n".join(["Portfolio thresholds"] + _text(rows)) + "\n"


def _bp(q: Fraction) -> float:
    return float(to_decimal(q, 4))


def sim_report_doc(r: SimReport) -> dict:
    return {
        "mean_fund_yield_bp": _bp(r.mean_fund_yield.bp),
        "mean_consolidated_yield_bp": _bp(r.mean_consolidated_yield.bp),
        "std_error_bp": _bp(r.std_error.bp),
        "quantiles_bp": {f"p{int(q * 100):02d}": _bp(v.bp) for q, v in r.quantiles},
        "municipal_loss_bp": _bp(r.mean_municipal_loss.bp),
        "fraction_below_guarantee_ppm": _bp(r.fraction_below_guarantee.ppm),
        "trials": r.trials,
        "total_loans": r.total_loans,
        "seed": r.seed,
        "config_digest": r.config_digest,
    }


def render_sim(r: SimReport) -> str:
    q = ", ".join(f"p{int(level * 100):02d} {v}" for level, v in r.quantiles)
    rows = [
        ("trials x loans", f"{r.trials} x {r.total_loans // r.trials}"),
        ("mean fund yield", str(r.mean_fund_yield)),
        ("mean consolidated yield", str(r.mean_consolidated_yield)),
        ("standard error", str(r.std_error)),
        ("mean municipal loss", str(r.mean_municipal_loss)),
        ("consolidated yield quantiles", q),
        (f"trials below -{r.guarantee_level}", str(r.fraction_below_guarantee)),
        ("seed", str(r.seed)),
        ("config digest", r.config_digest),
    ]
    return "\n".join(["Simulation"] + _text(rows)) + "\n"


def account_doc(acc: FundAccount) -> dict:
    return {
        "last_seq": acc.last_seq,
        "program_allocation": str(acc.program_allocation),
        "cash": str(acc.cash),
        "notes_outstanding": str(acc.notes_outstanding),
        "interest_income": str(acc.interest_income),
        "guarantee_losses": str(acc.guarantee_losses),
        "disbursed_principal": str(acc.disbursed_principal),
        "guarantee_capacity": str(acc.guarantee_capacity),
        "notes": {
            s.value: {"count": acc.count(s), "face": str(acc.face(s))} for s in NoteState
        },
        "loans": {rec.loan_id: rec.status.value for rec in acc.loans},
    }


def render_account(doc: dict) -> str:
    rows = [(k.replace("_", " "), str(doc[k])) for k in list(doc)[:8]]
    rows += [
        (f"notes {state}", f"{v['count']} ({v['face']})") for state, v in doc["notes"].items()
    ]
    rows += [(f"loan {k}", v) for k, v in doc["loans"].items()]
    return "\n".join(["Fund account"] + _text(rows)) + "\n"


def _require_config(args: argparse.Namespace) -> ScenarioConfig:
    if not args.config:
        raise InputError("--config is required for this command")
    return load_config(args.config)


def cmd_deal(args: argparse.Namespace) -> str:
    doc = deal_report(_require_config(args))
    return _dump(doc) + "\n" if args.format == "json" else render_deal(doc)


def cmd_portfolio(args: argparse.Namespace) -> str:
    doc = portfolio_report(_require_config(args))
    return _dump(doc) + "\n" if args.format == "json" else render_portfolio(doc)


def cmd_solve_rate(args: argparse.Namespace) -> str:
    try:
        forecast = parse_share(args.forecast_default)
        target = parse_rate(args.target_yield)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    k = solve_rate(forecast, target)
    check = portfolio_yield(forecast, k)
    doc = {
        "forecast_default_percent": _pct(forecast),
        "target_yield_percent": _pct(target),
        "rate_percent": _pct(k),
        "rate_exact": str(k.value),
        "verification_yield_percent": _pct(check),
    }
    if args.format == "json":
        return _dump(doc) + "\n"
    rows = [
        ("forecast default", doc["forecast_default_percent"] + "%"),
        ("target yield", doc["target_yield_percent"] + "%"),
        ("rate", f"{doc['rate_percent']}% (exact {doc['rate_exact']})"),
        ("yield at that rate", doc["verification_yield_percent"] + "%"),
    ]
    return "\n".join(["Solved lending rate"] + _text(rows)) + "\n"


def cmd_simulate(args: argparse.Namespace) -> str:
    cfg = load_config(args.config) if args.config else None
    try:
        default_prob = parse_share(args.default_prob) if args.default_prob else None
    except ValueError as exc:
        raise InputError(f"--default-prob: {exc}") from None
    if args.book:
        try:
            rows = loanbook.loads(Path(args.book).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read loan book: {exc}") from None
        if not rows:
            raise InputError("loan book has no rows")
        if default_prob is None:
            if cfg is None:
                raise InputError("--default-prob or --config is required with --book")
            default_prob = cfg.default_prob
        recovery = cfg.recovery_fraction if cfg else Share(1)
        sim = SimConfig.from_book(
            [r.book_loan(recovery) for r in rows],
            default_prob,
            trials=args.trials or (cfg.trials if cfg else 100),
            seed=args.seed if args.seed is not None else (cfg.seed if cfg else 0),
        )
    else:
        if cfg is None:
            raise InputError("--config or --book is required")
        sim = cfg.sim_config(args.seed)
        overrides = {}
        if default_prob is not None:
            overrides["default_prob"] = default_prob
        if args.trials:
            overrides["trials"] = args.trials
        if overrides:
            sim = replace(sim, **overrides)
    report = run_sim(sim)
    if args.format == "json":
        return _dump(sim_report_doc(report)) + "\n"
    return render_sim(report)


def cmd_ledger(args: argparse.Namespace) -> str:
    path = Path(args.ledger)
    try:
        fresh = args.action == "apply" and not path.exists()
        events = [] if fresh else ledger_mod.loads(path.read_text(encoding="utf-8"))
        if args.action == "apply":
            if not args.events:
                raise InputError("ledger apply needs --events FILE")
            new = ledger_mod.loads(Path(args.events).read_text(encoding="utf-8"))
        else:
            new = []
    except OSError as exc:
        raise InputError(str(exc)) from None
    account = ledger_mod.replay(events + new)
    if new:
        with path.open("a", encoding="utf-8", newline="") as fh:
            fh.write(ledger_mod.dumps(new))
    doc = account_doc(account)
    return _dump(doc) + "\n" if args.format == "json" else render_account(doc)


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def get_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file of key = value lines")
    common.add_argument("--format", choices=("text", "json"), default="text")

    parser = argparse.ArgumentParser(
        prog="vekselfund",
        description="Municipal note-guaranteed microloan risk toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deal", parents=[common], help="single-loan outcomes")
    p.set_defaults(func=cmd_deal)

    p = sub.add_parser("portfolio", parents=[common], help="break-even and critical default shares")
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("solve-rate", parents=[common], help="lending rate for a target yield")
    p.add_argument("--forecast-default", required=True, help="percent (13.0435) or exact ratio (3/23)")
    p.add_argument("--target-yield", required=True, help="percent, may be negative (-10)")
    p.set_defaults(func=cmd_solve_rate)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of the closed forms")
    p.add_argument("--book", help="loan-book CSV")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--default-prob", help="percent or exact ratio; overrides the config")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ledger", parents=[common], help="replay or extend a note ledger")
    p.add_argument("action", choices=("replay", "apply"))
    p.add_argument("ledger", help="ledger file")
    p.add_argument("--events", help="events to append (apply)")
    p.set_defaults(func=cmd_ledger)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = get_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        out = args.func(args)
    except InfeasibleRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except LedgerError as exc:
        print(f"error: ledger invariant violated at {exc}", file=sys.stderr)
        return EXIT_LEDGER
    except (ConfigError, InputError, LedgerFormatError, loanbook.LoanBookError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
