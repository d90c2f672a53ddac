"""Loan-book CSV ingestion.

Columns (header mandatory, this order)::

    loan_id,principal_kopecks,rate_bp,guarantee_bp,collateral_value_kopecks,collateral_coeff_milli,sector

Amounts are integer kopecks so the file never needs rounding. Only the
canonical form is accepted: no quoting (ids and sectors may not contain
commas or quotes), no leading zeros, ``\\n`` line endings. That makes
``dumps(loads(text)) == text`` for every valid file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from vekselfund.deal import LoanTerms
from vekselfund.money import Money, Rate, Share
from vekselfund.simulator import BookLoan, CollateralRecovery

COLUMNS = (
    "loan_id",
    "principal_kopecks",
    "rate_bp",
    "guarantee_bp",
    "collateral_value_kopecks",
    "collateral_coeff_milli",
    "sector",
)
_NUMERIC = COLUMNS[1:6]
_INT_RE = re.compile(r"^(0|[1-9][0-9]*)$")
_TEXT_RE = re.compile(r'^[^,"\r\n]+$')


class LoanBookError(ValueError):
    def __init__(self, row: int, column: str | None, message: str):
        where = f"row {row}" + (f", column {column}" if column else "")
        super().__init__(f"{where}: {message}")
        self.row = row
        self.column = column


@dataclass(frozen=True)
class LoanBookRow:
    loan_id: str
    principal_kopecks: int
    rate_bp: int
    guarantee_bp: int
    collateral_value_kopecks: int
    collateral_coeff_milli: int
    sector: str

    def terms(self) -> LoanTerms:
        return LoanTerms(
            principal=Money(self.principal_kopecks),
            rate=Rate.from_bp(self.rate_bp),
            guarantee=Share.from_bp(self.guarantee_bp),
            collateral_coefficient=Fraction(self.collateral_coeff_milli, 1000),
            sector=self.sector,
        )

    def book_loan(self, recovery_fraction: Share = Share(1)) -> BookLoan:
        recovery = None
        if self.collateral_value_kopecks:
            recovery = CollateralRecovery(Money(self.collateral_value_kopecks), recovery_fraction)
        return BookLoan(self.loan_id, self.terms(), recovery)


def loads(text: str) -> list[LoanBookRow]:
    if text == "":
        raise LoanBookError(1, None, "missing header row")
    if not text.endswith("\n"):
        raise LoanBookError(text.count("\n") + 1, None, "missing final newline")
    lines = text[:-1].split("\n")
    if tuple(lines[0].split(",")) != COLUMNS:
        raise LoanBookError(1, None, f"header must be {','.join(COLUMNS)}")
    rows: list[LoanBookRow] = []
    seen: set[str] = set()
    for row_no, line in enumerate(lines[1:], 2):
        fields = line.split(",")
        if len(fields) != len(COLUMNS):
            raise LoanBookError(row_no, None, f"expected {len(COLUMNS)} fields, got {len(fields)}")
        record = dict(zip(COLUMNS, fields))
        for col in ("loan_id", "sector"):
            if not _TEXT_RE.match(record[col]):
                raise LoanBookError(row_no, col, f"empty or quoted value {record[col]!r}")
        loan_id = record["loan_id"]
        if loan_id in seen:
            raise LoanBookError(row_no, "loan_id", f"duplicate loan id {loan_id!r}")
        seen.add(loan_id)
        values = {}
        for col in _NUMERIC:
            if not _INT_RE.match(record[col]):
                raise LoanBookError(row_no, col, f"not a non-negative integer: {record[col]!r}")
            values[col] = int(record[col])
        row = LoanBookRow(loan_id=loan_id, sector=record["sector"], **values)
        if row.principal_kopecks == 0:
            raise LoanBookError(row_no, "principal_kopecks", "principal must be positive")
        if row.guarantee_bp >= 10_000:
            raise LoanBookError(row_no, "guarantee_bp", "guarantee must be below 10000 bp")
        try:
            row.terms()
        except (ValueError, ArithmeticError) as exc:
            raise LoanBookError(row_no, None, str(exc)) from None
        rows.append(row)
    return rows


def dumps(rows: list[LoanBookRow]) -> str:
    lines = [",".join(COLUMNS)]
    lines += [",".join(str(getattr(r, c)) for c in COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"
