"""Event-sourced registry of municipal guarantee notes and the fund's cash.

The event log is the only authoritative record; every balance is derived by
folding events in sequence order. Note life cycle::

    ISSUED -> PLEDGED(loan) -> RETURNED     (loan repaid, note retired)
                            -> PRESENTED    (loan defaulted, budget offset)

Returned notes are retired. Guarantee capacity comes back through a fresh
issue against the unchanged program allocation.

File format: one event per line, tab-separated, fields in fixed order
``seq  KIND  payload...``; amounts are integer kopecks, note id lists are
comma-joined. Parsing accepts only the canonical form, so
``dumps(loads(text)) == text`` for every accepted file.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from vekselfund.deal import DealOutcome, LoanTerms, ScenarioKind, guarantee_face
from vekselfund.money import Money


class LedgerError(Exception):
    """An event cannot be applied to the state built from its predecessors."""

    def __init__(self, seq: int, message: str):
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq


class LedgerInvariantError(LedgerError):
    """A conservation invariant broke after applying an event."""


class LedgerFormatError(ValueError):
    """A ledger line is not in canonical form."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EventKind(enum.Enum):
    ALLOCATE = "ALLOCATE"
    ISSUE_SERIES = "ISSUE_SERIES"
    DISBURSE = "DISBURSE"
    PLEDGE = "PLEDGE"
    REPAY = "REPAY"
    DEFAULT = "DEFAULT"


# payload field types per kind, in file order
_PAYLOAD: dict[EventKind, tuple[str, ...]] = {
    EventKind.ALLOCATE: ("amount",),
    EventKind.ISSUE_SERIES: ("amount", "amount", "count"),
    EventKind.DISBURSE: ("id", "amount"),
    EventKind.PLEDGE: ("id", "amount", "ids"),
    EventKind.REPAY: ("id", "amount", "amount"),
    EventKind.DEFAULT: ("id", "amount"),
}

_INT_RE = re.compile(r"^(0|[1-9][0-9]*)$")
_ID_RE = re.compile(r"^[A-Za-z0-9_.:-]+$")


@dataclass(frozen=True)
class LedgerEvent:
    """One immutable log record.

    Payloads by kind:
      ALLOCATE      amount
      ISSUE_SERIES  total, denomination, first_note_id
      DISBURSE      loan_id, principal             (loan without notes)
      PLEDGE        loan_id, principal, note_ids   (notes pledged and cash disbursed)
      REPAY         loan_id, cash_in, interest
      DEFAULT       loan_id, recovered
    """

    seq: int
    kind: EventKind
    payload: tuple

    def to_line(self) -> str:
        fields = [str(self.seq), self.kind.value]
        for tag, value in zip(_PAYLOAD[self.kind], self.payload):
            fields.append(",".join(map(str, value)) if tag == "ids" else str(value))
        return "\t".join(fields)

    @classmethod
    def from_line(cls, line: str, line_no: int = 0) -> LedgerEvent:
        parts = line.split("\t")
        if len(parts) < 2:
            raise LedgerFormatError(line_no, "expected at least seq and kind")
        seq = _parse_int(parts[0], line_no, "seq")
        try:
            kind = EventKind(parts[1])
        except ValueError:
            raise LedgerFormatError(line_no, f"unknown event kind {parts[1]!r}") from None
        tags = _PAYLOAD[kind]
        if len(parts) - 2 != len(tags):
            raise LedgerFormatError(
                line_no, f"{kind.value} takes {len(tags)} payload fields, got {len(parts) - 2}"
            )
        payload = []
        for tag, raw in zip(tags, parts[2:]):
            if tag == "id":
                if not _ID_RE.match(raw):
                    raise LedgerFormatError(line_no, f"bad loan id {raw!r}")
                payload.append(raw)
            elif tag == "ids":
                payload.append(tuple(_parse_int(x, line_no, "note id") for x in raw.split(",")))
            else:
                payload.append(_parse_int(raw, line_no, tag))
        return cls(seq, kind, tuple(payload))


def _parse_int(raw: str, line_no: int, what: str) -> int:
    if not _INT_RE.match(raw):
        raise LedgerFormatError(line_no, f"{what} must be a non-negative integer, got {raw!r}")
    return int(raw)


def loads(text: str) -> list[LedgerEvent]:
    if text == "":
        return []
    if not text.endswith("\n"):
        raise LedgerFormatError(text.count("\n") + 1, "missing final newline")
    return [LedgerEvent.from_line(line, i) for i, line in enumerate(text[:-1].split("\n"), 1)]


def dumps(events: Iterable[LedgerEvent]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


class NoteState(enum.Enum):
    ISSUED = "issued"
    PLEDGED = "pledged"
    RETURNED = "returned"
    PRESENTED = "presented"


class LoanStatus(enum.Enum):
    ACTIVE = "active"
    REPAID = "repaid"
    DEFAULTED = "defaulted"


@dataclass(frozen=True)
class VekselNote:
    note_id: int
    face_value: Money
    state: NoteState
    loan_id: str | None
    issued_at: int
    transitioned_at: int


@dataclass(frozen=True)
class LoanRecord:
    loan_id: str
    principal: Money
    note_ids: tuple[int, ...]
    guarantee: Money
    status: LoanStatus
    pledged_at: int
    settled_at: int | None = None


@dataclass(frozen=True)
class FundAccount:
    program_allocation: Money = Money(0)
    cash: Money = Money(0)
    notes_outstanding: Money = Money(0)
    interest_income: Money = Money(0)
    guarantee_losses: Money = Money(0)
    issued_total: Money = Money(0)
    pledged_total: Money = Money(0)
    returned_total: Money = Money(0)
    disbursed_principal: Money = Money(0)
    last_seq: int = 0
    notes: tuple[VekselNote, ...] = ()
    loans: tuple[LoanRecord, ...] = ()

    @property
    def pledged_face(self) -> Money:
        """Face of notes currently backing active loans."""
        return sum((n.face_value for n in self.notes if n.state is NoteState.PLEDGED), Money(0))

    @property
    def issue_headroom(self) -> Money:
        """How much more may be issued: allocation not tied up in live notes or spent on losses."""
        return self.program_allocation - self.notes_outstanding - self.guarantee_losses

    @property
    def guarantee_capacity(self) -> Money:
        """Allocation still free to guarantee new loans (unpledged notes count as free)."""
        return self.program_allocation - self.pledged_face - self.guarantee_losses

    def count(self, state: NoteState) -> int:
        return sum(1 for n in self.notes if n.state is state)

    def face(self, state: NoteState) -> Money:
        return sum((n.face_value for n in self.notes if n.state is state), Money(0))

    def loan(self, loan_id: str) -> LoanRecord | None:
        for rec in self.loans:
            if rec.loan_id == loan_id:
                return rec
        return None


class _Fold:
    """Mutable accumulator behind ``replay``. Each handler validates before mutating."""

    def __init__(self) -> None:
        self.allocation = 0
        self.cash = 0
        self.outstanding = 0
        self.interest = 0
        self.losses = 0
        self.issued = 0
        self.pledged = 0
        self.returned = 0
        self.disbursed = 0
        self.seq = 0
        self.notes: dict[int, VekselNote] = {}
        self.loans: dict[str, LoanRecord] = {}

    def apply(self, ev: LedgerEvent) -> None:
        if ev.seq != self.seq + 1:
            raise LedgerError(ev.seq, f"expected seq {self.seq + 1}")
        getattr(self, "_" + ev.kind.value.lower())(ev.seq, *ev.payload)
        self.seq = ev.seq
        self.check(ev.seq)

    def _allocate(self, seq: int, amount: int) -> None:
        if amount <= 0:
            raise LedgerError(seq, "allocation must be positive")
        self.allocation += amount
        self.cash += amount

    def _issue_series(self, seq: int, total: int, denomination: int, first_id: int) -> None:
        if denomination <= 0:
            raise LedgerError(seq, "denomination must be positive")
        if total % denomination:
            raise LedgerError(seq, f"total {total} is not a multiple of denomination {denomination}")
        headroom = self.allocation - self.outstanding - self.losses
        if total > headroom:
            raise LedgerError(seq, f"issue of {total} exceeds headroom {headroom}")
        expected_id = len(self.notes) + 1
        if first_id != expected_id:
            raise LedgerError(seq, f"series must start at note id {expected_id}, got {first_id}")
        for i in range(total // denomination):
            nid = first_id + i
            self.notes[nid] = VekselNote(nid, Money(denomination), NoteState.ISSUED, None, seq, seq)
        self.outstanding += total
        self.issued += total

    def _open_loan(self, seq: int, loan_id: str, principal: int, note_ids: tuple[int, ...]) -> None:
        if loan_id in self.loans:
            raise LedgerError(seq, f"loan {loan_id!r} already exists")
        if principal <= 0:
            raise LedgerError(seq, "principal must be positive")
        if principal > self.cash:
            raise LedgerError(seq, f"disbursement {principal} exceeds cash {self.cash}")
        if len(set(note_ids)) != len(note_ids):
            raise LedgerError(seq, "note pledged twice in one event")
        face = 0
        for nid in note_ids:
            note = self.notes.get(nid)
            if note is None:
                raise LedgerError(seq, f"unknown note {nid}")
            if note.state is not NoteState.ISSUED:
                raise LedgerError(seq, f"note {nid} is {note.state.value}, cannot pledge")
            face += note.face_value.minor
        for nid in note_ids:
            self.notes[nid] = replace(
                self.notes[nid], state=NoteState.PLEDGED, loan_id=loan_id, transitioned_at=seq
            )
        self.loans[loan_id] = LoanRecord(
            loan_id, Money(principal), note_ids, Money(face), LoanStatus.ACTIVE, seq
        )
        self.cash -= principal
        self.disbursed += principal
        self.pledged += face

    def _disburse(self, seq: int, loan_id: str, principal: int) -> None:
        self._open_loan(seq, loan_id, principal, ())

    def _pledge(self, seq: int, loan_id: str, principal: int, note_ids: tuple[int, ...]) -> None:
        self._open_loan(seq, loan_id, principal, note_ids)

    def _active(self, seq: int, loan_id: str) -> LoanRecord:
        rec = self.loans.get(loan_id)
        if rec is None:
            raise LedgerError(seq, f"unknown loan {loan_id!r}")
        if rec.status is not LoanStatus.ACTIVE:
            raise LedgerError(seq, f"loan {loan_id!r} already settled ({rec.status.value})")
        return rec

    def _close(self, seq: int, rec: LoanRecord, status: LoanStatus, note_state: NoteState) -> None:
        for nid in rec.note_ids:
            self.notes[nid] = replace(self.notes[nid], state=note_state, transitioned_at=seq)
        self.loans[rec.loan_id] = replace(rec, status=status, settled_at=seq)
        self.outstanding -= rec.guarantee.minor

    def _repay(self, seq: int, loan_id: str, cash_in: int, interest: int) -> None:
        rec = self._active(seq, loan_id)
        if cash_in != rec.principal.minor + interest:
            raise LedgerError(seq, f"repayment {cash_in} != principal {rec.principal.minor} + interest {interest}")
        self._close(seq, rec, LoanStatus.REPAID, NoteState.RETURNED)
        self.cash += cash_in
        self.interest += interest
        self.returned += rec.guarantee.minor

    def _default(self, seq: int, loan_id: str, recovered: int) -> None:
        rec = self._active(seq, loan_id)
        self._close(seq, rec, LoanStatus.DEFAULTED, NoteState.PRESENTED)
        self.cash += recovered
        self.losses += rec.guarantee.minor

    def check(self, seq: int) -> None:
        sums = {s: 0 for s in NoteState}
        for note in self.notes.values():
            sums[note.state] += note.face_value.minor
        live = sums[NoteState.ISSUED] + sums[NoteState.PLEDGED]
        problems = []
        if live != self.outstanding:
            problems.append(f"outstanding {self.outstanding} != live note face {live}")
        if self.outstanding + sums[NoteState.RETURNED] + sums[NoteState.PRESENTED] != self.issued:
            problems.append("note face values do not sum to the issued total")
        if sums[NoteState.RETURNED] != self.returned or sums[NoteState.PRESENTED] != self.losses:
            problems.append("retired note face disagrees with booked totals")
        if self.losses > self.pledged:
            problems.append("guarantee losses exceed notes ever pledged")
        if self.cash < 0:
            problems.append(f"cash is negative ({self.cash})")
        if self.outstanding + self.losses > self.allocation:
            problems.append("live notes plus losses exceed the program allocation")
        if problems:
            raise LedgerInvariantError(seq, "; ".join(problems))

    def snapshot(self) -> FundAccount:
        return FundAccount(
            program_allocation=Money(self.allocation),
            cash=Money(self.cash),
            notes_outstanding=Money(self.outstanding),
            interest_income=Money(self.interest),
            guarantee_losses=Money(self.losses),
            issued_total=Money(self.issued),
            pledged_total=Money(self.pledged),
            returned_total=Money(self.returned),
            disbursed_principal=Money(self.disbursed),
            last_seq=self.seq,
            notes=tuple(self.notes[k] for k in sorted(self.notes)),
            loans=tuple(self.loans[k] for k in sorted(self.loans)),
        )


def replay(events: Iterable[LedgerEvent]) -> FundAccount:
    fold = _Fold()
    for ev in events:
        fold.apply(ev)
    return fold.snapshot()


def select_cover(notes: list[VekselNote], target: int) -> list[VekselNote] | None:
    """Lexicographically smallest set of notes (by id) whose faces sum to ``target``."""
    notes = sorted(notes, key=lambda n: n.note_id)
    # reach[i]: sums attainable from notes[i:], capped at target
    reach = [set() for _ in range(len(notes) + 1)]
    reach[-1] = {0}
    for i in range(len(notes) - 1, -1, -1):
        face = notes[i].face_value.minor
        reach[i] = reach[i + 1] | {s + face for s in reach[i + 1] if s + face <= target}
    if target not in reach[0]:
        return None
    chosen, remaining = [], target
    for i, note in enumerate(notes):
        if remaining == 0:
            break
        face = note.face_value.minor
        if face <= remaining and remaining - face in reach[i + 1]:
            chosen.append(note)
            remaining -= face
    return chosen


@dataclass
class VekselLedger:
    """Append-only ledger: every operation validates, logs one event and refolds it."""

    events: list[LedgerEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._fold = _Fold()
        for ev in self.events:
            self._fold.apply(ev)
        self._snapshot: FundAccount | None = None

    @classmethod
    def from_text(cls, text: str) -> VekselLedger:
        return cls(loads(text))

    @property
    def account(self) -> FundAccount:
        if self._snapshot is None:
            self._snapshot = self._fold.snapshot()
        return self._snapshot

    def dumps(self) -> str:
        return dumps(self.events)

    def append(self, kind: EventKind, *payload) -> LedgerEvent:
        ev = LedgerEvent(self._fold.seq + 1, kind, tuple(payload))
        self._fold.apply(ev)
        self.events.append(ev)
        self._snapshot = None
        return ev

    def allocate(self, amount: Money) -> FundAccount:
        self.append(EventKind.ALLOCATE, amount.minor)
        return self.account

    def issue_series(self, total: Money, denomination: Money) -> list[VekselNote]:
        if total.minor == 0:
            return []
        first = len(self._fold.notes) + 1
        self.append(EventKind.ISSUE_SERIES, total.minor, denomination.minor, first)
        return [self._fold.notes[i] for i in range(first, len(self._fold.notes) + 1)]

    def pledge(self, loan_id: str, terms: LoanTerms) -> LoanRecord:
        """Disburse ``terms.principal`` and pledge notes covering the guarantee exactly."""
        target = guarantee_face(terms).minor
        if target == 0:
            self.append(EventKind.DISBURSE, loan_id, terms.principal.minor)
            return self._fold.loans[loan_id]
        free = [n for n in self._fold.notes.values() if n.state is NoteState.ISSUED]
        if sum(n.face_value.minor for n in free) < target:
            raise LedgerError(self._fold.seq + 1, f"insufficient notes to guarantee {Money(target)}")
        cover = select_cover(free, target)
        if cover is None:
            raise LedgerError(
                self._fold.seq + 1, f"no exact cover of {Money(target)} from available denominations"
            )
        ids = tuple(n.note_id for n in cover)
        self.append(EventKind.PLEDGE, loan_id, terms.principal.minor, ids)
        return self._fold.loans[loan_id]

    def settle(self, loan_id: str, outcome: DealOutcome) -> FundAccount:
        rec = self._fold.loans.get(loan_id)
        if rec is not None and rec.principal != outcome.principal:
            raise ValueError(f"outcome principal {outcome.principal} does not match loan {loan_id!r}")
        if outcome.kind is ScenarioKind.FULL_REPAYMENT:
            self.append(EventKind.REPAY, loan_id, outcome.fund_cash_in.minor, outcome.interest.minor)
        else:
            if rec is not None and outcome.municipal_guarantee_draw != rec.guarantee:
                raise ValueError("outcome guarantee draw does not match the pledged notes")
            self.append(EventKind.DEFAULT, loan_id, outcome.recovered.minor)
        return self.account
