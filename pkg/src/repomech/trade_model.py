"""Repo trade book: validation, repo rates and pairwise netting of second legs.

A repo trade has a lender and a borrower.  At the first leg the lender pays
``qty * p1`` and receives the collateral; at the second leg the lender sends
the collateral back and receives ``qty * p2``.  Netting works on second-leg
collateral flows, so every netted edge points from the lender side.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .money import ZERO, price

CSV_FIELDS = ("trade_id", "lender", "borrower", "first_leg_price", "second_leg_price", "quantity")


class BookError(ValueError):
    """A trade violates a book invariant."""

    def __init__(self, trade_id: str, message: str):
        super().__init__(f"trade {trade_id}: {message}")
        self.trade_id = trade_id


class DuplicateTradeId(BookError):
    pass


class SelfTrade(BookError):
    pass


class NonPositiveQuantity(BookError):
    pass


class NonPositivePrice(BookError):
    pass


def trade_key(trade_id: str) -> tuple:
    """Natural sort key so that trade "10" follows trade "9"."""
    return tuple((0, int(tok), "") if tok.isdigit() else (1, 0, tok)
                 for tok in re.findall(r"\d+|\D+", trade_id))


@dataclass(frozen=True)
class RepoTrade:
    trade_id: str
    lender: str
    borrower: str
    p1: Decimal
    p2: Decimal
    qty: int

    @property
    def first_leg_money(self) -> Decimal:
        return self.qty * self.p1

    @property
    def second_leg_money(self) -> Decimal:
        return self.qty * self.p2


@dataclass(frozen=True)
class ValidatedBook:
    trades: tuple[RepoTrade, ...]

    def __len__(self) -> int:
        return len(self.trades)

    def __iter__(self):
        return iter(self.trades)

    @property
    def agents(self) -> tuple[str, ...]:
        return tuple(sorted({t.lender for t in self.trades} | {t.borrower for t in self.trades}))

    def by_id(self) -> dict[str, RepoTrade]:
        return {t.trade_id: t for t in self.trades}


@dataclass(frozen=True)
class Allocation:
    """``qty`` units of one trade carried on a directed flow.

    Positive ``qty`` means the trade runs in the direction of the flow it sits
    on (its lender is the flow's source); negative means the opposite.
    """

    trade_id: str
    qty: int
    p1: Decimal
    p2: Decimal

    @property
    def m1(self) -> Decimal:
        return self.qty * self.p1

    @property
    def m2(self) -> Decimal:
        return self.qty * self.p2

    def scaled(self, qty: int) -> "Allocation":
        return Allocation(self.trade_id, qty, self.p1, self.p2)

    def sort_key(self) -> tuple:
        return (self.p1, trade_key(self.trade_id))


def allocation_totals(allocations: Iterable[Allocation]) -> tuple[int, Decimal, Decimal]:
    qty, m2, m1 = 0, ZERO, ZERO
    for a in allocations:
        qty += a.qty
        m2 += a.m2
        m1 += a.m1
    return qty, m2, m1


def merge_allocations(allocations: Iterable[Allocation]) -> tuple[Allocation, ...]:
    """Sum allocation pieces per trade, dropping pieces that cancel."""
    acc: dict[str, Allocation] = {}
    for a in allocations:
        prev = acc.get(a.trade_id)
        acc[a.trade_id] = a if prev is None else prev.scaled(prev.qty + a.qty)
    return tuple(sorted((a for a in acc.values() if a.qty != 0),
                        key=lambda a: trade_key(a.trade_id)))


@dataclass(frozen=True)
class NettedEdge:
    """Net second-leg collateral flow between two agents.

    ``m2`` is second-leg money flowing target -> source and ``m1`` first-leg
    money flowing source -> target; both are signed sums over allocations.
    """

    source: str
    target: str
    qty: int
    allocations: tuple[Allocation, ...] = field(default_factory=tuple)

    @property
    def m2(self) -> Decimal:
        return sum((a.m2 for a in self.allocations), ZERO)

    @property
    def m1(self) -> Decimal:
        return sum((a.m1 for a in self.allocations), ZERO)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class PairResidual:
    """Money left between two agents whose collateral flows cancel exactly.

    Amounts are oriented as if on an edge ``first -> second``.
    """

    first: str
    second: str
    m2: Decimal
    m1: Decimal
    allocations: tuple[Allocation, ...]


def validate_book(trades: Iterable[RepoTrade]) -> ValidatedBook:
    seen: set[str] = set()
    checked = []
    for t in trades:
        if t.trade_id in seen:
            raise DuplicateTradeId(t.trade_id, "duplicate trade id")
        seen.add(t.trade_id)
        if not t.trade_id or not t.lender or not t.borrower:
            raise BookError(t.trade_id, "empty identifier")
        if t.lender == t.borrower:
            raise SelfTrade(t.trade_id, f"lender and borrower are both {t.lender!r}")
        if not isinstance(t.qty, int) or t.qty <= 0:
            raise NonPositiveQuantity(t.trade_id, f"quantity {t.qty!r} must be a positive integer")
        if t.p1 <= 0:
            raise NonPositivePrice(t.trade_id, f"first-leg price {t.p1} must be positive")
        if t.p2 < 0:
            raise NonPositivePrice(t.trade_id, f"second-leg price {t.p2} is negative")
        checked.append(t)
    checked.sort(key=lambda t: trade_key(t.trade_id))
    return ValidatedBook(tuple(checked))


def repo_rate(trade: RepoTrade) -> Fraction:
    """Exact repo rate ``(p2 - p1) / p1``."""
    p1 = Fraction(trade.p1)
    return (Fraction(trade.p2) - p1) / p1


def _pair_allocations(book: ValidatedBook):
    pairs: dict[tuple[str, str], list[Allocation]] = defaultdict(list)
    for t in book:
        a, b = sorted((t.lender, t.borrower))
        sign = 1 if t.lender == a else -1
        pairs[(a, b)].append(Allocation(t.trade_id, sign * t.qty, t.p1, t.p2))
    return pairs


def bilateral_net(book: ValidatedBook) -> list[NettedEdge]:
    """Net all second-leg collateral flows of each agent pair into one edge.

    Pairs whose flows cancel exactly produce no edge; any money left between
    them is reported by :func:`pair_residuals`.
    """
    edges = []
    for (a, b), allocs in sorted(_pair_allocations(book).items()):
        net = sum(x.qty for x in allocs)
        if net == 0:
            continue
        if net > 0:
            source, target, oriented = a, b, allocs
        else:
            source, target = b, a
            oriented = [x.scaled(-x.qty) for x in allocs]
        oriented = sorted(oriented, key=lambda x: (x.qty < 0, trade_key(x.trade_id)))
        edges.append(NettedEdge(source, target, abs(net), tuple(oriented)))
    return edges


def pair_residuals(book: ValidatedBook) -> list[PairResidual]:
    out = []
    for (a, b), allocs in sorted(_pair_allocations(book).items()):
        if sum(x.qty for x in allocs) != 0:
            continue
        m2 = sum((x.m2 for x in allocs), ZERO)
        m1 = sum((x.m1 for x in allocs), ZERO)
        if m2 == 0 and m1 == 0:
            continue
        out.append(PairResidual(a, b, m2, m1, tuple(sorted(allocs, key=lambda x: trade_key(x.trade_id)))))
    return out


# ---------------------------------------------------------------- ingestion


def _parse_qty(trade_id: str, raw: object) -> int:
    text = str(raw).strip()
    if not re.fullmatch(r"-?\d+", text):
        raise NonPositiveQuantity(trade_id, f"quantity {raw!r} is not an integer")
    return int(text)


def trade_from_record(rec: dict) -> RepoTrade:
    missing = [f for f in CSV_FIELDS if f not in rec or rec[f] in (None, "")]
    if missing:
        raise ValueError(f"record {rec!r} is missing {', '.join(missing)}")
    tid = str(rec["trade_id"]).strip()
    return RepoTrade(
        trade_id=tid,
        lender=str(rec["lender"]).strip(),
        borrower=str(rec["borrower"]).strip(),
        p1=price(rec["first_leg_price"]),
        p2=price(rec["second_leg_price"]),
        qty=_parse_qty(tid, rec["quantity"]),
    )


def trade_to_record(t: RepoTrade) -> dict:
    return {
        "trade_id": t.trade_id,
        "lender": t.lender,
        "borrower": t.borrower,
        "first_leg_price": str(t.p1),
        "second_leg_price": str(t.p2),
        "quantity": t.qty,
    }


def parse_book_csv(text: str) -> list[RepoTrade]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    header = [h.strip() for h in reader.fieldnames]
    if tuple(header) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {header}; expected {list(CSV_FIELDS)}")
    reader.fieldnames = header
    return [trade_from_record(row) for row in reader]


def parse_book_json(text: str) -> list[RepoTrade]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("trades", [])
    return [trade_from_record(rec) for rec in data]


def load_book(path: str | Path) -> ValidatedBook:
    path = Path(path)
    text = path.read_text()
    trades = parse_book_json(text) if path.suffix.lower() == ".json" else parse_book_csv(text)
    return validate_book(trades)


def book_to_csv(trades: Iterable[RepoTrade]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for t in trades:
        r = trade_to_record(t)
        w.writerow([r[f] for f in CSV_FIELDS])
    return buf.getvalue()
