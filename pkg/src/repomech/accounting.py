"""First-leg balance-sheet impact of repo positions under different rules.

Final-sale treatment books only money: the collateral moving in and out of a
balanced intermediary washes out, and an end node's collateral is carried at
the first-leg price it changed hands at.  The second leg is a forward booked
at fair value (FMV); a negative FMV is a liability.  Secured-financing
treatment books the borrower's cash and its repurchase obligation; the
lender swaps cash for a receivable of equal value.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable

from .decomposition import Structure
from .flow_network import Role, TradeFlowNetwork
from .money import ZERO, to_decimal
from .trade_model import RepoTrade


class NonPositiveDenominator(ValueError):
    pass


class EndNodePolicy(str, enum.Enum):
    SECURED_FINANCING = "SecuredFinancing"
    FINAL_SALE_DERIVATIVE = "FinalSaleDerivative"


class Regime(str, enum.Enum):
    PRE_REFORM = "PreReformFinalSale"
    POST_REFORM = "PostReformSecuredFinancing"
    REPOMECH = "RepoMech"
    CENTRAL_CLEARING = "CentralClearing"


@dataclass(frozen=True)
class LegPiece:
    """``qty`` units of one trade seen from one side."""

    trade_id: str
    qty: int
    p1: Decimal
    p2: Decimal
    lender: bool

    @property
    def first_leg_in(self) -> Decimal:
        return -self.qty * self.p1 if self.lender else self.qty * self.p1

    @property
    def second_leg_in(self) -> Decimal:
        return self.qty * self.p2 if self.lender else -self.qty * self.p2

    @property
    def interest_in(self) -> Decimal:
        return self.first_leg_in + self.second_leg_in

    def haircut(self, mark: Decimal) -> Decimal:
        """Display-only haircut of the first-leg price against a market mark."""
        return (mark - self.p1) / mark


@dataclass(frozen=True)
class AgentPosition:
    agent: str
    matched: tuple[LegPiece, ...] = ()
    excess: tuple[LegPiece, ...] = ()
    excess_role: Role | None = None
    matched_qty: int = 0  # collateral through the BT node
    excess_qty: int = 0
    collateral_mark: Decimal | None = None

    @property
    def pieces(self) -> tuple[LegPiece, ...]:
        return self.matched + self.excess

    def intermediation_margin(self) -> Decimal:
        return sum((p.interest_in for p in self.matched), ZERO)

    def notional(self) -> Decimal:
        """First-leg money received on matched borrowing."""
        return sum((p.first_leg_in for p in self.matched if not p.lender), ZERO)


@dataclass(frozen=True)
class Component:
    label: str
    side: str  # "A" or "L"
    amount: Decimal


@dataclass(frozen=True)
class BalanceSheetDelta:
    regime: str
    components: tuple[Component, ...]

    @property
    def d_assets(self) -> Decimal:
        return sum((c.amount for c in self.components if c.side == "A"), ZERO)

    @property
    def d_liabilities(self) -> Decimal:
        return sum((c.amount for c in self.components if c.side == "L"), ZERO)

    @property
    def net(self) -> Decimal:
        return self.d_assets - self.d_liabilities

    def component(self, label: str) -> Decimal:
        return sum((c.amount for c in self.components if c.label.endswith(label)), ZERO)

    @property
    def first_leg_assets(self) -> Decimal:
        """Asset change excluding any second-leg FMV."""
        return self.d_assets - sum((c.amount for c in self.components
                                    if c.side == "A" and c.label.endswith("fmv")), ZERO)


def _fmv(net: Decimal, adjustment: Decimal) -> Decimal:
    # undiscounted contractual value is the ceiling; adjustments only haircut it
    return min(net + adjustment, abs(net))


def _fmv_component(prefix: str, value: Decimal) -> Component:
    return Component(f"{prefix}fmv", "A" if value >= 0 else "L", abs(value))


def final_sale_matched(pieces: Iterable[LegPiece], fmv_adjustment=ZERO, prefix="matched.",
                       fmv2: Decimal | None = None) -> list[Component]:
    """First-leg margin plus the second-leg forward.

    ``fmv2`` overrides the forward's value outright; otherwise it is the net
    second-leg money plus ``fmv_adjustment``, capped at the contractual amount.
    """
    pieces = list(pieces)
    margin = sum((p.first_leg_in for p in pieces), ZERO)
    net2 = sum((p.second_leg_in for p in pieces), ZERO)
    value = to_decimal(fmv2) if fmv2 is not None else _fmv(net2, to_decimal(fmv_adjustment))
    return [Component(f"{prefix}first_leg_margin", "A", margin), _fmv_component(prefix, value)]


def final_sale_end(pieces: Iterable[LegPiece], fmv_adjustment=ZERO, prefix="excess.") -> list[Component]:
    pieces = list(pieces)
    cash = sum((p.first_leg_in for p in pieces), ZERO)
    interest = sum((p.interest_in for p in pieces), ZERO)
    return [Component(f"{prefix}first_leg_cash", "A", cash),
            Component(f"{prefix}collateral", "A", -cash),
            _fmv_component(prefix, _fmv(interest, to_decimal(fmv_adjustment)))]


def secured_financing(pieces: Iterable[LegPiece], prefix="") -> list[Component]:
    cash = repurchase = receivable = ZERO
    for p in pieces:
        cash += p.first_leg_in
        if p.lender:
            receivable += p.qty * p.p1
        else:
            repurchase += p.qty * p.p2
    out = [Component(f"{prefix}first_leg_cash", "A", cash)]
    if receivable:
        out.append(Component(f"{prefix}receivable", "A", receivable))
    out.append(Component(f"{prefix}repurchase_obligation", "L", repurchase))
    return out


def impact_pre_reform(pos: AgentPosition, fmv_adjustment=ZERO, fmv2: Decimal | None = None) -> BalanceSheetDelta:
    comps = final_sale_matched(pos.matched, fmv_adjustment, fmv2=fmv2)
    if pos.excess:
        comps += final_sale_end(pos.excess, fmv_adjustment)
    return BalanceSheetDelta(Regime.PRE_REFORM.value, tuple(comps))


def impact_post_reform(pos: AgentPosition) -> BalanceSheetDelta:
    return BalanceSheetDelta(Regime.POST_REFORM.value, tuple(secured_financing(pos.pieces)))


def impact_repomech(pos: AgentPosition, policy: EndNodePolicy = EndNodePolicy.SECURED_FINANCING,
                    fmv_adjustment=ZERO, fmv2: Decimal | None = None) -> BalanceSheetDelta:
    comps = final_sale_matched(pos.matched, fmv_adjustment, fmv2=fmv2) if pos.matched else []
    if pos.excess:
        if EndNodePolicy(policy) is EndNodePolicy.SECURED_FINANCING:
            comps += secured_financing(pos.excess, prefix="excess.")
        else:
            comps += final_sale_end(pos.excess, fmv_adjustment)
    return BalanceSheetDelta(f"{Regime.REPOMECH.value}({EndNodePolicy(policy).value})", tuple(comps))


# ------------------------------------------------------------- positions


def split_flows(flows):
    """Leg pieces and volumes per agent, bucketed by the node they sit on."""
    matched: dict[str, list[LegPiece]] = defaultdict(list)
    excess: dict[str, list[LegPiece]] = defaultdict(list)
    roles: dict[str, Role] = {}
    volume: dict[tuple[str, bool], int] = defaultdict(int)
    for source, target, allocations in flows:
        qty = sum(a.qty for a in allocations)
        if source.role is Role.BT:
            volume[(source.agent, True)] += qty
        else:
            volume[(source.agent, False)] += qty
        if target.role is not Role.BT:
            volume[(target.agent, False)] += qty
        for a in allocations:
            for node, is_lender in ((source, a.qty > 0), (target, a.qty < 0)):
                piece = LegPiece(a.trade_id, abs(a.qty), a.p1, a.p2, is_lender)
                if node.role is Role.BT:
                    matched[node.agent].append(piece)
                else:
                    excess[node.agent].append(piece)
                    roles[node.agent] = node.role
    agents = sorted(set(matched) | set(excess))
    return [(a, tuple(matched[a]), tuple(excess[a]), roles.get(a), volume[(a, True)], volume[(a, False)])
            for a in agents]


def _positions(flows) -> dict[str, AgentPosition]:
    return {a: AgentPosition(a, m, e, role, mq, eq) for a, m, e, role, mq, eq in split_flows(flows)}


def positions_from_structures(structures: Iterable[Structure]) -> dict[str, AgentPosition]:
    return _positions((e.source, e.target, e.allocations) for s in structures for e in s.edges)


def positions_from_tfn(tfn: TradeFlowNetwork) -> dict[str, AgentPosition]:
    return _positions((s.source, s.target, s.allocations) for s in tfn.segments)


def positions_from_trades(trades: Iterable[RepoTrade]) -> dict[str, AgentPosition]:
    """Unsplit positions: every piece is listed as matched."""
    acc: dict[str, list[LegPiece]] = defaultdict(list)
    for t in trades:
        acc[t.lender].append(LegPiece(t.trade_id, t.qty, t.p1, t.p2, True))
        acc[t.borrower].append(LegPiece(t.trade_id, t.qty, t.p1, t.p2, False))
    return {a: AgentPosition(a, tuple(ps)) for a, ps in sorted(acc.items())}


# ------------------------------------------------------------------- SLR


@dataclass(frozen=True)
class SLRState:
    capital: Decimal
    assets: Decimal
    exposures: Decimal
    floor: Decimal

    def __post_init__(self):
        for name in ("capital", "assets", "exposures", "floor"):
            object.__setattr__(self, name, to_decimal(getattr(self, name)))
        if self.assets < 0 or self.exposures < 0:
            raise ValueError("assets and exposures must be non-negative")
        if not 0 < self.floor < 1:
            raise ValueError("floor must lie strictly between 0 and 1")


def slr_check(state: SLRState, delta_assets) -> tuple[Decimal, bool]:
    denom = state.assets + state.exposures + to_decimal(delta_assets)
    if denom <= 0:
        raise NonPositiveDenominator(f"assets + exposures + delta = {denom}")
    return state.capital / denom, state.capital >= state.floor * denom
