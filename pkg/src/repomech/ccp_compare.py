"""Central clearing as a comparator.

Every trade piece is novated to a single clearing house.  Balanced (BT)
flows between intermediaries are extinguished and leave each intermediary
with one net money amount against the CCP; excess flows stay open as repos
with the CCP and are booked as secured financings.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from .accounting import (AgentPosition, BalanceSheetDelta, Component, EndNodePolicy, LegPiece, Regime, split_flows,
                         final_sale_matched, impact_repomech, positions_from_structures, secured_financing)
from .decomposition import Decomposition, decompose
from .flow_network import EdgeSegment, Role, TradeFlowNetwork
from .money import ZERO, to_decimal

CCP = "CCP"


@dataclass(frozen=True)
class CcpAccount:
    agent: str
    matched: tuple[LegPiece, ...]
    excess: tuple[LegPiece, ...]
    excess_role: Role | None
    matched_qty: int
    excess_qty: int

    @property
    def matched_net_m2(self) -> Decimal:
        """Second-leg money the agent receives from the CCP on matched volume."""
        return sum((p.second_leg_in for p in self.matched), ZERO)

    @property
    def matched_net_m1(self) -> Decimal:
        return sum((p.first_leg_in for p in self.matched), ZERO)

    @property
    def excess_m1(self) -> Decimal:
        return sum((p.first_leg_in for p in self.excess), ZERO)

    @property
    def excess_m2(self) -> Decimal:
        return sum((p.second_leg_in for p in self.excess), ZERO)

    @property
    def t_out(self) -> int:
        """Second-leg collateral the agent delivers to the CCP, net."""
        return sum(p.qty if p.lender else -p.qty for p in self.matched + self.excess)

    @property
    def money_in(self) -> Decimal:
        return self.matched_net_m1 + self.matched_net_m2 + self.excess_m1 + self.excess_m2

    @property
    def gross_units(self) -> int:
        return sum(p.qty for p in self.matched + self.excess)


@dataclass(frozen=True)
class CcpBook:
    accounts: dict[str, CcpAccount]
    extinguished: tuple[EdgeSegment, ...]
    ccp: str = CCP

    def ccp_t_position(self) -> int:
        return -sum(a.t_out for a in self.accounts.values())

    def ccp_m_position(self) -> Decimal:
        return -sum((a.money_in for a in self.accounts.values()), ZERO)


def central_clear(tfn: TradeFlowNetwork) -> CcpBook:
    accounts = {row[0]: CcpAccount(*row)
                for row in split_flows((s.source, s.target, s.allocations) for s in tfn.segments)}
    extinguished = tuple(s for s in tfn.segments if s.source.role is Role.BT and s.target.role is Role.BT)
    return CcpBook(accounts, extinguished)


def impact_central_clearing(agent: str, book: CcpBook, fmv_adjustment=ZERO) -> BalanceSheetDelta:
    if agent not in book.accounts:
        raise KeyError(agent)
    acct = book.accounts[agent]
    comps: list[Component] = []
    if acct.matched:
        comps += final_sale_matched(acct.matched, fmv_adjustment)
    if acct.excess:
        comps += secured_financing(acct.excess, prefix="excess.")
    return BalanceSheetDelta(Regime.CENTRAL_CLEARING.value, tuple(comps))


@dataclass(frozen=True)
class ClearingComparison:
    agent: str
    repomech: BalanceSheetDelta
    ccp: BalanceSheetDelta
    fee: Decimal

    @property
    def repomech_da(self) -> Decimal:
        return self.repomech.first_leg_assets

    @property
    def ccp_da(self) -> Decimal:
        return self.ccp.first_leg_assets

    @property
    def holds(self) -> bool:
        return self.repomech_da <= self.ccp_da


def compare_with_clearing(tfn: TradeFlowNetwork, policy: EndNodePolicy = EndNodePolicy.SECURED_FINANCING,
                       fmv_adjustment=ZERO, fee_per_unit=ZERO,
                       decomposition: Decomposition | None = None) -> list[ClearingComparison]:
    """Per-agent first-leg asset change under RepoMech vs central clearing.

    Both sides use the same FMV convention and the comparison excludes the
    second-leg FMV, which is common to both by construction.
    """
    decomposition = decomposition or decompose(tfn)
    positions = positions_from_structures(decomposition.structures)
    book = central_clear(tfn)
    fee = to_decimal(fee_per_unit)
    rows = []
    for agent in sorted(book.accounts):
        pos = positions.get(agent, AgentPosition(agent))
        rows.append(ClearingComparison(agent, impact_repomech(pos, policy, fmv_adjustment),
                             impact_central_clearing(agent, book, fmv_adjustment),
                             fee * book.accounts[agent].gross_units))
    return rows
