"""Replacement contracts on chains and cycles, nonperformance cascades, margin.

Sign convention: ``t_net`` and ``m_net`` are outflow minus inflow, so a
positive value is something the node must send.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable

from .decomposition import Chain, Decomposition, Structure, StructureEdge, structure_pair_totals
from .flow_network import SplitNode
from .money import ZERO, money, to_decimal


class InvalidEvent(ValueError):
    pass


class Status(str, enum.Enum):
    ACTIVE = "Active"
    TERMINATED = "Terminated"


class Obj(str, enum.Enum):
    T = "T"
    M = "M"


@dataclass(frozen=True)
class NetObligation:
    node: SplitNode
    t_net: int
    m_net: Decimal


@dataclass(frozen=True)
class ReplacementContract:
    structure_id: str
    obligations: tuple[NetObligation, ...]
    status: Status = Status.ACTIVE
    defaulted: bool = False

    def of(self, node: SplitNode) -> NetObligation:
        for o in self.obligations:
            if o.node == node:
                return o
        raise KeyError(node.label)


@dataclass(frozen=True)
class NonperformanceEvent:
    structure_id: str
    failing_node: SplitNode
    object: Obj


def net_obligations(structure: Structure) -> ReplacementContract:
    t: dict[SplitNode, int] = {n: 0 for n in structure.nodes}
    m: dict[SplitNode, Decimal] = {n: ZERO for n in structure.nodes}
    for e in structure.edges:
        t[e.source] += e.qty
        t[e.target] -= e.qty
        # second-leg money runs against the collateral
        m[e.target] += e.m2
        m[e.source] -= e.m2
    return ReplacementContract(structure.id, tuple(NetObligation(n, t[n], m[n]) for n in structure.nodes))


def _owed_edge(structure: Structure, node: SplitNode, obj: Obj) -> int:
    """Index of the edge on which ``node`` owes ``obj`` to its neighbour."""
    contract = net_obligations(structure)
    ob = contract.of(node)
    owed = ob.t_net if obj is Obj.T else ob.m_net
    if owed <= 0:
        raise InvalidEvent(f"{node.label} owes no {obj.value} on {structure.id}")
    candidates = []
    for i, e in enumerate(structure.edges):
        if obj is Obj.T and e.source == node:
            candidates.append((0, i))
        elif obj is Obj.M and e.target == node and e.m2 > 0:
            candidates.append((0, i))
        elif obj is Obj.M and e.source == node and e.m2 < 0:
            candidates.append((1, i))
    return min(candidates)[1]


def _chain_from(edges: list[StructureEdge], sid: str) -> Chain:
    nodes = [edges[0].source] + [e.target for e in edges]
    return Chain(sid, tuple(nodes), tuple(edges))


def split_structure(structure: Structure, node: SplitNode, obj: Obj) -> tuple[list[Chain], Chain]:
    """Pull the owed edge out of ``structure``.

    Returns the remaining chains and the recovered bilateral (one-edge chain).
    Edge quantities and money are carried over untouched.
    """
    k = _owed_edge(structure, node, obj)
    edges = list(structure.edges)
    owed = edges[k]
    if structure.closed:
        rest = [edges[(k + 1 + j) % len(edges)] for j in range(len(edges) - 1)]
        pieces = [rest] if rest else []
    else:
        pieces = [p for p in (edges[:k], edges[k + 1:]) if p]
    letters = "abcdefghijklmnopqrstuvwxyz"
    chains = [_chain_from(p, f"{structure.id}{letters[i]}") for i, p in enumerate(pieces)]
    recovered = _chain_from([owed], f"{structure.id}{letters[len(pieces)]}")
    return chains, recovered


@dataclass
class LogEntry:
    event: NonperformanceEvent
    terminated: str
    created: list[str]
    recovered: str | None
    final_default: bool


@dataclass
class Scenario:
    """Mutable cascade state over the structures of one decomposition."""

    structures: dict[str, Structure]
    contracts: dict[str, ReplacementContract]
    recovered: set[str] = field(default_factory=set)
    log: list[LogEntry] = field(default_factory=list)

    @classmethod
    def start(cls, decomposition: Decomposition | Iterable[Structure]) -> "Scenario":
        items = decomposition.structures if isinstance(decomposition, Decomposition) else tuple(decomposition)
        return cls({s.id: s for s in items}, {s.id: net_obligations(s) for s in items})

    def live(self) -> list[Structure]:
        return [s for sid, s in self.structures.items() if self.contracts[sid].status is Status.ACTIVE]

    def leaves(self) -> list[Structure]:
        """Active structures plus finally defaulted bilaterals (still owed)."""
        return [s for sid, s in self.structures.items()
                if self.contracts[sid].status is Status.ACTIVE or self.contracts[sid].defaulted]

    def apply(self, event: NonperformanceEvent) -> LogEntry:
        return simulate_nonperformance(self, event)


def simulate_nonperformance(scenario: Scenario, event: NonperformanceEvent) -> LogEntry:
    sid = event.structure_id
    if sid not in scenario.structures:
        raise InvalidEvent(f"unknown structure {sid}")
    contract = scenario.contracts[sid]
    if contract.status is not Status.ACTIVE:
        raise InvalidEvent(f"structure {sid} is already terminated")
    structure = scenario.structures[sid]
    if event.failing_node not in structure.nodes:
        raise InvalidEvent(f"{event.failing_node.label} is not on {sid}")

    if len(structure.edges) == 1:
        _owed_edge(structure, event.failing_node, event.object)
        scenario.contracts[sid] = ReplacementContract(sid, contract.obligations, Status.TERMINATED, defaulted=True)
        entry = LogEntry(event, sid, [], None, True)
        scenario.log.append(entry)
        return entry

    chains, recovered = split_structure(structure, event.failing_node, event.object)
    scenario.contracts[sid] = ReplacementContract(sid, contract.obligations, Status.TERMINATED)
    for c in chains + [recovered]:
        scenario.structures[c.id] = c
        scenario.contracts[c.id] = net_obligations(c)
    scenario.recovered.add(recovered.id)
    entry = LogEntry(event, sid, [c.id for c in chains], recovered.id, False)
    scenario.log.append(entry)
    return entry


def valid_events(structure: Structure) -> list[NonperformanceEvent]:
    out = []
    for ob in net_obligations(structure).obligations:
        if ob.t_net > 0:
            out.append(NonperformanceEvent(structure.id, ob.node, Obj.T))
        if ob.m_net > 0:
            out.append(NonperformanceEvent(structure.id, ob.node, Obj.M))
    return out


def margin_requirements(structure: Structure, delta_price, delta_vol=0, vol_coeff=0) -> dict[SplitNode, Decimal]:
    """Escrow change per node: ``t_net * (delta_price + vol_coeff * delta_vol)``.

    Positive means the node pays into escrow.  Interior chain nodes and every
    cycle node have ``t_net == 0`` and so pay nothing.
    """
    shock = to_decimal(delta_price) + to_decimal(vol_coeff) * to_decimal(delta_vol)
    return {ob.node: money(ob.t_net * shock) for ob in net_obligations(structure).obligations}


def node_money_totals(structures: Iterable[Structure]) -> dict[SplitNode, Decimal]:
    acc: dict[SplitNode, Decimal] = defaultdict(lambda: ZERO)
    for s in structures:
        for ob in net_obligations(s).obligations:
            acc[ob.node] += ob.m_net
    return dict(acc)


def pair_totals(scenario: Scenario):
    return structure_pair_totals(scenario.leaves())
