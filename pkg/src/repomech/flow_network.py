"""Second-leg collateral flow network and the parent-to-children node split.

Every agent with a nonzero net position gets one excess child: ``MM`` for a
net sender of collateral at the second leg (net repo lender) or ``RM`` for a
net receiver (net repo borrower).  Whatever flow remains is balanced and sits
on the agent's ``BT`` child.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping

from .money import ZERO
from .trade_model import Allocation, NettedEdge, allocation_totals, merge_allocations


class UnknownAgent(KeyError):
    pass


class SplitPolicyError(ValueError):
    pass


class Role(str, enum.Enum):
    MM = "MM"
    BT = "BT"
    RM = "RM"


ROLE_ORDER = {Role.MM: 0, Role.BT: 1, Role.RM: 2}


@dataclass(frozen=True, order=False)
class SplitNode:
    agent: str
    role: Role

    @property
    def label(self) -> str:
        return f"{self.role.value}_{self.agent}"

    def sort_key(self) -> tuple:
        return (self.agent, ROLE_ORDER[self.role])

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, label: str) -> "SplitNode":
        role, sep, agent = label.partition("_")
        if not sep or role not in Role.__members__ or not agent:
            raise ValueError(f"bad node label {label!r}")
        return cls(agent, Role(role))


@dataclass(frozen=True)
class EdgeSegment:
    source: SplitNode
    target: SplitNode
    allocations: tuple[Allocation, ...]

    @property
    def qty(self) -> int:
        return sum(a.qty for a in self.allocations)

    @property
    def m2(self) -> Decimal:
        return sum((a.m2 for a in self.allocations), ZERO)

    @property
    def m1(self) -> Decimal:
        return sum((a.m1 for a in self.allocations), ZERO)

    @property
    def parents(self) -> tuple[str, str]:
        return (self.source.agent, self.target.agent)

    def sort_key(self) -> tuple:
        return (self.source.sort_key(), self.target.sort_key())


@dataclass(frozen=True)
class FlowNetwork:
    nodes: tuple[str, ...]
    edges: tuple[NettedEdge, ...]

    def net_positions(self) -> dict[str, int]:
        pos = {n: 0 for n in self.nodes}
        for e in self.edges:
            pos[e.source] += e.qty
            pos[e.target] -= e.qty
        return pos


@dataclass(frozen=True)
class TradeFlowNetwork:
    split_nodes: tuple[SplitNode, ...]
    segments: tuple[EdgeSegment, ...]

    def outflow(self, node: SplitNode) -> int:
        return sum(s.qty for s in self.segments if s.source == node)

    def inflow(self, node: SplitNode) -> int:
        return sum(s.qty for s in self.segments if s.target == node)

    def node(self, label: str) -> SplitNode:
        for n in self.split_nodes:
            if n.label == label:
                return n
        raise UnknownAgent(label)

    def excess(self) -> dict[SplitNode, int]:
        out = {}
        for n in self.split_nodes:
            if n.role is Role.MM:
                out[n] = self.outflow(n)
            elif n.role is Role.RM:
                out[n] = self.inflow(n)
        return out


@dataclass(frozen=True)
class AscendingFirstLegPrice:
    """Detach excess units cheapest first-leg price first, ties by trade id."""


@dataclass(frozen=True)
class ExplicitAssignment:
    """Per-agent excess units taken from named parent edges.

    ``excess`` maps an agent to ``{(source, target): qty}``.  Agents left out
    fall back to :class:`AscendingFirstLegPrice`.
    """

    excess: Mapping[str, Mapping[tuple[str, str], int]] = field(default_factory=dict)


SplitPolicy = AscendingFirstLegPrice | ExplicitAssignment


def build_flow_network(edges: Iterable[NettedEdge]) -> FlowNetwork:
    edges = tuple(edges)
    seen = set()
    for e in edges:
        if e.pair in seen:
            raise ValueError(f"more than one edge {e.source}->{e.target}")
        if e.qty <= 0:
            raise ValueError(f"edge {e.source}->{e.target} has non-positive quantity")
        seen.add(e.pair)
    nodes = tuple(sorted({e.source for e in edges} | {e.target for e in edges}))
    return FlowNetwork(nodes, tuple(sorted(edges, key=lambda e: e.pair)))


def net_position(network: FlowNetwork, agent: str) -> int:
    """Second-leg collateral outflow minus inflow."""
    if agent not in network.nodes:
        raise UnknownAgent(agent)
    return network.net_positions()[agent]


def live_and_bundle(allocations: Iterable[Allocation]) -> tuple[list[Allocation], list[Allocation]]:
    """Split a flow's allocations into live units and a zero-quantity bundle.

    Live units come back sorted by (first-leg price, trade id).  Opposite-
    direction trades cancel against the most expensive forward units; what
    cancels keeps its money but no longer moves collateral.
    """
    allocations = list(allocations)
    forward = sorted((a for a in allocations if a.qty > 0), key=Allocation.sort_key)
    reverse = [a for a in allocations if a.qty < 0]
    to_cancel = -sum(a.qty for a in reverse)
    bundle = list(reverse)
    live: list[Allocation] = []
    for a in reversed(forward):
        take = min(a.qty, to_cancel)
        to_cancel -= take
        if take:
            bundle.append(a.scaled(take))
        if a.qty - take:
            live.append(a.scaled(a.qty - take))
    live.reverse()
    return live, bundle


def slice_units(units: list[Allocation], start: int, stop: int) -> list[Allocation]:
    """Allocation pieces covering unit positions ``[start, stop)``."""
    out = []
    pos = 0
    for a in units:
        lo, hi = max(start, pos), min(stop, pos + a.qty)
        if hi > lo:
            out.append(a.scaled(hi - lo))
        pos += a.qty
        if pos >= stop:
            break
    return out


def _ascending_choice(agent: str, edges: list[NettedEdge], amount: int,
                      lives: dict[tuple[str, str], list[Allocation]]) -> dict[tuple[str, str], int]:
    candidates = []
    for e in edges:
        for a in lives[e.pair]:
            candidates.append((a.sort_key(), e.pair, a.qty))
    candidates.sort()
    chosen: dict[tuple[str, str], int] = defaultdict(int)
    left = amount
    for _, pair, qty in candidates:
        if left == 0:
            break
        take = min(qty, left)
        chosen[pair] += take
        left -= take
    if left:
        raise SplitPolicyError(f"agent {agent} lacks {left} units of flow")
    return dict(chosen)


def _explicit_choice(agent: str, edges: list[NettedEdge], amount: int,
                     wanted: Mapping[tuple[str, str], int]) -> dict[tuple[str, str], int]:
    by_pair = {e.pair: e for e in edges}
    chosen = {}
    for pair, qty in wanted.items():
        pair = tuple(pair)
        if pair not in by_pair:
            raise SplitPolicyError(f"agent {agent}: {pair[0]}->{pair[1]} is not one of its excess-side edges")
        if not 0 <= qty <= by_pair[pair].qty:
            raise SplitPolicyError(f"agent {agent}: {qty} units exceed edge {pair[0]}->{pair[1]}")
        if qty:
            chosen[pair] = qty
    if sum(chosen.values()) != amount:
        raise SplitPolicyError(
            f"agent {agent}: assignment covers {sum(chosen.values())} units, excess is {amount}")
    return chosen


def split_nodes(network: FlowNetwork, policy: SplitPolicy | None = None) -> TradeFlowNetwork:
    policy = policy or AscendingFirstLegPrice()
    positions = network.net_positions()
    lives, bundles = {}, {}
    for e in network.edges:
        lives[e.pair], bundles[e.pair] = live_and_bundle(e.allocations)

    explicit = policy.excess if isinstance(policy, ExplicitAssignment) else {}
    for agent in explicit:
        if positions.get(agent, 0) == 0:
            raise SplitPolicyError(f"agent {agent} has no excess to assign")

    # units each edge gives to its source's MM child / its target's RM child
    from_mm: dict[tuple[str, str], int] = defaultdict(int)
    to_rm: dict[tuple[str, str], int] = defaultdict(int)
    for agent in network.nodes:
        net = positions[agent]
        if net == 0:
            continue
        side = [e for e in network.edges if (e.source if net > 0 else e.target) == agent]
        if agent in explicit:
            chosen = _explicit_choice(agent, side, abs(net), explicit[agent])
        else:
            chosen = _ascending_choice(agent, side, abs(net), lives)
        target = from_mm if net > 0 else to_rm
        for pair, qty in chosen.items():
            target[pair] += qty

    segments = []
    for e in network.edges:
        u, v, q = e.source, e.target, e.qty
        a, b = from_mm[e.pair], to_rm[e.pair]
        x = max(0, a + b - q)
        mm_u, bt_u = SplitNode(u, Role.MM), SplitNode(u, Role.BT)
        rm_v, bt_v = SplitNode(v, Role.RM), SplitNode(v, Role.BT)
        layout = [
            (mm_u, bt_v, 0, a - x),
            (mm_u, rm_v, a - x, a),
            (bt_u, rm_v, a, a + b - x),
            (bt_u, bt_v, a + b - x, q),
        ]
        bundle = bundles[e.pair]
        for src, dst, lo, hi in layout:
            if hi <= lo:
                continue
            pieces = slice_units(lives[e.pair], lo, hi)
            if bundle:
                pieces = pieces + bundle
                bundle = []
            segments.append(EdgeSegment(src, dst, merge_allocations(pieces)))
    segments.sort(key=EdgeSegment.sort_key)
    nodes = sorted({s.source for s in segments} | {s.target for s in segments}, key=SplitNode.sort_key)
    return TradeFlowNetwork(tuple(nodes), tuple(segments))



def check_tfn(tfn: TradeFlowNetwork) -> list[str]:
    """Return invariant violations (empty when the TFN is well formed)."""
    problems = []
    inflow: dict[SplitNode, int] = defaultdict(int)
    outflow: dict[SplitNode, int] = defaultdict(int)
    for s in tfn.segments:
        if s.qty <= 0:
            problems.append(f"segment {s.source}->{s.target} has quantity {s.qty}")
        outflow[s.source] += s.qty
        inflow[s.target] += s.qty
    roles: dict[str, set[Role]] = defaultdict(set)
    for n in tfn.split_nodes:
        roles[n.agent].add(n.role)
        if n.role is Role.BT and inflow[n] != outflow[n]:
            problems.append(f"{n} unbalanced: in {inflow[n]} out {outflow[n]}")
        if n.role is Role.MM and inflow[n]:
            problems.append(f"{n} has inflow")
        if n.role is Role.RM and outflow[n]:
            problems.append(f"{n} has outflow")
    for agent, rs in roles.items():
        if Role.MM in rs and Role.RM in rs:
            problems.append(f"agent {agent} has both MM and RM children")
    mm = sum(outflow[n] for n in tfn.split_nodes if n.role is Role.MM)
    rm = sum(inflow[n] for n in tfn.split_nodes if n.role is Role.RM)
    if mm != rm:
        problems.append(f"MM outflow {mm} != RM inflow {rm}")
    return problems


def pair_totals_segments(segments: Iterable[EdgeSegment]) -> dict[tuple[str, str], tuple[int, Decimal, Decimal]]:
    acc: dict[tuple[str, str], list] = defaultdict(list)
    for s in segments:
        acc[s.parents].extend(s.allocations)
    return {pair: allocation_totals(allocs) for pair, allocs in acc.items()}


def assignment_from_tfn(tfn: TradeFlowNetwork) -> ExplicitAssignment:
    """The explicit assignment that reproduces ``tfn``'s excess split."""
    excess: dict[str, dict[tuple[str, str], int]] = defaultdict(lambda: defaultdict(int))
    for s in tfn.segments:
        if s.source.role is Role.MM:
            excess[s.source.agent][s.parents] += s.qty
        if s.target.role is Role.RM:
            excess[s.target.agent][s.parents] += s.qty
    return ExplicitAssignment({a: dict(m) for a, m in excess.items()})
