"""Peel a trade flow network into uniform-quantity chains and cycles.

Chains are peeled first, one MM node at a time (largest excess first).  A
walk from an MM node prefers stepping straight into an RM node, then the
segment whose cheapest remaining unit has the lowest first-leg price (ties by
trade id, then node label).  If the walk can only continue into a node it has
already visited, the loop it closed is peeled off as a cycle and the walk
resumes.  Whatever balanced flow is left afterwards is peeled into cycles.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable

from .flow_network import EdgeSegment, Role, SplitNode, TradeFlowNetwork, check_tfn, live_and_bundle
from .money import ZERO
from .trade_model import Allocation, allocation_totals, merge_allocations


class MalformedTFN(ValueError):
    pass


@dataclass(frozen=True)
class StructureEdge:
    """One edge of a chain or cycle: collateral flows source -> target."""

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

    def unit_price(self) -> Decimal:
        return self.m2 / self.qty


@dataclass(frozen=True)
class Chain:
    id: str
    nodes: tuple[SplitNode, ...]
    edges: tuple[StructureEdge, ...]

    @property
    def qty(self) -> int:
        return self.edges[0].qty if self.edges else 0

    @property
    def closed(self) -> bool:
        return False


@dataclass(frozen=True)
class Cycle:
    id: str
    nodes: tuple[SplitNode, ...]
    edges: tuple[StructureEdge, ...]

    @property
    def qty(self) -> int:
        return self.edges[0].qty if self.edges else 0

    @property
    def closed(self) -> bool:
        return True


Structure = Chain | Cycle


@dataclass(frozen=True)
class Decomposition:
    chains: tuple[Chain, ...]
    cycles: tuple[Cycle, ...]

    @property
    def structures(self) -> tuple[Structure, ...]:
        return self.chains + self.cycles

    def get(self, structure_id: str) -> Structure:
        for s in self.structures:
            if s.id == structure_id:
                return s
        raise KeyError(structure_id)


class _Residual:
    """Remaining units on one TFN segment."""

    def __init__(self, seg: EdgeSegment):
        self.source, self.target = seg.source, seg.target
        self.live, self.bundle = live_and_bundle(seg.allocations)

    @property
    def qty(self) -> int:
        return sum(a.qty for a in self.live)

    def head_key(self) -> tuple:
        return self.live[0].sort_key()

    def take(self, qty: int) -> tuple[Allocation, ...]:
        pieces, left = [], qty
        while left:
            a = self.live[0]
            n = min(a.qty, left)
            pieces.append(a.scaled(n))
            left -= n
            if n == a.qty:
                self.live.pop(0)
            else:
                self.live[0] = a.scaled(a.qty - n)
        if self.bundle:
            pieces.extend(self.bundle)
            self.bundle = []
        return merge_allocations(pieces)


def decompose(tfn: TradeFlowNetwork) -> Decomposition:
    problems = check_tfn(tfn)
    if problems:
        raise MalformedTFN("; ".join(problems))

    out_edges: dict[SplitNode, list[_Residual]] = defaultdict(list)
    for seg in tfn.segments:
        out_edges[seg.source].append(_Residual(seg))

    def pick(node: SplitNode, on_path: set[SplitNode]) -> _Residual:
        live = [r for r in out_edges[node] if r.qty > 0]
        return min(live, key=lambda r: (r.target in on_path, r.target.role is not Role.RM,
                                        r.head_key(), r.target.sort_key()))

    chains: list[tuple[tuple[SplitNode, ...], tuple[StructureEdge, ...]]] = []
    cycles: list[tuple[tuple[SplitNode, ...], tuple[StructureEdge, ...]]] = []

    def peel(path_edges: list[_Residual], into: list, nodes: list[SplitNode]) -> None:
        qty = min(r.qty for r in path_edges)
        edges = tuple(StructureEdge(r.source, r.target, r.take(qty)) for r in path_edges)
        into.append((tuple(nodes), edges))

    def walk(start: SplitNode, stop_at_rm: bool) -> None:
        path = [start]
        steps: list[_Residual] = []
        while True:
            node = path[-1]
            if stop_at_rm and node.role is Role.RM:
                peel(steps, chains, path)
                return
            if not stop_at_rm and not steps and not any(r.qty for r in out_edges[node]):
                return
            r = pick(node, set(path))
            if r.target in path:
                i = path.index(r.target)
                peel(steps[i:] + [r], cycles, path[i:])
                del path[i + 1:]
                del steps[i:]
                if not stop_at_rm and not any(x.qty for x in out_edges[path[0]]):
                    return
                continue
            path.append(r.target)
            steps.append(r)

    mm_nodes = sorted((n for n in tfn.split_nodes if n.role is Role.MM),
                      key=lambda n: (-tfn.outflow(n), n.sort_key()))
    for mm in mm_nodes:
        while any(r.qty for r in out_edges[mm]):
            walk(mm, stop_at_rm=True)
    for bt in (n for n in tfn.split_nodes if n.role is Role.BT):
        while any(r.qty for r in out_edges[bt]):
            walk(bt, stop_at_rm=False)

    chain_objs = tuple(Chain(f"C{i}", nodes, edges) for i, (nodes, edges) in enumerate(chains, 1))
    cycle_objs = tuple(Cycle(f"Y{i}", *_rotate(nodes, edges)) for i, (nodes, edges) in enumerate(cycles, 1))
    return Decomposition(chain_objs, cycle_objs)


def _rotate(nodes, edges):
    k = min(range(len(nodes)), key=lambda i: nodes[i].sort_key())
    return tuple(nodes[k:] + nodes[:k]), tuple(edges[k:] + edges[:k])


def attach_money(structure: Structure) -> list[tuple[SplitNode, SplitNode, int, Decimal, Decimal]]:
    """Per-edge ``(source, target, qty, m2, m1)`` recomputed from allocations."""
    out = []
    for e in structure.edges:
        qty, m2, m1 = allocation_totals(e.allocations)
        out.append((e.source, e.target, qty, m2, m1))
    return out


@dataclass(frozen=True)
class MirrorEdge:
    """First-leg edge: collateral flows ``t_from -> t_to``, money the other way."""

    t_from: SplitNode
    t_to: SplitNode
    qty: int
    money: Decimal
    allocations: tuple[Allocation, ...]


@dataclass(frozen=True)
class MirrorStructure:
    id: str
    nodes: tuple[SplitNode, ...]
    edges: tuple[MirrorEdge, ...]
    closed: bool


def mirror_first_leg(decomposition: Decomposition) -> list[MirrorStructure]:
    """Same topology with flows reversed and first-leg money on each edge."""
    out = []
    for s in decomposition.structures:
        edges = tuple(MirrorEdge(e.target, e.source, e.qty, e.m1, e.allocations) for e in s.edges)
        out.append(MirrorStructure(s.id, s.nodes, edges, s.closed))
    return out


def structure_pair_totals(structures: Iterable[Structure]) -> dict[tuple[str, str], tuple[int, Decimal, Decimal]]:
    acc: dict[tuple[str, str], list[Allocation]] = defaultdict(list)
    for s in structures:
        for e in s.edges:
            acc[e.parents].extend(e.allocations)
    return {pair: allocation_totals(a) for pair, a in acc.items()}


def describe(structure: Structure) -> str:
    """One-line rendering, e.g. ``MM_g -2T/13.06- BT_f ...``."""
    parts = [structure.nodes[0].label]
    for e in structure.edges:
        parts.append(f"-{e.qty}T/${e.m2}->")
        parts.append(e.target.label)
    return " ".join(parts)
