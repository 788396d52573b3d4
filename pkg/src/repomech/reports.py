"""JSON and text renderings of every pipeline stage, plus policy/scenario loading."""

from __future__ import annotations

import json
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .accounting import (AgentPosition, EndNodePolicy, SLRState, impact_post_reform, impact_pre_reform,
                         impact_repomech, slr_check)
from .ccp_compare import ClearingComparison
from .decomposition import Decomposition, Structure, describe
from .flow_network import EdgeSegment, ExplicitAssignment, SplitNode, TradeFlowNetwork, assignment_from_tfn
from .money import fmt, price
from .settlement import NonperformanceEvent, Obj, Scenario, net_obligations
from .trade_model import Allocation, NettedEdge, PairResidual

DATA = resources.files("repomech") / "data"


def data_path(name: str) -> Path:
    return Path(str(DATA / name))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, Decimal):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def table(headers: Sequence[str], rows: Iterable[Sequence]) -> str:
    rows = [[str(c) for c in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(headers)]
    line = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths))).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def _allocs(allocations: Iterable[Allocation]) -> list[dict]:
    return [{"trade_id": a.trade_id, "qty": a.qty, "p1": a.p1, "p2": a.p2} for a in allocations]


# ---------------------------------------------------------------- netting


def netted_json(edges: Sequence[NettedEdge], residuals: Sequence[PairResidual] = ()) -> dict:
    return {
        "edges": [{"source": e.source, "target": e.target, "qty": e.qty, "m2": e.m2, "m1": e.m1,
                   "allocations": _allocs(e.allocations)} for e in edges],
        "pair_residuals": [{"first": r.first, "second": r.second, "m2": r.m2, "m1": r.m1,
                            "allocations": _allocs(r.allocations)} for r in residuals],
    }


def netted_text(edges: Sequence[NettedEdge], residuals: Sequence[PairResidual] = ()) -> str:
    out = table(["edge", "T", "m2", "m1", "trades"],
                [(f"{e.source}->{e.target}", e.qty, fmt(e.m2), fmt(e.m1),
                  ",".join(f"{a.trade_id}:{a.qty}" for a in e.allocations)) for e in edges])
    if residuals:
        out += "\nmoney-only residuals\n"
        out += table(["pair", "m2", "m1"], [(f"{r.first}-{r.second}", fmt(r.m2), fmt(r.m1)) for r in residuals])
    return out


# -------------------------------------------------------------------- TFN


def tfn_json(tfn: TradeFlowNetwork) -> dict:
    return {
        "nodes": [n.label for n in tfn.split_nodes],
        "segments": [{"source": s.source.label, "target": s.target.label, "qty": s.qty, "m2": s.m2, "m1": s.m1,
                      "allocations": _allocs(s.allocations)} for s in tfn.segments],
    }


def tfn_from_json(data: dict) -> TradeFlowNetwork:
    segments = []
    for s in data["segments"]:
        allocs = tuple(Allocation(str(a["trade_id"]), int(a["qty"]), price(a["p1"]), price(a["p2"]))
                       for a in s["allocations"])
        segments.append(EdgeSegment(SplitNode.parse(s["source"]), SplitNode.parse(s["target"]), allocs))
    nodes = tuple(SplitNode.parse(label) for label in data["nodes"])
    return TradeFlowNetwork(nodes, tuple(segments))


def tfn_text(tfn: TradeFlowNetwork) -> str:
    rows = [(n.label, tfn.inflow(n), tfn.outflow(n)) for n in tfn.split_nodes]
    out = table(["node", "T in", "T out"], rows) + "\n"
    out += table(["segment", "T", "m2", "m1"],
                 [(f"{s.source}->{s.target}", s.qty, fmt(s.m2), fmt(s.m1)) for s in tfn.segments])
    return out


def load_assignment(path: str | Path) -> ExplicitAssignment:
    """Read an assignment file or a TFN dump (whose split is reproduced)."""
    data = json.loads(Path(path).read_text())
    if "segments" in data:
        return assignment_from_tfn(tfn_from_json(data))
    excess = {}
    for agent, entries in data["excess"].items():
        excess[agent] = {(e["source"], e["target"]): int(e["qty"]) for e in entries}
    return ExplicitAssignment(excess)


# ---------------------------------------------------------- decomposition


def structure_json(s: Structure) -> dict:
    return {
        "id": s.id,
        "kind": "cycle" if s.closed else "chain",
        "qty": s.qty,
        "nodes": [n.label for n in s.nodes],
        "edges": [{"source": e.source.label, "target": e.target.label, "qty": e.qty, "m2": e.m2, "m1": e.m1,
                   "allocations": _allocs(e.allocations)} for e in s.edges],
        "text": describe(s),
    }


def decomposition_json(d: Decomposition) -> dict:
    return {"chains": [structure_json(s) for s in d.chains], "cycles": [structure_json(s) for s in d.cycles]}


def decomposition_text(structures: Iterable[Structure]) -> str:
    return "".join(f"{s.id:<5} {describe(s)}\n" for s in structures)


def contracts_json(structures: Iterable[Structure], scenario: Scenario | None = None) -> list[dict]:
    out = []
    for s in structures:
        c = scenario.contracts[s.id] if scenario else net_obligations(s)
        out.append({"structure": s.id, "status": c.status.value, "defaulted": c.defaulted,
                    "obligations": [{"node": o.node.label, "t_net": o.t_net, "m_net": o.m_net}
                                    for o in c.obligations]})
    return out


def contracts_text(structures: Iterable[Structure], scenario: Scenario | None = None) -> str:
    blocks = []
    for item in contracts_json(structures, scenario):
        head = f"{item['structure']} [{item['status']}{', defaulted' if item['defaulted'] else ''}]"
        body = table(["node", "T net out", "M net out"],
                     [(o["node"], o["t_net"], fmt(o["m_net"])) for o in item["obligations"]])
        blocks.append(head + "\n" + body)
    return "\n".join(blocks)


# --------------------------------------------------------------- scenario


def load_events(path: str | Path) -> list[NonperformanceEvent]:
    data = json.loads(Path(path).read_text())
    return [NonperformanceEvent(str(e["structure"]), SplitNode.parse(e["node"]), Obj(e["object"]))
            for e in data["events"]]


def scenario_json(scenario: Scenario) -> dict:
    return {
        "log": [{"structure": e.event.structure_id, "node": e.event.failing_node.label,
                 "object": e.event.object.value, "terminated": e.terminated, "created": e.created,
                 "recovered": e.recovered, "final_default": e.final_default} for e in scenario.log],
        "structures": [structure_json(s) for s in scenario.structures.values()],
        "contracts": contracts_json(scenario.structures.values(), scenario),
    }


def scenario_text(scenario: Scenario) -> str:
    lines = []
    for e in scenario.log:
        ev = f"{e.event.failing_node} fails to send {e.event.object.value} on {e.event.structure_id}"
        if e.final_default:
            lines.append(f"{ev}: final default")
            continue
        lines.append(f"{ev}: {e.terminated} terminated")
        for sid in e.created:
            lines.append(f"  new   {sid:<6} {describe(scenario.structures[sid])}")
        r = scenario.structures[e.recovered]
        lines.append(f"  trade {e.recovered:<6} {describe(r)}  (unit price {fmt(r.edges[0].unit_price())})")
    lines.append("")
    lines.append("live structures")
    lines += [f"  {s.id:<6} {describe(s)}" for s in scenario.live()]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- accounting


def _delta(delta) -> dict:
    return {"regime": delta.regime, "d_assets": delta.d_assets, "d_liabilities": delta.d_liabilities,
            "components": [{"label": c.label, "side": c.side, "amount": c.amount} for c in delta.components]}


def accounting_json(positions: dict[str, AgentPosition], policy: EndNodePolicy, fmv_adjustment=Decimal(0),
                    slr: SLRState | None = None) -> list[dict]:
    out = []
    for agent, pos in sorted(positions.items()):
        regimes = [impact_pre_reform(pos, fmv_adjustment), impact_post_reform(pos),
                   impact_repomech(pos, policy, fmv_adjustment)]
        row = {"agent": agent, "role": pos.excess_role.value if pos.excess_role else "BT",
               "matched_qty": pos.matched_qty, "excess_qty": pos.excess_qty,
               "intermediation_margin": pos.intermediation_margin(),
               "regimes": [_delta(d) for d in regimes]}
        if slr is not None:
            before, _ = slr_check(slr, 0)
            row["slr"] = {"before": _ratio(before)}
            for d in regimes:
                ratio, ok = slr_check(slr, d.d_assets)
                row["slr"][d.regime] = {"ratio": _ratio(ratio), "feasible": ok}
        out.append(row)
    return out


def _ratio(x: Decimal) -> str:
    return str(x.quantize(Decimal("0.000001")))


def accounting_text(rows: list[dict]) -> str:
    body = []
    for r in rows:
        for d in r["regimes"]:
            slr = r.get("slr", {}).get(d["regime"])
            body.append((r["agent"], d["regime"], fmt(d["d_assets"]), fmt(d["d_liabilities"]),
                         f"{slr['ratio']}{'' if slr['feasible'] else ' !'}" if slr else "-"))
    return table(["agent", "regime", "dA", "dL", "SLR"], body)


def ccp_json(rows: Sequence[ClearingComparison]) -> list[dict]:
    return [{"agent": r.agent, "repomech": _delta(r.repomech), "ccp": _delta(r.ccp),
             "repomech_first_leg_dA": r.repomech_da, "ccp_first_leg_dA": r.ccp_da,
             "holds": r.holds, "fee": r.fee} for r in rows]


def ccp_text(rows: Sequence[ClearingComparison]) -> str:
    return table(["agent", "RepoMech dA", "RepoMech dL", "CCP dA", "CCP dL",
                  "RepoMech 1st-leg dA", "CCP 1st-leg dA", "holds", "fee"],
                 [(r.agent, fmt(r.repomech.d_assets), fmt(r.repomech.d_liabilities), fmt(r.ccp.d_assets),
                   fmt(r.ccp.d_liabilities), fmt(r.repomech_da), fmt(r.ccp_da), "yes" if r.holds else "NO",
                   fmt(r.fee)) for r in rows])
