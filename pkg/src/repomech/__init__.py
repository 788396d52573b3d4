"""Multilateral netting of repo trades: netting, node splitting, chain and
cycle decomposition, replacement contracts, accounting comparisons and the
leverage-ratio rate model."""

from .accounting import (AgentPosition, BalanceSheetDelta, EndNodePolicy, SLRState, impact_post_reform,
                         impact_pre_reform, impact_repomech, positions_from_structures, slr_check)
from .ccp_compare import central_clear, compare_with_clearing, impact_central_clearing
from .decomposition import Chain, Cycle, Decomposition, decompose
from .flow_network import (AscendingFirstLegPrice, ExplicitAssignment, Role, SplitNode, TradeFlowNetwork,
                           build_flow_network, net_position, split_nodes)
from .settlement import NonperformanceEvent, Obj, Scenario, margin_requirements, net_obligations
from .trade_model import RepoTrade, ValidatedBook, bilateral_net, load_book, repo_rate, validate_book

__all__ = [
    "AgentPosition",
    "BalanceSheetDelta",
    "EndNodePolicy",
    "SLRState",
    "impact_post_reform",
    "impact_pre_reform",
    "impact_repomech",
    "positions_from_structures",
    "slr_check",
    "central_clear",
    "compare_with_clearing",
    "impact_central_clearing",
    "Chain",
    "Cycle",
    "Decomposition",
    "decompose",
    "AscendingFirstLegPrice",
    "ExplicitAssignment",
    "Role",
    "SplitNode",
    "TradeFlowNetwork",
    "build_flow_network",
    "net_position",
    "split_nodes",
    "NonperformanceEvent",
    "Obj",
    "Scenario",
    "margin_requirements",
    "net_obligations",
    "RepoTrade",
    "ValidatedBook",
    "bilateral_net",
    "load_book",
    "repo_rate",
    "validate_book",
]

__version__ = "0.1.0"
