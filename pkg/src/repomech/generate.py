"""Seeded random repo books for property tests and demos."""

from __future__ import annotations

import random
from decimal import Decimal

from .trade_model import RepoTrade, book_to_csv

CENT = Decimal("0.01")


def random_trades(seed: int, n_agents: int, n_trades: int) -> list[RepoTrade]:
    if n_agents < 2:
        raise ValueError("a book needs at least two agents")
    if n_trades < 0:
        raise ValueError("n_trades must be non-negative")
    rng = random.Random(seed)
    agents = [f"a{i}" for i in range(n_agents)]
    trades = []
    for i in range(1, n_trades + 1):
        lender, borrower = rng.sample(agents, 2)
        p1 = Decimal(rng.randint(100, 999)) * CENT
        p2 = p1 + Decimal(rng.randint(0, 100)) * CENT
        trades.append(RepoTrade(str(i), lender, borrower, p1, p2, rng.randint(1, 20)))
    return trades


def generate_book(seed: int, n_agents: int, n_trades: int) -> str:
    """CSV text of a reproducible random book."""
    return book_to_csv(random_trades(seed, n_agents, n_trades))
