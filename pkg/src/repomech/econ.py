"""Leverage-ratio economics of a repo dealer.

A hedge fund supplies collateral (borrows cash) along a decreasing concave
curve S(r); a money fund lends cash along an increasing concave curve D(r)
floored at its outside option r0.  The dealer picks the rate it pays the
money fund to maximise

    (r_int - r) D(r) - c L max(D(r) - D_bar, 0)

where the second term is the capital charge once the leverage floor L binds.
These are model curves, so everything here is plain float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

XTOL = 1e-12


class EmptyFeasibleRange(ValueError):
    pass


class NotBinding(ValueError):
    pass


@dataclass(frozen=True)
class HedgeFundParams:
    alpha: float
    gamma_sigma2: float
    k: float
    m: float

    def __post_init__(self):
        if self.gamma_sigma2 <= 0 or self.m <= 0 or self.k < 0:
            raise ValueError("need gamma_sigma2 > 0, m > 0, k >= 0")

    @property
    def A(self) -> float:
        return self.gamma_sigma2 + self.k


@dataclass(frozen=True)
class MmfParams:
    a: float
    b: float
    r0: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("need a > 0, b > 0")


@dataclass(frozen=True)
class DealerParams:
    r_int: float
    c: float
    floor: float
    d_bar: float
    demand: MmfParams

    def __post_init__(self):
        if self.c < 0 or not 0 < self.floor < 1 or self.d_bar < 0:
            raise ValueError("need c >= 0, 0 < floor < 1, d_bar >= 0")


def hedge_fund_supply(r, p: HedgeFundParams):
    r = np.asarray(r, dtype=float)
    gap = np.maximum(p.alpha - r, 0.0)
    s = (-p.A + np.sqrt(p.A * p.A + 4 * p.m * gap)) / (2 * p.m)
    return s if s.ndim else float(s)


def hedge_fund_supply_d1(r, p: HedgeFundParams):
    s = hedge_fund_supply(r, p)
    return -1.0 / (p.A + 2 * p.m * np.asarray(s))


def hedge_fund_supply_d2(r, p: HedgeFundParams):
    s = hedge_fund_supply(r, p)
    return -2 * p.m / (p.A + 2 * p.m * np.asarray(s)) ** 3


def mmf_demand(r, p: MmfParams):
    r = np.asarray(r, dtype=float)
    gap = np.maximum(r - p.r0, 0.0)
    d = (-p.a + np.sqrt(p.a * p.a + 4 * p.b * gap)) / (2 * p.b)
    return d if d.ndim else float(d)


def mmf_demand_d1(r, p: MmfParams):
    d = mmf_demand(r, p)
    return 1.0 / (p.a + 2 * p.b * np.asarray(d))


def mmf_demand_d2(r, p: MmfParams):
    d = mmf_demand(r, p)
    return -2 * p.b / (p.a + 2 * p.b * np.asarray(d)) ** 3


def mmf_inverse(volume: float, p: MmfParams) -> float:
    """Rate at which the money fund lends exactly ``volume``."""
    return p.r0 + p.a * volume + p.b * volume * volume


def dealer_profit(r: float, p: DealerParams) -> float:
    d = mmf_demand(r, p.demand)
    return (p.r_int - r) * d - p.c * p.floor * max(d - p.d_bar, 0.0)


def foc_residual(r: float, p: DealerParams) -> float:
    """Marginal profit on the binding piece."""
    return (p.r_int - r - p.c * p.floor) * mmf_demand_d1(r, p.demand) - mmf_demand(r, p.demand)


@dataclass(frozen=True)
class DealerOptimum:
    r_star: float
    volume: float
    constrained: bool
    profit: float
    kink: float
    d_bar: float
    trace: tuple[tuple[str, float, float], ...] = field(default=(), compare=False)

    @property
    def interior_binding(self) -> bool:
        """Binding and strictly past the kink, where the first-order condition holds."""
        return self.volume > self.d_bar and abs(self.r_star - self.kink) > 1e-9


def _piece_max(f, lo: float, hi: float, label: str, trace: list) -> list[float]:
    res = minimize_scalar(lambda r: -f(r), bounds=(lo, hi), method="bounded", options={"xatol": XTOL})
    trace.append((label, float(res.x), float(-res.fun)))
    return [float(res.x)]


def dealer_optimal_rate(p: DealerParams) -> DealerOptimum:
    lo, hi = p.demand.r0, p.r_int
    if hi < lo:
        raise EmptyFeasibleRange(f"r_int {hi} is below the floor rate {lo}")
    kink = mmf_inverse(p.d_bar, p.demand) if math.isfinite(p.d_bar) else math.inf
    f = lambda r: dealer_profit(r, p)
    trace: list[tuple[str, float, float]] = []
    candidates = [lo, hi]
    k = min(max(kink, lo), hi)
    candidates.append(k)
    # each piece is strictly concave: a bracketed first-order root is its maximiser,
    # otherwise fall back to the bounded search
    g_slack = lambda r: (p.r_int - r) * mmf_demand_d1(r, p.demand) - mmf_demand(r, p.demand)
    for label, g, a, b in (("slack", g_slack, lo, k), ("binding", lambda r: foc_residual(r, p), k, hi)):
        if b - a <= XTOL:
            continue
        if g(a) > 0 > g(b):
            root = brentq(g, a, b, xtol=XTOL, rtol=4 * np.finfo(float).eps)
            trace.append((f"{label}_foc", root, f(root)))
            candidates.append(root)
        else:
            candidates += _piece_max(f, a, b, label, trace)
    best = max(candidates, key=lambda r: (f(r), -r))
    volume = mmf_demand(best, p.demand)
    return DealerOptimum(best, volume, bool(volume >= p.d_bar - 1e-12), f(best), kink, p.d_bar, tuple(trace))


def slr_rate_sensitivity(p: DealerParams, dL: float = 1e-4) -> float:
    """Central difference of the optimal rate in the leverage floor."""
    lo = dealer_optimal_rate(replace(p, floor=p.floor - dL))
    hi = dealer_optimal_rate(replace(p, floor=p.floor + dL))
    if not (lo.interior_binding and hi.interior_binding):
        raise NotBinding("the leverage constraint is not binding at an interior optimum")
    return (hi.r_star - lo.r_star) / (2 * dL)


def analytic_rate_sensitivity(p: DealerParams) -> float:
    """Implicit-function value of dr*/dL at the binding optimum."""
    r = dealer_optimal_rate(p).r_star
    d1 = mmf_demand_d1(r, p.demand)
    d2 = mmf_demand_d2(r, p.demand)
    df_dr = -2 * d1 + (p.r_int - r - p.c * p.floor) * d2
    df_dL = -p.c * d1
    return float(-df_dL / df_dr)


def curve_samples(hf: HedgeFundParams, mmf: MmfParams, lo: float, hi: float, n: int = 101) -> list[dict]:
    rates = np.linspace(lo, hi, n)
    s, d = hedge_fund_supply(rates, hf), mmf_demand(rates, mmf)
    s1, d1 = hedge_fund_supply_d1(rates, hf), mmf_demand_d1(rates, mmf)
    return [{"r": float(r), "supply": float(a), "demand": float(b), "d_supply": float(c), "d_demand": float(e)}
            for r, a, b, c, e in zip(rates, s, d, s1, d1)]
