"""Static shadow prices.

For an asset the state does not trade, the shadow price is the lowest single
price s in [bid, ask] at which, with that asset's quote collapsed to s, the
state still shows the same zone signature. Selling assets get the bid, buying
assets get the ask.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from .errors import NoTradePointNotFound
from .gfunction import GFunction
from .market import MarketState, Quote, ZoneSignature
from .static import SolveOptions, solve_static
from .zones import EPS_TRADE, ZoneClassification, ZoneOptions, classify


class IntervalCase(str, enum.Enum):
    SELL = "SellBoundary"
    BUY = "BuyBoundary"
    NO_TRADE = "NoTradeInterval"


@dataclass(frozen=True)
class ShadowOptions:
    eps_trade: float = EPS_TRADE
    eps_s_rel: float = 1e-10  # eps_s = eps_s_rel * band + eps_s_abs
    eps_s_abs: float = 1e-12
    scan_points: int = 1024
    solve: SolveOptions = field(default_factory=SolveOptions)

    @property
    def zone(self) -> ZoneOptions:
        return ZoneOptions(self.eps_trade, self.solve)

    def eps_s(self, band: float) -> float:
        return self.eps_s_rel * band + self.eps_s_abs


@dataclass(frozen=True)
class ShadowInterval:
    asset: int
    lo: float
    hi: float
    case: IntervalCase
    method: str = "boundary"  # boundary | bisection | scan

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "case": self.case.value}


@dataclass(frozen=True)
class ShadowQuote:
    prices: NDArray[np.float64]
    intervals: tuple[ShadowInterval, ...]
    source_signature: ZoneSignature

    @property
    def quote(self) -> Quote:
        return Quote.frictionless(self.prices)

    def to_dict(self) -> dict:
        return {
            "prices": self.prices.tolist(),
            "intervals": [iv.to_dict() for iv in self.intervals],
            "signature": list(self.source_signature.signs),
        }


class _Collapse:
    """Memoised classification of one state as asset ``k`` is collapsed to s."""

    def __init__(self, g, s: MarketState, q: Quote, k: int, target: ZoneSignature, opts: ShadowOptions):
        self.g, self.s, self.q, self.k = g, s, q, k
        self.target = target
        self.opts = opts
        self.thr = opts.eps_trade * s.scale
        self.cache: dict[float, ZoneClassification] = {}

    def at(self, price: float) -> ZoneClassification:
        c = self.cache.get(price)
        if c is None:
            c = classify(self.g, self.s, self.q.collapse(self.k, price), self.opts.zone)
            self.cache[price] = c
        return c

    def delta(self, price: float) -> float:
        return float(self.at(price).plan.delta[self.k])

    def member(self, price: float) -> bool:
        return self.at(price).signature == self.target


def shadow_interval(
    g: GFunction,
    s: MarketState,
    q: Quote,
    k: int,
    opts: ShadowOptions | None = None,
    base: ZoneClassification | None = None,
) -> ShadowInterval:
    """Collapse points of asset ``k`` that keep the state's zone.

    Sell and buy assets give the bid and ask singletons. For a no-trade asset
    the collapsed trade delta_k(s) falls as s rises (buying below the band,
    selling above it), so the interval ends are found as the two crossings of
    delta_k(s) = +/- threshold; if that pattern fails to hold, a dense scan of
    the band takes over.
    """
    opts = opts or ShadowOptions()
    base = base or classify(g, s, q, opts.zone)
    bid, ask = float(q.bid[k]), float(q.ask[k])
    sig_k = base.signature[k]
    if sig_k < 0:
        return ShadowInterval(k, bid, bid, IntervalCase.SELL)
    if sig_k > 0:
        return ShadowInterval(k, ask, ask, IntervalCase.BUY)
    if bid == ask:
        return ShadowInterval(k, bid, bid, IntervalCase.NO_TRADE)

    col = _Collapse(g, s, q, k, base.signature, opts)
    eps_s = opts.eps_s(ask - bid)
    found = _crossings(col, bid, ask, eps_s)
    if found is not None:
        return ShadowInterval(k, found[0], found[1], IntervalCase.NO_TRADE, "bisection")
    lo, hi = _scan(col, bid, ask, eps_s, opts.scan_points)
    return ShadowInterval(k, lo, hi, IntervalCase.NO_TRADE, "scan")


def _crossings(col: _Collapse, bid: float, ask: float, eps_s: float):
    """Interval from the two threshold crossings, refined when it is narrow.

    Nearly riskless assets make delta_k(s) so steep that the no-trade
    interval can be far narrower than eps_s; the roots are then recomputed
    at a resolution tied to their distance, down to the float spacing.
    """
    thr = col.thr
    d_bid, d_ask = col.delta(bid), col.delta(ask)
    if d_bid < -thr or d_ask > thr:
        return None  # not the buy-below / sell-above pattern
    res = eps_s
    floor = 4 * math.ulp(ask)
    while True:
        found, r_lo, r_hi = _crossings_at(col, bid, ask, res, d_bid, d_ask)
        width = r_hi - r_lo
        if width >= 1e3 * res or res <= floor:
            return found
        finer = max(width * 1e-3, floor)
        if finer >= res:
            return found
        res = finer


def _crossings_at(col: _Collapse, bid: float, ask: float, res: float, d_bid: float, d_ask: float):
    thr = col.thr
    r_lo = bid if d_bid <= thr else brentq(lambda p: col.delta(p) - thr, bid, ask, xtol=res, rtol=1e-15)
    r_hi = ask if d_ask >= -thr else brentq(lambda p: col.delta(p) + thr, bid, ask, xtol=res, rtol=1e-15)
    lo = r_lo if d_bid <= thr else _step_inside(col, r_lo, +1, bid, ask, res)
    hi = r_hi if d_ask >= -thr else _step_inside(col, r_hi, -1, bid, ask, res)
    if lo is not None and hi is not None and lo <= hi:
        probe = np.linspace(lo, hi, 5)
        if all(col.member(float(p)) for p in probe):
            return (lo, hi), r_lo, r_hi
    return _refine(col, min(r_lo, r_hi), max(r_lo, r_hi), bid, ask, res), r_lo, r_hi


def _refine(col: _Collapse, a: float, b: float, bid: float, ask: float, eps_s: float):
    """Steep collapse curves leave a very narrow, noisy band between the roots.

    Look for a member between (and just around) the two roots, then bisect
    outward from it.
    """
    pad = max(b - a, eps_s)
    for p in np.linspace(max(a - pad, bid), min(b + pad, ask), 33):
        p = float(p)
        if col.member(p):
            lo = bid if col.member(bid) else _edge(col, max(a - 2 * pad, bid), p, eps_s)
            hi = ask if col.member(ask) else _edge(col, min(b + 2 * pad, ask), p, eps_s)
            return lo, hi
    return None


def _step_inside(col: _Collapse, r: float, direction: int, bid: float, ask: float, eps_s: float):
    """Nudge a bracketed crossing onto the member side, at most a few eps_s."""
    p = min(max(r, bid), ask)
    for _ in range(4):
        if col.member(p):
            # walk back outward while still a member, to sit on the edge
            back = p - direction * eps_s
            if bid <= back <= ask and col.member(back):
                p = back
                continue
            return p
        p = min(max(p + direction * eps_s, bid), ask)
    return p if col.member(p) else None


def _scan(col: _Collapse, bid: float, ask: float, eps_s: float, n: int) -> tuple[float, float]:
    grid = np.linspace(bid, ask, n)
    inside = [col.member(float(p)) for p in grid]
    if not any(inside):
        raise NoTradePointNotFound(
            col.k,
            {
                "signature": str(col.target),
                "delta_at_bid": col.delta(bid),
                "delta_at_ask": col.delta(ask),
                "threshold": col.thr,
            },
        )
    first = inside.index(True)
    last = first
    while last + 1 < n and inside[last + 1]:
        last += 1
    lo = float(grid[first])
    if first > 0:
        lo = _edge(col, float(grid[first - 1]), lo, eps_s)
    hi = float(grid[last])
    if last + 1 < n:
        hi = _edge(col, float(grid[last + 1]), hi, eps_s)
    return lo, hi


def _edge(col: _Collapse, out: float, inn: float, eps_s: float) -> float:
    """Bisect between a non-member and a member point; returns the member side."""
    while abs(out - inn) > eps_s:
        mid = 0.5 * (out + inn)
        if col.member(mid):
            inn = mid
        else:
            out = mid
    return inn


def shadow_quote(
    g: GFunction,
    s: MarketState,
    q: Quote,
    opts: ShadowOptions | None = None,
    sequential: bool = True,
) -> ShadowQuote:
    """Per-asset shadow prices: the lower end of each asset's collapse interval.

    With ``sequential`` (the default) asset k's interval is computed under the
    quote in which assets 0..k-1 are already collapsed to their shadow prices.
    Each collapse keeps the optimal value, so the final single-price quote
    does too. Computing every interval against the original quote instead can
    lose that when cash is zero and two or more assets sit in the no-trade
    band, since the lower ends are then not jointly consistent.
    """
    opts = opts or ShadowOptions()
    base = classify(g, s, q, opts.zone)
    intervals = []
    cur, cur_base = q, base
    for k in range(q.dim):
        iv = shadow_interval(g, s, cur, k, opts, cur_base)
        intervals.append(iv)
        if sequential and k + 1 < q.dim and cur.bid[k] != cur.ask[k]:
            cur = cur.collapse(k, iv.lo)
            cur_base = classify(g, s, cur, opts.zone)
    prices = np.array([iv.lo for iv in intervals])
    return ShadowQuote(prices, tuple(intervals), base.signature)


@dataclass(frozen=True)
class ShadowCheck:
    phi_bidask: float
    phi_shadow: float
    abs_gap: float
    passed: bool
    post_gap: float
    post_match: bool

    def to_dict(self) -> dict:
        return {
            "phi_bidask": self.phi_bidask,
            "phi_shadow": self.phi_shadow,
            "abs_gap": self.abs_gap,
            "passed": self.passed,
            "post_gap": self.post_gap,
            "post_match": self.post_match,
        }


def verify_shadow(
    g: GFunction,
    s: MarketState,
    q: Quote,
    sq: ShadowQuote,
    tol: float = 1e-6,
    post_tol: float = 1e-5,
    solve: SolveOptions | None = None,
) -> ShadowCheck:
    """Compare the bid/ask optimum with the optimum at the shadow prices."""
    ba = solve_static(g, s, q, solve)
    fr = solve_static(g, s, sq.quote, solve)
    if math.isinf(ba.value) and ba.value == fr.value:
        gap = 0.0
    else:
        gap = abs(ba.value - fr.value)
    passed = gap <= tol * (1.0 + abs(ba.value)) if math.isfinite(gap) else False
    post_gap = float(np.max(np.abs(ba.post_state.as_vector() - fr.post_state.as_vector())))
    return ShadowCheck(ba.value, fr.value, gap, passed, post_gap, post_gap <= post_tol * s.scale)
