"""Admissible trades: membership, state transition, efficiency transform, bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, NotAdmissible
from .market import MarketState, Quote

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class TradePlan:
    """Shares bought (``buys``) and sold (``sells``) per asset, both nonnegative."""

    buys: NDArray[np.float64]
    sells: NDArray[np.float64]

    def __post_init__(self):
        buys = np.array(self.buys, dtype=float).reshape(-1)
        sells = np.array(self.sells, dtype=float).reshape(-1)
        if buys.shape != sells.shape:
            raise DimensionMismatch("buys and sells must have the same length")
        if np.any(buys < 0) or np.any(sells < 0):
            raise ValueError("buys and sells must be nonnegative")
        buys.flags.writeable = False
        sells.flags.writeable = False
        object.__setattr__(self, "buys", buys)
        object.__setattr__(self, "sells", sells)

    @classmethod
    def zero(cls, d: int) -> "TradePlan":
        return cls(np.zeros(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.buys.size

    @property
    def is_complementary(self) -> bool:
        return float(self.buys @ self.sells) == 0.0

    def to_net(self) -> "NetTrade":
        return NetTrade(self.buys - self.sells)


@dataclass(frozen=True)
class NetTrade:
    """Net shares traded per asset; positive buys, negative sells."""

    delta: NDArray[np.float64]

    def __post_init__(self):
        delta = np.array(self.delta, dtype=float).reshape(-1)
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)

    @property
    def dim(self) -> int:
        return self.delta.size

    def to_plan(self) -> TradePlan:
        return TradePlan(np.maximum(self.delta, 0.0), np.maximum(-self.delta, 0.0))


def _as_plan(t) -> TradePlan:
    return t.to_plan() if isinstance(t, NetTrade) else t


def _dims(s: MarketState, q: Quote, t: TradePlan) -> None:
    if not (s.dim == q.dim == t.dim):
        raise DimensionMismatch(f"state d={s.dim}, quote d={q.dim}, plan d={t.dim}")


def post_trade_cash(s: MarketState, q: Quote, t: TradePlan) -> float:
    return s.cash + float(q.bid @ t.sells - q.ask @ t.buys)


def is_admissible(s: MarketState, q: Quote, t: TradePlan | NetTrade, tol: float = FEAS_TOL) -> bool:
    """Budget stays nonnegative, no short position, no selling beyond holdings."""
    t = _as_plan(t)
    _dims(s, q, t)
    if post_trade_cash(s, q, t) < -tol:
        return False
    if np.any(s.holdings - t.sells + t.buys < -tol):
        return False
    return bool(np.all(t.sells <= s.holdings + tol))


def apply_trade(s: MarketState, q: Quote, t: TradePlan | NetTrade, tol: float = FEAS_TOL) -> MarketState:
    t = _as_plan(t)
    if not is_admissible(s, q, t, tol):
        raise NotAdmissible(
            f"plan buys={t.buys.tolist()} sells={t.sells.tolist()} is not admissible "
            f"from cash={s.cash}, holdings={s.holdings.tolist()}"
        )
    cash = post_trade_cash(s, q, t)
    holdings = s.holdings - t.sells + t.buys
    # residues in [-tol, 0) are rounding noise
    return MarketState(max(cash, 0.0), np.maximum(holdings, 0.0))


def efficient_transform(t: TradePlan) -> TradePlan:
    """Cancel simultaneous buying and selling of the same asset."""
    return TradePlan(np.maximum(t.buys - t.sells, 0.0), np.maximum(t.sells - t.buys, 0.0))


def trade_cost(delta: NDArray[np.float64], q: Quote) -> float:
    """Cash consumed by a net trade: ask * buys - bid * sells."""
    return float(q.ask @ np.maximum(delta, 0.0) - q.bid @ np.maximum(-delta, 0.0))


@dataclass(frozen=True)
class TradeBounds:
    """Box lower <= delta <= upper plus the budget cash - cost(delta) >= 0."""

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    cash: float
    bid: NDArray[np.float64]
    ask: NDArray[np.float64]

    def budget_slack(self, delta) -> NDArray[np.float64] | float:
        """cash - cost(delta); accepts a single delta or an (n, d) array."""
        delta = np.asarray(delta, dtype=float)
        cost = np.maximum(delta, 0.0) @ self.ask - np.maximum(-delta, 0.0) @ self.bid
        return self.cash - cost

    def feasible(self, delta, tol: float = FEAS_TOL):
        delta = np.asarray(delta, dtype=float)
        in_box = np.all((delta >= self.lower - tol) & (delta <= self.upper + tol), axis=-1)
        return in_box & (self.budget_slack(delta) >= -tol)


def trade_bounds(s: MarketState, q: Quote) -> TradeBounds:
    """Net-trade box containing every admissible complementary plan.

    Selling is capped by holdings; buying asset i is capped by cash plus the
    liquidation value of the *other* assets, spent entirely at ask_i (a
    complementary plan never sells the asset it buys).
    """
    if s.dim != q.dim:
        raise DimensionMismatch(f"state d={s.dim}, quote d={q.dim}")
    values = s.holdings * q.bid
    upper = (s.cash + values.sum() - values) / q.ask
    return TradeBounds(-s.holdings.copy(), upper, s.cash, q.bid.copy(), q.ask.copy())
