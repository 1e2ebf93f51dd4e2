"""Trading-zone classification of portfolio states."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .admissible import NetTrade
from .gfunction import GFunction
from .market import MarketState, Quote, ZoneSignature
from .static import SolveOptions, StaticSolution, solve_static

EPS_TRADE = 1e-7


@dataclass(frozen=True)
class ZoneOptions:
    eps_trade: float = EPS_TRADE
    solve: SolveOptions = field(default_factory=SolveOptions)


@dataclass(frozen=True)
class ZoneClassification:
    """Zone of a state: the sign pattern of its optimal net trade.

    ``margins[i] = |delta_i| / scale - eps_trade`` is the signed relative
    distance of the trade size from the no-trade threshold.
    """

    signature: ZoneSignature
    plan: NetTrade
    margins: NDArray[np.float64]
    eps_trade: float
    solution: StaticSolution = field(compare=False, repr=False)

    def thin(self, factor: float = 10.0) -> NDArray[np.bool_]:
        """Assets whose trade size is within a factor of the threshold on either side.

        An exact zero trade (optimum on the kink) is never thin.
        """
        rel = self.margins + self.eps_trade
        return (rel > self.eps_trade / factor) & (rel < (factor + 1.0) * self.eps_trade)

    def is_thin(self, factor: float = 10.0) -> bool:
        return bool(np.any(self.thin(factor)))


def signature_of(delta, scale: float, eps_trade: float) -> tuple[ZoneSignature, NDArray[np.float64]]:
    delta = np.asarray(delta, dtype=float)
    thr = eps_trade * scale
    signs = np.where(np.abs(delta) <= thr, 0, np.sign(delta)).astype(int)
    margins = np.abs(delta) / scale - eps_trade
    return ZoneSignature(tuple(signs)), margins


def classify(g: GFunction, s: MarketState, q: Quote, opts: ZoneOptions | None = None) -> ZoneClassification:
    opts = opts or ZoneOptions()
    sol = solve_static(g, s, q, opts.solve)
    sig, margins = signature_of(sol.plan.delta, s.scale, opts.eps_trade)
    return ZoneClassification(sig, sol.plan, margins, opts.eps_trade, sol)


# --------------------------------------------------------------------------
# state grids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RectGrid:
    """Cartesian product of cash levels and per-asset holding levels."""

    cash: Sequence[float]
    holdings: Sequence[Sequence[float]]

    def states(self, d: int) -> list[MarketState]:
        if len(self.holdings) != d:
            raise ValueError(f"grid has {len(self.holdings)} holding axes, quote has {d} assets")
        axes = [np.asarray(self.cash, float)] + [np.asarray(h, float) for h in self.holdings]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d + 1)
        return [MarketState.from_vector(z) for z in mesh]


@dataclass(frozen=True)
class BudgetLine:
    """States of equal liquidation value: shifting wealth from cash into one asset.

    ``asset`` holdings run over ``points`` values from 0 to wealth / bid while
    cash falls so that cash + y . bid stays at ``wealth``; other holdings are
    fixed at ``others``.
    """

    wealth: float
    asset: int
    points: int
    others: Sequence[float] | None = None

    def states(self, q: Quote) -> list[MarketState]:
        d = q.dim
        base = np.zeros(d) if self.others is None else np.asarray(self.others, float).copy()
        base[self.asset] = 0.0
        free = self.wealth - float(base @ q.bid)
        if free < 0:
            raise ValueError("fixed holdings already exceed the wealth of the budget line")
        out = []
        for yk in np.linspace(0.0, free / q.bid[self.asset], self.points):
            y = base.copy()
            y[self.asset] = yk
            out.append(MarketState(max(free - yk * q.bid[self.asset], 0.0), y))
        return out


@dataclass(frozen=True)
class ZoneRow:
    state: MarketState
    signature: ZoneSignature
    margins: NDArray[np.float64]


def zone_map(
    g: GFunction,
    q: Quote,
    grid: RectGrid | BudgetLine | Iterable[MarketState],
    opts: ZoneOptions | None = None,
    threads: int = 1,
) -> list[ZoneRow]:
    """Classify every grid state; rows come back in grid order."""
    if isinstance(grid, RectGrid):
        states = grid.states(q.dim)
    elif isinstance(grid, BudgetLine):
        states = grid.states(q)
    else:
        states = list(grid)

    def one(s: MarketState) -> ZoneRow:
        c = classify(g, s, q, opts)
        return ZoneRow(s, c.signature, c.margins)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, states))
    return [one(s) for s in states]


def zone_table_csv(rows: Sequence[ZoneRow], d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x"] + [f"y{i + 1}" for i in range(d)] + [f"sig{i + 1}" for i in range(d)]
               + [f"margin{i + 1}" for i in range(d)])
    for r in rows:
        w.writerow([repr(r.state.cash)] + [repr(float(v)) for v in r.state.holdings]
                   + list(r.signature.signs) + [repr(float(m)) for m in r.margins])
    return buf.getvalue()
