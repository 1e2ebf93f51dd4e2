"""Market primitives: quotes, portfolio states, utilities and scenario lattices."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    BidAboveAsk,
    DimensionMismatch,
    InvalidState,
    LatticeSchemaError,
    NonPositiveBid,
    ProbabilitySum,
)
from .gfunction import GFunction, expected_utility_g

log = logging.getLogger(__name__)

PROB_TOL = 1e-9


def _vec(values, name: str) -> NDArray[np.float64]:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.flags.writeable = False
    if arr.size == 0:
        raise DimensionMismatch(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise InvalidState(f"{name} contains non-finite entries: {arr.tolist()}")
    return arr


@dataclass(frozen=True, eq=False)
class Quote:
    """Per-asset bid and ask prices."""

    bid: NDArray[np.float64]
    ask: NDArray[np.float64]

    def __post_init__(self):
        bid = _vec(self.bid, "bid")
        ask = _vec(self.ask, "ask")
        if bid.shape != ask.shape:
            raise DimensionMismatch(f"bid has {bid.size} entries, ask has {ask.size}")
        object.__setattr__(self, "bid", bid)
        object.__setattr__(self, "ask", ask)

    def __eq__(self, other):
        if not isinstance(other, Quote):
            return NotImplemented
        return np.array_equal(self.bid, other.bid) and np.array_equal(self.ask, other.ask)

    def __hash__(self):
        return hash((self.bid.tobytes(), self.ask.tobytes()))

    @property
    def dim(self) -> int:
        return self.bid.size

    @property
    def spread(self) -> NDArray[np.float64]:
        return self.ask - self.bid

    @classmethod
    def frictionless(cls, prices) -> "Quote":
        p = np.asarray(prices, dtype=float)
        return cls(p, p.copy())

    def collapse(self, asset: int, price: float) -> "Quote":
        """Quote with both sides of ``asset`` set to ``price``; other assets untouched."""
        bid = self.bid.copy()
        ask = self.ask.copy()
        bid[asset] = ask[asset] = price
        return Quote(bid, ask)

    def collapse_ask_to_bid(self, asset: int) -> "Quote":
        return self.collapse(asset, self.bid[asset])

    def collapse_bid_to_ask(self, asset: int) -> "Quote":
        return self.collapse(asset, self.ask[asset])

    def to_dict(self) -> dict:
        return {"bid": self.bid.tolist(), "ask": self.ask.tolist()}


@dataclass(frozen=True, eq=False)
class MarketState:
    """Cash plus nonnegative share holdings."""

    cash: float
    holdings: NDArray[np.float64]

    def __post_init__(self):
        holdings = _vec(self.holdings, "holdings")
        cash = float(self.cash)
        if not math.isfinite(cash) or cash < 0:
            raise InvalidState(f"cash must be a finite nonnegative number, got {cash!r}")
        if np.any(holdings < 0):
            raise InvalidState(f"holdings must be nonnegative, got {holdings.tolist()}")
        object.__setattr__(self, "cash", cash)
        object.__setattr__(self, "holdings", holdings)

    def __eq__(self, other):
        if not isinstance(other, MarketState):
            return NotImplemented
        return self.cash == other.cash and np.array_equal(self.holdings, other.holdings)

    def __hash__(self):
        return hash((self.cash, self.holdings.tobytes()))

    @property
    def dim(self) -> int:
        return self.holdings.size

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate(([self.cash], self.holdings))

    @classmethod
    def from_vector(cls, z) -> "MarketState":
        z = np.asarray(z, dtype=float)
        return cls(z[0], z[1:])

    @property
    def scale(self) -> float:
        """1 + cash + total holdings; the reference size for relative tolerances."""
        return 1.0 + self.cash + float(self.holdings.sum())

    def to_dict(self) -> dict:
        return {"cash": self.cash, "holdings": self.holdings.tolist()}


class UtilityFamily(str, Enum):
    LOG = "log"
    POWER = "power"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class UtilitySpec:
    """Strictly concave, strictly increasing utility of terminal wealth.

    ``log``: U(w) = log w.  ``power``: U(w) = w**(1-gamma) / (1-gamma), gamma > 0,
    gamma != 1.  ``exponential``: U(w) = -exp(-alpha w) / alpha, alpha > 0.
    Log and power (gamma > 1) utilities are ``-inf`` at zero wealth; every
    family returns ``-inf`` for negative wealth except the exponential one.
    """

    family: UtilityFamily
    param: float | None = None

    def __post_init__(self):
        family = UtilityFamily(self.family)
        object.__setattr__(self, "family", family)
        if family is UtilityFamily.LOG:
            object.__setattr__(self, "param", None)
            return
        if self.param is None or not math.isfinite(self.param) or self.param <= 0:
            raise ValueError(f"{family.value} utility needs a positive parameter, got {self.param!r}")
        if family is UtilityFamily.POWER and self.param == 1.0:
            raise ValueError("power utility with gamma = 1 is the log utility; use family 'log'")
        object.__setattr__(self, "param", float(self.param))

    @classmethod
    def log(cls) -> "UtilitySpec":
        return cls(UtilityFamily.LOG)

    @classmethod
    def power(cls, gamma: float) -> "UtilitySpec":
        return cls(UtilityFamily.POWER, gamma)

    @classmethod
    def exponential(cls, alpha: float) -> "UtilitySpec":
        return cls(UtilityFamily.EXPONENTIAL, alpha)

    @classmethod
    def parse(cls, text: str) -> "UtilitySpec":
        """Parse the CLI form ``log``, ``power:G`` or ``exp:A``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        if name == "log" and not arg:
            return cls.log()
        if name in ("power", "pow") and arg:
            return cls.power(float(arg))
        if name in ("exp", "exponential") and arg:
            return cls.exponential(float(arg))
        raise ValueError(f"cannot parse utility {text!r}; expected log, power:G or exp:A")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "UtilitySpec":
        family = cfg.get("family")
        params = cfg.get("params") or {}
        if family == "log":
            return cls.log()
        if family == "power":
            return cls.power(float(params["gamma"]))
        if family in ("exponential", "exp"):
            return cls.exponential(float(params["alpha"]))
        raise LatticeSchemaError(f"unknown utility family {family!r}")

    def to_config(self) -> dict:
        if self.family is UtilityFamily.LOG:
            return {"family": "log", "params": {}}
        if self.family is UtilityFamily.POWER:
            return {"family": "power", "params": {"gamma": self.param}}
        return {"family": "exponential", "params": {"alpha": self.param}}

    @property
    def label(self) -> str:
        if self.family is UtilityFamily.LOG:
            return "log"
        if self.family is UtilityFamily.POWER:
            return f"power:{self.param:g}"
        return f"exp:{self.param:g}"

    def value(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.family is UtilityFamily.LOG:
                out = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), -np.inf)
            elif self.family is UtilityFamily.POWER:
                g = self.param
                pos = np.where(w > 0, w, 1.0)
                out = np.where(w > 0, pos ** (1.0 - g) / (1.0 - g), -np.inf)
                if g < 1:
                    out = np.where(w == 0, 0.0, out)
            else:
                a = self.param
                out = -np.exp(-a * w) / a
        return out if out.ndim else float(out)

    def derivative(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.family is UtilityFamily.LOG:
                out = np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), np.inf)
            elif self.family is UtilityFamily.POWER:
                pos = np.where(w > 0, w, 1.0)
                out = np.where(w > 0, pos ** (-self.param), np.inf)
            else:
                out = np.exp(-self.param * w)
        return out if out.ndim else float(out)

    def __call__(self, w):
        return self.value(w)


@dataclass(frozen=True)
class ZoneSignature:
    """Per-asset trade direction: -1 sell, 0 no trade, +1 buy."""

    signs: tuple[int, ...]

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (-1, 0, 1) for s in signs):
            raise ValueError(f"signature entries must be -1, 0 or +1, got {signs}")
        object.__setattr__(self, "signs", signs)

    def __getitem__(self, i: int) -> int:
        return self.signs[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self.signs)

    def __len__(self) -> int:
        return len(self.signs)

    def with_entry(self, i: int, value: int) -> "ZoneSignature":
        s = list(self.signs)
        s[i] = value
        return ZoneSignature(tuple(s))

    def __str__(self) -> str:
        return "(" + ",".join(f"{s:+d}" if s else "0" for s in self.signs) + ")"


# --------------------------------------------------------------------------
# validation and terminal objective
# --------------------------------------------------------------------------


def validate_quote(q: Quote, strict: bool = False) -> Quote:
    """Return ``q`` if 0 < bid <= ask componentwise, else raise.

    ``strict=True`` additionally requires bid < ask (positive spread).
    """
    for i, (b, a) in enumerate(zip(q.bid, q.ask)):
        if not b > 0:
            raise NonPositiveBid(i, float(b))
        if b > a or (strict and b == a):
            raise BidAboveAsk(i, float(b), float(a))
    return q


def _check_dims(s: MarketState, q: Quote) -> None:
    if s.dim != q.dim:
        raise DimensionMismatch(f"state has {s.dim} assets, quote has {q.dim}")


def terminal_wealth(s: MarketState, q: Quote) -> float:
    """Liquidation value: cash + sum_i holdings_i * bid_i."""
    _check_dims(s, q)
    return s.cash + float(s.holdings @ q.bid)


def make_terminal_g(u: UtilitySpec, q: Quote) -> GFunction:
    """(x, y) -> U(x + y . bid), the liquidation utility at a quote."""
    validate_quote(q)
    return expected_utility_g(u, q.bid[None, :], [1.0], name=f"U_{u.label}(liquidation)")


# --------------------------------------------------------------------------
# scenario lattice
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeNode:
    id: int
    depth: int
    quote: Quote
    children: tuple[tuple[int, float], ...] = ()
    parent: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class NondegeneracyCheck:
    """Outcome of one bid/ask sign combination at a node."""

    combination: tuple[int, ...]  # -1 picks the child bid, +1 the child ask
    passed: bool
    affine_rank: int
    functional: tuple[float, ...] | None = None  # (a0, a1..ad) with a0 + a.S = 0 on the support


@dataclass(frozen=True)
class NondegeneracyReport:
    node_id: int
    checks: tuple[NondegeneracyCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_nondegeneracy(lattice: "ScenarioLattice", node_id: int, rtol: float = 1e-10) -> NondegeneracyReport:
    """Test whether the child price support spans R^d for every bid/ask pick.

    For each combination in {-1, +1}^d the child vectors (S_1^{i_1}, ..., S_d^{i_d})
    are centred and their rank is computed; rank d means no nontrivial affine
    functional vanishes on the support. Probabilities play no role beyond
    selecting the support.
    """
    node = lattice.nodes[node_id]
    if node.is_leaf:
        raise ValueError(f"node {node_id} has no children")
    d = lattice.assets
    bids = np.array([lattice.nodes[c].quote.bid for c, _ in node.children])
    asks = np.array([lattice.nodes[c].quote.ask for c, _ in node.children])
    checks = []
    for combo in itertools.product((-1, 1), repeat=d):
        pick = np.array(combo) > 0
        pts = np.where(pick[None, :], asks, bids)
        checks.append(_affine_check(combo, pts, rtol))
    return NondegeneracyReport(node_id, tuple(checks))


def _affine_check(combo, pts: NDArray[np.float64], rtol: float) -> NondegeneracyCheck:
    n, d = pts.shape
    centre = pts.mean(axis=0)
    centred = pts - centre
    # full SVD so the null space is available even when n < d
    _, sv, vt = np.linalg.svd(centred, full_matrices=True)
    tol = rtol * max(1.0, float(np.abs(pts).max()))
    rank = int(np.sum(sv > tol))
    if rank == d:
        return NondegeneracyCheck(tuple(combo), True, rank)
    a = vt[-1]
    a0 = -float(a @ centre)
    return NondegeneracyCheck(tuple(combo), False, rank, (a0, *map(float, a)))


@dataclass(frozen=True)
class ScenarioLattice:
    """Finite event tree with a quote at every node.

    Nodes are stored in depth-first preorder; ``nodes[0]`` is the root.
    """

    horizon: int
    assets: int
    utility: UtilitySpec
    nodes: tuple[LatticeNode, ...]
    initial: MarketState | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def root(self) -> LatticeNode:
        return self.nodes[0]

    def children(self, node_id: int) -> Iterator[tuple[LatticeNode, float]]:
        for cid, p in self.nodes[node_id].children:
            yield self.nodes[cid], p

    def internal_nodes(self) -> list[LatticeNode]:
        return [n for n in self.nodes if not n.is_leaf]

    def with_quotes(self, quotes: Mapping[int, Quote] | Sequence[Quote]) -> "ScenarioLattice":
        """Same topology and probabilities, quotes swapped node by node."""
        if isinstance(quotes, Mapping):
            getq = lambda n: quotes.get(n.id, n.quote)
        else:
            getq = lambda n: quotes[n.id]
        nodes = tuple(
            LatticeNode(n.id, n.depth, getq(n), n.children, n.parent) for n in self.nodes
        )
        for n in nodes:
            validate_quote(n.quote)
        return ScenarioLattice(self.horizon, self.assets, self.utility, nodes, self.initial)

    def nondegeneracy(self) -> dict[int, NondegeneracyReport]:
        return {n.id: check_nondegeneracy(self, n.id) for n in self.internal_nodes()}

    def to_config(self) -> dict:
        def node_cfg(nid: int) -> dict:
            n = self.nodes[nid]
            return {
                "bid": n.quote.bid.tolist(),
                "ask": n.quote.ask.tolist(),
                "children": [{"prob": p, "node": node_cfg(c)} for c, p in n.children],
            }

        cfg = {
            "horizon": self.horizon,
            "assets": self.assets,
            "utility": self.utility.to_config(),
            "root": node_cfg(0),
        }
        if self.initial is not None:
            cfg["initial"] = self.initial.to_dict()
        return cfg


def build_lattice(config: Mapping[str, Any], strict_spread: bool = True) -> ScenarioLattice:
    """Validate a lattice description and build the tree.

    Schema::

        {"horizon": T, "assets": d,
         "utility": {"family": "log" | "power" | "exponential", "params": {...}},
         "root": {"bid": [...], "ask": [...], "children": [{"prob": p, "node": {...}}, ...]},
         "initial": {"cash": x, "holdings": [...]}}          # optional

    Quote and probability problems raise. Zero spreads (when ``strict_spread``)
    and nondegeneracy failures only produce warnings.
    """
    if not isinstance(config, Mapping):
        raise LatticeSchemaError("lattice config must be a mapping")
    for key in ("horizon", "assets", "utility", "root"):
        if key not in config:
            raise LatticeSchemaError(f"missing field {key!r}")
    horizon = config["horizon"]
    assets = config["assets"]
    if not isinstance(horizon, int) or horizon < 0:
        raise LatticeSchemaError(f"horizon must be a nonnegative integer, got {horizon!r}")
    if not isinstance(assets, int) or assets < 1:
        raise LatticeSchemaError(f"assets must be a positive integer, got {assets!r}")
    if not isinstance(config["utility"], Mapping):
        raise LatticeSchemaError("utility must be a mapping with 'family' and 'params'")
    utility = UtilitySpec.from_config(config["utility"])

    nodes: list[LatticeNode] = []
    warnings: list[str] = []

    def visit(cfg, depth: int, parent: int | None) -> int:
        if not isinstance(cfg, Mapping) or "bid" not in cfg or "ask" not in cfg:
            raise LatticeSchemaError(f"node at depth {depth} needs 'bid' and 'ask'")
        quote = Quote(cfg["bid"], cfg["ask"])
        if quote.dim != assets:
            raise DimensionMismatch(f"node at depth {depth} has {quote.dim} assets, expected {assets}")
        validate_quote(quote)
        nid = len(nodes)
        if strict_spread and np.any(quote.bid == quote.ask):
            warnings.append(f"node {nid}: zero spread (positive spread assumed by the theory)")
        nodes.append(None)  # placeholder keeps preorder ids
        kids = cfg.get("children") or []
        if depth == horizon and kids:
            raise LatticeSchemaError(f"node {nid} at depth {depth} = horizon has children")
        if depth < horizon and not kids:
            raise LatticeSchemaError(f"node {nid} at depth {depth} < horizon {horizon} is a leaf")
        children = []
        probs = []
        for k in kids:
            if not isinstance(k, Mapping) or "prob" not in k or "node" not in k:
                raise LatticeSchemaError(f"child of node {nid} needs 'prob' and 'node'")
            p = float(k["prob"])
            if not p > 0:
                raise ProbabilitySum(f"node {nid}: branch probability {p} must be positive")
            probs.append(p)
            children.append((visit(k["node"], depth + 1, nid), p))
        if kids and abs(sum(probs) - 1.0) > PROB_TOL:
            raise ProbabilitySum(f"node {nid}: probabilities {probs} sum to {sum(probs)}, not 1")
        nodes[nid] = LatticeNode(nid, depth, quote, tuple(children), parent)
        return nid

    visit(config["root"], 0, None)

    initial = None
    if config.get("initial") is not None:
        init = config["initial"]
        initial = MarketState(init["cash"], init["holdings"])
        if initial.dim != assets:
            raise DimensionMismatch(f"initial state has {initial.dim} assets, expected {assets}")

    lattice = ScenarioLattice(horizon, assets, utility, tuple(nodes), initial)
    for nid, report in lattice.nondegeneracy().items():
        if not report.passed:
            bad = [c.combination for c in report.checks if not c.passed]
            warnings.append(f"node {nid}: degenerate child support for combinations {bad}")
    for w in warnings:
        log.warning(w)
    return ScenarioLattice(horizon, assets, utility, tuple(nodes), initial, tuple(warnings))


def load_lattice(path: str | Path, strict_spread: bool = True) -> ScenarioLattice:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LatticeSchemaError(f"{path}: {exc}") from exc
    return build_lattice(cfg, strict_spread=strict_spread)


def multiplicative_tree_config(
    horizon: int,
    moves: Sequence[Sequence[float]],
    probs: Sequence[float],
    mid0: Sequence[float],
    half_spread: float | Sequence[float],
    utility: UtilitySpec,
    initial: MarketState | None = None,
) -> dict:
    """Config for a (non-recombining) multiplicative tree.

    Each branch c multiplies the mid price by ``moves[c]`` (one factor per
    asset); quotes are mid * (1 -/+ half_spread).
    """
    moves = np.atleast_2d(np.asarray(moves, dtype=float))
    mid0 = np.asarray(mid0, dtype=float)
    hs = np.broadcast_to(np.asarray(half_spread, dtype=float), mid0.shape)

    def node(mid, depth):
        cfg = {"bid": (mid * (1 - hs)).tolist(), "ask": (mid * (1 + hs)).tolist(), "children": []}
        if depth < horizon:
            cfg["children"] = [
                {"prob": float(p), "node": node(mid * m, depth + 1)} for m, p in zip(moves, probs)
            ]
        return cfg

    cfg = {
        "horizon": horizon,
        "assets": int(mid0.size),
        "utility": utility.to_config(),
        "root": node(mid0, 0),
    }
    if initial is not None:
        cfg["initial"] = initial.to_dict()
    return cfg
