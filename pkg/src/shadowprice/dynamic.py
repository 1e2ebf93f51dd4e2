"""Backward induction on a scenario lattice.

The value at a leaf is the utility of liquidating at the leaf's bid. At an
internal node the value is the static optimum of the node's continuation
function, the probability-weighted sum of the children's values. Values are
computed by exact nested recursion with a per-node memo; nothing is
interpolated.

Gradients of child values come from the envelope argument at the child's
optimal post-trade state: one more unit of cash is worth the larger of
holding it and spending it at the ask, one more share of asset i is worth the
larger of holding it and selling it at the bid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from .admissible import NetTrade
from .errors import RecursionBudgetExceeded
from .gfunction import GFunction, expected_utility_g
from .market import MarketState, Quote, ScenarioLattice, ZoneSignature, terminal_wealth
from .shadow import IntervalCase, ShadowInterval, ShadowOptions, ShadowQuote, shadow_quote
from .static import GridOptions, SolveOptions, StaticSolution, brute_force_static, solve_static

QUANTUM = 1e-9


@dataclass(frozen=True)
class DynamicOptions:
    """Knobs for the recursion.

    ``sweeps_per_level`` caps the solver sweeps by depth (entry t is used at
    depth t, the last entry for deeper nodes); ``None`` keeps
    ``solve.max_sweeps`` everywhere. ``max_solves`` bounds the total number
    of static solves across the recursion.
    """

    solve: SolveOptions = field(default_factory=SolveOptions)
    sweeps_per_level: tuple[int, ...] | None = None
    quantum: float = QUANTUM
    max_solves: int = 2_000_000
    tol: float = 1e-4
    shadow: ShadowOptions = field(default_factory=lambda: ShadowOptions(eps_s_rel=1e-9))
    post_tol: float = 1e-4

    def solve_at(self, depth: int) -> SolveOptions:
        if not self.sweeps_per_level:
            return self.solve
        k = min(depth, len(self.sweeps_per_level) - 1)
        return replace(self.solve, max_sweeps=self.sweeps_per_level[k])


class ContinuationFunction:
    """Expected next-period value seen from an internal node.

    ``evaluate(z)`` returns the value and a supergradient at the stacked
    state ``z = (cash, holdings)``; results are memoised on ``z`` rounded to
    the model's quantum.
    """

    def __init__(self, model: "DynamicModel", node_id: int):
        self.model = model
        self.node_id = node_id
        node = model.lattice.nodes[node_id]
        self.children = [(c.id, p) for c, p in model.lattice.children(node_id)]
        self.cache: dict[tuple[int, ...], tuple[float, NDArray[np.float64]]] = {}
        self._direct: GFunction | None = None
        if all(model.lattice.nodes[c].is_leaf for c, _ in self.children):
            bids = np.array([model.lattice.nodes[c].quote.bid for c, _ in self.children])
            probs = np.array([p for _, p in self.children])
            self._direct = expected_utility_g(model.lattice.utility, bids, probs)
        self.depth = node.depth

    def key(self, z) -> tuple[int, ...]:
        return tuple(int(v) for v in np.rint(np.asarray(z) / self.model.opts.quantum))

    def evaluate(self, z) -> tuple[float, NDArray[np.float64]]:
        z = np.asarray(z, dtype=float)
        if self._direct is not None:
            return self._direct.value_grad(z)
        k = self.key(z)
        hit = self.cache.get(k)
        if hit is not None:
            return hit
        value = 0.0
        grad = np.zeros(z.size)
        for cid, p in self.children:
            v, gr = self.model.child_value(cid, z)
            if v == -math.inf:
                value = -math.inf
                grad = np.full(z.size, np.inf)
                break
            value += p * v
            grad += p * gr
        out = (float(value), grad)
        self.cache[k] = out
        return out

    def __call__(self, cash: float, holdings) -> float:
        z = np.concatenate([[cash], np.asarray(holdings, dtype=float)])
        return self.evaluate(z)[0]

    def as_g(self) -> GFunction:
        if self._direct is not None:
            return self._direct
        return GFunction(
            dim=self.model.lattice.assets,
            value=lambda z: self.evaluate(z)[0],
            value_grad=self.evaluate,
            name=f"continuation@{self.node_id}",
        )


class DynamicModel:
    """Holds the continuation functions and solve counters for one lattice."""

    def __init__(self, lattice: ScenarioLattice, opts: DynamicOptions | None = None):
        self.lattice = lattice
        self.opts = opts or DynamicOptions()
        self._cont: dict[int, ContinuationFunction] = {}
        self._solutions: dict[tuple[int, tuple[int, ...]], StaticSolution] = {}
        self.solves = 0

    def continuation(self, node_id: int) -> ContinuationFunction:
        c = self._cont.get(node_id)
        if c is None:
            if self.lattice.nodes[node_id].is_leaf:
                raise ValueError(f"node {node_id} is a leaf and has no continuation")
            c = ContinuationFunction(self, node_id)
            self._cont[node_id] = c
        return c

    def solve_node(self, node_id: int, s: MarketState) -> StaticSolution:
        """Static optimum at an internal node, memoised on the quantised state."""
        cont = self.continuation(node_id)
        k = (node_id, cont.key(s.as_vector()))
        sol = self._solutions.get(k)
        if sol is None:
            self.solves += 1
            if self.solves > self.opts.max_solves:
                raise RecursionBudgetExceeded(
                    f"more than {self.opts.max_solves} static solves; "
                    "raise max_solves or shrink the lattice"
                )
            node = self.lattice.nodes[node_id]
            sol = solve_static(cont.as_g(), s, node.quote, self.opts.solve_at(node.depth))
            self._solutions[k] = sol
        return sol

    def child_value(self, node_id: int, z) -> tuple[float, NDArray[np.float64]]:
        """Value and supergradient of w at ``node_id`` in state ``z``."""
        node = self.lattice.nodes[node_id]
        u = self.lattice.utility
        if node.is_leaf:
            a = np.concatenate([[1.0], node.quote.bid])
            w = float(a @ z)
            v = float(u.value(w))
            if v == -math.inf:
                return v, np.full(z.size, np.inf)
            return v, float(u.derivative(w)) * a
        s = MarketState(max(z[0], 0.0), np.maximum(z[1:], 0.0))
        sol = self.solve_node(node_id, s)
        if sol.value == -math.inf:
            return sol.value, np.full(z.size, np.inf)
        _, gz = self.continuation(node_id).evaluate(sol.post_state.as_vector())
        return sol.value, envelope_gradient(gz, node.quote)

    def value(self, node_id: int, s: MarketState) -> float:
        node = self.lattice.nodes[node_id]
        if node.is_leaf:
            return float(self.lattice.utility.value(terminal_wealth(s, node.quote)))
        return self.solve_node(node_id, s).value


def envelope_gradient(gz: NDArray[np.float64], q: Quote) -> NDArray[np.float64]:
    """Supergradient of the optimal value from the gradient at the optimum."""
    lam = max(float(gz[0]), float(np.max(gz[1:] / q.ask)))
    out = np.empty_like(gz)
    out[0] = lam
    out[1:] = np.maximum(gz[1:], q.bid * lam)
    return out


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def value_function(lattice: ScenarioLattice, node_id: int, s: MarketState,
                   opts: DynamicOptions | None = None, model: DynamicModel | None = None) -> float:
    model = model or DynamicModel(lattice, opts)
    return model.value(node_id, s)


def continuation_g(lattice: ScenarioLattice, node_id: int, opts: DynamicOptions | None = None,
                   model: DynamicModel | None = None) -> ContinuationFunction:
    model = model or DynamicModel(lattice, opts)
    return model.continuation(node_id)


@dataclass
class PolicyNode:
    node_id: int
    depth: int
    state: MarketState
    plan: NetTrade
    post_state: MarketState
    value: float
    status: str
    children: list["PolicyNode"] = field(default_factory=list)
    probs: list[float] = field(default_factory=list)
    shadow: ShadowQuote | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["PolicyNode"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self) -> dict:
        out = {
            "node_id": self.node_id,
            "depth": self.depth,
            "state": self.state.to_dict(),
            "plan": self.plan.delta.tolist(),
            "post_state": self.post_state.to_dict(),
            "value": self.value,
            "status": self.status,
            "shadow": None if self.shadow is None else self.shadow.to_dict(),
            "children": [{"prob": p, "node": c.to_dict()} for c, p in zip(self.children, self.probs)],
        }
        return out


@dataclass
class DynamicSolution:
    value: float
    policy: PolicyNode
    model: DynamicModel = field(repr=False)

    def nodes(self) -> list[PolicyNode]:
        return list(self.policy.walk())

    def to_dict(self) -> dict:
        return {"value": self.value, "solves": self.model.solves, "policy": self.policy.to_dict()}


def solve_dynamic(lattice: ScenarioLattice, initial: MarketState | None = None,
                  opts: DynamicOptions | None = None, model: DynamicModel | None = None) -> DynamicSolution:
    """Optimal value from the initial state and the forward policy tree."""
    initial = initial if initial is not None else lattice.initial
    if initial is None:
        raise ValueError("no initial state given and the lattice has none")
    model = model or DynamicModel(lattice, opts)
    policy = _forward(model, 0, initial)
    return DynamicSolution(policy.value, policy, model)


def _forward(model: DynamicModel, node_id: int, s: MarketState) -> PolicyNode:
    node = model.lattice.nodes[node_id]
    if node.is_leaf:
        wealth = terminal_wealth(s, node.quote)
        value = float(model.lattice.utility.value(wealth))
        # the terminal period liquidates at the bid
        return PolicyNode(node_id, node.depth, s, NetTrade(-s.holdings), MarketState(wealth, np.zeros(s.dim)),
                          value, "Liquidation")
    sol = model.solve_node(node_id, s)
    pn = PolicyNode(node_id, node.depth, s, sol.plan, sol.post_state, sol.value, sol.status.value)
    for child, p in model.lattice.children(node_id):
        pn.children.append(_forward(model, child.id, sol.post_state))
        pn.probs.append(p)
    return pn


def shadow_process(solution: DynamicSolution, opts: ShadowOptions | None = None) -> dict[int, ShadowQuote]:
    """Shadow quotes at every node of the policy tree, attached in place.

    Internal nodes use the static construction with the node's continuation
    as objective and the incoming state; leaves liquidate, so their shadow
    price is the bid.
    """
    model = solution.model
    opts = opts or model.opts.shadow
    out: dict[int, ShadowQuote] = {}
    for pn in solution.policy.walk():
        node = model.lattice.nodes[pn.node_id]
        if pn.is_leaf:
            sig = tuple(-1 if h > 0 else 0 for h in pn.state.holdings)
            ivs = tuple(ShadowInterval(k, float(b), float(b), IntervalCase.SELL)
                        for k, b in enumerate(node.quote.bid))
            sq = ShadowQuote(node.quote.bid.copy(), ivs, ZoneSignature(sig))
        else:
            g = model.continuation(pn.node_id).as_g()
            sq = shadow_quote(g, pn.state, node.quote, replace(opts, solve=model.opts.solve_at(node.depth)))
        pn.shadow = sq
        out[pn.node_id] = sq
    return out


@dataclass(frozen=True)
class DynamicCheck:
    value_bidask: float
    value_shadow: float
    abs_gap: float
    passed: bool
    plans_match: bool
    worst_post_gap: float
    solves: int

    def to_dict(self) -> dict:
        return {
            "value_bidask": self.value_bidask,
            "value_shadow": self.value_shadow,
            "abs_gap": self.abs_gap,
            "passed": self.passed,
            "plans_match": self.plans_match,
            "worst_post_gap": self.worst_post_gap,
            "solves": self.solves,
        }


def frictionless_lattice(lattice: ScenarioLattice, shadows: dict[int, ShadowQuote]) -> ScenarioLattice:
    return lattice.with_quotes({nid: sq.quote for nid, sq in shadows.items()})


def verify_dynamic_equivalence(lattice: ScenarioLattice, initial: MarketState | None = None,
                               opts: DynamicOptions | None = None,
                               solution: DynamicSolution | None = None) -> DynamicCheck:
    """Compare the bid/ask value with the value on the shadow-price lattice."""
    opts = opts or DynamicOptions()
    sol = solution or solve_dynamic(lattice, initial, opts)
    shadows = {pn.node_id: pn.shadow for pn in sol.policy.walk() if pn.shadow is not None}
    if len(shadows) < len(lattice.nodes):
        shadows = shadow_process(sol, opts.shadow)
    fr_lattice = frictionless_lattice(lattice, shadows)
    fr = solve_dynamic(fr_lattice, sol.policy.state, opts)
    gap = abs(sol.value - fr.value) if math.isfinite(sol.value) else (0.0 if sol.value == fr.value else math.inf)
    passed = gap <= opts.tol * (1.0 + abs(sol.value))
    worst = 0.0
    for a, b in zip(sol.policy.walk(), fr.policy.walk()):
        if a.is_leaf:
            continue
        worst = max(worst, float(np.max(np.abs(a.post_state.as_vector() - b.post_state.as_vector()))))
    scale = sol.policy.state.scale
    return DynamicCheck(sol.value, fr.value, gap, bool(passed), worst <= opts.post_tol * scale, worst,
                        sol.model.solves + fr.model.solves)


# --------------------------------------------------------------------------
# oracle and emitters
# --------------------------------------------------------------------------


def brute_force_dynamic(lattice: ScenarioLattice, initial: MarketState, points: int = 41,
                        rounds: int = 40, shrink: float = 0.6) -> float:
    """Recursive multi-resolution grid search; independent of the line-search solver.

    Cost grows like (points * rounds)^(T * d); meant for T * d <= 2.
    """
    grid = GridOptions(points=points, shrink=shrink, rounds=rounds)
    u = lattice.utility

    def w(node_id: int, Z: NDArray[np.float64]) -> NDArray[np.float64]:
        node = lattice.nodes[node_id]
        if node.is_leaf:
            return u.value(Z[:, 0] + Z[:, 1:] @ node.quote.bid)
        return np.array([
            brute_force_static(cont_g(node_id), MarketState(max(z[0], 0.0), np.maximum(z[1:], 0.0)),
                               node.quote, grid).value
            for z in Z
        ])

    def cont_g(node_id: int) -> GFunction:
        kids = list(lattice.children(node_id))

        def batch(Z):
            Z = np.atleast_2d(Z)
            with np.errstate(invalid="ignore"):
                return sum(p * w(c.id, Z) for c, p in kids)

        return GFunction(dim=lattice.assets, value=lambda z: float(batch(z[None, :])[0]), batch=batch)

    if lattice.root.is_leaf:
        return float(u.value(terminal_wealth(initial, lattice.root.quote)))
    return brute_force_static(cont_g(0), initial, lattice.root.quote, grid).value


def values_table_csv(solution: DynamicSolution) -> str:
    d = solution.model.lattice.assets
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["node_id", "depth", "x"] + [f"y{i + 1}" for i in range(d)]
                + [f"plan{i + 1}" for i in range(d)] + ["value"] + [f"shadow{i + 1}" for i in range(d)])
    for pn in solution.policy.walk():
        shadow = [""] * d if pn.shadow is None else [repr(float(v)) for v in pn.shadow.prices]
        wr.writerow([pn.node_id, pn.depth, repr(pn.state.cash)] + [repr(float(v)) for v in pn.state.holdings]
                    + [repr(float(v)) for v in pn.plan.delta] + [repr(pn.value)] + shadow)
    return buf.getvalue()
