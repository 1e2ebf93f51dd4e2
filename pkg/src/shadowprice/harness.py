"""Property campaigns over seeded random instances and curated lattices.

Every campaign draws instance i from its own generator seeded with
``(seed, stream, i)``, so results do not depend on evaluation order or thread
count, and reports serialise to byte-identical JSON and text for equal inputs.
Wall-clock timings are logged but kept out of the reports for that reason.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .admissible import TradePlan, apply_trade, efficient_transform, is_admissible, trade_bounds
from .dynamic import DynamicModel, DynamicOptions, shadow_process, solve_dynamic, verify_dynamic_equivalence
from .gfunction import GFunction, expected_utility_g
from .market import (
    MarketState,
    Quote,
    ScenarioLattice,
    UtilitySpec,
    build_lattice,
    load_lattice,
    multiplicative_tree_config,
)
from .shadow import IntervalCase, ShadowOptions, shadow_interval, shadow_quote, verify_shadow
from .static import GridOptions, SolveOptions, brute_force_static, evaluate_phi, solve_static
from .zones import EPS_TRADE, ZoneClassification, ZoneOptions, classify

log = logging.getLogger(__name__)

MAX_NOTES = 20


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class PropertyReport:
    """Outcome of one property over a batch of instances.

    ``worst`` is the largest violation magnitude seen, in the property's own
    units (positive means the bound was exceeded by that much when it is a
    failure, otherwise the closest approach to the bound).
    """

    property_id: str
    instances: int = 0
    failures: int = 0
    worst: float = 0.0
    excluded: int = 0
    max_excluded_fraction: float | None = None
    notes: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.failures:
            return False
        if self.max_excluded_fraction is not None and self.instances + self.excluded > 0:
            return self.excluded <= self.max_excluded_fraction * (self.instances + self.excluded)
        return True

    def record(self, ok: bool, magnitude: float = 0.0, note: str | None = None) -> None:
        self.instances += 1
        if math.isfinite(magnitude) or magnitude > 0:
            self.worst = max(self.worst, magnitude)
        if not ok:
            self.failures += 1
            if note and len(self.notes) < MAX_NOTES:
                self.notes.append(note)

    def exclude(self, reason: str) -> None:
        self.excluded += 1
        log.info("%s: excluded sample: %s", self.property_id, reason)
        if len(self.notes) < MAX_NOTES:
            self.notes.append(f"excluded: {reason}")

    def bump(self, key: str, by: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + by

    def to_dict(self) -> dict:
        return {
            "property": self.property_id,
            "instances": self.instances,
            "failures": self.failures,
            "worst": self.worst,
            "excluded": self.excluded,
            "passed": self.passed,
            "counts": dict(sorted(self.counts.items())),
            "notes": list(self.notes),
        }

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.property_id}: instances={self.instances} failures={self.failures} "
                f"excluded={self.excluded} worst={_fmt(self.worst)}")


@dataclass
class CampaignReport:
    name: str
    seed: int
    properties: list[PropertyReport]
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def get(self, property_id: str) -> PropertyReport:
        for p in self.properties:
            if p.property_id == property_id:
                return p
        raise KeyError(property_id)

    def to_dict(self) -> dict:
        return {
            "campaign": self.name,
            "seed": self.seed,
            "params": self.params,
            "passed": self.passed,
            "properties": [p.to_dict() for p in self.properties],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_text(self) -> str:
        head = f"campaign {self.name} seed={self.seed} " + " ".join(
            f"{k}={v}" for k, v in sorted(self.params.items()))
        lines = [head] + [p.line() for p in self.properties]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _round17(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(format(obj, ".17g"))
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round17(obj.item())
    return obj


def dumps(obj) -> str:
    """Stable JSON: sorted keys, floats round-tripping at 17 significant digits."""
    return json.dumps(_round17(obj), sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# options and random instances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignOptions:
    eps_trade: float = EPS_TRADE
    solve: SolveOptions = field(default_factory=SolveOptions)
    grid: GridOptions = field(default_factory=GridOptions)
    shadow: ShadowOptions = field(default_factory=ShadowOptions)
    dynamic: DynamicOptions = field(default_factory=DynamicOptions)
    thin_factor: float = 10.0
    max_excluded_fraction: float = 0.05
    threads: int = 1
    assets: int = 2

    @property
    def zone(self) -> ZoneOptions:
        return ZoneOptions(self.eps_trade, self.solve)


@dataclass(frozen=True)
class Instance:
    """A random static problem: g is expected utility over scenario prices."""

    g: GFunction
    state: MarketState
    quote: Quote
    utility: UtilitySpec
    scenarios: np.ndarray
    probs: np.ndarray

    def describe(self) -> str:
        return (f"{self.utility.label} x={self.state.cash!r} y={self.state.holdings.tolist()} "
                f"bid={self.quote.bid.tolist()} ask={self.quote.ask.tolist()}")


def rng_for(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), int(index)])


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def random_utility(rng: np.random.Generator, wealth: float) -> UtilitySpec:
    family = int(rng.integers(3))
    if family == 0:
        return UtilitySpec.log()
    if family == 1:
        gamma = float(rng.uniform(0.5, 5.0))
        if abs(gamma - 1.0) < 1e-3:
            gamma = 1.5
        return UtilitySpec.power(gamma)
    # relative risk aversion alpha * wealth in [0.5, 2] at the initial wealth
    return UtilitySpec.exponential(float(rng.uniform(0.5, 2.0)) / wealth)


def random_quote(rng: np.random.Generator, d: int) -> Quote:
    bid = _log_uniform(rng, 0.1, 10.0, d)
    ask = bid * rng.uniform(1.0 + 1e-6, 2.0, d)
    return Quote(bid, ask)


def random_state(rng: np.random.Generator, d: int) -> MarketState:
    return MarketState(float(_log_uniform(rng, 1e-2, 1e2)), _log_uniform(rng, 1e-2, 1e2, d))


def random_instance(rng: np.random.Generator, d: int = 2, scenarios: int | None = None) -> Instance:
    """Quote, state and an expected-utility objective over d + 2 scenarios.

    Scenario prices are the mid price times lognormal returns with a random
    drift, so that buying, selling and holding all occur.
    """
    q = random_quote(rng, d)
    s = random_state(rng, d)
    k = scenarios or d + 2
    mid = 0.5 * (q.bid + q.ask)
    drift = rng.normal(0.0, 0.3, d)
    S = mid * np.exp(drift + rng.normal(0.0, 0.4, (k, d)))
    p = rng.dirichlet(np.ones(k))
    wealth = s.cash + float(s.holdings @ mid)
    u = random_utility(rng, wealth)
    return Instance(expected_utility_g(u, S, p), s, q, u, S, p)


def _parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / (1.0 + abs(a))


# --------------------------------------------------------------------------
# static campaign: oracle, complementarity, efficiency, spread monotonicity
# --------------------------------------------------------------------------


STREAM_ORACLE, STREAM_EFFICIENCY, STREAM_SPREAD = 1, 2, 3
STREAM_ZONES, STREAM_CONTINUITY = 4, 5
STREAM_SHADOW, STREAM_NOTRADE = 6, 7


def run_static_oracle_campaign(
    n: int = 200,
    seed: int = 0,
    opts: CampaignOptions | None = None,
    n_plans: int = 500,
    n_spread: int = 200,
    tol: float = 1e-6,
) -> CampaignReport:
    """Solver against brute force, complementarity, efficiency and spread monotonicity."""
    opts = opts or CampaignOptions()
    oracle = PropertyReport("static.oracle")
    comp = PropertyReport("static.complementarity")
    eff = PropertyReport("static.efficiency")
    spread = PropertyReport("static.spread_monotonicity")

    def one_oracle(i):
        inst = random_instance(rng_for(seed, STREAM_ORACLE, i), opts.assets)
        t0 = time.perf_counter()
        sol = solve_static(inst.g, inst.state, inst.quote, opts.solve)
        dt = time.perf_counter() - t0
        bf = brute_force_static(inst.g, inst.state, inst.quote, opts.grid)
        return inst, sol, bf, dt

    solver_time = 0.0
    for i, (inst, sol, bf, dt) in enumerate(_parallel_map(one_oracle, range(n), opts.threads)):
        solver_time += dt
        gap = _rel(sol.value, bf.value) if math.isfinite(sol.value) else (0.0 if sol.value == bf.value else math.inf)
        # the brute force may only be worse than the solver; a better grid point is a solver miss
        miss = max(bf.value - sol.value, 0.0) / (1.0 + abs(sol.value)) if math.isfinite(sol.value) else gap
        oracle.record(gap <= tol and miss <= tol, gap,
                      f"#{i}: solver {sol.value!r} brute {bf.value!r} ({inst.describe()})")
        plan = sol.plan.to_plan()
        comp.record(plan.is_complementary and sol.converged, float(plan.buys @ plan.sells),
                    f"#{i}: plan {plan} status {sol.status.value}")
    log.info("static oracle: %d solves in %.2f s", n, solver_time)

    for j in range(n_plans):
        rng = rng_for(seed, STREAM_EFFICIENCY, j)
        inst = random_instance(rng, opts.assets)
        t = random_noncomplementary_plan(rng, inst.state, inst.quote)
        phi_t = evaluate_phi(inst.g, inst.state, inst.quote, t)
        e = efficient_transform(t)
        phi_e = evaluate_phi(inst.g, inst.state, inst.quote, e)
        strict_expected = bool(np.any((inst.quote.ask > inst.quote.bid) & (t.buys * t.sells > 0)))
        ok = phi_e >= phi_t and (phi_e > phi_t or not strict_expected)
        eff.record(ok, max(phi_t - phi_e, 0.0), f"#{j}: phi(t)={phi_t!r} phi(eff)={phi_e!r}")
        eff.bump("strict" if strict_expected else "weak")

    for j in range(n_spread):
        rng = rng_for(seed, STREAM_SPREAD, j)
        inst = random_instance(rng, opts.assets)
        tight = random_nested_quote(rng, inst.quote)
        wide_v = solve_static(inst.g, inst.state, inst.quote, opts.solve).value
        tight_v = solve_static(inst.g, inst.state, tight, opts.solve).value
        shortfall = wide_v - tight_v if math.isfinite(wide_v) else 0.0
        spread.record(shortfall <= 1e-9, max(shortfall, 0.0),
                      f"#{j}: wide {wide_v!r} tight {tight_v!r}")

    return CampaignReport("static", seed, [oracle, comp, eff, spread],
                          {"n": n, "n_plans": n_plans, "n_spread": n_spread})


def random_noncomplementary_plan(rng: np.random.Generator, s: MarketState, q: Quote) -> TradePlan:
    """Admissible plan buying and selling every asset at once."""
    d = s.dim
    sells = s.holdings * rng.uniform(0.05, 1.0, d)
    budget = s.cash + float(q.bid @ sells)
    share = rng.dirichlet(np.ones(d)) * rng.uniform(0.05, 1.0)
    buys = share * budget / q.ask
    t = TradePlan(buys, sells)
    if not is_admissible(s, q, t):
        t = TradePlan(buys * 0.5, sells)
    return t


def random_nested_quote(rng: np.random.Generator, q: Quote) -> Quote:
    """A quote inside the band of ``q``: bid raised, ask lowered."""
    a, b = np.sort(rng.uniform(0.0, 1.0, (2, q.dim)), axis=0)
    band = q.ask - q.bid
    return Quote(q.bid + a * band, q.bid + b * band)


# --------------------------------------------------------------------------
# zone campaign
# --------------------------------------------------------------------------


def _engineered_seller(d: int) -> Instance:
    """Huge holdings of assets that every scenario prices below the bid."""
    q = Quote(np.ones(d), np.full(d, 1.2))
    S = np.array([[0.5 + 0.1 * c + 0.05 * i for i in range(d)] for c in range(d + 2)])
    p = np.full(d + 2, 1.0 / (d + 2))
    u = UtilitySpec.log()
    return Instance(expected_utility_g(u, S, p), MarketState(1.0, np.full(d, 100.0)), q, u, S, p)


def run_zone_campaign(n: int = 300, seed: int = 0, opts: CampaignOptions | None = None) -> CampaignReport:
    """One-sided collapse equalities, collapse inclusion, fixed point and cover."""
    opts = opts or CampaignOptions()
    zo = opts.zone
    sell = PropertyReport("zones.sell_collapse", max_excluded_fraction=opts.max_excluded_fraction)
    buy = PropertyReport("zones.buy_collapse", max_excluded_fraction=opts.max_excluded_fraction)
    incl = PropertyReport("zones.collapse_inclusion", max_excluded_fraction=opts.max_excluded_fraction)
    fixed = PropertyReport("zones.fixed_point")
    cover = PropertyReport("zones.disjoint_cover")

    def instance(i):
        if i == 0:
            return _engineered_seller(opts.assets)
        return random_instance(rng_for(seed, STREAM_ZONES, i), opts.assets)

    def one(i):
        inst = instance(i)
        g, s, q = inst.g, inst.state, inst.quote
        base = classify(g, s, q, zo)
        again = classify(g, s, q, zo)
        rows = []
        for k in range(q.dim):
            rows.append((k, classify(g, s, q.collapse_ask_to_bid(k), zo),
                         classify(g, s, q.collapse_bid_to_ask(k), zo)))
        post = apply_trade(s, q, base.plan)
        at_post = classify(g, post, q, zo)
        return inst, base, again, rows, at_post

    for i, (inst, base, again, rows, at_post) in enumerate(_parallel_map(one, range(n), opts.threads)):
        tag = f"#{i}"
        cover.record(base.signature == again.signature and len(base.signature) == opts.assets, 0.0,
                     f"{tag}: classification not single-valued")
        fixed.record(all(v == 0 for v in at_post.signature), float(np.max(np.abs(at_post.plan.delta))),
                     f"{tag}: re-solve at the optimum trades {at_post.plan.delta.tolist()}")
        for k, sell_c, buy_c in rows:
            _collapse_check(sell, tag, k, -1, base, sell_c, opts.thin_factor)
            _collapse_check(buy, tag, k, +1, base, buy_c, opts.thin_factor)
            # states selling at (bid_k, bid_k) keep selling at (bid_k, ask_k)
            if sell_c.signature[k] == -1:
                if sell_c.thin(opts.thin_factor)[k] or base.thin(opts.thin_factor)[k]:
                    incl.exclude(f"{tag} asset {k}: margin-thin")
                else:
                    incl.record(base.signature[k] == -1, 0.0,
                                f"{tag} asset {k}: sells at collapsed quote, {base.signature} at original")
        if i == 0:
            sell.bump("engineered_seller", int(base.signature[0] == -1))

    return CampaignReport("zones", seed, [sell, buy, incl, fixed, cover], {"n": n})


def _collapse_check(rep: PropertyReport, tag: str, k: int, side: int,
                    base: ZoneClassification, coll: ZoneClassification, factor: float) -> None:
    """side -1: sell zone vs ask collapsed to bid; +1: buy zone vs bid collapsed to ask."""
    a, b = base.signature[k] == side, coll.signature[k] == side
    if not (a or b):
        return
    if base.thin(factor)[k] or coll.thin(factor)[k]:
        rep.exclude(f"{tag} asset {k}: margin-thin")
        return
    rep.record(a == b, 0.0, f"{tag} asset {k}: {base.signature} original vs {coll.signature} collapsed")
    rep.bump("agree" if a == b else "disagree")


# --------------------------------------------------------------------------
# continuity campaign
# --------------------------------------------------------------------------


def run_continuity_campaign(
    n: int = 100,
    seed: int = 0,
    opts: CampaignOptions | None = None,
    delta: float = 1e-6,
    bound: float = 0.1,
    grid_step: float = 1e-3,
) -> CampaignReport:
    """Plan stability under tiny input perturbations and along collapse paths.

    Displacements are measured in money: each coordinate is weighted by its
    mid price (cash by 1) and the result divided by the state's wealth at
    mid prices. The share-count measure relative to 1 + cash + sum(holdings)
    is also counted, for information only. The collapse grid steps by
    ``grid_step`` times the band width.
    """
    opts = opts or CampaignOptions()
    pert = PropertyReport("static.perturbation_continuity")
    path = PropertyReport("static.collapse_path_continuity")

    def one(i):
        rng = rng_for(seed, STREAM_CONTINUITY, i)
        inst = random_instance(rng, opts.assets)
        g, s, q = inst.g, inst.state, inst.quote
        base = solve_static(g, s, q, opts.solve)
        f = lambda size: 1.0 + rng.uniform(-delta, delta, size)
        s2 = MarketState(s.cash * f(None), s.holdings * f(s.dim))
        lo = q.bid * f(q.dim)
        q2 = Quote(lo, np.maximum(q.ask * f(q.dim), lo))
        moved = solve_static(g, s2, q2, opts.solve)
        mid = 0.5 * (q.bid + q.ask)
        weights = np.concatenate([[1.0], mid])
        wealth = float(s.as_vector() @ weights)
        move = np.abs(moved.post_state.as_vector() - base.post_state.as_vector())
        disp = float(np.max(move * weights)) / wealth
        k = int(rng.integers(q.dim))
        prices = np.linspace(q.bid[k], q.ask[k], int(round(1.0 / grid_step)) + 1)
        plans = np.array([solve_static(g, s, q.collapse(k, float(p)), opts.solve).plan.delta for p in prices])
        steps = np.abs(np.diff(plans, axis=0)) if len(prices) > 1 else np.zeros((1, q.dim))
        jump = float(np.max(steps * mid)) / wealth
        shares = (float(np.max(move)) / s.scale, float(np.max(steps)) / s.scale)
        return inst, disp, k, jump, shares

    for i, (inst, disp, k, jump, shares) in enumerate(_parallel_map(one, range(n), opts.threads)):
        pert.record(disp <= bound, disp, f"#{i}: displacement {disp!r} ({inst.describe()})")
        path.record(jump <= bound, jump, f"#{i} asset {k}: jump {jump!r} ({inst.describe()})")
        if shares[0] > bound:
            pert.bump("share_scaled_over_bound")
        if shares[1] > bound:
            path.bump("share_scaled_over_bound")
    return CampaignReport("continuity", seed, [pert, path],
                          {"n": n, "delta": delta, "bound": bound, "grid_step": grid_step})


# --------------------------------------------------------------------------
# shadow campaign
# --------------------------------------------------------------------------


def _no_trade_instance(rng: np.random.Generator, opts: CampaignOptions):
    """A random instance whose state leaves at least one asset untraded.

    Falls back to the post-trade state of the random state, which is a
    no-trade state by construction, with one other asset's holdings pushed
    up so that it tends to be sold.
    """
    inst = random_instance(rng, opts.assets)
    c = classify(inst.g, inst.state, inst.quote, opts.zone)
    if 0 in c.signature.signs:
        return inst, c
    post = apply_trade(inst.state, inst.quote, c.plan)
    y = post.holdings.copy()
    j = int(rng.integers(y.size))
    if rng.uniform() < 0.5 and y.size > 1:
        y[j] = y[j] * 3.0 + 0.1 * post.scale
        pushed = MarketState(post.cash, y)
        c = classify(inst.g, pushed, inst.quote, opts.zone)
        if 0 in c.signature.signs:
            return replace(inst, state=pushed), c
    return replace(inst, state=post), classify(inst.g, post, inst.quote, opts.zone)


def run_shadow_campaign(
    n: int = 100,
    seed: int = 0,
    opts: CampaignOptions | None = None,
    n_intervals: int | None = None,
    tol: float = 1e-6,
    samples: int = 25,
) -> CampaignReport:
    """Interval correctness, other-asset consistency and static shadow equality."""
    opts = opts or CampaignOptions()
    n_intervals = n if n_intervals is None else n_intervals
    sopts = replace(opts.shadow, eps_trade=opts.eps_trade, solve=opts.solve)
    equal = PropertyReport("shadow.equality")
    post = PropertyReport("shadow.post_state")
    band = PropertyReport("shadow.band")
    inside = PropertyReport("shadow.interval_interior", max_excluded_fraction=opts.max_excluded_fraction)
    others = PropertyReport("shadow.other_assets", max_excluded_fraction=opts.max_excluded_fraction)
    edges = PropertyReport("shadow.interval_edges", max_excluded_fraction=opts.max_excluded_fraction)

    def one_equal(i):
        inst = random_instance(rng_for(seed, STREAM_SHADOW, i), opts.assets)
        sq = shadow_quote(inst.g, inst.state, inst.quote, sopts)
        chk = verify_shadow(inst.g, inst.state, inst.quote, sq, tol=tol, solve=opts.solve)
        return inst, sq, chk

    for i, (inst, sq, chk) in enumerate(_parallel_map(one_equal, range(n), opts.threads)):
        q = inst.quote
        equal.record(chk.passed, chk.abs_gap / (1.0 + abs(chk.phi_bidask)) if math.isfinite(chk.abs_gap) else math.inf,
                     f"#{i}: {chk.phi_bidask!r} vs {chk.phi_shadow!r} ({inst.describe()})")
        post.record(chk.post_match, chk.post_gap / inst.state.scale, f"#{i}: post-state gap {chk.post_gap!r}")
        for k, iv in enumerate(sq.intervals):
            equal.bump(iv.case.value)
        ok = bool(np.all(sq.prices >= q.bid) and np.all(sq.prices <= q.ask))
        for k, sig in enumerate(sq.source_signature):
            if sig < 0:
                ok = ok and sq.prices[k] == q.bid[k]
            elif sig > 0:
                ok = ok and sq.prices[k] == q.ask[k]
        band.record(ok, 0.0, f"#{i}: prices {sq.prices.tolist()} outside band or wrong boundary case")

    def one_interval(i):
        rng = rng_for(seed, STREAM_NOTRADE, i)
        inst, base = _no_trade_instance(rng, opts)
        zero = [k for k, v in enumerate(base.signature) if v == 0]
        if not zero:
            return inst, base, None, None, None
        k = zero[int(rng.integers(len(zero)))]
        iv = shadow_interval(inst.g, inst.state, inst.quote, k, sopts, base)
        pts = np.linspace(iv.lo, iv.hi, samples)
        inner = [classify(inst.g, inst.state, inst.quote.collapse(k, float(p)), opts.zone) for p in pts]
        eps_s = sopts.eps_s(float(inst.quote.ask[k] - inst.quote.bid[k]))
        outer = []
        for p in (iv.lo - 10 * eps_s, iv.hi + 10 * eps_s):
            if inst.quote.bid[k] <= p <= inst.quote.ask[k]:
                outer.append(classify(inst.g, inst.state, inst.quote.collapse(k, float(p)), opts.zone))
        return inst, base, k, iv, (inner, outer, eps_s)

    for i, (inst, base, k, iv, data) in enumerate(_parallel_map(one_interval, range(n_intervals), opts.threads)):
        tag = f"#{i}"
        if iv is None:
            inside.exclude(f"{tag}: no untraded asset found")
            continue
        inner, outer, eps_s = data
        band_k = float(inst.quote.ask[k] - inst.quote.bid[k])
        inside.bump(str(base.signature))
        ok_res = eps_s <= 1e-8 * band_k or band_k == 0.0
        thin = any(c.thin(opts.thin_factor)[k] for c in inner)
        bad = [c for c in inner if c.signature[k] != 0]
        inside.record(iv.lo <= iv.hi and not bad and ok_res, float(len(bad)),
                      f"{tag} asset {k}: {len(bad)} interior samples trade, interval [{iv.lo!r}, {iv.hi!r}]")
        other_bad = [c for c in inner
                     if any(c.signature[j] != base.signature[j] for j in range(len(base.signature)) if j != k)]
        if other_bad and thin:
            others.exclude(f"{tag}: margin-thin")
        else:
            others.record(not other_bad, float(len(other_bad)), f"{tag} asset {k}: other assets changed zone")
        # just outside the interval the trade sits at the threshold, so these
        # points are margin-thin by construction and are not excluded
        for c in outer:
            edges.record(c.signature != base.signature, 0.0,
                         f"{tag} asset {k}: point 10 eps_s outside [{iv.lo!r}, {iv.hi!r}] still in zone")

    return CampaignReport("shadow", seed, [equal, post, band, inside, others, edges],
                          {"n": n, "n_intervals": n_intervals, "tol": tol})


# --------------------------------------------------------------------------
# dynamic campaign
# --------------------------------------------------------------------------


def curated_suite() -> dict[str, dict]:
    """Lattice configs of the acceptance suite, keyed by file stem."""
    log_u = UtilitySpec.log()
    up_down = [[1.2], [0.85]]
    suite = {
        "binomial_d1_T1": multiplicative_tree_config(1, up_down, [0.55, 0.45], [1.0], 0.03, log_u,
                                                     MarketState(1.0, [1.0])),
        "binomial_d1_T2": multiplicative_tree_config(2, up_down, [0.55, 0.45], [1.0], 0.03,
                                                     UtilitySpec.power(2.0), MarketState(1.0, [0.5])),
        "binomial_d1_T3": multiplicative_tree_config(3, up_down, [0.55, 0.45], [1.0], 0.03, log_u,
                                                     MarketState(1.0, [1.0])),
        "trinomial_d2_T2": multiplicative_tree_config(
            2, [[1.15, 0.9], [0.9, 1.2], [1.05, 1.05]], [0.3, 0.3, 0.4], [1.0, 2.0], 0.02, log_u,
            MarketState(1.0, [0.5, 0.5])),
    }
    return suite


def write_suite(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, cfg in curated_suite().items():
        path = directory / f"{name}.json"
        path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        out.append(path)
    return out


def _concavity_pairs(rng: np.random.Generator, centre: MarketState, count: int):
    z0 = centre.as_vector()
    span = np.maximum(z0, 0.1 * centre.scale / z0.size)
    for _ in range(count):
        a = span * rng.uniform(0.25, 2.0, z0.size)
        b = span * rng.uniform(0.25, 2.0, z0.size)
        yield a, b


def run_dynamic_campaign(
    suite: Iterable[str | Path | ScenarioLattice],
    opts: CampaignOptions | None = None,
    seed: int = 0,
    pairs: int = 100,
    tol: float = 1e-4,
    bellman_tol: float = 1e-8,
) -> CampaignReport:
    """Bellman consistency, shadow equivalence and continuation concavity per lattice."""
    opts = opts or CampaignOptions()
    dopts = replace(opts.dynamic, tol=tol)
    bell = PropertyReport("dynamic.bellman")
    equiv = PropertyReport("dynamic.equivalence")
    conc = PropertyReport("dynamic.concavity")
    bands = PropertyReport("dynamic.shadow_band")

    for li, item in enumerate(suite):
        if isinstance(item, ScenarioLattice):
            lat, name = item, f"lattice{li}"
        else:
            path = Path(item)
            if not path.exists():
                raise FileNotFoundError(f"suite file {path} not found")
            lat, name = load_lattice(path), path.stem
        t0 = time.perf_counter()
        sol = solve_dynamic(lat, opts=dopts)
        shadows = shadow_process(sol)
        chk = verify_dynamic_equivalence(lat, opts=dopts, solution=sol)
        log.info("%s: solved and verified in %.2f s (%d static solves)", name, time.perf_counter() - t0, chk.solves)
        equiv.record(chk.passed, chk.abs_gap / (1.0 + abs(chk.value_bidask)),
                     f"{name}: {chk.value_bidask!r} vs {chk.value_shadow!r}")
        equiv.bump("plans_match" if chk.plans_match else "plans_differ")

        fresh = DynamicModel(lat, dopts)
        for pn in sol.policy.walk():
            if pn.is_leaf:
                continue
            expect = sum(p * fresh.value(c.node_id, pn.post_state) for c, p in zip(pn.children, pn.probs))
            gap = _rel(pn.value, expect)
            bell.record(gap <= bellman_tol, gap, f"{name} node {pn.node_id}: {pn.value!r} vs {expect!r}")

        for pn in sol.policy.walk():
            q = lat.nodes[pn.node_id].quote
            sq = shadows[pn.node_id]
            ok = bool(np.all(sq.prices >= q.bid) and np.all(sq.prices <= q.ask))
            if not pn.is_leaf:
                for k, v in enumerate(sq.source_signature):
                    if v < 0:
                        ok = ok and sq.prices[k] == q.bid[k]
                    elif v > 0:
                        ok = ok and sq.prices[k] == q.ask[k]
            bands.record(ok, 0.0, f"{name} node {pn.node_id}: shadow {sq.prices.tolist()}")

        rng = rng_for(seed, 100 + li, 0)
        for node in lat.internal_nodes():
            pn_state = next(pn.state for pn in sol.policy.walk() if pn.node_id == node.id)
            cont = sol.model.continuation(node.id)
            for a, b in _concavity_pairs(rng, pn_state, pairs):
                if float(np.max(np.abs(a - b))) < 1e-3:
                    conc.exclude(f"{name} node {node.id}: states closer than 1e-3")
                    continue
                fa, fb, fm = cont.evaluate(a)[0], cont.evaluate(b)[0], cont.evaluate(0.5 * (a + b))[0]
                slack = fm - 0.5 * (fa + fb)
                conc.record(slack >= 1e-12, max(1e-12 - slack, 0.0),
                            f"{name} node {node.id}: midpoint slack {slack!r}")
        conc.bump(name, 1)

    return CampaignReport("dynamic", seed, [bell, equiv, conc, bands], {"pairs": pairs, "tol": tol})


# --------------------------------------------------------------------------
# determinism
# --------------------------------------------------------------------------


def determinism_check(runner: Callable[[], CampaignReport]) -> tuple[bool, str]:
    """Run a campaign twice; reports must match byte for byte."""
    a, b = runner(), runner()
    same = a.to_json() == b.to_json() and a.to_text() == b.to_text()
    return same, a.name
