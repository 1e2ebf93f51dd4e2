"""One-period problem: maximise g over admissible trades at a bid/ask quote.

The search runs in net-trade coordinates delta (one number per asset). The
objective h(delta) = g(x - cost(delta), y + delta) is concave but kinked on
every hyperplane delta_i = 0, because purchases are charged at the ask and
sales credited at the bid. The solver is a coordinate ascent whose line
searches are exact on each smooth piece and land exactly on kinks, which
keeps no-trade coordinates at exactly zero. When the budget binds,
cash-neutral exchange directions between pairs of assets are searched too;
with a slack budget, coordinate-wise optimality already implies optimality
because the directional derivative of h is separable across assets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from .admissible import FEAS_TOL, NetTrade, TradeBounds, TradePlan, apply_trade, trade_bounds
from .gfunction import GFunction
from .market import MarketState, Quote, validate_quote

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
FLAT_SWEEPS = 50  # sweeps before a value-flat sweep may end a gradient solve


class SolveStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    DEGENERATE_SPREAD = "DegenerateSpread"


@dataclass(frozen=True)
class SolveOptions:
    tol_val: float = 1e-10
    tol_x: float = 1e-9
    max_sweeps: int = 10_000
    use_gradient: bool = True
    line_tol: float = 1e-10  # relative bracket width for value-only line searches
    feas_tol: float = FEAS_TOL


@dataclass(frozen=True)
class StaticSolution:
    value: float
    plan: NetTrade
    post_state: MarketState
    iterations: int
    status: SolveStatus
    evaluations: int = 0

    @property
    def converged(self) -> bool:
        return self.status is not SolveStatus.MAX_ITER

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "plan": self.plan.delta.tolist(),
            "buys": self.plan.to_plan().buys.tolist(),
            "sells": self.plan.to_plan().sells.tolist(),
            "post_state": self.post_state.to_dict(),
            "iterations": self.iterations,
            "status": self.status.value,
        }


def evaluate_phi(g: GFunction, s: MarketState, q: Quote, t: TradePlan | NetTrade) -> float:
    """g at the state reached by trading ``t``; raises NotAdmissible."""
    return g.value(apply_trade(s, q, t).as_vector())


# --------------------------------------------------------------------------
# one-dimensional machinery
# --------------------------------------------------------------------------


def golden_section_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Maximise a unimodal f on [a, b]; returns the best point seen and its value."""
    best_t, best_v = a, f(a)
    vb = f(b)
    if vb > best_v:
        best_t, best_v = b, vb
    if b - a <= tol:
        return best_t, best_v
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    for t, v in ((c, fc), (d, fd)):
        if v > best_v:
            best_t, best_v = t, v
    return best_t, best_v


class _Problem:
    """Net-trade parametrisation of one static problem instance."""

    def __init__(self, g: GFunction, s: MarketState, q: Quote, opts: SolveOptions):
        self.g = g
        self.opts = opts
        self.x = s.cash
        self.y = s.holdings
        self.bid = q.bid
        self.ask = q.ask
        self.bounds: TradeBounds = trade_bounds(s, q)
        self.d = s.dim
        self.scale = s.scale
        self.nevals = 0
        self.use_grad = opts.use_gradient and g.has_gradient

    def cost(self, delta) -> float:
        return float(self.ask @ np.maximum(delta, 0.0) - self.bid @ np.maximum(-delta, 0.0))

    def post(self, delta) -> NDArray[np.float64]:
        z = np.empty(self.d + 1)
        z[0] = self.x - self.cost(delta)
        z[1:] = self.y + delta
        if z[0] < 0 and z[0] > -self.opts.feas_tol * self.scale:
            z[0] = 0.0
        np.maximum(z[1:], 0.0, out=z[1:], where=z[1:] > -self.opts.feas_tol * self.scale)
        return z

    def h(self, delta) -> float:
        self.nevals += 1
        return self.g.value(self.post(delta))

    def hgrad(self, delta):
        self.nevals += 1
        return self.g.value_grad(self.post(delta))

    # -- feasible segment along a direction -------------------------------

    def segment(self, delta, u) -> tuple[float, float]:
        """Largest [t_lo, t_hi] containing 0 with delta + t u feasible."""
        lo, hi = -math.inf, math.inf
        for i in np.flatnonzero(u):
            a = (self.bounds.lower[i] - delta[i]) / u[i]
            b = (self.bounds.upper[i] - delta[i]) / u[i]
            if a > b:
                a, b = b, a
            lo, hi = max(lo, a), min(hi, b)
        lo, hi = min(lo, 0.0), max(hi, 0.0)
        # a hair of slack keeps cash-neutral directions open on a binding budget
        slack = self.x - self.cost(delta) + 1e-12 * self.scale
        hi = self._budget_reach(delta, u, hi, slack)
        lo = -self._budget_reach(delta, -u, -lo, slack)
        return lo, hi

    def _budget_reach(self, delta, u, tmax: float, slack0: float) -> float:
        """Largest t in [0, tmax] with cost(delta + t u) <= x (cost is convex in t)."""
        if tmax <= 0:
            return 0.0
        nz = np.flatnonzero(u)
        kinks = sorted({float(-delta[i] / u[i]) for i in nz if 0 < -delta[i] / u[i] < tmax})
        t0 = 0.0
        slack = slack0
        for t1 in kinks + [tmax]:
            mid = delta + 0.5 * (t0 + t1) * u
            terms = np.where(mid > 0, self.ask, self.bid)[nz] * u[nz]
            rate = float(np.sum(terms))
            if rate <= 1e-13 * float(np.sum(np.abs(terms))):
                rate = 0.0
            end = slack - rate * (t1 - t0)
            if end < 0 and rate > 0:
                return t0 + max(slack, 0.0) / rate
            slack, t0 = end, t1
        return tmax

    def kinks(self, delta, u, lo: float, hi: float) -> list[float]:
        ts = {float(-delta[i] / u[i]) for i in np.flatnonzero(u)}
        return sorted(t for t in ts if lo < t < hi)

    # -- directional derivatives --------------------------------------------

    def dcost(self, v, u, side: int) -> float:
        """d cost(v + t u)/dt from the right (side=+1) or left (side=-1)."""
        total = 0.0
        for i in np.flatnonzero(u):
            moving_up = (u[i] > 0) == (side > 0)
            if moving_up:
                price = self.ask[i] if v[i] >= 0 else self.bid[i]
            else:
                price = self.ask[i] if v[i] > 0 else self.bid[i]
            total += price * u[i]
        return total

    def dphi(self, delta, u, t: float) -> tuple[float, float]:
        """Left and right derivatives of t -> h(delta + t u), from one gradient."""
        v = delta + t * u
        val, grad = self.hgrad(v)
        if val == -math.inf:
            return -math.inf, math.inf
        out = []
        for side in (-1, +1):
            dz = np.concatenate(([-self.dcost(v, u, side)], u))
            m = dz != 0
            r = float(np.dot(grad[m], dz[m]))
            out.append(r if not math.isnan(r) else math.inf * side)
        return out[0], out[1]

    # -- exact line search ----------------------------------------------------

    def line_search(self, delta, u, f0: float) -> tuple[NDArray[np.float64], float]:
        lo, hi = self.segment(delta, u)
        if hi - lo <= 0:
            return delta, f0
        if self.use_grad:
            left, right = self.dphi(delta, u, 0.0)
            if right > 0 and hi > 0:
                t = self._ascend(delta, u, hi, right)
            elif left < 0 and lo < 0:
                t = -self._ascend(delta, -u, -lo, -left)
            else:
                return delta, f0
        else:
            pts = [lo] + self.kinks(delta, u, lo, hi) + [hi]
            t = self._argmax_values(delta, u, pts)
        if t == 0.0:
            return delta, f0
        new = delta + t * u
        for i in np.flatnonzero(u):  # snap kink landings exactly
            if abs(new[i]) <= 1e-14 * self.scale:
                new[i] = 0.0
        fn = self.h(new)
        if fn > f0:
            return new, fn
        # with derivatives the move goes to a root of an ascent direction; on
        # very flat objectives the value cannot resolve it, so accept ulp-level losses
        if self.use_grad and fn >= f0 - 8 * np.finfo(float).eps * abs(f0):
            return new, fn
        return delta, f0

    def _ascend(self, delta, u, tmax: float, d0: float) -> float:
        """Maximiser on (0, tmax] given a positive right-derivative d0 at 0."""
        a, fa = 0.0, d0
        for b in self.kinks(delta, u, 0.0, tmax) + [tmax]:
            left, right = self.dphi(delta, u, b)
            if left < 0:
                return self._root(delta, u, a, fa, b, left)
            if b == tmax or right <= 0:
                return b  # on a kink or the boundary
            a, fa = b, right
        return tmax

    def _root(self, delta, u, a: float, fa: float, b: float, fb: float) -> float:
        """Zero of the (smooth) derivative between kinks a < b with fa > 0 > fb."""
        step = 1e-12 * (b - a)
        while not math.isfinite(fa) and step < (b - a) / 2:
            a += step
            fa = self.dphi(delta, u, a)[1]
            step *= 16
        step = 1e-12 * (b - a)
        while not math.isfinite(fb) and step < (b - a) / 2:
            b -= step
            fb = self.dphi(delta, u, b)[0]
            step *= 16
        if fa <= 0:
            return a
        if fb >= 0:
            return b
        if not (math.isfinite(fa) and math.isfinite(fb)):
            return 0.5 * (a + b)
        xtol = 1e-15 * max(abs(a), abs(b), 1e-300)
        return brentq(lambda t: self.dphi(delta, u, t)[1], a, b, xtol=xtol, rtol=1e-15, maxiter=200)

    def _argmax_values(self, delta, u, pts: list[float]) -> float:
        f = lambda t: self.h(delta + t * u)
        vals = [f(t) for t in pts]
        k = int(np.argmax(vals))
        best_t, best_v = pts[k], vals[k]
        segments = []
        if k > 0:
            segments.append((pts[k - 1], pts[k]))
        if k + 1 < len(pts):
            segments.append((pts[k], pts[k + 1]))
        for a, b in segments:
            tol = self.opts.line_tol * max(b - a, 1e-300) + 1e-15 * self.scale
            t, v = golden_section_max(f, a, b, tol)
            if v > best_v:
                best_t, best_v = t, v
        return best_t

    # -- Newton step on the current face --------------------------------------

    def face_gradient(self, delta, free, N):
        val, grad = self.hgrad(delta)
        price = np.where(delta[free] > 0, self.ask[free], self.bid[free])
        gF = grad[1:][free] - grad[0] * price
        return N.T @ gF

    def newton_direction(self, delta) -> NDArray[np.float64] | None:
        """Newton direction restricted to the smooth face containing delta.

        Free coordinates are those trading strictly inside their bounds; a
        binding budget removes the direction that changes cash.
        """
        tol = 1e-12 * self.scale
        free = np.flatnonzero((delta != 0) & (delta > self.bounds.lower + tol) & (delta < self.bounds.upper - tol))
        if free.size == 0:
            return None
        price = np.where(delta[free] > 0, self.ask[free], self.bid[free])
        if self.x - self.cost(delta) <= 1e-9 * self.scale:
            if free.size == 1:
                return None
            _, _, vt = np.linalg.svd(price[None, :])
            N = vt[1:].T
        else:
            N = np.eye(free.size)
        g0 = self.face_gradient(delta, free, N)
        if not np.all(np.isfinite(g0)):
            return None
        k = N.shape[1]
        H = np.empty((k, k))
        h = 1e-6 * min(float(np.min(np.abs(delta[free]))), self.scale)
        for j in range(k):
            probe = delta.copy()
            probe[free] += h * N[:, j]
            H[:, j] = (self.face_gradient(probe, free, N) - g0) / h
        H = 0.5 * (H + H.T)
        try:
            w = np.linalg.eigvalsh(H)
            if not np.all(np.isfinite(w)) or w.max() >= 0:
                return None
            p = np.linalg.solve(H, -g0)
        except np.linalg.LinAlgError:
            return None
        u = np.zeros(self.d)
        u[free] = N @ p
        return u if np.any(u) else None


def solve_static(g: GFunction, s: MarketState, q: Quote, opts: SolveOptions | None = None) -> StaticSolution:
    """Maximise g over admissible trades; the plan is returned in net form.

    Returns the best point found with status ``MaxIter`` when the sweep budget
    runs out instead of raising.
    """
    opts = opts or SolveOptions()
    validate_quote(q)
    prob = _Problem(g, s, q, opts)
    d = prob.d
    delta = np.zeros(d)
    f = prob.h(delta)

    if f == -math.inf:
        delta, f = _finite_start(prob)
        if f == -math.inf:
            return _solution(prob, np.zeros(d), -math.inf, 0, SolveStatus.CONVERGED, q, s)

    status = SolveStatus.MAX_ITER
    sweeps = 0
    basis = np.eye(d)
    for sweeps in range(1, opts.max_sweeps + 1):
        start, f_start = delta.copy(), f
        for i in range(d):
            delta, f = prob.line_search(delta, basis[i], f)
        if d > 1 and _budget_tight(prob, delta):
            for u in _exchange_directions(prob, delta):
                delta, f = prob.line_search(delta, u, f)
        if d > 1:
            if prob.use_grad:
                for _ in range(5):
                    u = prob.newton_direction(delta)
                    if u is None:
                        break
                    before = delta
                    delta, f = _newton_move(prob, delta, u, f)
                    if np.max(np.abs(delta - before)) <= 1e-13 * prob.scale:
                        break
            else:
                step = delta - start
                if np.any(step):
                    delta, f = prob.line_search(delta, step, f)
        moved = float(np.max(np.abs(delta - start)))
        gain = f - f_start
        flat = gain <= 4 * np.finfo(float).eps * (1.0 + abs(f))
        if prob.use_grad and sweeps < FLAT_SWEEPS:
            # derivatives still locate the optimum where values are flat
            flat = False
        if gain <= opts.tol_val * (1.0 + abs(f)) and (moved <= opts.tol_x * prob.scale or flat):
            status = SolveStatus.CONVERGED
            break
    if status is SolveStatus.CONVERGED and np.any(q.bid == q.ask):
        status = SolveStatus.DEGENERATE_SPREAD
    return _solution(prob, delta, f, sweeps, status, q, s)


def _newton_move(prob: _Problem, delta, u, f):
    """Take the full Newton step if it stays on the face and improves, else search the line."""
    trial = delta + u
    same_face = np.all(np.sign(trial) == np.sign(delta))
    if same_face and np.all(prob.bounds.feasible(trial)):
        ft = prob.h(trial)
        if ft >= f:
            return trial, ft
    return prob.line_search(delta, u, f)


def _budget_tight(prob: _Problem, delta) -> bool:
    return prob.x - prob.cost(delta) <= 1e-9 * prob.scale


def _exchange_directions(prob: _Problem, delta):
    """Cash-neutral swaps: give up asset i at its marginal refund, take asset j at its marginal cost."""
    d = prob.d
    for i in range(d):
        refund = prob.ask[i] if delta[i] > 0 else prob.bid[i]
        for j in range(d):
            if i == j:
                continue
            price = prob.ask[j] if delta[j] >= 0 else prob.bid[j]
            u = np.zeros(d)
            u[i] = -1.0 / refund
            u[j] = 1.0 / price
            yield u


def _finite_start(prob: _Problem):
    """Find a feasible trade with finite g, preferring full liquidation."""
    candidates = [-prob.y.copy()]
    lo, hi = prob.bounds.lower, prob.bounds.upper
    for frac in (0.5, 0.25, 0.1):
        c = lo + frac * (hi - lo)
        if prob.bounds.feasible(c):
            candidates.append(c)
    best, fbest = np.zeros(prob.d), -math.inf
    for c in candidates:
        v = prob.h(c)
        if v > fbest:
            best, fbest = c, v
    return best, fbest


def _solution(prob: _Problem, delta, f, sweeps, status, q: Quote, s: MarketState) -> StaticSolution:
    plan = NetTrade(delta)
    z = prob.post(delta)
    post = MarketState(max(z[0], 0.0), np.maximum(z[1:], 0.0))
    return StaticSolution(float(f), plan, post, sweeps, status, prob.nevals)


# --------------------------------------------------------------------------
# oracle and frictionless wrapper
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridOptions:
    points: int = 21
    shrink: float = 0.6
    rounds: int = 70


def brute_force_static(g: GFunction, s: MarketState, q: Quote, grid: GridOptions | None = None) -> StaticSolution:
    """Multi-resolution grid search over the net-trade box.

    Evaluates g on a uniform grid, recentres a box shrunk by ``grid.shrink``
    on the best point and repeats. Grid points that overspend are first
    mapped into the feasible set by scaling their purchases down, so the
    search can slide along a binding budget instead of starving in the thin
    feasible sliver next to it. Independent of the coordinate ascent in
    :func:`solve_static`; intended for d <= 3.
    """
    grid = grid or GridOptions()
    validate_quote(q)
    b = trade_bounds(s, q)
    z0 = s.as_vector()
    d = s.dim
    lo, hi = b.lower.copy(), b.upper.copy()
    full_lo, full_hi = b.lower, b.upper

    def project(deltas):
        # scale purchases down until they are paid for; identity on feasible points
        buys = np.maximum(deltas, 0.0)
        sells = np.minimum(deltas, 0.0)
        funds = z0[0] - sells @ q.bid
        spend = buys @ q.ask
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(spend > funds, funds / spend, 1.0)
        return sells + buys * np.clip(theta, 0.0, 1.0)[:, None]

    def values(deltas):
        deltas = project(deltas)
        cost = np.maximum(deltas, 0.0) @ q.ask - np.maximum(-deltas, 0.0) @ q.bid
        Z = np.empty((deltas.shape[0], d + 1))
        Z[:, 0] = np.maximum(z0[0] - cost, 0.0)
        Z[:, 1:] = np.maximum(z0[1:] + deltas, 0.0)
        return g.evaluate_many(Z)

    best = np.zeros(d)
    fbest = float(values(best[None, :])[0])
    n = 0
    for n in range(1, grid.rounds + 1):
        axes = [np.linspace(lo[i], hi[i], grid.points) for i in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = values(mesh)
        k = int(np.argmax(vals))
        if vals[k] > fbest:
            best, fbest = project(mesh[k:k + 1])[0], float(vals[k])
        # shrink only along axes where the best point is inside the box; on a
        # box face (that is not a bound) recentre at full width so the search
        # can keep walking, e.g. along a binding budget line
        width = hi - lo
        tol = 1e-12 * (1.0 + np.abs(best))
        on_face = ((best - lo <= tol) & (lo > full_lo)) | ((hi - best <= tol) & (hi < full_hi))
        half = np.where(on_face, width, grid.shrink * width) / 2.0
        lo = np.maximum(best - half, full_lo)
        hi = np.minimum(best + half, full_hi)
        if np.all(hi - lo <= 1e-15 * s.scale):
            break
    best = np.where(np.abs(best) <= 1e-15 * s.scale, 0.0, best)
    prob = _Problem(g, s, q, SolveOptions())
    return _solution(prob, best, fbest, n, SolveStatus.CONVERGED, q, s)


def solve_frictionless(
    g: GFunction,
    s: MarketState,
    q: Quote,
    price,
    assets=None,
    opts: SolveOptions | None = None,
) -> StaticSolution:
    """Solve with the chosen assets (default: all) traded at a single price.

    ``price`` is a full price vector or a scalar for every asset; only the
    entries listed in ``assets`` replace the corresponding bid and ask.
    """
    price = np.broadcast_to(np.asarray(price, dtype=float), (q.dim,))
    if np.any(price <= 0):
        raise ValueError("frictionless prices must be strictly positive")
    assets = range(q.dim) if assets is None else assets
    bid, ask = q.bid.copy(), q.ask.copy()
    for i in assets:
        bid[i] = ask[i] = price[i]
    return solve_static(g, s, Quote(bid, ask), opts)
