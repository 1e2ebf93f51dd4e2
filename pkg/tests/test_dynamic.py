from __future__ import annotations

import math

import numpy as np
import pytest

from shadowprice.dynamic import (
    DynamicModel,
    brute_force_dynamic,
    continuation_g,
    envelope_gradient,
    shadow_process,
    solve_dynamic,
    value_function,
    values_table_csv,
    verify_dynamic_equivalence,
)
from shadowprice.gfunction import expected_utility_g
from shadowprice.market import MarketState, Quote, UtilitySpec, build_lattice, load_lattice, multiplicative_tree_config
from shadowprice.static import solve_static

LOG = {"family": "log", "params": {}}


def leaf(bid, ask=None):
    return {"bid": list(bid), "ask": list(ask if ask is not None else bid)}


def one_step(children, root_bid, root_ask=None, utility=LOG, d=None, initial=None):
    cfg = {
        "horizon": 1, "assets": d or len(root_bid), "utility": utility,
        "root": {**leaf(root_bid, root_ask), "children": [{"prob": p, "node": n} for p, n in children]},
    }
    if initial is not None:
        cfg["initial"] = initial
    return build_lattice(cfg, strict_spread=False)


def test_leaf_value_is_terminal_utility():
    lat = build_lattice({"horizon": 0, "assets": 2, "utility": LOG, "root": leaf([1, 1])}, strict_spread=False)
    assert value_function(lat, 0, MarketState(1, [1, 1])) == pytest.approx(math.log(3))
    sol = solve_dynamic(lat, MarketState(1, [1, 1]))
    assert sol.value == pytest.approx(math.log(3))
    assert sol.policy.status == "Liquidation"


def test_single_child_matches_static_problem():
    lat = one_step([(1.0, leaf([1.3]))], [1.0])
    s = MarketState(1.0, [0.5])
    g = expected_utility_g(UtilitySpec.log(), [[1.3]], [1.0])
    expect = solve_static(g, s, Quote([1.0], [1.0])).value
    assert solve_dynamic(lat, s).value == pytest.approx(expect, rel=1e-12)


def test_empty_portfolio_propagates_constant():
    u = {"family": "exponential", "params": {"alpha": 2.0}}
    lat = one_step([(0.4, leaf([1.2], [1.3])), (0.6, leaf([0.8], [0.9]))], [1.0], [1.1], utility=u)
    assert solve_dynamic(lat, MarketState(0, [0])).value == pytest.approx(-0.5)


def test_continuation_single_child_equals_child_value():
    cfg = multiplicative_tree_config(2, [[1.2], [0.85]], [0.5, 0.5], [1.0], 0.02, UtilitySpec.log())
    cfg["root"]["children"] = cfg["root"]["children"][:1]
    cfg["root"]["children"][0]["prob"] = 1.0
    lat = build_lattice(cfg)
    model = DynamicModel(lat)
    cont = model.continuation(0)
    child = lat.nodes[0].children[0][0]
    for z in ([1.0, 0.5], [0.3, 2.0]):
        s = MarketState(z[0], z[1:])
        assert cont(z[0], z[1:]) == pytest.approx(model.value(child, s), rel=1e-12)


def test_continuation_is_probability_weighted():
    lat = one_step([(0.3, leaf([1.2], [1.25])), (0.7, leaf([0.9], [0.95]))], [1.0], [1.05])
    cont = continuation_g(lat, 0)
    z = np.array([1.0, 2.0])
    expect = 0.3 * math.log(1 + 2 * 1.2) + 0.7 * math.log(1 + 2 * 0.9)
    assert cont(z[0], z[1:]) == pytest.approx(expect, rel=1e-14)


def test_continuation_midpoint_concavity(lattice_dir):
    lat = load_lattice(lattice_dir / "binomial_d1_T2.json")
    cont = DynamicModel(lat).continuation(0)
    rng = np.random.default_rng(3)
    for _ in range(100):
        a, b = rng.uniform(0.1, 3.0, 2), rng.uniform(0.1, 3.0, 2)
        slack = cont(*((a + b) / 2)[:1], ((a + b) / 2)[1:]) - 0.5 * (cont(a[0], a[1:]) + cont(b[0], b[1:]))
        assert slack > 0


def test_envelope_gradient():
    q = Quote([1.0, 2.0], [1.5, 2.5])
    out = envelope_gradient(np.array([1.0, 1.2, 3.0]), q)
    # marginal cash value: buying asset 2 at the ask pays 3 / 2.5 > 1
    assert out[0] == pytest.approx(1.2)
    np.testing.assert_allclose(out[1:], [1.2, 3.0])


def test_frictionless_lattice_has_equal_shadow():
    lat = one_step([(0.5, leaf([1.3])), (0.5, leaf([0.8]))], [1.0], initial={"cash": 1.0, "holdings": [0.2]})
    sol = solve_dynamic(lat)
    shadows = shadow_process(sol)
    for nid, sq in shadows.items():
        np.testing.assert_array_equal(sq.prices, lat.nodes[nid].quote.bid)
    chk = verify_dynamic_equivalence(lat, solution=sol)
    assert chk.abs_gap == 0.0


def test_huge_spread_freezes_trading():
    u = UtilitySpec.log()
    children = [(0.5, leaf([1.1], [5.0])), (0.5, leaf([0.9], [5.0]))]
    lat = one_step(children, [0.2], [5.0])
    s = MarketState(1.0, [1.0])
    sol = solve_dynamic(lat, s)
    for pn in sol.policy.walk():
        if not pn.is_leaf:
            assert np.all(np.abs(pn.plan.delta) <= 1e-9)
    expect = 0.5 * u.value(1 + 1.1) + 0.5 * u.value(1 + 0.9)
    assert sol.value == pytest.approx(expect, rel=1e-12)
    assert brute_force_dynamic(lat, s, points=11, rounds=20) <= sol.value + 1e-12


def test_matches_brute_force_on_binomial(lattice_dir):
    lat = load_lattice(lattice_dir / "binomial_d1_T1.json")
    sol = solve_dynamic(lat)
    bf = brute_force_dynamic(lat, lat.initial)
    assert sol.value == pytest.approx(bf, abs=1e-6)


def test_buying_node_shadow_is_ask():
    lat = one_step([(0.5, leaf([1.6], [1.65])), (0.5, leaf([0.9], [0.95]))], [1.0], [1.05])
    sol = solve_dynamic(lat, MarketState(1.0, [0.0]))
    assert sol.policy.plan.delta[0] > 0
    shadows = shadow_process(sol)
    assert shadows[0].prices[0] == 1.05


def test_no_trade_node_shadow_inside_band(lattice_dir):
    lat = load_lattice(lattice_dir / "binomial_d1_T2.json")
    sol = solve_dynamic(lat)
    shadows = shadow_process(sol)
    for pn in sol.policy.walk():
        q = lat.nodes[pn.node_id].quote
        assert np.all(q.bid <= shadows[pn.node_id].prices)
        assert np.all(shadows[pn.node_id].prices <= q.ask)


def test_bellman_consistency(lattice_dir):
    lat = load_lattice(lattice_dir / "binomial_d1_T2.json")
    sol = solve_dynamic(lat)
    fresh = DynamicModel(lat)
    for pn in sol.policy.walk():
        if pn.is_leaf:
            continue
        expect = sum(p * fresh.value(c.node_id, pn.post_state) for c, p in zip(pn.children, pn.probs))
        assert pn.value == pytest.approx(expect, rel=1e-9)


def test_equivalence_on_two_asset_lattice(lattice_dir):
    lat = load_lattice(lattice_dir / "trinomial_d2_T2.json")
    chk = verify_dynamic_equivalence(lat)
    assert chk.passed and chk.abs_gap <= 1e-4 * (1 + abs(chk.value_bidask))


def test_policy_outputs(lattice_dir):
    lat = load_lattice(lattice_dir / "binomial_d1_T1.json")
    sol = solve_dynamic(lat)
    shadow_process(sol)
    table = values_table_csv(sol).splitlines()
    assert table[0] == "node_id,depth,x,y1,plan1,value,shadow1"
    assert len(table) == 1 + len(lat.nodes)
    d = sol.to_dict()
    assert d["policy"]["node_id"] == 0 and len(d["policy"]["children"]) == 2


def test_missing_initial_state():
    lat = one_step([(1.0, leaf([1.3]))], [1.0])
    with pytest.raises(ValueError):
        solve_dynamic(lat)
