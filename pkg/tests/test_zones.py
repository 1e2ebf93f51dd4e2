from __future__ import annotations

import numpy as np
import pytest

from shadowprice.gfunction import expected_utility_g
from shadowprice.market import MarketState, Quote, UtilitySpec, ZoneSignature
from shadowprice.zones import BudgetLine, RectGrid, ZoneOptions, classify, signature_of, zone_map, zone_table_csv


def test_zero_state_is_no_trade(two_asset_g, wide_quote):
    c = classify(two_asset_g, MarketState(0, [0, 0]), wide_quote)
    assert c.signature == ZoneSignature((0, 0))


def test_sqrt_example_buys_both(sqrt_g):
    c = classify(sqrt_g, MarketState(4, [0, 0]), Quote([1, 1], [1, 1]))
    assert c.signature == ZoneSignature((1, 1))
    assert np.all(c.margins > 0)


def test_signature_threshold():
    sig, margins = signature_of([1e-9, -0.5, 0.5], 1.0, 1e-7)
    assert sig.signs == (0, -1, 1)
    assert margins[0] < 0 < margins[1]


def test_post_trade_state_is_no_trade(two_asset_g, wide_quote):
    s = MarketState(3.0, [0.0, 4.0])
    c = classify(two_asset_g, s, wide_quote)
    assert c.signature != ZoneSignature((0, 0))
    post = c.solution.post_state
    assert classify(two_asset_g, post, wide_quote).signature == ZoneSignature((0, 0))


def test_thin_flags_near_threshold(two_asset_g, wide_quote):
    c = classify(two_asset_g, MarketState(3.0, [0.0, 4.0]), wide_quote)
    assert not c.is_thin()
    thin = type(c)(c.signature, c.plan, np.array([2e-7, -0.5e-7]), 1e-7, c.solution)
    assert thin.thin().tolist() == [True, True]


def test_one_point_grid(two_asset_g, wide_quote):
    rows = zone_map(two_asset_g, wide_quote, RectGrid([1.0], [[0.5], [0.5]]))
    assert len(rows) == 1
    assert zone_table_csv(rows, 2).count("\n") == 2


def test_grid_dimension_checked(two_asset_g, wide_quote):
    with pytest.raises(ValueError):
        zone_map(two_asset_g, wide_quote, RectGrid([1.0], [[0.5]]))


def test_budget_line_signature_monotone():
    g = expected_utility_g(UtilitySpec.log(), [[0.7], [1.45]], [0.5, 0.5])
    q = Quote([1.0], [1.05])
    rows = zone_map(g, q, BudgetLine(wealth=4.0, asset=0, points=21))
    first = [r.signature[0] for r in rows]
    assert first[0] == 1 and first[-1] == -1 and 0 in first
    assert all(b <= a for a, b in zip(first, first[1:]))
    for r in rows[::5]:
        assert classify(g, r.state, q).signature == r.signature


def test_zero_spread_grid_is_a_partition(two_asset_g):
    q = Quote([1.0, 1.0], [1.0, 1.0])
    axis = np.linspace(0.0, 3.0, 20)
    rows = zone_map(two_asset_g, q, RectGrid(axis, [axis, [1.0]]))
    assert len(rows) == 400
    assert all(len(r.signature) == 2 and set(r.signature) <= {-1, 0, 1} for r in rows)


def test_csv_is_deterministic_and_threads_agree(two_asset_g, wide_quote):
    grid = RectGrid([0.5, 2.0], [[0.0, 1.0], [0.0, 3.0]])
    a = zone_table_csv(zone_map(two_asset_g, wide_quote, grid), 2)
    b = zone_table_csv(zone_map(two_asset_g, wide_quote, grid, threads=2), 2)
    assert a == b
    assert a.splitlines()[0] == "x,y1,y2,sig1,sig2,margin1,margin2"


def test_eps_trade_option(two_asset_g, wide_quote):
    s = MarketState(3.0, [0.0, 4.0])
    loose = classify(two_asset_g, s, wide_quote, ZoneOptions(eps_trade=10.0))
    assert loose.signature == ZoneSignature((0, 0))
