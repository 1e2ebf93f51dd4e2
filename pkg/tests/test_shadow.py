from __future__ import annotations

import math

import numpy as np
import pytest

from shadowprice.gfunction import expected_utility_g
from shadowprice.market import MarketState, Quote, UtilitySpec, ZoneSignature
from shadowprice.shadow import IntervalCase, ShadowOptions, shadow_interval, shadow_quote, verify_shadow
from shadowprice.static import solve_static
from shadowprice.zones import classify


def test_point_band(two_asset_g):
    q = Quote([1.0, 1.0], [1.0, 1.3])
    iv = shadow_interval(two_asset_g, MarketState(1.0, [1.0, 1.0]), q, 0)
    assert iv.lo == iv.hi == 1.0


def test_buy_maps_to_ask(sqrt_g):
    q = Quote([0.5, 0.5], [1.0, 1.0])
    s = MarketState(4.0, [0.0, 0.0])
    for k in range(2):
        iv = shadow_interval(sqrt_g, s, q, k)
        assert iv.case is IntervalCase.BUY and iv.lo == iv.hi == 1.0
    sq = shadow_quote(sqrt_g, s, q)
    np.testing.assert_array_equal(sq.prices, [1.0, 1.0])
    chk = verify_shadow(sqrt_g, s, q, sq)
    assert chk.passed and chk.abs_gap <= 1e-12


def test_sell_maps_to_bid():
    g = expected_utility_g(UtilitySpec.log(), [[1.0, 1.1], [1.1, 0.9], [0.95, 1.0]], [0.3, 0.3, 0.4])
    q = Quote([1.0, 1.0], [1.3, 1.3])
    s = MarketState(0.01, [100.0, 100.0])
    g_huge = expected_utility_g(UtilitySpec.log(), [[0.5, 0.6], [0.6, 0.4], [0.45, 0.5]], [0.3, 0.3, 0.4])
    sig = classify(g_huge, s, q).signature
    assert sig == ZoneSignature((-1, -1))
    sq = shadow_quote(g_huge, s, q)
    np.testing.assert_array_equal(sq.prices, q.bid)
    assert verify_shadow(g_huge, s, q, sq).passed
    assert g is not None


def test_frictionless_quote_is_its_own_shadow(two_asset_g):
    q = Quote([1.0, 2.0], [1.0, 2.0])
    s = MarketState(1.0, [1.0, 1.0])
    sq = shadow_quote(two_asset_g, s, q)
    np.testing.assert_array_equal(sq.prices, q.bid)
    chk = verify_shadow(two_asset_g, s, q, sq)
    assert chk.abs_gap == 0.0


def test_no_trade_interval_is_nonempty_and_inside(two_asset_g, wide_quote):
    s0 = MarketState(3.0, [0.0, 4.0])
    post = solve_static(two_asset_g, s0, wide_quote).post_state
    base = classify(two_asset_g, post, wide_quote)
    assert base.signature == ZoneSignature((0, 0))
    for k in range(2):
        iv = shadow_interval(two_asset_g, post, wide_quote, k, base=base)
        assert iv.case is IntervalCase.NO_TRADE
        assert wide_quote.bid[k] <= iv.lo < iv.hi <= wide_quote.ask[k]
        for p in np.linspace(iv.lo, iv.hi, 7)[1:-1]:
            c = classify(two_asset_g, post, wide_quote.collapse(k, float(p)))
            assert c.signature == base.signature


def test_no_trade_state_value_is_g(two_asset_g, wide_quote):
    post = solve_static(two_asset_g, MarketState(3.0, [0.0, 4.0]), wide_quote).post_state
    sq = shadow_quote(two_asset_g, post, wide_quote)
    chk = verify_shadow(two_asset_g, post, wide_quote, sq)
    g0 = two_asset_g.value(post.as_vector())
    assert chk.phi_bidask == pytest.approx(g0, abs=1e-9)
    assert chk.phi_shadow == pytest.approx(g0, abs=1e-9)


def test_shadow_matches_bid_ask_value(two_asset_g, wide_quote):
    for s in (MarketState(3.0, [0.0, 4.0]), MarketState(0.0, [2.0, 0.5]), MarketState(2.0, [0.0, 0.0])):
        sq = shadow_quote(two_asset_g, s, wide_quote)
        assert np.all(sq.prices >= wide_quote.bid) and np.all(sq.prices <= wide_quote.ask)
        chk = verify_shadow(two_asset_g, s, wide_quote, sq)
        assert chk.abs_gap <= 1e-6 * (1 + abs(chk.phi_bidask))
        assert chk.post_match


def test_endpoint_resolution_option(two_asset_g, wide_quote):
    opts = ShadowOptions()
    assert opts.eps_s(0.2) == pytest.approx(max(0.2 * opts.eps_s_rel, opts.eps_s_abs))


def test_shadow_dict_fields(two_asset_g, wide_quote):
    sq = shadow_quote(two_asset_g, MarketState(3.0, [0.0, 4.0]), wide_quote)
    d = sq.to_dict()
    assert set(d) == {"prices", "intervals", "signature"}
    assert all(math.isfinite(p) for p in d["prices"])
