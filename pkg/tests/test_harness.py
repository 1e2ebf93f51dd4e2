from __future__ import annotations

import json

import numpy as np
import pytest

from shadowprice.harness import (
    CampaignOptions,
    PropertyReport,
    _engineered_seller,
    curated_suite,
    determinism_check,
    dumps,
    random_instance,
    rng_for,
    run_continuity_campaign,
    run_dynamic_campaign,
    run_shadow_campaign,
    run_static_oracle_campaign,
    run_zone_campaign,
    write_suite,
)
from shadowprice.market import build_lattice
from shadowprice.zones import classify


@pytest.mark.parametrize("runner, kw", [
    (run_static_oracle_campaign, {"n_plans": 0, "n_spread": 0}),
    (run_zone_campaign, {}),
    (run_continuity_campaign, {}),
    (run_shadow_campaign, {"n_intervals": 0}),
])
def test_empty_campaign_passes(runner, kw):
    rep = runner(n=0, **kw)
    assert rep.passed
    assert all(p.instances == 0 for p in rep.properties)


def test_empty_suite_passes():
    assert run_dynamic_campaign([]).passed


def test_rng_is_per_index():
    a = rng_for(1, 2, 3).uniform(size=4)
    b = rng_for(1, 2, 3).uniform(size=4)
    c = rng_for(1, 2, 4).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_random_instances_are_valid():
    for i in range(20):
        inst = random_instance(rng_for(0, 0, i))
        assert np.all(inst.quote.bid > 0) and np.all(inst.quote.ask >= inst.quote.bid)
        assert inst.scenarios.shape == (4, 2)
        assert inst.probs.sum() == pytest.approx(1.0)
        assert np.isfinite(inst.g.value(inst.state.as_vector()))


def test_report_bookkeeping():
    rep = PropertyReport("p", max_excluded_fraction=0.05)
    for _ in range(19):
        rep.record(True, 0.1)
    rep.exclude("thin")
    assert rep.passed and rep.worst == 0.1
    rep.exclude("thin")
    assert not rep.passed
    rep2 = PropertyReport("q")
    rep2.record(False, 2.0, "bad")
    assert not rep2.passed and rep2.notes == ["bad"]


def test_dumps_round_trips_doubles():
    x = 0.1 + 0.2
    text = dumps({"b": x, "a": [float("inf")]})
    assert json.loads(text)["b"] == x
    assert text.index('"a"') < text.index('"b"')


def test_small_campaigns_are_deterministic():
    opts = CampaignOptions()
    ok, diff = determinism_check(lambda: run_static_oracle_campaign(n=5, n_plans=10, n_spread=5, opts=opts))
    assert ok, diff
    ok, diff = determinism_check(lambda: run_zone_campaign(n=8))
    assert ok, diff


def test_threads_do_not_change_reports():
    one = run_zone_campaign(n=6, opts=CampaignOptions(threads=1))
    two = run_zone_campaign(n=6, opts=CampaignOptions(threads=2))
    assert one.to_json() == two.to_json()


def test_engineered_seller_sells():
    inst = _engineered_seller(2)
    assert classify(inst.g, inst.state, inst.quote).signature[0] == -1


def test_zone_campaign_counts_engineered_seller():
    rep = run_zone_campaign(n=3)
    assert rep.get("zones.sell_collapse").counts.get("engineered_seller") == 1


def test_shadow_campaign_small():
    rep = run_shadow_campaign(n=4)
    assert rep.passed
    cases = rep.get("shadow.equality").counts
    assert sum(cases.values()) == 4 * 2


def test_curated_suite_is_nondegenerate(tmp_path):
    paths = write_suite(tmp_path)
    assert [p.stem for p in paths] == list(curated_suite())
    for cfg in curated_suite().values():
        lat = build_lattice(cfg)
        assert lat.warnings == ()
        assert lat.initial is not None


def test_dynamic_campaign_on_one_lattice(lattice_dir):
    rep = run_dynamic_campaign([lattice_dir / "binomial_d1_T1.json"], pairs=20)
    assert rep.passed
    assert rep.get("dynamic.concavity").instances == 20


def test_dynamic_campaign_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_dynamic_campaign([tmp_path / "nope.json"])
