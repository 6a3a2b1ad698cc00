from __future__ import annotations

import math
from dataclasses import replace
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmharness.markets import (
    CURATED_SERIES,
    Category,
    MarketSpec,
    Outcome,
    QuoteTop,
    UniverseConfig,
    derive_complement,
    load_universe,
    save_universe,
    step_quotes,
    synthetic_universe,
    universe_records,
)

ONE = 1_000_000


@pytest.mark.parametrize(
    "bid, ask, no_bid, no_ask",
    [(480_000, 520_000, 480_000, 520_000), (0, ONE, 0, ONE), (400_000, 450_000, 550_000, 600_000)],
)
def test_derive_complement_examples(bid, ask, no_bid, no_ask):
    q = derive_complement("M", bid, ask)
    assert (q.yes_bid, q.yes_ask, q.no_bid, q.no_ask) == (bid, ask, no_bid, no_ask)


def test_derive_complement_identity_by_arithmetic():
    q = derive_complement("M", 400_000, 450_000)
    assert q.no_bid + q.yes_ask == ONE
    assert q.no_ask + q.yes_bid == ONE


def test_derive_complement_rejects_crossed_book():
    with pytest.raises(ValueError):
        derive_complement("M", 600_000, 500_000)
    with pytest.raises(ValueError):
        derive_complement("M", -1, 500_000)


@given(st.integers(0, ONE), st.integers(0, ONE))
def test_derive_complement_property(a, b):
    bid, ask = min(a, b), max(a, b)
    q = derive_complement("M", bid, ask)
    assert q.no_bid == ONE - ask and q.no_ask == ONE - bid
    assert 0 <= q.no_bid <= q.no_ask <= ONE


def test_quote_rejects_out_of_range():
    with pytest.raises(ValueError):
        QuoteTop("M", 0, ONE + 1, 0, ONE)


def test_market_spec_invariants(small_universe):
    m = small_universe.markets[0]
    with pytest.raises(ValueError):
        replace(m, expiry=m.listed_at)
    with pytest.raises(ValueError):
        replace(m, tick=7)
    with pytest.raises(ValueError):
        replace(m, category="Gardening")


def test_universe_is_deterministic():
    a = list(universe_records(synthetic_universe(7, 20, 100)))
    b = list(universe_records(synthetic_universe(7, 20, 100)))
    assert a == b


def test_universe_seed_sensitivity():
    a = synthetic_universe(7, 20, 100)
    b = synthetic_universe(8, 20, 100)
    assert [o.outcome for o in a.outcomes.values()] != [o.outcome for o in b.outcomes.values()]


def test_universe_validation():
    with pytest.raises(ValueError):
        synthetic_universe(1, 0, 10)
    with pytest.raises(ValueError):
        synthetic_universe(1, 5, 0)


def test_universe_shape(small_universe):
    cfg = small_universe.config
    for m in small_universe.markets:
        assert m.series_id in CURATED_SERIES[m.category]
        assert cfg.start < m.expiry <= cfg.cycle_time(small_universe.horizon)
        assert 0.05 <= m.true_prob <= 0.95
        o = small_universe.outcomes[m.market_id]
        assert o.settled_at >= m.expiry


def test_curated_series_count():
    assert sum(len(v) for v in CURATED_SERIES.values()) == 29
    assert set(CURATED_SERIES) == set(Category)


def test_yes_fraction_matches_binomial():
    u = synthetic_universe(123, 10_000, 50)
    n = len(u.markets)
    mean_p = sum(m.true_prob for m in u.markets) / n
    yes = sum(o.outcome is Outcome.YES for o in u.outcomes.values())
    # Outcomes are independent Bernoulli(p_i); variance is the sum of p_i(1-p_i).
    sigma = math.sqrt(sum(m.true_prob * (1 - m.true_prob) for m in u.markets))
    assert abs(yes - mean_p * n) <= 3 * sigma


def test_void_outcomes_when_configured():
    u = synthetic_universe(3, 200, 10, UniverseConfig(void_prob=1.0))
    assert all(o.outcome is Outcome.VOID for o in u.outcomes.values())


def test_quotes_freeze_after_expiry(small_universe):
    u = small_universe
    quotes = dict(u.initial_quotes)
    for k in range(1, u.horizon + 3):
        new = step_quotes(u, quotes, k, u.seed)
        now = u.config.cycle_time(k)
        for m in u.markets:
            if now >= m.expiry:
                assert new[m.market_id] is quotes[m.market_id]
        quotes = new


def test_step_quotes_is_pure(small_universe):
    u = small_universe
    a = step_quotes(u, u.initial_quotes, 1, 5)
    b = step_quotes(u, u.initial_quotes, 1, 5)
    assert a == b
    assert step_quotes(u, u.initial_quotes, 1, 6) != a


def test_step_quotes_rejects_negative_cycle(small_universe):
    with pytest.raises(ValueError):
        step_quotes(small_universe, small_universe.initial_quotes, -1, 0)


def test_zero_noise_converges_monotonically():
    cfg = UniverseConfig(price_noise=0.0, initial_noise=0.3, reversion=0.2, tick=1)
    u = synthetic_universe(5, 30, 200, cfg)
    quotes = dict(u.initial_quotes)
    gaps = {m.market_id: [abs(quotes[m.market_id].mid2 / 2 - m.true_prob * ONE)] for m in u.markets}
    for k in range(1, 60):
        quotes = step_quotes(u, quotes, k, u.seed)
        for m in u.markets:
            if cfg.cycle_time(k) < m.expiry:
                gaps[m.market_id].append(abs(quotes[m.market_id].mid2 / 2 - m.true_prob * ONE))
    for m in u.markets:
        g = gaps[m.market_id]
        assert all(later <= earlier + 0.5 for earlier, later in zip(g, g[1:])), m.market_id


def test_zero_noise_matches_hand_iteration():
    # gap_{k+1} = gap_k - round(r * gap_k) with a one-micro-dollar tick.
    cfg = UniverseConfig(price_noise=0.0, initial_noise=0.0, reversion=0.25, tick=1, prob_low=0.3,
                         prob_high=0.3, half_spread_ticks=0)
    u = synthetic_universe(1, 1, 100, cfg)
    m = u.markets[0]
    target = m.true_prob * ONE
    start_mid = 100_000
    quotes = {m.market_id: derive_complement(m.market_id, start_mid, start_mid, as_of=cfg.start)}
    mid = start_mid
    for k in range(1, 6):
        quotes = step_quotes(u, quotes, k, 0)
        mid = mid + round(0.25 * (target - mid))
        assert quotes[m.market_id].yes_bid == mid


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.sampled_from([1, 1000, 10_000, 50_000]))
def test_quotes_stay_valid(seed, half_spread, tick):
    cfg = UniverseConfig(half_spread_ticks=half_spread, tick=tick, price_noise=0.2)
    u = synthetic_universe(seed, 5, 20, cfg)
    quotes = dict(u.initial_quotes)
    for k in range(1, 21):
        quotes = step_quotes(u, quotes, k, seed)
        for q in quotes.values():
            assert 0 <= q.yes_bid <= q.yes_ask <= ONE
            assert q.no_bid == ONE - q.yes_ask and q.no_ask == ONE - q.yes_bid
            assert tick <= q.yes_bid and q.yes_ask <= ONE - tick


def test_universe_file_round_trip(tmp_path, small_universe):
    path = tmp_path / "u.jsonl"
    save_universe(small_universe, path)
    loaded = load_universe(path)
    assert list(universe_records(loaded)) == list(universe_records(small_universe))
    assert path.read_text().splitlines()[0].startswith('{"config"')


def test_universe_file_errors(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("")
    with pytest.raises(ValueError):
        load_universe(p)
    p.write_text('{"kind": "universe", "version": 99}\n')
    with pytest.raises(ValueError, match="version"):
        load_universe(p)


def test_public_dict_hides_probability(small_universe):
    m: MarketSpec = small_universe.markets[0]
    assert "true_prob" not in m.public_dict()
    assert m.to_dict()["true_prob"] == m.true_prob
    assert MarketSpec.from_dict(m.to_dict()) == m


def test_cycle_time():
    cfg = UniverseConfig(cycle_minutes=20)
    assert cfg.cycle_time(3) - cfg.start == timedelta(minutes=60)
