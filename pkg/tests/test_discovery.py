from __future__ import annotations

from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_discover
from pmharness.discovery import (
    DiscoveryError,
    DiscoveryQuery,
    QualityFilter,
    QueryKind,
    discover,
    liquidity,
    price_move,
)
from pmharness.knowledge import KnowledgeStore, NoteKind, NoteLimitError
from pmharness.markets import Category, UniverseConfig, step_quotes, synthetic_universe


def walk(universe, cycles):
    quotes = dict(universe.initial_quotes)
    history = {mid: [q] for mid, q in quotes.items()}
    for k in range(1, cycles + 1):
        new = step_quotes(universe, quotes, k, universe.seed)
        for mid, q in new.items():
            if q is not quotes[mid]:
                history[mid].append(q)
        quotes = new
    return history, universe.config.cycle_time(cycles)


@pytest.fixture(scope="module")
def market_data():
    u = synthetic_universe(11, 200, 80, UniverseConfig(price_noise=0.03, cycle_minutes=20))
    history, now = walk(u, 10)
    return u, history, now


def test_volume_top_degenerate(market_data):
    u, history, now = market_data
    got = discover(u.markets, history, DiscoveryQuery(QueryKind.VOLUME_TOP, limit=3), QualityFilter(), now)
    live = [m for m in u.markets if m.expiry > now]
    expected = sorted(live, key=lambda m: (-history[m.market_id][-1].volume, m.market_id))[:3]
    assert got == [m.market_id for m in expected]


def test_impossible_volume_is_empty(market_data):
    u, history, now = market_data
    q = DiscoveryQuery(QueryKind.VOLUME_TOP)
    assert discover(u.markets, history, q, QualityFilter(min_volume=10**15), now) == []


def _queries():
    return [
        DiscoveryQuery(QueryKind.KEYWORD, keyword="Will the high in Denver exceed", limit=15),
        DiscoveryQuery(QueryKind.KEYWORD, keyword="bitcoin price", limit=200),
        DiscoveryQuery(QueryKind.TAG, tag=Category.WEATHER, limit=10),
        DiscoveryQuery(QueryKind.VOLUME_TOP, limit=25),
        DiscoveryQuery(QueryKind.VOLATILITY_TOP, limit=25),
        DiscoveryQuery(QueryKind.TRENDING, window=timedelta(hours=1), limit=25),
        DiscoveryQuery(QueryKind.EXPIRING_WITHIN, window=timedelta(hours=12), limit=50),
    ]


@pytest.mark.parametrize("query", _queries(), ids=lambda q: q.kind.value)
@pytest.mark.parametrize("quality", [QualityFilter(), QualityFilter(2_000, 50_000, 10_000)])
def test_matches_linear_scan(market_data, query, quality):
    u, history, now = market_data
    got = discover(u.markets, history, query, quality, now)
    assert got == brute_discover(u.markets, history, query, quality, now)
    assert len(got) <= query.limit
    for mid in got:
        last = history[mid][-1]
        assert liquidity(last) >= quality.min_liquidity
        assert last.volume >= quality.min_volume
        assert price_move(history[mid], timedelta(hours=2) if query.kind is not QueryKind.TRENDING
                          else query.window) >= quality.min_price_move


def test_deterministic(market_data):
    u, history, now = market_data
    for q in _queries():
        assert discover(u.markets, history, q, None, now) == discover(u.markets, history, q, None, now)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=QueryKind.KEYWORD),
        dict(kind=QueryKind.KEYWORD, keyword="!!!"),
        dict(kind=QueryKind.TAG),
        dict(kind=QueryKind.VOLUME_TOP, tag=Category.SPORTS),
        dict(kind=QueryKind.TRENDING),
        dict(kind=QueryKind.EXPIRING_WITHIN, window=timedelta(0)),
        dict(kind=QueryKind.VOLUME_TOP, limit=0),
        dict(kind="Nope"),
    ],
)
def test_malformed_queries(kwargs):
    with pytest.raises(DiscoveryError):
        DiscoveryQuery(**kwargs)


def test_quality_validation():
    with pytest.raises(DiscoveryError):
        QualityFilter(min_volume=-1)


# -- knowledge store -----------------------------------------------------------


def test_put_then_search():
    ks = KnowledgeStore()
    ks.put_note("a", "weather-edge", "NWS forecasts run warm")
    assert [n.key for n in ks.search_notes("a", "weather-edge")] == ["weather-edge"]
    assert [n.key for n in ks.search_notes("a", "WARM")] == ["weather-edge"]


def test_size_limit_boundary():
    ks = KnowledgeStore(max_note_bytes=16)
    ks.put_note("a", "k", "x" * 16)
    with pytest.raises(NoteLimitError, match="16 bytes"):
        ks.put_note("a", "k", "x" * 17)


def test_note_count_limit():
    ks = KnowledgeStore(max_notes=2)
    ks.put_note("a", "1", "")
    ks.put_note("a", "2", "")
    ks.put_note("a", "2", "overwrite is fine")
    with pytest.raises(NoteLimitError):
        ks.put_note("a", "3", "")


def test_agents_isolated():
    ks = KnowledgeStore()
    ks.put_note("a", "k", "alpha")
    ks.put_note("b", "k", "beta")
    assert ks.get("a", "k").body == "alpha" and ks.get("b", "k").body == "beta"


def test_recency_order_and_kinds():
    ks = KnowledgeStore()
    ks.put_belief("a", "fed", "rates stay")
    ks.put_plan("a", "exit", "sell fed before CPI")
    ks.put_note("a", "misc", "nothing")
    ks.edit_note("a", "fed", "rates stay, 80%")
    assert [n.key for n in ks.search_notes("a", "")] == ["fed", "misc", "exit"]
    assert ks.get("a", "fed").kind is NoteKind.BELIEF
    assert [n.key for n in ks.search_notes("a", "", NoteKind.PLAN)] == ["exit"]
    with pytest.raises(KeyError):
        ks.edit_note("a", "missing", "x")


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.text(max_size=8), st.text(max_size=30)),
                max_size=40))
def test_namespaces_never_leak(ops):
    ks = KnowledgeStore()
    mine = {}
    for agent, key, body in ops:
        ks.put_note(agent, key, body)
        mine[(agent, key)] = body
    for agent in "abc":
        keys = {n.key for n in ks.notes(agent)}
        assert keys == {k for (a, k) in mine if a == agent}
        for n in ks.notes(agent):
            assert mine[(agent, n.key)] == n.body
