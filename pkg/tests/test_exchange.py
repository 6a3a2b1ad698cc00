from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmharness.exchange import (
    ZERO_FEES,
    ExecStatus,
    ExecutionMode,
    FeeSchedule,
    Order,
    SimulatedVenue,
    VenueConfig,
    compute_fee,
    fee_per_contract,
)
from pmharness.markets import Outcome, SettlementOutcome, Side, derive_complement, synthetic_universe

T0 = datetime(2026, 1, 12, 14, tzinfo=timezone.utc)


def test_zero_fee():
    assert compute_fee(ZERO_FEES, 500_000, 123_000) == 0


def test_quadratic_fee_one_share():
    # 0.07 * 0.5 * 0.5 = 0.0175 dollars, rounded up to the next cent.
    assert compute_fee(FeeSchedule(), 500_000, 1_000) == 20_000
    assert fee_per_contract(FeeSchedule(), 500_000) == 17_500


@pytest.mark.parametrize("price", [0, 1_000_000])
def test_fee_vanishes_at_endpoints(price):
    assert compute_fee(FeeSchedule(), price, 50_000) == 0


def test_fee_hand_values():
    # 100 shares at 0.30: 0.07 * 0.3 * 0.7 * 100 = 1.47 dollars exactly.
    assert compute_fee(FeeSchedule(), 300_000, 100_000) == 1_470_000
    # 3 shares at 0.41: 0.07 * 0.41 * 0.59 * 3 = 0.050799 -> 0.06.
    assert compute_fee(FeeSchedule(), 410_000, 3_000) == 60_000


@given(st.integers(0, 1_000_000), st.integers(1, 10**7), st.integers(1, 10**7))
def test_fee_monotone_in_qty(price, q1, q2):
    lo, hi = sorted((q1, q2))
    assert compute_fee(FeeSchedule(), price, lo) <= compute_fee(FeeSchedule(), price, hi)


def test_fee_validation():
    with pytest.raises(ValueError):
        compute_fee(FeeSchedule(), -1, 1000)
    with pytest.raises(ValueError):
        compute_fee(FeeSchedule(), 10, 0)
    with pytest.raises(ValueError):
        FeeSchedule(rate=-0.1)


@pytest.fixture
def market():
    u = synthetic_universe(1, 1, 5)
    return u.markets[0]


def venue(market, mode):
    v = SimulatedVenue(VenueConfig(execution_mode=mode, fee_schedule=ZERO_FEES), {market.market_id: market})
    v.begin_cycle(T0)
    return v


def quote(market, ask_size):
    return derive_complement(market.market_id, 480_000, 500_000, yes_bid_size=ask_size, yes_ask_size=ask_size)


def order(market, qty, side=Side.YES, oid="o1", max_price=1_000_000):
    return Order(oid, "a", market.market_id, side, qty, max_price)


def test_paper_fills_regardless_of_size(market):
    r = venue(market, ExecutionMode.PAPER).execute_market_order(order(market, 50_000), quote(market, 1_000))
    assert (r.status, r.filled_qty, r.fill_price) == (ExecStatus.FILLED, 50_000, 500_000)


@given(st.integers(0, 10**6))
def test_paper_fill_independent_of_displayed_size(size):
    m = synthetic_universe(1, 1, 5).markets[0]
    r = venue(m, ExecutionMode.PAPER).execute_market_order(order(m, 7_000), quote(m, size))
    assert r.filled_qty == 7_000


def test_live_partial_fill(market):
    r = venue(market, ExecutionMode.LIVE_FIDELITY).execute_market_order(order(market, 50_000), quote(market, 20_000))
    assert (r.status, r.filled_qty) == (ExecStatus.PARTIAL_FILL, 20_000)


def test_live_empty_book(market):
    r = venue(market, ExecutionMode.LIVE_FIDELITY).execute_market_order(order(market, 50_000), quote(market, 0))
    assert (r.status, r.filled_qty) == (ExecStatus.REJECTED_NO_COUNTERPARTY, 0)


def test_live_size_is_consumed_within_a_cycle(market):
    v = venue(market, ExecutionMode.LIVE_FIDELITY)
    q = quote(market, 5_000)
    assert v.execute_market_order(order(market, 3_000, oid="a"), q).filled_qty == 3_000
    assert v.execute_market_order(order(market, 3_000, oid="b"), q).filled_qty == 2_000
    assert v.execute_market_order(order(market, 3_000, oid="c"), q).status is ExecStatus.REJECTED_NO_COUNTERPARTY
    v.begin_cycle(T0 + timedelta(minutes=30))
    assert v.execute_market_order(order(market, 3_000, oid="d"), q).filled_qty == 3_000


def test_no_side_uses_bid_size(market):
    v = venue(market, ExecutionMode.LIVE_FIDELITY)
    q = derive_complement(market.market_id, 480_000, 500_000, yes_bid_size=4_000, yes_ask_size=9_000)
    r = v.execute_market_order(order(market, 6_000, side=Side.NO), q)
    assert (r.filled_qty, r.fill_price) == (4_000, 520_000)


@given(st.integers(1, 10**6), st.integers(0, 10**6))
def test_live_never_exceeds_displayed(qty, size):
    m = synthetic_universe(1, 1, 5).markets[0]
    r = venue(m, ExecutionMode.LIVE_FIDELITY).execute_market_order(order(m, qty), quote(m, size))
    assert r.filled_qty <= size
    assert r.filled_qty == min(qty, size)


def test_expired_market_rejected(market):
    v = SimulatedVenue(VenueConfig(), {market.market_id: market})
    v.begin_cycle(market.expiry)
    r = v.execute_market_order(order(market, 1_000), quote(market, 1_000))
    assert (r.status, r.detail) == (ExecStatus.REJECTED_RISK, "MarketClosed")


def test_max_price_below_ask_has_no_counterparty(market):
    r = venue(market, ExecutionMode.PAPER).execute_market_order(order(market, 1_000, max_price=490_000),
                                                                quote(market, 1_000))
    assert r.status is ExecStatus.REJECTED_NO_COUNTERPARTY and r.filled_qty == 0


def test_fee_charged_on_filled_qty(market):
    v = SimulatedVenue(VenueConfig(execution_mode=ExecutionMode.LIVE_FIDELITY), {market.market_id: market})
    v.begin_cycle(T0)
    r = v.execute_market_order(order(market, 100_000), quote(market, 1_000))
    assert r.fee == compute_fee(FeeSchedule(), 500_000, 1_000)


def _outcomes():
    return [SettlementOutcome(mid, Outcome.YES, T0 + timedelta(hours=1)) for mid in ("C", "A", "B")]


def test_settle_due_before_expiry():
    v = SimulatedVenue(VenueConfig(), {})
    assert v.settle_due(T0, _outcomes()) == []


def test_settle_due_once_in_id_order():
    v = SimulatedVenue(VenueConfig(), {})
    due = v.settle_due(T0 + timedelta(hours=1), _outcomes())
    assert [o.market_id for o in due] == ["A", "B", "C"]
    assert v.settle_due(T0 + timedelta(hours=1), _outcomes()) == []
    assert v.settle_due(T0 + timedelta(hours=5), _outcomes()) == []


def test_settle_due_is_deterministic():
    runs = [[o.market_id for o in SimulatedVenue(VenueConfig(), {}).settle_due(T0 + timedelta(days=1), _outcomes())]
            for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_settle_due_requires_monotone_time():
    v = SimulatedVenue(VenueConfig(), {})
    v.settle_due(T0 + timedelta(hours=2), [])
    with pytest.raises(ValueError):
        v.settle_due(T0, [])
