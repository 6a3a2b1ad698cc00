from __future__ import annotations

import random
from datetime import datetime, timezone
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_account_value, brute_drawdown
from pmharness.ledger import Account, ClosedTrade, ExitType, Position
from pmharness.markets import Category, Outcome, QuoteTop, Side, derive_complement, synthetic_universe
from pmharness.metrics import (
    CycleSnapshot,
    account_value,
    category_stats,
    compute_report,
    drawdown_ratio,
    exit_pattern_stats,
    initial_prediction_accuracy,
    mark_position,
    max_drawdown,
    return_pct,
    value_account,
    win_rate,
)
from pmharness.units import to_pct

ONE = 1_000_000
T0 = datetime(2026, 1, 12, tzinfo=timezone.utc)


def trade(pnl, exit_type=ExitType.SETTLEMENT, market_id="M"):
    return ClosedTrade(market_id, Side.YES, exit_type, 1_000, pnl, 500_000, 0, 0, T0, T0)


def test_mark_at_bid():
    pos = Position("M", Side.YES, 100_000, 500_000)
    assert mark_position(pos, derive_complement("M", 480_000, 520_000)) == 48 * ONE


def test_mark_without_quote_is_zero():
    assert mark_position(Position("M", Side.NO, 100_000, 500_000), None) == 0


def test_mark_no_side_uses_no_bid():
    pos = Position("M", Side.NO, 10_000, 500_000)
    assert mark_position(pos, derive_complement("M", 300_000, 400_000)) == 6 * ONE


def test_spread_costs_immediately():
    a = Account("a")
    a.apply_fill("M", Side.YES, 1_000, 500_000)
    q = derive_complement("M", 480_000, 500_000)
    assert account_value(a, {"M": q}) - a.starting_capital == -20_000


def test_account_value_examples():
    a = Account("a", starting_capital=5_000 * ONE)
    assert account_value(a, {}) == 5_000 * ONE
    a.positions["M"] = Position("M", Side.YES, 100_000, 0)
    assert account_value(a, {"M": derive_complement("M", 480_000, 520_000)}) == 5_048 * ONE


def test_value_records_stale_and_unquoted():
    a = Account("a")
    a.positions["M"] = Position("M", Side.YES, 1_000, 500_000)
    a.positions["N"] = Position("N", Side.YES, 1_000, 500_000)
    old = derive_complement("M", 480_000, 520_000, as_of=T0)
    v = value_account(a, {"M": old}, now=datetime(2026, 1, 13, tzinfo=timezone.utc))
    assert v.stale == ("M",) and v.unquoted == ("N",)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(list(Side)), st.integers(1, 10**7), st.integers(0, ONE),
                          st.integers(0, ONE), st.booleans()), max_size=12),
       st.integers(0, 10**12))
def test_account_value_matches_summation(rows, cash):
    a = Account("a", cash=cash)
    quotes = {}
    for i, (side, qty, x, y, quoted) in enumerate(rows):
        mid = f"M{i}"
        a.positions[mid] = Position(mid, side, qty, 500_000)
        if quoted:
            quotes[mid] = derive_complement(mid, min(x, y), max(x, y))
    assert account_value(a, quotes) == brute_account_value(cash, a.positions.values(), quotes)


@given(st.integers(0, ONE), st.integers(0, ONE), st.integers(0, ONE))
def test_value_depends_only_on_bid(bid, ask1, ask2):
    a = Account("a")
    a.positions["M"] = Position("M", Side.YES, 7_000, 500_000)
    q1 = QuoteTop("M", bid, max(bid, ask1), 0, ONE - bid, last_price=ask1)
    q2 = QuoteTop("M", bid, max(bid, ask2), 0, ONE - bid, last_price=ask2)
    assert account_value(a, {"M": q1}) == account_value(a, {"M": q2})


@pytest.mark.parametrize(
    "pnl, expected",
    [(-1_601 * ONE, Decimal("-16.01")), (-3_075 * ONE, Decimal("-30.75")), (0, Decimal("0.00"))],
)
def test_return_pct(pnl, expected):
    assert return_pct(pnl, 10_000 * ONE) == expected


def test_return_pct_requires_capital():
    with pytest.raises(ValueError):
        return_pct(1, 0)


def test_drawdown_examples():
    assert max_drawdown([10000, 10500, 9450, 9800, 9000]) == Decimal("14.29")
    assert max_drawdown([1, 2, 3, 4]) == Decimal("0.00")
    assert max_drawdown([Decimal("10195.81"), Decimal("9278.80")]) == Decimal("8.99")
    with pytest.raises(ValueError):
        max_drawdown([])


def test_drawdown_hand_value():
    assert drawdown_ratio([10000, 10500, 9450, 9800, 9000]) == Fraction(1500, 10500)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 10**6), min_size=1, max_size=60))
def test_drawdown_matches_brute_force(series):
    assert drawdown_ratio(series) == brute_drawdown(series)
    assert max_drawdown(series) == to_pct(brute_drawdown(series))


def test_win_rate_examples():
    assert win_rate([]).rate is None
    trades = [trade(p) for p in (1, -1, -1, 2, 3, -4)]
    w = win_rate(trades)
    assert (w.rate, w.wins, w.count) == (Decimal("50.00"), 3, 6)


def test_win_rate_threshold():
    assert win_rate([trade(1)] * 4).rate is None
    assert win_rate([trade(1)] * 5).rate == Decimal("100.00")


def test_win_rate_filter():
    trades = [trade(1, ExitType.NETTING)] * 5 + [trade(-1)] * 5
    assert win_rate(trades, ExitType.NETTING).rate == Decimal("100.00")
    assert win_rate(trades, ExitType.SETTLEMENT).rate == Decimal("0.00")
    assert win_rate(trades).rate == Decimal("50.00")


def test_exit_pattern_examples():
    s = exit_pattern_stats([trade(1)] * 3 + [trade(2, ExitType.NETTING)] * 7)
    assert (s.settlement_rate, s.early_exit_rate) == (Decimal("30.00"), Decimal("70.00"))
    assert s.avg_pnl == {"Settlement": Decimal(1), "Netting": Decimal(2)}
    s = exit_pattern_stats([trade(1)] * 4)
    assert (s.settlement_rate, s.early_exit_rate) == (Decimal("100.00"), Decimal("0.00"))
    assert exit_pattern_stats([]).settlement_rate is None


@given(st.lists(st.sampled_from(list(ExitType)), min_size=1, max_size=200))
def test_exit_rates_sum_to_100(types):
    s = exit_pattern_stats([trade(0, t) for t in types])
    assert s.n_settled == sum(t is ExitType.SETTLEMENT for t in types)
    assert s.n_settled + s.n_netted == len(types)
    # Each rate is rounded independently, so the sum can be off by a hundredth.
    assert abs(s.settlement_rate + s.early_exit_rate - 100) <= Decimal("0.01")
    assert Fraction(s.n_settled, len(types)) + Fraction(s.n_netted, len(types)) == 1


def test_category_examples():
    assert category_stats([], {}) == {}
    table = category_stats([trade(1)], {"M": Category.WEATHER})
    assert list(table) == [Category.WEATHER]
    with pytest.raises(ValueError):
        category_stats([trade(1, market_id="X")], {})


def test_category_cross_footing():
    rng = random.Random(4)
    u = synthetic_universe(4, 40, 10)
    trades = [trade(rng.randint(-5, 5) * ONE, rng.choice(list(ExitType)), rng.choice(u.markets).market_id)
              for _ in range(300)]
    table = category_stats(trades, u.by_id)
    assert sum(r.n_trades for r in table.values()) == len(trades)
    assert sum(r.total_pnl for r in table.values()) == sum(t.realized_pnl for t in trades)
    assert sum(r.n_settled for r in table.values()) == sum(t.exit_type is ExitType.SETTLEMENT for t in trades)
    assert sum(r.settled_wins for r in table.values()) == sum(
        t.exit_type is ExitType.SETTLEMENT and t.realized_pnl > 0 for t in trades)


def test_initial_prediction_accuracy():
    fills = [("A", Side.YES), ("A", Side.NO), ("B", Side.NO), ("C", Side.YES), ("D", Side.YES)]
    outcomes = {"A": Outcome.YES, "B": Outcome.YES, "C": Outcome.VOID}
    w = initial_prediction_accuracy(fills, outcomes)
    assert (w.wins, w.count, w.rate) == (1, 2, Decimal("50.00"))


def test_report_identity():
    snaps = [CycleSnapshot("a", k, T0, v, v, 0, v - 100) for k, v in enumerate((100, 120, 90, 110))]
    r = compute_report("a", snaps, [trade(5)], {"M": Category.SPORTS}, 100)
    assert r.final_value == 110 and r.total_pnl == 10
    assert r.return_pct == Decimal("10.00")
    assert r.max_drawdown_pct == Decimal("25.00")
    assert snaps[-1].total_pnl == r.total_pnl
    assert CycleSnapshot.from_dict(snaps[1].to_dict()) == snaps[1]
