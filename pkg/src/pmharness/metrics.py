"""Bid-side mark-to-market valuation and the performance metric suite."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .ledger import Account, ClosedTrade, ExitType, Position
from .markets import Category, MarketSpec, Outcome, QuoteTop, Side, format_ts, parse_ts
from .units import notional, to_pct

WIN_RATE_MIN_COUNT = 5


@dataclass(frozen=True)
class CycleSnapshot:
    agent_id: str
    cycle_index: int
    as_of: datetime
    account_value: int
    cash: int
    unrealized_pnl: int
    realized_pnl_total: int
    prompt_tokens: int = 0
    completion_tokens: int = 0
    reasoning_tokens: int | None = 0
    cycle_duration: int = 0  # milliseconds
    trades_this_cycle: int = 0

    @property
    def total_pnl(self) -> int:
        return self.realized_pnl_total + self.unrealized_pnl

    def to_dict(self) -> dict:
        d = asdict(self)
        d["as_of"] = format_ts(self.as_of)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CycleSnapshot:
        d = dict(d)
        d["as_of"] = parse_ts(d["as_of"])
        return cls(**d)


@dataclass(frozen=True)
class Valuation:
    value: int
    marks: dict[str, int]
    stale: tuple[str, ...] = ()
    unquoted: tuple[str, ...] = ()


def mark_position(position: Position, quote: QuoteTop | None) -> int:
    """Liquidation value of a position at the bid of its side; 0 without a bid."""
    if quote is None:
        return 0
    return notional(position.qty, quote.bid(position.side))


def value_account(
    account: Account, quotes: Mapping[str, QuoteTop], now: datetime | None = None
) -> Valuation:
    """Cash plus bid-side marks, noting which marks came from stale or missing quotes."""
    marks: dict[str, int] = {}
    stale: list[str] = []
    unquoted: list[str] = []
    for market_id in sorted(account.positions):
        quote = quotes.get(market_id)
        if quote is None:
            unquoted.append(market_id)
        elif now is not None and quote.as_of is not None and quote.as_of < now:
            stale.append(market_id)
        marks[market_id] = mark_position(account.positions[market_id], quote)
    return Valuation(account.cash + sum(marks.values()), marks, tuple(stale), tuple(unquoted))


def account_value(account: Account, quotes: Mapping[str, QuoteTop]) -> int:
    return value_account(account, quotes).value


def return_pct(total_pnl: int | Decimal, starting_capital: int | Decimal) -> Decimal:
    if starting_capital <= 0:
        raise ValueError("starting_capital must be positive")
    return to_pct(Fraction(total_pnl) / Fraction(starting_capital))


def drawdown_ratio(series: Sequence[int | Decimal | Fraction]) -> Fraction:
    """Largest ``(peak - later) / peak`` over the series, as an exact fraction."""
    if len(series) == 0:
        raise ValueError("drawdown of an empty series is undefined")
    worst = Fraction(0)
    peak: Fraction | None = None
    for v in series:
        v = Fraction(v)
        if peak is None or v > peak:
            peak = v
        elif peak > 0:
            dd = (peak - v) / peak
            if dd > worst:
                worst = dd
    return worst


def max_drawdown(series: Sequence[int | Decimal | Fraction]) -> Decimal:
    """Max peak-to-trough decline as a percentage, 0.01 resolution."""
    return to_pct(drawdown_ratio(series))


@dataclass(frozen=True)
class WinRate:
    rate: Decimal | None
    wins: int
    count: int


def win_rate(
    trades: Iterable[ClosedTrade],
    exit_type: ExitType | None = None,
    min_count: int = WIN_RATE_MIN_COUNT,
) -> WinRate:
    """Share of closed trades with positive PnL; ``rate`` is None below ``min_count``."""
    matched = [t for t in trades if exit_type is None or t.exit_type is exit_type]
    wins = sum(1 for t in matched if t.realized_pnl > 0)
    if not matched or len(matched) < min_count:
        return WinRate(None, wins, len(matched))
    return WinRate(to_pct(Fraction(wins, len(matched))), wins, len(matched))


@dataclass(frozen=True)
class ExitStats:
    settlement_rate: Decimal | None
    early_exit_rate: Decimal | None
    n_settled: int
    n_netted: int
    avg_pnl: dict[str, Decimal]


def exit_pattern_stats(trades: Iterable[ClosedTrade]) -> ExitStats:
    trades = list(trades)
    by_type: dict[ExitType, list[int]] = {ExitType.SETTLEMENT: [], ExitType.NETTING: []}
    for t in trades:
        by_type[t.exit_type].append(t.realized_pnl)
    n = len(trades)
    settled = len(by_type[ExitType.SETTLEMENT])
    netted = len(by_type[ExitType.NETTING])
    avg = {
        et.value: Decimal(sum(p)) / len(p) for et, p in by_type.items() if p
    }
    if n == 0:
        return ExitStats(None, None, 0, 0, avg)
    return ExitStats(to_pct(Fraction(settled, n)), to_pct(Fraction(netted, n)), settled, netted, avg)


@dataclass(frozen=True)
class CategoryRow:
    category: Category
    n_trades: int
    n_settled: int
    settled_wins: int
    win_rate: Decimal | None
    total_pnl: int


def category_stats(
    trades: Iterable[ClosedTrade],
    markets: Mapping[str, MarketSpec | Category],
    min_count: int = WIN_RATE_MIN_COUNT,
) -> dict[Category, CategoryRow]:
    """Per-category settlement win rate and realized PnL, sorted by category name."""
    buckets: dict[Category, list[ClosedTrade]] = defaultdict(list)
    for t in trades:
        try:
            m = markets[t.market_id]
        except KeyError:
            raise ValueError(f"unknown market {t.market_id}") from None
        buckets[m.category if isinstance(m, MarketSpec) else Category(m)].append(t)
    table = {}
    for cat in sorted(buckets, key=lambda c: c.value):
        rows = buckets[cat]
        wr = win_rate(rows, ExitType.SETTLEMENT, min_count)
        table[cat] = CategoryRow(
            category=cat,
            n_trades=len(rows),
            n_settled=wr.count,
            settled_wins=wr.wins,
            win_rate=wr.rate,
            total_pnl=sum(t.realized_pnl for t in rows),
        )
    return table


def initial_prediction_accuracy(
    first_fills: Iterable[tuple[str, Side]], outcomes: Mapping[str, Outcome]
) -> WinRate:
    """Share of markets whose first bought side matched the resolved outcome.

    Only the first fill per market counts; re-entries and VOID or unresolved
    markets are ignored.
    """
    seen: set[str] = set()
    hits = total = 0
    for market_id, side in first_fills:
        if market_id in seen:
            continue
        seen.add(market_id)
        outcome = outcomes.get(market_id)
        if outcome is None or outcome is Outcome.VOID:
            continue
        total += 1
        hits += outcome.value == Side(side).value
    rate = to_pct(Fraction(hits, total)) if total else None
    return WinRate(rate, hits, total)


@dataclass(frozen=True)
class MetricsReport:
    agent_id: str
    final_value: int
    total_pnl: int
    return_pct: Decimal
    win_rate: Decimal | None
    early_exit_win_rate: Decimal | None
    settlement_win_rate: Decimal | None
    max_drawdown_pct: Decimal
    settlement_rate: Decimal | None
    early_exit_rate: Decimal | None
    n_closed: int
    n_settled: int
    per_category: dict[Category, CategoryRow] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None else str(x)

        return {
            "agent_id": self.agent_id,
            "final_value": self.final_value,
            "total_pnl": self.total_pnl,
            "return_pct": num(self.return_pct),
            "win_rate": num(self.win_rate),
            "early_exit_win_rate": num(self.early_exit_win_rate),
            "settlement_win_rate": num(self.settlement_win_rate),
            "max_drawdown_pct": num(self.max_drawdown_pct),
            "settlement_rate": num(self.settlement_rate),
            "early_exit_rate": num(self.early_exit_rate),
            "n_closed": self.n_closed,
            "n_settled": self.n_settled,
            "per_category": {
                c.value: {"n_trades": r.n_trades, "n_settled": r.n_settled,
                          "win_rate": num(r.win_rate), "total_pnl": r.total_pnl}
                for c, r in self.per_category.items()
            },
        }


def compute_report(
    agent_id: str,
    snapshots: Sequence[CycleSnapshot],
    trades: Sequence[ClosedTrade],
    markets: Mapping[str, MarketSpec | Category],
    starting_capital: int,
) -> MetricsReport:
    final_value = snapshots[-1].account_value if snapshots else starting_capital
    total_pnl = final_value - starting_capital
    series = [starting_capital] + [s.account_value for s in snapshots]
    exits = exit_pattern_stats(trades)
    return MetricsReport(
        agent_id=agent_id,
        final_value=final_value,
        total_pnl=total_pnl,
        return_pct=return_pct(total_pnl, starting_capital),
        win_rate=win_rate(trades).rate,
        early_exit_win_rate=win_rate(trades, ExitType.NETTING).rate,
        settlement_win_rate=win_rate(trades, ExitType.SETTLEMENT).rate,
        max_drawdown_pct=max_drawdown(series),
        settlement_rate=exits.settlement_rate,
        early_exit_rate=exits.early_exit_rate,
        n_closed=len(trades),
        n_settled=exits.n_settled,
        per_category=category_stats(trades, markets),
    )
