"""Leaderboard, category and exit-pattern tables built from a replayed log."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable

from .eventlog import EventRecord
from .ledger import ExitType
from .metrics import MetricsReport, exit_pattern_stats, win_rate
from .replay import ReplayResult, replay
from .units import ONE_DOLLAR

WIN_RATE_FILTERS = {
    "early_exit": (ExitType.NETTING, "Win Rate (Early Exit)"),
    "settlement": (ExitType.SETTLEMENT, "Win Rate (Settlement)"),
    "all": (None, "Win Rate"),
}


def _money(micro: int) -> str:
    return f"{Decimal(micro) / ONE_DOLLAR:.2f}"


def _pct(value: Decimal | None) -> str:
    return "N/A" if value is None else f"{value}%"


@dataclass(frozen=True)
class LeaderboardRow:
    rank: int
    agent_id: str
    final_value: int
    total_pnl: int
    return_pct: Decimal
    win_rate: Decimal | None
    max_drawdown_pct: Decimal


@dataclass
class ReportBundle:
    leaderboard: list[LeaderboardRow]
    reports: dict[str, MetricsReport]
    win_rate_label: str
    avg_pnl: dict[str, dict[str, Decimal]] = field(default_factory=dict)

    def leaderboard_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Rank", "Model", "Final Value", "Total PnL", "Total Ret.", self.win_rate_label, "Max DD"])
        for r in self.leaderboard:
            w.writerow([r.rank, r.agent_id, _money(r.final_value), _money(r.total_pnl),
                        _pct(r.return_pct), _pct(r.win_rate), _pct(r.max_drawdown_pct)])
        return buf.getvalue()

    def category_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Model", "Category", "Trades", "Settled", "Settlement Win Rate", "Realized PnL"])
        for agent_id in sorted(self.reports):
            for cat, row in self.reports[agent_id].per_category.items():
                w.writerow([agent_id, cat.value, row.n_trades, row.n_settled, _pct(row.win_rate),
                            _money(row.total_pnl)])
        return buf.getvalue()

    def exit_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Model", "Closed", "Settled", "Settlement Rate", "Early Exit Rate",
                    "Settlement Win Rate", "Early Exit Win Rate", "Avg PnL (Settlement)",
                    "Avg PnL (Early Exit)"])
        for agent_id in sorted(self.reports):
            r = self.reports[agent_id]
            w.writerow([agent_id, r.n_closed, r.n_settled, _pct(r.settlement_rate), _pct(r.early_exit_rate),
                        _pct(r.settlement_win_rate), _pct(r.early_exit_win_rate),
                        self._avg(agent_id, ExitType.SETTLEMENT), self._avg(agent_id, ExitType.NETTING)])
        return buf.getvalue()

    def _avg(self, agent_id: str, exit_type: ExitType) -> str:
        avg = self.avg_pnl.get(agent_id, {}).get(exit_type.value)
        return "N/A" if avg is None else f"{avg / ONE_DOLLAR:.2f}"

    def to_dict(self) -> dict:
        return {
            "win_rate_column": self.win_rate_label,
            "leaderboard": [
                {"rank": r.rank, "agent_id": r.agent_id, "final_value": r.final_value,
                 "total_pnl": r.total_pnl, "return_pct": str(r.return_pct),
                 "win_rate": None if r.win_rate is None else str(r.win_rate),
                 "max_drawdown_pct": str(r.max_drawdown_pct)}
                for r in self.leaderboard
            ],
            "agents": {a: rep.to_dict() for a, rep in sorted(self.reports.items())},
        }


def build_bundle(result: ReplayResult, win_rate_filter: str = "early_exit") -> ReportBundle:
    """Rank agents by final account value (ties by agent id)."""
    try:
        exit_type, label = WIN_RATE_FILTERS[win_rate_filter]
    except KeyError:
        raise ValueError(f"win_rate_filter must be one of {sorted(WIN_RATE_FILTERS)}") from None
    ordered = sorted(result.reports.values(), key=lambda r: (-r.final_value, r.agent_id))
    rows = [
        LeaderboardRow(i, r.agent_id, r.final_value, r.total_pnl, r.return_pct,
                       win_rate(result.trades[r.agent_id], exit_type).rate, r.max_drawdown_pct)
        for i, r in enumerate(ordered, start=1)
    ]
    avg = {a: exit_pattern_stats(t).avg_pnl for a, t in result.trades.items()}
    return ReportBundle(rows, dict(result.reports), label, avg)


def report_from_log(source: str | Path | Iterable[EventRecord], win_rate_filter: str = "early_exit") -> ReportBundle:
    return build_bundle(replay(source), win_rate_filter)

