"""Rebuild a run's snapshots, trades and metrics from its event log alone."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .eventlog import EventKind, EventRecord, read_log
from .ledger import ClosedTrade
from .markets import Category, QuoteTop, Side, parse_ts
from .metrics import CycleSnapshot, MetricsReport, compute_report
from .units import notional


class ReplayError(ValueError):
    pass


@dataclass
class ReplayResult:
    """Same shape as a live ``RunResult`` summary, derived purely from events."""

    agent_ids: list[str]
    starting_capital: int
    categories: dict[str, Category]
    snapshots: dict[str, list[CycleSnapshot]]
    trades: dict[str, list[ClosedTrade]]
    reports: dict[str, MetricsReport]
    first_fills: dict[str, list[tuple[str, Side]]]
    config: dict | None = None

    def summary(self) -> dict:
        return {
            "snapshots": {a: [s.to_dict() for s in ss] for a, ss in sorted(self.snapshots.items())},
            "reports": {a: r.to_dict() for a, r in sorted(self.reports.items())},
            "trades": {a: [t.to_dict() for t in ts] for a, ts in sorted(self.trades.items())},
        }


def _recompute_snapshots(records: list[EventRecord], agent_ids: list[str], start: int) -> dict[str, list[CycleSnapshot]]:
    """Derive end-of-cycle snapshots from QuoteUpdate, LedgerDelta and Decision events.

    Cycle durations are not in the log unless snapshots were, so they come back as 0.
    """
    quotes: dict[str, QuoteTop] = {}
    cash = {a: start for a in agent_ids}
    realized = {a: 0 for a in agent_ids}
    positions: dict[str, dict[str, tuple[Side, int]]] = {a: {} for a in agent_ids}
    fills: dict[str, int] = defaultdict(int)
    usage: dict[str, dict] = {}
    out: dict[str, list[CycleSnapshot]] = {a: [] for a in agent_ids}
    now = None
    cycle = None

    def close_cycle() -> None:
        if cycle is None:
            return
        for a in agent_ids:
            marks = sum(
                notional(qty, quotes[mid].bid(side)) if mid in quotes else 0
                for mid, (side, qty) in positions[a].items()
            )
            value = cash[a] + marks
            u = usage.get(a, {})
            out[a].append(CycleSnapshot(
                agent_id=a, cycle_index=cycle, as_of=now, account_value=value, cash=cash[a],
                unrealized_pnl=value - start - realized[a], realized_pnl_total=realized[a],
                prompt_tokens=u.get("prompt_tokens", 0), completion_tokens=u.get("completion_tokens", 0),
                reasoning_tokens=u.get("reasoning_tokens", 0), cycle_duration=0,
                trades_this_cycle=fills[a],
            ))

    for rec in records:
        p = rec.payload
        if rec.kind is EventKind.QUOTE_UPDATE:
            close_cycle()
            cycle, now = rec.cycle_index, parse_ts(p["now"])
            fills.clear()
            for q in p["quotes"]:
                quotes[q["market_id"]] = QuoteTop.from_dict(q)
        elif rec.kind is EventKind.LEDGER_DELTA:
            a = rec.agent_id
            cash[a] = p["cash_after"]
            realized[a] = p["realized_pnl_total"]
            pos = p["position"]
            if pos is None:
                positions[a].pop(p["market_id"], None)
            else:
                positions[a][p["market_id"]] = (Side(pos["side"]), pos["qty"])
            if p["reason"] == "fill":
                fills[a] += 1
        elif rec.kind is EventKind.DECISION:
            usage[rec.agent_id] = p.get("usage", {})
    close_cycle()
    return out


def replay(source: str | Path | Iterable[EventRecord]) -> ReplayResult:
    """Reconstruct results from a log path or records.

    Snapshot events are used when present; otherwise snapshots are recomputed
    from quotes and ledger deltas.  An empty log gives an empty result.
    """
    records = read_log(source) if isinstance(source, (str, Path)) else list(source)
    if not records:
        return ReplayResult([], 0, {}, {}, {}, {}, {})
    head = records[0]
    if head.kind is not EventKind.RUN_START:
        raise ReplayError(f"log must begin with a RunStart record, found {head.kind.value}")
    agent_ids = sorted(a["agent_id"] for a in head.payload["agents"])
    start = head.payload["starting_capital_micro"]
    categories = {m["market_id"]: Category(m["category"]) for m in head.payload["markets"]}

    trades: dict[str, list[ClosedTrade]] = {a: [] for a in agent_ids}
    first_fills: dict[str, list[tuple[str, Side]]] = {a: [] for a in agent_ids}
    logged: dict[str, list[CycleSnapshot]] = {a: [] for a in agent_ids}
    has_snapshots = False
    for rec in records:
        p = rec.payload
        if rec.kind is EventKind.LEDGER_DELTA:
            if p["closed"] is not None:
                trades[rec.agent_id].append(ClosedTrade.from_dict(p["closed"]))
        elif rec.kind is EventKind.EXECUTION and p["filled_qty"] > 0:
            first_fills[rec.agent_id].append((p["market_id"], Side(p["side"])))
        elif rec.kind is EventKind.SNAPSHOT:
            has_snapshots = True
            fields = {k: v for k, v in p.items() if k not in ("stale", "unquoted")}
            logged[rec.agent_id].append(CycleSnapshot.from_dict(fields))

    snapshots = logged if has_snapshots else _recompute_snapshots(records, agent_ids, start)
    reports = {a: compute_report(a, snapshots[a], trades[a], categories, start) for a in agent_ids}
    return ReplayResult(agent_ids, start, categories, snapshots, trades, reports, first_fills,
                        head.payload.get("config"))
