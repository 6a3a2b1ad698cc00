"""Append-only, line-delimited JSON event log and its integrity checks."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

LOG_VERSION = 1

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    RUN_START = "RunStart"
    QUOTE_UPDATE = "QuoteUpdate"
    SETTLEMENT = "Settlement"
    CONTEXT = "Context"
    DECISION = "Decision"
    VERDICT = "Verdict"
    EXECUTION = "Execution"
    LEDGER_DELTA = "LedgerDelta"
    NOTE = "Note"
    SNAPSHOT = "Snapshot"
    AGENT_ERROR = "AgentError"


class LogFormatError(ValueError):
    pass


class LogVersionError(LogFormatError):
    pass


@dataclass(frozen=True)
class EventRecord:
    seq: int
    cycle_index: int
    kind: EventKind
    payload: dict
    agent_id: str | None = None

    def to_dict(self) -> dict:
        return {"v": LOG_VERSION, "seq": self.seq, "cycle": self.cycle_index,
                "kind": self.kind.value, "agent_id": self.agent_id, "payload": self.payload}

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> EventRecord:
        if d.get("v") != LOG_VERSION:
            raise LogVersionError(f"log schema version {d.get('v')!r} is not supported (expected {LOG_VERSION})")
        return cls(d["seq"], d["cycle"], EventKind(d["kind"]), d["payload"], d.get("agent_id"))


class EventLog:
    """Sequence-numbered event sink.

    Records are kept in memory (unless ``keep=False``) and, with a ``path``,
    streamed to disk one line per record.  ``enabled=False`` turns the log
    into a no-op for bulk simulations that never look at it.
    """

    def __init__(self, path: str | Path | None = None, *, keep: bool = True, enabled: bool = True):
        self.path = Path(path) if path is not None else None
        self.keep = keep
        self.enabled = enabled
        self.records: list[EventRecord] = []
        self._seq = 0
        self._fh: IO[str] | None = None
        if self.path is not None and enabled:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", encoding="utf-8", newline="\n")

    def append(self, kind: EventKind, cycle_index: int, payload: dict, agent_id: str | None = None) -> int:
        """Append one record and return its sequence number (0 when disabled)."""
        if not self.enabled:
            return 0
        self._seq += 1
        rec = EventRecord(self._seq, cycle_index, kind, payload, agent_id)
        if self.keep:
            self.records.append(rec)
        if self._fh is not None:
            self._fh.write(rec.to_line() + "\n")
        return self._seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> EventLog:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_log(records: Iterable[EventRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


def iter_log(path: str | Path) -> Iterator[EventRecord]:
    """Stream records from ``path``.

    A final line without a trailing newline that fails to parse is treated as
    an interrupted write: it is dropped with a warning.  Any other bad line is
    a hard error naming its line number.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    truncated_tail = not text.endswith("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        is_last = lineno == len(lines)
        try:
            d = json.loads(line)
            if not isinstance(d, dict):
                raise ValueError("record is not an object")
        except ValueError as exc:
            if is_last and truncated_tail:
                logger.warning("%s:%d: dropping truncated final record", path, lineno)
                return
            raise LogFormatError(f"{path}:{lineno}: corrupt record ({exc})") from None
        try:
            yield EventRecord.from_dict(d)
        except LogVersionError:
            raise
        except (KeyError, ValueError) as exc:
            raise LogFormatError(f"{path}:{lineno}: malformed record ({exc})") from None


def read_log(path: str | Path) -> list[EventRecord]:
    return list(iter_log(path))


# -- integrity checks --------------------------------------------------------


@dataclass
class AuditReport:
    ok: bool = True
    problems: list[str] = field(default_factory=list)

    def fail(self, message: str) -> None:
        self.ok = False
        self.problems.append(message)


_FLOW_KEYS = ("fill_cost", "fee", "netting_credit", "settlement_payout", "void_refund")


def audit_cash(records: Iterable[EventRecord]) -> AuditReport:
    """Walk the log and attribute every cash movement to a flow category.

    Each LedgerDelta must move cash by exactly its flow breakdown and start
    from the balance the previous delta ended with.  Each Execution fill must
    be matched by a LedgerDelta whose fill cost and fee agree.
    """
    report = AuditReport()
    cash: dict[str, int] = {}
    settled: set[str] = set()
    pending_fills: dict[str, dict] = {}
    for rec in records:
        p = rec.payload
        if rec.kind is EventKind.RUN_START:
            for agent in p.get("agents", []):
                cash[agent["agent_id"]] = p["starting_capital_micro"]
        elif rec.kind is EventKind.SETTLEMENT:
            mid = p["market_id"]
            if mid in settled:
                report.fail(f"seq {rec.seq}: market {mid} settled twice")
            settled.add(mid)
        elif rec.kind is EventKind.EXECUTION and p["filled_qty"] > 0:
            pending_fills[p["order_id"]] = p
        elif rec.kind is EventKind.LEDGER_DELTA:
            agent = rec.agent_id
            flows = p["flows"]
            net = (flows["netting_credit"] + flows["settlement_payout"] + flows["void_refund"]
                   - flows["fill_cost"] - flows["fee"])
            before = cash.get(agent)
            if before is not None and before != p["cash_before"]:
                report.fail(f"seq {rec.seq}: {agent} cash_before {p['cash_before']} != running {before}")
            if p["cash_after"] - p["cash_before"] != net:
                report.fail(f"seq {rec.seq}: {agent} cash moved {p['cash_after'] - p['cash_before']}"
                            f" but flows account for {net}")
            if p["cash_after"] < 0:
                report.fail(f"seq {rec.seq}: {agent} cash went negative")
            cash[agent] = p["cash_after"]
            order_id = p.get("order_id")
            if order_id is not None:
                fill = pending_fills.pop(order_id, None)
                if fill is None:
                    report.fail(f"seq {rec.seq}: fill delta for unknown execution {order_id}")
                elif flows["fee"] != fill["fee"]:
                    report.fail(f"seq {rec.seq}: fee {flows['fee']} != executed fee {fill['fee']}")
    for order_id in pending_fills:
        report.fail(f"execution {order_id} has no ledger delta")
    return report


def check_step_order(records: Iterable[EventRecord]) -> AuditReport:
    """Within each cycle, settlements precede contexts precede executions precede snapshots."""
    rank = {
        EventKind.QUOTE_UPDATE: 0,
        EventKind.SETTLEMENT: 1,
        EventKind.CONTEXT: 2,
        EventKind.DECISION: 3,
        EventKind.EXECUTION: 4,
        EventKind.SNAPSHOT: 5,
    }
    report = AuditReport()
    last: dict[int, int] = defaultdict(int)
    prev_seq = 0
    for rec in records:
        if rec.seq <= prev_seq:
            report.fail(f"seq {rec.seq} does not increase")
        prev_seq = rec.seq
        r = rank.get(rec.kind)
        if r is None:
            continue
        if r < last[rec.cycle_index]:
            report.fail(f"seq {rec.seq}: {rec.kind.value} after a later step in cycle {rec.cycle_index}")
        last[rec.cycle_index] = max(last[rec.cycle_index], r)
    return report


def check_verdicts(records: Iterable[EventRecord]) -> AuditReport:
    """Every Execution must point at an earlier Accept verdict for the same order."""
    report = AuditReport()
    accepted: dict[int, str] = {}
    for rec in records:
        if rec.kind is EventKind.VERDICT and rec.payload["decision"] == "Accept":
            accepted[rec.seq] = rec.payload["order_id"]
        elif rec.kind is EventKind.EXECUTION:
            ref = rec.payload.get("verdict_seq")
            if accepted.get(ref) != rec.payload["order_id"]:
                report.fail(f"seq {rec.seq}: execution {rec.payload['order_id']} lacks an accepted verdict")
    return report
