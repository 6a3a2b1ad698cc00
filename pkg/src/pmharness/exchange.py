"""Simulated execution venue: fees, taker fills, and the settlement feed."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from datetime import datetime
from enum import Enum
from fractions import Fraction
from typing import Iterable

from .markets import MarketSpec, QuoteTop, SettlementOutcome, Side, VenueMode
from .units import ONE_CENT, ONE_DOLLAR, SHARE


class FeeKind(str, Enum):
    ZERO = "Zero"
    QUADRATIC_TAKER = "QuadraticTaker"


class ExecutionMode(str, Enum):
    PAPER = "Paper"
    LIVE_FIDELITY = "LiveFidelity"


class ExecStatus(str, Enum):
    FILLED = "Filled"
    PARTIAL_FILL = "PartialFill"
    REJECTED_NO_COUNTERPARTY = "RejectedNoCounterparty"
    REJECTED_RISK = "RejectedRisk"


@dataclass(frozen=True)
class FeeSchedule:
    kind: FeeKind = FeeKind.QUADRATIC_TAKER
    rate: float = 0.07

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FeeKind(self.kind))
        if self.rate < 0:
            raise ValueError("fee rate must be >= 0")

    @cached_property
    def exact_rate(self) -> Fraction:
        return Fraction(str(self.rate))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "rate": self.rate}


ZERO_FEES = FeeSchedule(FeeKind.ZERO, 0.0)


@dataclass(frozen=True)
class VenueConfig:
    execution_mode: ExecutionMode = ExecutionMode.PAPER
    fee_schedule: FeeSchedule = field(default_factory=FeeSchedule)
    share_rule: VenueMode = VenueMode.WHOLE_SHARE

    def __post_init__(self) -> None:
        object.__setattr__(self, "execution_mode", ExecutionMode(self.execution_mode))
        object.__setattr__(self, "share_rule", VenueMode(self.share_rule))

    def to_dict(self) -> dict:
        return {"execution_mode": self.execution_mode.value,
                "fee_schedule": self.fee_schedule.to_dict(),
                "share_rule": self.share_rule.value}


@dataclass(frozen=True)
class Order:
    """A taker buy of ``qty`` milli-shares of ``side``.

    ``max_price`` caps the acceptable ask; an ask above it finds no seller.
    """

    order_id: str
    agent_id: str
    market_id: str
    side: Side
    qty: int
    max_price: int = ONE_DOLLAR
    reasoning: str = ""

    def to_dict(self) -> dict:
        return {"order_id": self.order_id, "agent_id": self.agent_id, "market_id": self.market_id,
                "side": Side(self.side).value, "qty": self.qty, "max_price": self.max_price}


@dataclass(frozen=True)
class ExecutionReport:
    order_id: str
    status: ExecStatus
    filled_qty: int
    fill_price: int
    fee: int
    detail: str = ""

    def __post_init__(self) -> None:
        if self.status is ExecStatus.REJECTED_NO_COUNTERPARTY and self.filled_qty != 0:
            raise ValueError("a rejected order cannot carry a fill")

    def to_dict(self) -> dict:
        return {"order_id": self.order_id, "status": self.status.value,
                "filled_qty": self.filled_qty, "fill_price": self.fill_price,
                "fee": self.fee, "detail": self.detail}


def compute_fee(schedule: FeeSchedule, price: int, qty: int) -> int:
    """Fee in micro-dollars for buying ``qty`` milli-shares at ``price``.

    QuadraticTaker charges ``rate * P * (1 - P)`` dollars per contract (P in
    dollars) on the whole quantity, rounded up to the next cent.
    """
    if not 0 <= price <= ONE_DOLLAR:
        raise ValueError(f"price {price} outside [0, {ONE_DOLLAR}]")
    if qty <= 0:
        raise ValueError("qty must be positive")
    if schedule.kind is FeeKind.ZERO:
        return 0
    rate = schedule.exact_rate
    num = rate.numerator * price * (ONE_DOLLAR - price) * qty
    den = rate.denominator * ONE_DOLLAR * SHARE * ONE_CENT
    return -(-num // den) * ONE_CENT


def fee_per_contract(schedule: FeeSchedule, price: int) -> Fraction:
    """Unrounded marginal fee for one contract, in micro-dollars."""
    if schedule.kind is FeeKind.ZERO:
        return Fraction(0)
    return schedule.exact_rate * price * (ONE_DOLLAR - price) / ONE_DOLLAR


class Venue(ABC):
    """The seam a real exchange adapter would implement."""

    @abstractmethod
    def begin_cycle(self, now: datetime, quotes: dict[str, QuoteTop]) -> None: ...

    @abstractmethod
    def execute_market_order(self, order: Order, quote: QuoteTop) -> ExecutionReport: ...

    @abstractmethod
    def settle_due(
        self, now: datetime, scheduled: Iterable[SettlementOutcome]
    ) -> list[SettlementOutcome]: ...


class SimulatedVenue(Venue):
    """Taker-only simulator.

    Paper mode fills any quantity at the ask.  LiveFidelity mode fills at most
    the displayed size, which is shared by every order in the cycle: each fill
    consumes it until ``begin_cycle`` refreshes the book.
    """

    def __init__(self, config: VenueConfig, markets: dict[str, MarketSpec]):
        self.config = config
        self.markets = markets
        self._now: datetime | None = None
        self._remaining: dict[tuple[str, Side], int] = {}
        self._emitted: set[str] = set()
        self._last_settle: datetime | None = None

    @property
    def now(self) -> datetime | None:
        return self._now

    def begin_cycle(self, now: datetime, quotes: dict[str, QuoteTop] | None = None) -> None:
        self._now = now
        self._remaining.clear()

    def fee(self, price: int, qty: int) -> int:
        return compute_fee(self.config.fee_schedule, price, qty)

    def execute_market_order(self, order: Order, quote: QuoteTop) -> ExecutionReport:
        side = Side(order.side)
        price = quote.ask(side)
        market = self.markets.get(order.market_id)
        if market is None:
            return ExecutionReport(order.order_id, ExecStatus.REJECTED_RISK, 0, price, 0, "UnknownMarket")
        if self._now is not None and self._now >= market.expiry:
            return ExecutionReport(order.order_id, ExecStatus.REJECTED_RISK, 0, price, 0, "MarketClosed")
        if price > order.max_price:
            return ExecutionReport(order.order_id, ExecStatus.REJECTED_NO_COUNTERPARTY, 0, price, 0,
                                   "ask above max_price")

        if self.config.execution_mode is ExecutionMode.PAPER:
            filled = order.qty
        else:
            key = (order.market_id, side)
            available = self._remaining.get(key, quote.ask_size(side))
            filled = min(order.qty, available)
            if filled <= 0:
                return ExecutionReport(order.order_id, ExecStatus.REJECTED_NO_COUNTERPARTY, 0, price, 0,
                                       "no displayed size")
            self._remaining[key] = available - filled

        status = ExecStatus.FILLED if filled == order.qty else ExecStatus.PARTIAL_FILL
        return ExecutionReport(order.order_id, status, filled, price, self.fee(price, filled))

    def settle_due(
        self, now: datetime, scheduled: Iterable[SettlementOutcome]
    ) -> list[SettlementOutcome]:
        """Emit every scheduled outcome with ``settled_at <= now`` exactly once, by market_id."""
        if self._last_settle is not None and now < self._last_settle:
            raise ValueError("settle_due called with a time earlier than the previous call")
        self._last_settle = now
        due = sorted(
            (o for o in scheduled if o.settled_at <= now and o.market_id not in self._emitted),
            key=lambda o: o.market_id,
        )
        self._emitted.update(o.market_id for o in due)
        return due
