"""Agent-facing contract: per-cycle context, action vocabulary, and scripted agents."""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from fractions import Fraction
from typing import Callable, ClassVar, Mapping, Union

import numpy as np

from .discovery import DiscoveryQuery, QualityFilter
from .exchange import FeeSchedule, fee_per_contract
from .ledger import ClosedTrade
from .markets import Category, MarketSpec, Outcome, QuoteTop, Side, VenueMode, format_ts
from .research import ResearchSnippet
from .units import DEFAULT_STARTING_CAPITAL, ONE_DOLLAR, SHARE


# -- context -----------------------------------------------------------------


@dataclass(frozen=True)
class PublicMarket:
    """What an agent may know about a market (no hidden probability, no outcome)."""

    market_id: str
    series_id: str
    category: Category
    title: str
    settlement_rule: str
    expiry: datetime
    venue_mode: VenueMode
    tick: int

    @classmethod
    def of(cls, m: MarketSpec) -> PublicMarket:
        return cls(m.market_id, m.series_id, m.category, m.title, m.settlement_rule,
                   m.expiry, m.venue_mode, m.tick)

    def to_dict(self) -> dict:
        return {"market_id": self.market_id, "series_id": self.series_id,
                "category": self.category.value, "title": self.title,
                "settlement_rule": self.settlement_rule, "expiry": format_ts(self.expiry),
                "venue_mode": self.venue_mode.value, "tick": self.tick}


@dataclass(frozen=True)
class PositionView:
    market_id: str
    side: Side
    qty: int
    avg_entry: int
    cost_basis: int
    mark: int

    def to_dict(self) -> dict:
        return {"market_id": self.market_id, "side": self.side.value, "qty": self.qty,
                "avg_entry": self.avg_entry, "cost_basis": self.cost_basis, "mark": self.mark}


@dataclass(frozen=True)
class PortfolioView:
    cash: int
    positions: tuple[PositionView, ...]
    account_value: int
    return_pct: Decimal
    starting_capital: int = DEFAULT_STARTING_CAPITAL

    def position(self, market_id: str) -> PositionView | None:
        for p in self.positions:
            if p.market_id == market_id:
                return p
        return None

    def to_dict(self) -> dict:
        return {"cash": self.cash, "positions": [p.to_dict() for p in self.positions],
                "account_value": self.account_value, "return_pct": str(self.return_pct),
                "starting_capital": self.starting_capital}


@dataclass(frozen=True)
class LearningSummary:
    worst_categories: tuple[tuple[Category, int], ...] = ()
    best_categories: tuple[tuple[Category, int], ...] = ()
    expiring_soon: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "worst_categories": [[c.value, pnl] for c, pnl in self.worst_categories],
            "best_categories": [[c.value, pnl] for c, pnl in self.best_categories],
            "expiring_soon": list(self.expiring_soon),
        }


@dataclass(frozen=True)
class ToolResult:
    """Output of a tool action, delivered in the following cycle's context."""

    tool: str
    request: dict
    result: tuple = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {"tool": self.tool, "request": self.request,
                "result": [r.to_dict() if hasattr(r, "to_dict") else r for r in self.result],
                "error": self.error}


@dataclass(frozen=True)
class CycleContext:
    agent_id: str
    cycle_index: int
    now: datetime
    markets: tuple[tuple[PublicMarket, QuoteTop], ...]
    portfolio: PortfolioView
    recent_settlements: tuple[ClosedTrade, ...] = ()
    recent_nettings: tuple[ClosedTrade, ...] = ()
    learning: LearningSummary = field(default_factory=LearningSummary)
    tool_results: tuple[ToolResult, ...] = ()
    fee_schedule: FeeSchedule = field(default_factory=FeeSchedule)
    concentration_fraction: float = 0.15

    def quote(self, market_id: str) -> QuoteTop | None:
        for m, q in self.markets:
            if m.market_id == market_id:
                return q
        return None

    def research_signals(self) -> dict[str, float]:
        """Latest research signal per market from the previous cycle's tool results."""
        out: dict[str, float] = {}
        for tr in self.tool_results:
            if tr.tool != "research":
                continue
            for snip in tr.result:
                if isinstance(snip, ResearchSnippet) and snip.signal is not None:
                    out[snip.market_id] = snip.signal
        return out

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "cycle_index": self.cycle_index,
            "now": format_ts(self.now),
            "markets": [{"market": m.to_dict(), "quote": q.to_dict()} for m, q in self.markets],
            "portfolio": self.portfolio.to_dict(),
            "recent_settlements": [t.to_dict() for t in self.recent_settlements],
            "recent_nettings": [t.to_dict() for t in self.recent_nettings],
            "learning": self.learning.to_dict(),
            "tool_results": [t.to_dict() for t in self.tool_results],
            "fee_schedule": self.fee_schedule.to_dict(),
            "concentration_fraction": self.concentration_fraction,
        }


# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class PlaceOrder:
    market_id: str
    side: Side
    qty: int
    max_price: int = ONE_DOLLAR
    reasoning: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "side", Side(self.side))
        if self.qty <= 0:
            raise ValueError("PlaceOrder.qty must be positive")
        if not 0 <= self.max_price <= ONE_DOLLAR:
            raise ValueError("PlaceOrder.max_price outside [0, 1000000]")


@dataclass(frozen=True)
class Research:
    query: str
    reasoning: str = ""


@dataclass(frozen=True)
class NoteAction:
    """``op`` is one of put, edit, search, belief, plan."""

    op: str
    key: str = ""
    body: str = ""
    query: str = ""
    reasoning: str = ""

    OPS: ClassVar[tuple[str, ...]] = ("put", "edit", "search", "belief", "plan")

    def __post_init__(self) -> None:
        if self.op not in self.OPS:
            raise ValueError(f"unknown note op {self.op!r}")


@dataclass(frozen=True)
class Discover:
    query: DiscoveryQuery
    quality: QualityFilter = field(default_factory=QualityFilter)
    reasoning: str = ""


@dataclass(frozen=True)
class NoOp:
    reasoning: str = ""


AgentAction = Union[PlaceOrder, Research, NoteAction, Discover, NoOp]


def action_to_dict(action: AgentAction) -> dict:
    if isinstance(action, PlaceOrder):
        return {"action": "PlaceOrder", "market_id": action.market_id, "side": action.side.value,
                "qty": action.qty, "max_price": action.max_price, "reasoning": action.reasoning}
    if isinstance(action, Research):
        return {"action": "Research", "query": action.query, "reasoning": action.reasoning}
    if isinstance(action, NoteAction):
        return {"action": "Note", "op": action.op, "key": action.key, "body": action.body,
                "query": action.query, "reasoning": action.reasoning}
    if isinstance(action, Discover):
        return {"action": "Discover", "query": action.query.to_dict(),
                "quality": action.quality.to_dict(), "reasoning": action.reasoning}
    return {"action": "NoOp", "reasoning": action.reasoning}


# -- agents ------------------------------------------------------------------


class Agent(ABC):
    """Every agent maps a context to an ordered, finite list of actions.

    Decisions are single-shot: tool results come back in the next cycle's
    ``CycleContext.tool_results``.
    """

    kind: ClassVar[str] = "agent"
    privileged: ClassVar[bool] = False

    def __init__(self, agent_id: str):
        self.agent_id = agent_id

    @abstractmethod
    def decide(self, context: CycleContext) -> list[AgentAction]: ...


def size_order(
    context: CycleContext, market: PublicMarket, side: Side, price: int, stake: int
) -> int:
    """Quantity (milli-shares) for spending about ``stake`` at ``price``.

    Stays inside the per-market concentration cap and leaves room for the fee.
    Returns 0 when nothing sensible fits.
    """
    if price <= 0:
        return 0
    pf = context.portfolio
    held = pf.position(market.market_id)
    held_basis = held.cost_basis if held is not None and held.side is side else 0
    cap = Fraction(str(context.concentration_fraction)) * pf.account_value * Fraction(99, 100)
    per_contract = price + fee_per_contract(context.fee_schedule, price) + Fraction(ONE_DOLLAR, 100) / SHARE
    budget = min(Fraction(stake), cap - held_basis, Fraction(pf.cash) * Fraction(98, 100))
    if budget <= 0:
        return 0
    qty = int(budget * SHARE / per_contract)
    if market.venue_mode is VenueMode.WHOLE_SHARE:
        qty -= qty % SHARE
    return max(qty, 0)


def _market_rng(seed: int, *keys: int | str) -> np.random.Generator:
    parts = [seed] + [k if isinstance(k, int) else zlib.crc32(k.encode()) for k in keys]
    return np.random.default_rng(parts)


class NoOpAgent(Agent):
    kind = "noop"

    def decide(self, context: CycleContext) -> list[AgentAction]:
        return [NoOp()]


class RandomAgent(Agent):
    """Buys a random side of each open market with probability ``trade_prob``."""

    kind = "random"

    def __init__(self, agent_id: str, seed: int = 0, trade_prob: float = 0.1, stake: int = 50 * ONE_DOLLAR):
        super().__init__(agent_id)
        self.seed = seed
        self.trade_prob = trade_prob
        self.stake = stake

    def decide(self, context: CycleContext) -> list[AgentAction]:
        rng = np.random.default_rng([self.seed, context.cycle_index])
        actions: list[AgentAction] = []
        for market, quote in context.markets:
            u, coin = rng.random(2)
            if u >= self.trade_prob:
                continue
            side = Side.YES if coin < 0.5 else Side.NO
            qty = size_order(context, market, side, quote.ask(side), self.stake)
            if qty > 0:
                actions.append(PlaceOrder(market.market_id, side, qty, reasoning="random entry"))
        return actions or [NoOp()]


class OracleAgent(Agent):
    """Reads hidden outcomes through a privileged channel.

    Each market's believed outcome is the true one with probability
    ``accuracy`` (flipped otherwise, fixed per market), bought once and held.
    """

    kind = "oracle"
    privileged = True

    def __init__(self, agent_id: str, accuracy: float = 1.0, stake: int = 100 * ONE_DOLLAR, seed: int = 0):
        super().__init__(agent_id)
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError("accuracy must be in [0, 1]")
        self.accuracy = accuracy
        self.stake = stake
        self.seed = seed
        self._outcomes: Mapping[str, Outcome] = {}
        self._entered: set[str] = set()

    def bind_outcomes(self, outcomes: Mapping[str, Outcome]) -> None:
        self._outcomes = outcomes

    def belief(self, market_id: str) -> Side | None:
        outcome = self._outcomes.get(market_id)
        if outcome is None or outcome is Outcome.VOID:
            return None
        truth = Side(outcome.value)
        correct = _market_rng(self.seed, 4, market_id).random() < self.accuracy
        return truth if correct else truth.opposite

    def decide(self, context: CycleContext) -> list[AgentAction]:
        actions: list[AgentAction] = []
        for market, quote in context.markets:
            if market.market_id in self._entered:
                continue
            side = self.belief(market.market_id)
            if side is None:
                continue
            qty = size_order(context, market, side, quote.ask(side), self.stake)
            if qty > 0:
                self._entered.add(market.market_id)
                actions.append(PlaceOrder(market.market_id, side, qty, reasoning="oracle belief"))
        return actions or [NoOp()]


Estimator = Callable[[CycleContext, PublicMarket], "float | None"]


def research_estimator(context: CycleContext, market: PublicMarket) -> float | None:
    return context.research_signals().get(market.market_id)


def expected_value(p: float, side: Side, quote: QuoteTop, fees: FeeSchedule) -> Fraction:
    """Expected PnL per contract, micro-dollars, of buying ``side`` at its ask."""
    win_prob = Fraction(str(p)) if side is Side.YES else 1 - Fraction(str(p))
    price = quote.ask(side)
    return win_prob * ONE_DOLLAR - price - fee_per_contract(fees, price)


class EVAgent(Agent):
    """Trades only when estimated expected value per contract beats ``threshold``.

    Without an estimate for a market it asks for research and decides next
    cycle.  ``sigma`` adds seeded noise to every estimate.
    """

    kind = "ev"

    def __init__(
        self,
        agent_id: str,
        seed: int = 0,
        sigma: float = 0.0,
        threshold: int = 0,
        stake: int = 100 * ONE_DOLLAR,
        max_research: int = 5,
        estimator: Estimator | None = None,
    ):
        super().__init__(agent_id)
        if threshold < 0:
            raise ValueError("threshold must be >= 0")
        self.seed = seed
        self.sigma = sigma
        self.threshold = threshold
        self.stake = stake
        self.max_research = max_research
        self.estimator = estimator or research_estimator

    def estimate(self, context: CycleContext, market: PublicMarket) -> float | None:
        p = self.estimator(context, market)
        if p is None or self.sigma == 0:
            return p
        noise = _market_rng(self.seed, 5, context.cycle_index, market.market_id).normal(0.0, self.sigma)
        return float(min(max(p + noise, 0.0), 1.0))

    def decide(self, context: CycleContext) -> list[AgentAction]:
        actions: list[AgentAction] = []
        research = 0
        for market, quote in context.markets:
            p = self.estimate(context, market)
            if p is None:
                if research < self.max_research and context.portfolio.position(market.market_id) is None:
                    actions.append(Research(market.market_id, reasoning="need a probability estimate"))
                    research += 1
                continue
            ev = {s: expected_value(p, s, quote, context.fee_schedule) for s in (Side.YES, Side.NO)}
            side = max(ev, key=lambda s: (ev[s], s is Side.YES))
            if ev[side] <= self.threshold:
                continue
            held = context.portfolio.position(market.market_id)
            if held is not None and held.side is side:
                continue
            qty = size_order(context, market, side, quote.ask(side), self.stake)
            if held is not None:
                qty = min(qty, held.qty) if qty else held.qty
            if qty > 0:
                actions.append(PlaceOrder(
                    market.market_id, side, qty, max_price=quote.ask(side),
                    reasoning=f"p={p:.3f} EV={float(ev[side]) / ONE_DOLLAR:+.4f}/contract",
                ))
        return actions or [NoOp()]


class HoldToSettlementAgent(Agent):
    """Buys the favourite once per market and holds to resolution."""

    kind = "hold"

    def __init__(self, agent_id: str, stake: int = 100 * ONE_DOLLAR):
        super().__init__(agent_id)
        self.stake = stake
        self._entered: set[str] = set()

    @staticmethod
    def favourite(quote: QuoteTop) -> Side:
        return Side.YES if quote.mid2 >= ONE_DOLLAR else Side.NO

    def entries(self, context: CycleContext) -> list[AgentAction]:
        actions: list[AgentAction] = []
        for market, quote in context.markets:
            if market.market_id in self._entered or context.portfolio.position(market.market_id):
                continue
            side = self.favourite(quote)
            qty = size_order(context, market, side, quote.ask(side), self.stake)
            if qty > 0:
                self._entered.add(market.market_id)
                actions.append(PlaceOrder(market.market_id, side, qty, reasoning="favourite entry"))
        return actions

    def decide(self, context: CycleContext) -> list[AgentAction]:
        return self.entries(context) or [NoOp()]


class EarlyExitAgent(HoldToSettlementAgent):
    """Same entries as the holder, but nets out after ``hold_cycles`` or near expiry."""

    kind = "early_exit"

    def __init__(self, agent_id: str, stake: int = 100 * ONE_DOLLAR, hold_cycles: int = 3):
        super().__init__(agent_id, stake)
        self.hold_cycles = hold_cycles
        self._entry_cycle: dict[str, int] = {}

    def decide(self, context: CycleContext) -> list[AgentAction]:
        actions: list[AgentAction] = []
        expiring = set(context.learning.expiring_soon)
        for pos in context.portfolio.positions:
            entered = self._entry_cycle.get(pos.market_id, context.cycle_index)
            if context.cycle_index - entered >= self.hold_cycles or pos.market_id in expiring:
                if context.quote(pos.market_id) is None:
                    continue
                actions.append(PlaceOrder(pos.market_id, pos.side.opposite, pos.qty,
                                          reasoning="scheduled early exit"))
        for a in self.entries(context):
            self._entry_cycle[a.market_id] = context.cycle_index
            actions.append(a)
        return actions or [NoOp()]


AGENT_KINDS: dict[str, type[Agent]] = {
    cls.kind: cls
    for cls in (NoOpAgent, RandomAgent, OracleAgent, EVAgent, HoldToSettlementAgent, EarlyExitAgent)
}

_MONEY_PARAMS = ("stake", "threshold")


def register_agent(cls: type[Agent]) -> type[Agent]:
    """Make ``cls`` selectable by its ``kind`` in run configurations."""
    existing = AGENT_KINDS.get(cls.kind)
    if existing is not None and existing is not cls:
        raise ValueError(f"agent kind {cls.kind!r} is already registered")
    AGENT_KINDS[cls.kind] = cls
    return cls


def make_agent(kind: str, agent_id: str, params: Mapping | None = None) -> Agent:
    """Instantiate a reference agent; dollar-valued params are given in dollars."""
    try:
        cls = AGENT_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown agent kind {kind!r}; choose from {sorted(AGENT_KINDS)}") from None
    kwargs = dict(params or {})
    for name in _MONEY_PARAMS:
        if name in kwargs:
            kwargs[name] = int(Decimal(str(kwargs[name])) * ONE_DOLLAR)
    return cls(agent_id, **kwargs)
