"""The six-step trading cycle and the run driver.

Each cycle: (1) refresh quotes, (2) settle expired markets, (3) build every
agent's context, (4) collect every agent's decisions, (5) execute actions
agent by agent in ``agent_id`` order, (6) snapshot every account.  All of it
is logged, so a run can be audited and replayed from its event log alone.
"""

from __future__ import annotations

import hashlib
import inspect
import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping

from .agents import (
    AGENT_KINDS,
    Agent,
    AgentAction,
    CycleContext,
    Discover,
    LearningSummary,
    NoOp,
    NoteAction,
    PlaceOrder,
    PortfolioView,
    PositionView,
    PublicMarket,
    Research,
    ToolResult,
    action_to_dict,
    make_agent,
)
from .config import RunConfig
from .discovery import DiscoveryError, discover
from .eventlog import EventKind, EventLog
from .exchange import ExecStatus, Order, SimulatedVenue
from .knowledge import KnowledgeStore, NoteLimitError
from .ledger import Account, ClosedTrade, ExitType, LedgerChange
from .markets import (
    MarketSpec,
    QuoteTop,
    Side,
    Universe,
    empty_universe,
    format_ts,
    load_universe,
    step_quotes,
    synthetic_universe,
    with_venue_mode,
)
from .metrics import CycleSnapshot, MetricsReport, compute_report, return_pct, value_account
from .research import CannedResearch
from .risk import RiskVerdict, check_solvency, validate_order

logger = logging.getLogger(__name__)


class AgentError(RuntimeError):
    """An agent raised or returned something the harness cannot execute."""


@dataclass
class RunResult:
    config: RunConfig
    snapshots: dict[str, list[CycleSnapshot]]
    reports: dict[str, MetricsReport]
    trades: dict[str, list[ClosedTrade]]
    log: EventLog | None = None
    accounts: dict[str, Account] = field(default_factory=dict)
    universe: Universe | None = None
    first_fills: dict[str, list[tuple[str, Side]]] = field(default_factory=dict)

    def summary(self) -> dict:
        """Everything replay must reproduce, in plain comparable form."""
        return {
            "snapshots": {a: [s.to_dict() for s in ss] for a, ss in sorted(self.snapshots.items())},
            "reports": {a: r.to_dict() for a, r in sorted(self.reports.items())},
            "trades": {a: [t.to_dict() for t in ts] for a, ts in sorted(self.trades.items())},
        }


@dataclass
class ArenaState:
    config: RunConfig
    universe: Universe
    venue: SimulatedVenue
    agents: dict[str, Agent]
    accounts: dict[str, Account]
    log: EventLog
    knowledge: KnowledgeStore
    research: CannedResearch
    quotes: dict[str, QuoteTop] = field(default_factory=dict)
    history: dict[str, list[QuoteTop]] = field(default_factory=dict)
    trades: dict[str, list[ClosedTrade]] = field(default_factory=lambda: defaultdict(list))
    snapshots: dict[str, list[CycleSnapshot]] = field(default_factory=lambda: defaultdict(list))
    pending_tools: dict[str, list[ToolResult]] = field(default_factory=lambda: defaultdict(list))
    first_fills: dict[str, list[tuple[str, Side]]] = field(default_factory=lambda: defaultdict(list))

    @property
    def agent_ids(self) -> list[str]:
        return sorted(self.agents)

    def now(self, cycle_index: int) -> datetime:
        return self.universe.config.cycle_time(cycle_index)


# -- setup ---------------------------------------------------------------------


def build_universe(config: RunConfig) -> Universe:
    spec = config.universe
    if spec.fixture is not None:
        universe = load_universe(spec.fixture)
    elif spec.n_markets == 0:
        universe = empty_universe(config.resolved_horizon, config.universe_config(), config.seed)
    else:
        universe = synthetic_universe(config.seed, spec.n_markets, config.resolved_horizon,
                                      config.universe_config())
    return with_venue_mode(universe, config.venue.share_rule)


def build_agents(config: RunConfig, universe: Universe) -> dict[str, Agent]:
    agents: dict[str, Agent] = {}
    outcomes = {mid: o.outcome for mid, o in universe.outcomes.items()}
    for spec in config.agents:
        params = dict(spec.params)
        cls_params = inspect.signature(AGENT_KINDS[spec.kind].__init__).parameters
        if "seed" in cls_params and "seed" not in params:
            params["seed"] = config.seed
        agent = make_agent(spec.kind, spec.agent_id, params)
        if agent.privileged:
            agent.bind_outcomes(outcomes)
        agents[spec.agent_id] = agent
    return agents


def init_state(config: RunConfig, log: EventLog | None = None, universe: Universe | None = None) -> ArenaState:
    config.validate()
    universe = universe if universe is not None else build_universe(config)
    log = log if log is not None else EventLog()
    state = ArenaState(
        config=config,
        universe=universe,
        venue=SimulatedVenue(config.venue, universe.by_id),
        agents=build_agents(config, universe),
        accounts={s.agent_id: Account(s.agent_id, config.starting_capital) for s in config.agents},
        log=log,
        knowledge=KnowledgeStore(),
        research=CannedResearch(universe, config.seed, config.research_noise),
    )
    log.append(EventKind.RUN_START, -1, {
        "config": config.to_dict(),
        "starting_capital_micro": config.starting_capital,
        "agents": [{"agent_id": s.agent_id, "kind": s.kind} for s in sorted(config.agents, key=lambda s: s.agent_id)],
        "markets": [m.public_dict() for m in universe.markets],
        "universe": {"seed": universe.seed, "horizon": universe.horizon,
                     "cycle_minutes": universe.config.cycle_minutes,
                     "start": format_ts(universe.config.start)},
    })
    return state


# -- the cycle -----------------------------------------------------------------


def run_cycle(state: ArenaState, cycle_index: int) -> None:
    now = state.now(cycle_index)
    _sync_quotes(state, cycle_index, now)
    _settle(state, cycle_index, now)
    contexts = {aid: build_context(state, aid, cycle_index, now) for aid in state.agent_ids}
    for aid in state.agent_ids:
        _log_context(state, contexts[aid])
    decisions: dict[str, list[AgentAction] | None] = {}
    durations: dict[str, float] = {}
    for aid in state.agent_ids:
        t0 = time.perf_counter()
        decisions[aid] = _decide(state, aid, contexts[aid])
        durations[aid] = time.perf_counter() - t0
    fills: dict[str, int] = {}
    for aid in state.agent_ids:
        t0 = time.perf_counter()
        fills[aid] = _execute(state, aid, decisions[aid], contexts[aid], cycle_index, now)
        durations[aid] += time.perf_counter() - t0
    for aid in state.agent_ids:
        ms = int(durations[aid] * 1000) if state.config.record_durations else 0
        _snapshot(state, aid, cycle_index, now, fills[aid], ms)


def _sync_quotes(state: ArenaState, cycle_index: int, now: datetime) -> None:
    if cycle_index == 0:
        new = dict(state.universe.initial_quotes)
        changed = list(new.values())
    else:
        new = step_quotes(state.universe, state.quotes, cycle_index, state.universe.seed)
        changed = [q for mid, q in new.items() if q is not state.quotes.get(mid)]
    for q in changed:
        state.history.setdefault(q.market_id, []).append(q)
    state.quotes = new
    state.venue.begin_cycle(now, new)
    state.log.append(EventKind.QUOTE_UPDATE, cycle_index, {
        "now": format_ts(now), "quotes": [q.to_dict() for q in changed],
    })


def _settle(state: ArenaState, cycle_index: int, now: datetime) -> None:
    due = state.venue.settle_due(now, state.universe.outcomes.values())
    for outcome in due:
        state.log.append(EventKind.SETTLEMENT, cycle_index, outcome.to_dict())
        for aid in state.agent_ids:
            account = state.accounts[aid]
            cash_before = account.cash
            change = account.apply_settlement(outcome)
            account.check_invariants()
            if change.closed is not None:
                _record_delta(state, aid, cycle_index, "settlement", outcome.market_id, cash_before, change)


def _record_delta(
    state: ArenaState, agent_id: str, cycle_index: int, reason: str, market_id: str,
    cash_before: int, change: LedgerChange, order_id: str | None = None,
) -> None:
    account = state.accounts[agent_id]
    pos = account.position(market_id)
    if change.closed is not None:
        state.trades[agent_id].append(change.closed)
    state.log.append(EventKind.LEDGER_DELTA, cycle_index, {
        "reason": reason,
        "market_id": market_id,
        "order_id": order_id,
        "cash_before": cash_before,
        "cash_after": account.cash,
        "flows": change.flows.to_dict(),
        "dust": change.dust,
        "position": pos.to_dict() if pos is not None else None,
        "closed": change.closed.to_dict() if change.closed is not None else None,
        "realized_pnl_total": account.realized_pnl_total,
    }, agent_id)


def build_context(state: ArenaState, agent_id: str, cycle_index: int, now: datetime) -> CycleContext:
    """Assemble what ``agent_id`` may see this cycle; hidden fields never enter."""
    cfg = state.config
    account = state.accounts[agent_id]
    valuation = value_account(account, state.quotes, now)
    positions = tuple(
        PositionView(p.market_id, p.side, p.qty, p.avg_entry, p.cost_basis, valuation.marks[p.market_id])
        for p in (account.positions[k] for k in sorted(account.positions))
    )
    portfolio = PortfolioView(
        cash=account.cash,
        positions=positions,
        account_value=valuation.value,
        return_pct=return_pct(valuation.value - account.starting_capital, account.starting_capital),
        starting_capital=account.starting_capital,
    )
    markets = tuple(
        (PublicMarket.of(m), state.quotes[m.market_id])
        for m in sorted(state.universe.markets, key=lambda m: m.market_id)
        if m.expiry > now
    )
    trades = state.trades[agent_id]
    settlements = [t for t in trades if t.exit_type is ExitType.SETTLEMENT]
    nettings = [t for t in trades if t.exit_type is ExitType.NETTING]
    return CycleContext(
        agent_id=agent_id,
        cycle_index=cycle_index,
        now=now,
        markets=markets,
        portfolio=portfolio,
        recent_settlements=tuple(settlements[-cfg.windows.settlements:]) if cfg.windows.settlements else (),
        recent_nettings=tuple(nettings[-cfg.windows.nettings:]) if cfg.windows.nettings else (),
        learning=learning_summary(state, agent_id, now),
        tool_results=tuple(state.pending_tools.pop(agent_id, [])),
        fee_schedule=cfg.venue.fee_schedule,
        concentration_fraction=cfg.concentration_fraction,
    )


def learning_summary(state: ArenaState, agent_id: str, now: datetime) -> LearningSummary:
    """Two worst and two best categories by realized PnL, plus positions near expiry."""
    by_cat: dict = defaultdict(int)
    for t in state.trades[agent_id]:
        by_cat[state.universe.by_id[t.market_id].category] += t.realized_pnl
    ranked = sorted(by_cat.items(), key=lambda kv: (kv[1], kv[0].value))
    worst = tuple((c, p) for c, p in ranked if p < 0)[:2]
    best = tuple((c, p) for c, p in reversed(ranked) if p > 0)[:2]
    horizon = state.universe.config.cycle_interval * state.config.windows.expiry_reminder_cycles
    expiring = tuple(
        mid for mid in sorted(state.accounts[agent_id].positions)
        if state.universe.by_id[mid].expiry - now <= horizon
    )
    return LearningSummary(worst, best, expiring)


def _log_context(state: ArenaState, ctx: CycleContext) -> None:
    mode = state.config.log_context
    if mode == "none" or not state.log.enabled:
        return
    body = ctx.to_dict()
    if mode == "digest":
        canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
        body = {"sha256": hashlib.sha256(canonical.encode()).hexdigest(),
                "n_markets": len(ctx.markets), "account_value": ctx.portfolio.account_value}
    state.log.append(EventKind.CONTEXT, ctx.cycle_index, body, ctx.agent_id)


def _agent_error(state: ArenaState, agent_id: str, cycle_index: int, stage: str, exc: BaseException) -> None:
    logger.warning("agent %s failed in cycle %d (%s): %s", agent_id, cycle_index, stage, exc)
    state.log.append(EventKind.AGENT_ERROR, cycle_index,
                     {"stage": stage, "error": f"{type(exc).__name__}: {exc}"}, agent_id)


_ACTION_TYPES = (PlaceOrder, Research, NoteAction, Discover, NoOp)


def _decide(state: ArenaState, agent_id: str, ctx: CycleContext) -> list[AgentAction] | None:
    agent = state.agents[agent_id]
    try:
        actions = list(agent.decide(ctx))
        for a in actions:
            if not isinstance(a, _ACTION_TYPES):
                raise AgentError(f"unsupported action {a!r}")
    except Exception as exc:  # an agent must never take the harness down
        _agent_error(state, agent_id, ctx.cycle_index, "decide", exc)
        return None
    usage = getattr(agent, "usage", None) or {}
    state.log.append(EventKind.DECISION, ctx.cycle_index, {
        "actions": [action_to_dict(a) for a in actions],
        "usage": {"prompt_tokens": usage.get("prompt_tokens", 0),
                  "completion_tokens": usage.get("completion_tokens", 0),
                  "reasoning_tokens": usage.get("reasoning_tokens", 0)},
    }, agent_id)
    return actions


def _execute(
    state: ArenaState, agent_id: str, actions: list[AgentAction] | None, ctx: CycleContext,
    cycle_index: int, now: datetime,
) -> int:
    if not actions:
        return 0
    fills = 0
    for n, action in enumerate(actions):
        if isinstance(action, PlaceOrder):
            order = Order(f"{agent_id}-{cycle_index}-{n}", agent_id, action.market_id, action.side,
                          action.qty, action.max_price, action.reasoning)
            fills += _place_order(state, order, ctx, cycle_index, now)
        elif isinstance(action, NoOp):
            continue
        else:
            result = _run_tool(state, agent_id, action, now, cycle_index)
            state.pending_tools[agent_id].append(result)
            state.log.append(EventKind.NOTE, cycle_index, {"op": result.tool, **result.to_dict()}, agent_id)
    return fills


def _place_order(state: ArenaState, order: Order, ctx: CycleContext, cycle_index: int, now: datetime) -> int:
    account = state.accounts[order.agent_id]
    market = state.universe.by_id.get(order.market_id)
    quote = state.quotes.get(order.market_id)
    verdict = validate_order(account, order, quote, market, ctx.portfolio.account_value,
                             state.config.risk, now)
    price = quote.ask(order.side) if quote is not None else None
    verdict_seq = _log_verdict(state, order, verdict, price, cycle_index)
    if not verdict.accepted:
        return 0

    report = state.venue.execute_market_order(order, quote)
    if report.status is ExecStatus.PARTIAL_FILL:
        # A smaller fill nets fewer pairs, so the netting credit can shrink more than the cost.
        partial = Order(order.order_id, order.agent_id, order.market_id, order.side, report.filled_qty,
                        order.max_price)
        recheck = check_solvency(account, partial, report.fill_price, report.fee)
        if not recheck.accepted:
            verdict_seq = _log_verdict(state, order, recheck, price, cycle_index)
            return 0
    state.log.append(EventKind.EXECUTION, cycle_index, {
        **report.to_dict(), "market_id": order.market_id, "side": Side(order.side).value,
        "requested_qty": order.qty, "verdict_seq": verdict_seq,
    }, order.agent_id)
    if report.filled_qty == 0:
        return 0

    cash_before = account.cash
    change = account.apply_fill(order.market_id, order.side, report.filled_qty, report.fill_price,
                                report.fee, now)
    account.check_invariants()
    state.first_fills[order.agent_id].append((order.market_id, Side(order.side)))
    _record_delta(state, order.agent_id, cycle_index, "fill", order.market_id, cash_before, change,
                  order.order_id)
    return 1


def _log_verdict(state: ArenaState, order: Order, verdict: RiskVerdict, price: int | None, cycle_index: int) -> int:
    return state.log.append(EventKind.VERDICT, cycle_index, {
        "order_id": order.order_id,
        "market_id": order.market_id,
        "side": Side(order.side).value,
        "qty": order.qty,
        "max_price": order.max_price,
        "price": price,
        "reasoning": order.reasoning,
        **verdict.to_dict(),
    }, order.agent_id)


def _run_tool(state: ArenaState, agent_id: str, action: AgentAction, now: datetime, cycle_index: int) -> ToolResult:
    if isinstance(action, Research):
        request = {"query": action.query}
        return ToolResult("research", request, tuple(state.research.search(action.query, cycle_index)))
    if isinstance(action, Discover):
        request = {"query": action.query.to_dict(), "quality": action.quality.to_dict()}
        try:
            ids = discover(state.universe.markets, state.history, action.query, action.quality, now)
        except DiscoveryError as exc:
            return ToolResult("discover", request, (), str(exc))
        return ToolResult("discover", request, tuple(ids))
    assert isinstance(action, NoteAction)
    store = state.knowledge
    request = {"op": action.op, "key": action.key, "query": action.query}
    try:
        if action.op == "search":
            return ToolResult("note", request, tuple(store.search_notes(agent_id, action.query)))
        if action.op == "put":
            note = store.put_note(agent_id, action.key, action.body)
        elif action.op == "edit":
            note = store.edit_note(agent_id, action.key, action.body)
        elif action.op == "belief":
            note = store.put_belief(agent_id, action.key, action.body)
        else:
            note = store.put_plan(agent_id, action.key, action.body)
    except (NoteLimitError, KeyError) as exc:
        return ToolResult("note", request, (), str(exc))
    return ToolResult("note", request, (note,))


def _snapshot(state: ArenaState, agent_id: str, cycle_index: int, now: datetime, fills: int, duration_ms: int) -> None:
    account = state.accounts[agent_id]
    valuation = value_account(account, state.quotes, now)
    usage = getattr(state.agents[agent_id], "usage", None) or {}
    snap = CycleSnapshot(
        agent_id=agent_id,
        cycle_index=cycle_index,
        as_of=now,
        account_value=valuation.value,
        cash=account.cash,
        unrealized_pnl=valuation.value - account.starting_capital - account.realized_pnl_total,
        realized_pnl_total=account.realized_pnl_total,
        prompt_tokens=usage.get("prompt_tokens", 0),
        completion_tokens=usage.get("completion_tokens", 0),
        reasoning_tokens=usage.get("reasoning_tokens", 0),
        cycle_duration=duration_ms,
        trades_this_cycle=fills,
    )
    state.snapshots[agent_id].append(snap)
    state.log.append(EventKind.SNAPSHOT, cycle_index, {
        **snap.to_dict(), "stale": list(valuation.stale), "unquoted": list(valuation.unquoted),
    }, agent_id)


# -- driver --------------------------------------------------------------------


def finalize(state: ArenaState) -> RunResult:
    markets: Mapping[str, MarketSpec] = state.universe.by_id
    reports = {
        aid: compute_report(aid, state.snapshots[aid], state.trades[aid], markets,
                            state.accounts[aid].starting_capital)
        for aid in state.agent_ids
    }
    return RunResult(
        config=state.config,
        snapshots={aid: list(state.snapshots[aid]) for aid in state.agent_ids},
        reports=reports,
        trades={aid: list(state.trades[aid]) for aid in state.agent_ids},
        log=state.log,
        accounts=state.accounts,
        universe=state.universe,
        first_fills={aid: list(state.first_fills[aid]) for aid in state.agent_ids},
    )


def run_arena(
    config: RunConfig,
    log_path: str | Path | None = None,
    *,
    log: EventLog | None = None,
    universe: Universe | None = None,
) -> RunResult:
    """Run ``config`` to completion; deterministic for a fixed config and code version."""
    if log is None:
        log = EventLog(log_path)
    try:
        state = init_state(config, log, universe)
        for k in range(config.n_cycles):
            run_cycle(state, k)
        return finalize(state)
    finally:
        log.close()
