"""Per-agent accounting: fills, weighted-average cost basis, netting and settlement.

All amounts are integer micro-dollars and all quantities integer milli-shares.
Rounding never loses money silently: whenever integer division or averaging
moves the books away from the exact cash flow, the difference is booked to
``Account.dust`` and into ``realized_pnl_total`` so that

    cash + sum(cost_basis) - starting_capital == realized_pnl_total

holds exactly after every operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .markets import Outcome, SettlementOutcome, Side, format_ts, parse_ts
from .units import DEFAULT_STARTING_CAPITAL, ONE_DOLLAR, SHARE, div_half_even, notional, pair_credit


class LedgerError(ValueError):
    """Invalid ledger input."""


class SettlementError(LedgerError):
    """A market was settled twice for the same account."""


class LedgerInvariantError(AssertionError):
    """The books no longer balance; always a harness bug."""


class ExitType(str, Enum):
    NETTING = "Netting"
    SETTLEMENT = "Settlement"


@dataclass
class Position:
    market_id: str
    side: Side
    qty: int
    avg_entry: int
    opened_at: datetime | None = None

    @property
    def cost_basis(self) -> int:
        return notional(self.qty, self.avg_entry)

    def to_dict(self) -> dict:
        return {"market_id": self.market_id, "side": self.side.value, "qty": self.qty,
                "avg_entry": self.avg_entry, "cost_basis": self.cost_basis}


@dataclass(frozen=True)
class ClosedTrade:
    market_id: str
    side: Side  # side of the position that was closed
    exit_type: ExitType
    qty_closed: int
    realized_pnl: int
    entry_price: int
    exit_price: int
    fee: int
    opened_at: datetime | None
    closed_at: datetime | None

    def to_dict(self) -> dict:
        return {
            "market_id": self.market_id,
            "side": self.side.value,
            "exit_type": self.exit_type.value,
            "qty_closed": self.qty_closed,
            "realized_pnl": self.realized_pnl,
            "entry_price": self.entry_price,
            "exit_price": self.exit_price,
            "fee": self.fee,
            "opened_at": format_ts(self.opened_at) if self.opened_at else None,
            "closed_at": format_ts(self.closed_at) if self.closed_at else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClosedTrade:
        return cls(
            market_id=d["market_id"],
            side=Side(d["side"]),
            exit_type=ExitType(d["exit_type"]),
            qty_closed=d["qty_closed"],
            realized_pnl=d["realized_pnl"],
            entry_price=d["entry_price"],
            exit_price=d["exit_price"],
            fee=d["fee"],
            opened_at=parse_ts(d["opened_at"]) if d.get("opened_at") else None,
            closed_at=parse_ts(d["closed_at"]) if d.get("closed_at") else None,
        )


@dataclass(frozen=True)
class CashFlows:
    """Breakdown of one operation's cash movement by cause."""

    fill_cost: int = 0
    fee: int = 0
    netting_credit: int = 0
    settlement_payout: int = 0
    void_refund: int = 0

    @property
    def net(self) -> int:
        return self.netting_credit + self.settlement_payout + self.void_refund - self.fill_cost - self.fee

    def to_dict(self) -> dict:
        return {"fill_cost": self.fill_cost, "fee": self.fee, "netting_credit": self.netting_credit,
                "settlement_payout": self.settlement_payout, "void_refund": self.void_refund}


@dataclass(frozen=True)
class LedgerChange:
    closed: ClosedTrade | None
    flows: CashFlows
    dust: int = 0


def _averaged(pos: Position, qty: int, price: int) -> int:
    return div_half_even(pos.qty * pos.avg_entry + qty * price, pos.qty + qty)


@dataclass
class Account:
    agent_id: str
    starting_capital: int = DEFAULT_STARTING_CAPITAL
    cash: int | None = None
    positions: dict[str, Position] = field(default_factory=dict)
    realized_pnl_total: int = 0
    fees_paid: int = 0
    dust: int = 0
    settled: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.cash is None:
            self.cash = self.starting_capital

    def position(self, market_id: str) -> Position | None:
        return self.positions.get(market_id)

    def held_qty(self, market_id: str, side: Side) -> int:
        pos = self.positions.get(market_id)
        return pos.qty if pos is not None and pos.side is side else 0

    def cost_basis_in_market(self, market_id: str) -> int:
        pos = self.positions.get(market_id)
        return pos.cost_basis if pos is not None else 0

    def total_cost_basis(self) -> int:
        return sum(p.cost_basis for p in self.positions.values())

    def preview_basis(self, market_id: str, side: Side, qty: int, price: int) -> int:
        """Cost basis held in ``market_id`` if this fill were applied; no mutation."""
        pos = self.positions.get(market_id)
        if pos is None:
            return notional(qty, price)
        if pos.side is side:
            total = pos.qty + qty
            return notional(total, _averaged(pos, qty, price))
        if qty > pos.qty:
            return notional(qty - pos.qty, price)
        return notional(pos.qty - qty, pos.avg_entry)

    def apply_fill(
        self, market_id: str, side: Side, qty: int, price: int, fee: int = 0,
        at: datetime | None = None,
    ) -> LedgerChange:
        """Book a bought quantity of ``side`` at ``price``.

        Buying the side opposite an open position nets ``min(held, qty)`` pairs,
        each releasing one dollar, and emits a netting ``ClosedTrade`` whose PnL
        includes this fill's fee.  Buying more of the held side re-averages
        the entry price by quantity (round-half-even).
        """
        if not market_id:
            raise LedgerError("market_id is required")
        if qty <= 0:
            raise LedgerError(f"qty must be positive, got {qty}")
        if not 0 <= price <= ONE_DOLLAR:
            raise LedgerError(f"price {price} outside [0, {ONE_DOLLAR}]")
        if fee < 0:
            raise LedgerError("fee must be non-negative")
        side = Side(side)

        cash_before = self.cash
        basis_before = self.cost_basis_in_market(market_id)
        cost = notional(qty, price)
        self.cash -= cost + fee
        pos = self.positions.get(market_id)
        closed = None
        credit = 0

        if pos is not None and pos.side is not side:
            pairs = min(pos.qty, qty)
            credit = pair_credit(pairs)
            self.cash += credit
            gross = div_half_even(pairs * (ONE_DOLLAR - pos.avg_entry - price), SHARE)
            reported = gross - fee
            closed = ClosedTrade(
                market_id=market_id,
                side=pos.side,
                exit_type=ExitType.NETTING,
                qty_closed=pairs,
                realized_pnl=reported,
                entry_price=pos.avg_entry,
                exit_price=price,
                fee=fee,
                opened_at=pos.opened_at,
                closed_at=at,
            )
            pos.qty -= pairs
            if pos.qty == 0:
                del self.positions[market_id]
            if qty > pairs:
                self.positions[market_id] = Position(market_id, side, qty - pairs, price, at)
        elif pos is not None:
            pos.avg_entry = _averaged(pos, qty, price)
            pos.qty += qty
            reported = -fee
        else:
            self.positions[market_id] = Position(market_id, side, qty, price, at)
            reported = -fee

        moved = (self.cash - cash_before) + (self.cost_basis_in_market(market_id) - basis_before)
        dust = moved - reported
        self.dust += dust
        self.realized_pnl_total += moved
        self.fees_paid += fee
        return LedgerChange(closed, CashFlows(fill_cost=cost, fee=fee, netting_credit=credit), dust)

    def apply_settlement(self, outcome: SettlementOutcome) -> LedgerChange:
        """Pay out (or refund, for VOID) a resolved market and close the position."""
        if outcome.market_id in self.settled:
            raise SettlementError(f"{self.agent_id}: market {outcome.market_id} already settled")
        self.settled.add(outcome.market_id)
        pos = self.positions.pop(outcome.market_id, None)
        if pos is None:
            return LedgerChange(None, CashFlows())

        basis = pos.cost_basis
        if outcome.outcome is Outcome.VOID:
            flows = CashFlows(void_refund=basis)
            exit_price = pos.avg_entry
        elif outcome.outcome.value == pos.side.value:
            flows = CashFlows(settlement_payout=pair_credit(pos.qty))
            exit_price = ONE_DOLLAR
        else:
            flows = CashFlows()
            exit_price = 0
        payout = flows.net
        self.cash += payout
        pnl = payout - basis
        self.realized_pnl_total += pnl
        closed = ClosedTrade(
            market_id=pos.market_id,
            side=pos.side,
            exit_type=ExitType.SETTLEMENT,
            qty_closed=pos.qty,
            realized_pnl=pnl,
            entry_price=pos.avg_entry,
            exit_price=exit_price,
            fee=0,
            opened_at=pos.opened_at,
            closed_at=outcome.settled_at,
        )
        return LedgerChange(closed, flows)

    def check_invariants(self) -> None:
        if self.cash < 0:
            raise LedgerInvariantError(f"{self.agent_id}: negative cash {self.cash}")
        for mid, pos in self.positions.items():
            if pos.market_id != mid or pos.qty <= 0 or not 0 <= pos.avg_entry <= ONE_DOLLAR:
                raise LedgerInvariantError(f"{self.agent_id}: malformed position {pos}")
        lhs = self.cash + self.total_cost_basis() - self.starting_capital
        if lhs != self.realized_pnl_total:
            raise LedgerInvariantError(
                f"{self.agent_id}: books out of balance ({lhs} != {self.realized_pnl_total})"
            )

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "cash": self.cash,
            "starting_capital": self.starting_capital,
            "realized_pnl_total": self.realized_pnl_total,
            "fees_paid": self.fees_paid,
            "dust": self.dust,
            "positions": [self.positions[k].to_dict() for k in sorted(self.positions)],
        }
