"""Pre-trade gates: share rule, market open, concentration cap and solvency."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from fractions import Fraction

from .exchange import FeeSchedule, Order, compute_fee
from .ledger import Account
from .markets import MarketSpec, QuoteTop, Side, VenueMode
from .units import SHARE, notional, pair_credit


class Decision(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


class RejectReason(str, Enum):
    NONE = "None"
    CONCENTRATION = "Concentration"
    INSOLVENCY = "Insolvency"
    BAD_QUANTITY = "BadQuantity"
    MARKET_CLOSED = "MarketClosed"


@dataclass(frozen=True)
class RiskConfig:
    concentration_fraction: float = 0.15
    fee_schedule: FeeSchedule = field(default_factory=FeeSchedule)

    def __post_init__(self) -> None:
        if not 0 < self.concentration_fraction <= 1:
            raise ValueError("concentration_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {"concentration_fraction": self.concentration_fraction,
                "fee_schedule": self.fee_schedule.to_dict()}


@dataclass(frozen=True)
class RiskVerdict:
    decision: Decision
    reason: RejectReason = RejectReason.NONE
    detail: str = ""

    def __post_init__(self) -> None:
        if (self.reason is RejectReason.NONE) != (self.decision is Decision.ACCEPT):
            raise ValueError("reason must be None exactly when the order is accepted")

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT

    def to_dict(self) -> dict:
        return {"decision": self.decision.value, "reason": self.reason.value, "detail": self.detail}


ACCEPT = RiskVerdict(Decision.ACCEPT)


def _reject(reason: RejectReason, detail: str) -> RiskVerdict:
    return RiskVerdict(Decision.REJECT, reason, detail)


def concentration_cap(account_value: int, cfg: RiskConfig) -> Fraction:
    return Fraction(str(cfg.concentration_fraction)) * account_value


def check_concentration(
    account: Account, order: Order, price: int, account_value: int, cfg: RiskConfig
) -> RiskVerdict:
    """Cap the post-trade cost basis in one market at a fraction of account value.

    Orders that only shrink an opposite position are always allowed; the part
    of an order beyond the offsetting quantity must fit under the cap.
    """
    side = Side(order.side)
    opposite = account.held_qty(order.market_id, side.opposite)
    if 0 < order.qty <= opposite:
        return ACCEPT
    post = account.preview_basis(order.market_id, side, order.qty, price)
    cap = concentration_cap(account_value, cfg)
    if post <= cap:
        return ACCEPT
    return _reject(
        RejectReason.CONCENTRATION,
        f"post-trade basis {post} exceeds cap {float(cap):.0f} "
        f"({cfg.concentration_fraction:g} of {account_value})",
    )


def check_solvency(account: Account, order: Order, price: int, fee: int) -> RiskVerdict:
    """Cash plus any netting payout must cover the order's cost and fee."""
    side = Side(order.side)
    pairs = min(order.qty, account.held_qty(order.market_id, side.opposite))
    credit = pair_credit(pairs)
    need = notional(order.qty, price) + fee
    if account.cash + credit >= need:
        return ACCEPT
    return _reject(RejectReason.INSOLVENCY,
                   f"cash {account.cash} + netting credit {credit} < cost+fee {need}")


def validate_order(
    account: Account,
    order: Order,
    quote: QuoteTop,
    market: MarketSpec | None,
    account_value: int,
    cfg: RiskConfig,
    now: datetime | None = None,
) -> RiskVerdict:
    """Run every gate in order; the first failure wins."""
    if order.qty <= 0:
        return _reject(RejectReason.BAD_QUANTITY, f"qty {order.qty} must be positive")
    if market is not None and market.venue_mode is VenueMode.WHOLE_SHARE and order.qty % SHARE:
        return _reject(RejectReason.BAD_QUANTITY,
                       f"qty {order.qty} milli-shares is not a whole number of shares")
    if market is None:
        return _reject(RejectReason.MARKET_CLOSED, f"unknown market {order.market_id}")
    if (now is not None and now >= market.expiry) or market.market_id in account.settled:
        return _reject(RejectReason.MARKET_CLOSED, f"{market.market_id} expired at {market.expiry}")
    price = quote.ask(Side(order.side))
    verdict = check_concentration(account, order, price, account_value, cfg)
    if not verdict.accepted:
        return verdict
    fee = compute_fee(cfg.fee_schedule, price, order.qty)
    return check_solvency(account, order, price, fee)
