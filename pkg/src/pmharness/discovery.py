"""Market discovery over a universe: keyword, tag, volume, volatility, trending, expiry."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .markets import Category, MarketSpec, QuoteTop

TRENDING_WINDOW = timedelta(hours=2)
VOLATILITY_WINDOW = timedelta(hours=24)

_TOKEN = re.compile(r"[a-z0-9]+")


class DiscoveryError(ValueError):
    pass


class QueryKind(str, Enum):
    KEYWORD = "Keyword"
    TAG = "Tag"
    VOLUME_TOP = "VolumeTop"
    VOLATILITY_TOP = "VolatilityTop"
    TRENDING = "Trending"
    EXPIRING_WITHIN = "ExpiringWithin"


_NEEDS_WINDOW = (QueryKind.TRENDING, QueryKind.EXPIRING_WITHIN)


@dataclass(frozen=True)
class DiscoveryQuery:
    kind: QueryKind
    keyword: str | None = None
    tag: Category | None = None
    window: timedelta | None = None
    limit: int = 10

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", QueryKind(self.kind))
            if self.tag is not None:
                object.__setattr__(self, "tag", Category(self.tag))
        except ValueError as exc:
            raise DiscoveryError(str(exc)) from None
        if self.limit < 1:
            raise DiscoveryError("limit must be >= 1")
        if (self.kind is QueryKind.KEYWORD) != (self.keyword is not None):
            raise DiscoveryError("keyword is required for, and only for, Keyword queries")
        if self.kind is QueryKind.KEYWORD and not tokens(self.keyword):
            raise DiscoveryError("keyword has no searchable tokens")
        if (self.kind is QueryKind.TAG) != (self.tag is not None):
            raise DiscoveryError("tag is required for, and only for, Tag queries")
        if (self.kind in _NEEDS_WINDOW) != (self.window is not None):
            raise DiscoveryError("window is required for, and only for, Trending/ExpiringWithin queries")
        if self.window is not None and self.window <= timedelta(0):
            raise DiscoveryError("window must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "keyword": self.keyword,
            "tag": self.tag.value if self.tag else None,
            "window_minutes": self.window.total_seconds() / 60 if self.window else None,
            "limit": self.limit,
        }


@dataclass(frozen=True)
class QualityFilter:
    """Thresholds every discovery result must meet.

    ``min_liquidity`` applies to the thinner side of the displayed book;
    ``min_price_move`` to the absolute mid change over the trending window.
    """

    min_liquidity: int = 0
    min_volume: int = 0
    min_price_move: int = 0

    def __post_init__(self) -> None:
        if min(self.min_liquidity, self.min_volume, self.min_price_move) < 0:
            raise DiscoveryError("quality thresholds must be >= 0")

    def to_dict(self) -> dict:
        return {"min_liquidity": self.min_liquidity, "min_volume": self.min_volume,
                "min_price_move": self.min_price_move}


def tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def liquidity(quote: QuoteTop) -> int:
    return min(quote.yes_bid_size, quote.yes_ask_size)


def price_move(history: Sequence[QuoteTop], window: timedelta) -> Fraction:
    """Absolute YES mid change between the latest quote and the one ``window`` earlier.

    The reference is the latest quote stamped at or before ``latest - window``;
    with no quote that old, the oldest available quote is used.
    """
    latest = history[-1]
    ref = history[0]
    if latest.as_of is not None:
        cutoff = latest.as_of - window
        for q in history:
            if q.as_of is not None and q.as_of <= cutoff:
                ref = q
            else:
                break
    return Fraction(abs(latest.mid2 - ref.mid2), 2)


def discover(
    markets: Iterable[MarketSpec],
    quotes_history: Mapping[str, Sequence[QuoteTop]],
    query: DiscoveryQuery,
    quality: QualityFilter | None = None,
    now: datetime | None = None,
) -> list[str]:
    """Ranked market ids for ``query`` among open markets passing ``quality``.

    ``quotes_history`` maps market id to quotes in time order.  ``now`` defaults
    to the newest quote timestamp; markets expiring at or before it are skipped.
    """
    quality = quality or QualityFilter()
    markets = [m for m in markets if quotes_history.get(m.market_id)]
    if now is None:
        stamps = [quotes_history[m.market_id][-1].as_of for m in markets]
        stamps = [s for s in stamps if s is not None]
        now = max(stamps) if stamps else None
    trend_window = query.window if query.kind is QueryKind.TRENDING else TRENDING_WINDOW
    query_tokens = tokens(query.keyword) if query.kind is QueryKind.KEYWORD else set()

    scored: list[tuple[tuple, str]] = []
    for m in markets:
        if now is not None and m.expiry <= now:
            continue
        history = quotes_history[m.market_id]
        latest = history[-1]
        if liquidity(latest) < quality.min_liquidity or latest.volume < quality.min_volume:
            continue
        if price_move(history, trend_window) < quality.min_price_move:
            continue

        if query.kind is QueryKind.KEYWORD:
            score = len(query_tokens & tokens(m.title))
            if score == 0:
                continue
            key = (-score, -latest.volume, m.market_id)
        elif query.kind is QueryKind.TAG:
            if m.category is not query.tag:
                continue
            key = (-latest.volume, m.market_id)
        elif query.kind is QueryKind.VOLUME_TOP:
            key = (-latest.volume, m.market_id)
        elif query.kind is QueryKind.VOLATILITY_TOP:
            key = (-price_move(history, VOLATILITY_WINDOW), m.market_id)
        elif query.kind is QueryKind.TRENDING:
            key = (-price_move(history, query.window), m.market_id)
        else:
            if now is not None and m.expiry > now + query.window:
                continue
            key = (m.expiry, m.market_id)
        scored.append((key, m.market_id))
    scored.sort()
    return [mid for _, mid in scored[: query.limit]]
