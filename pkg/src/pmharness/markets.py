"""Binary markets, top-of-book quotes, and the seeded synthetic market universe."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .units import ONE_DOLLAR, SHARE

UNIVERSE_FORMAT_VERSION = 1


class Category(str, Enum):
    FINANCIAL = "Financial"
    CRYPTO = "Crypto"
    WEATHER = "Weather"
    POLITICS = "Politics"
    ENTERTAINMENT = "Entertainment"
    SPORTS = "Sports"
    META_AI = "MetaAI"


class VenueMode(str, Enum):
    WHOLE_SHARE = "WholeShare"
    FRACTIONAL_SHARE = "FractionalShare"


class Side(str, Enum):
    YES = "YES"
    NO = "NO"

    @property
    def opposite(self) -> Side:
        return Side.NO if self is Side.YES else Side.YES


class Outcome(str, Enum):
    YES = "YES"
    NO = "NO"
    VOID = "VOID"


# Curated series used to label synthetic markets, grouped by category.
CURATED_SERIES: dict[Category, tuple[str, ...]] = {
    Category.FINANCIAL: (
        "KXINX", "KXNASDAQ100U", "KXEURUSDH", "KXFEDCOMBO", "KXCPIYOY", "KXAAAGASW", "KXU3",
    ),
    Category.CRYPTO: ("KXBTCD", "KXETH", "KXXRPD", "KXSHIBAD"),
    Category.WEATHER: ("KXHIGHNY", "KXHIGHMIA", "KXLOWTDEN", "KXDCSNOWM", "KXHMONTH"),
    Category.POLITICS: (
        "KXGREENLAND", "KXIMPEACH", "KXUSAEXPANDTERRITORY", "KXTRUMPSAY", "KXTRUMPSAYMONTH",
    ),
    Category.ENTERTAINMENT: ("KXNETFLIXRANKSHOW", "KXOSCARACTO", "KXGRAMSOTY"),
    Category.SPORTS: ("KXSB", "KXNFLSBMVP", "KXNBA"),
    Category.META_AI: ("KXTOPMODEL", "KXLAYOFFSYINFO"),
}

_TITLE_TEMPLATES: dict[Category, tuple[str, ...]] = {
    Category.FINANCIAL: (
        "Will the S&P 500 close above {n} today",
        "Will the Nasdaq 100 finish the week above {n}",
        "Will EUR/USD trade above 1.{n} at the hourly close",
        "Will CPI inflation print above {d}.{d} percent",
        "Will the national average gas price exceed 3.{n} dollars",
    ),
    Category.CRYPTO: (
        "Will Bitcoin close above {n}00 dollars",
        "Will Ethereum trade above {n} dollars at noon",
        "Will XRP finish the day above {d}.{d} dollars",
    ),
    Category.WEATHER: (
        "Will the high temperature in New York exceed {t} degrees",
        "Will the high temperature in Miami exceed {t} degrees",
        "Will the low temperature in Denver fall below {t} degrees",
        "Will Washington DC record snow this month",
    ),
    Category.POLITICS: (
        "Will Congress pass the {w} bill this month",
        "Will the president mention {w} in a speech this week",
        "Will a territory expansion announcement happen before {w}",
    ),
    Category.ENTERTAINMENT: (
        "Will {w} rank first on the Netflix top ten",
        "Will {w} win the award for best actor",
        "Will {w} win song of the year",
    ),
    Category.SPORTS: (
        "Will {w} win the championship",
        "Will {w} be named finals MVP",
    ),
    Category.META_AI: (
        "Will {w} top the model leaderboard this week",
        "Will a major AI lab announce layoffs before {w}",
    ),
}

_WORDS = (
    "alpha", "bravo", "delta", "falcon", "harbor", "meridian", "orion", "summit", "vector",
    "zephyr", "atlas", "beacon", "cobalt", "ember", "granite",
)


def _check_price(name: str, value: int) -> None:
    if not 0 <= value <= ONE_DOLLAR:
        raise ValueError(f"{name}={value} outside [0, {ONE_DOLLAR}]")


def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class MarketSpec:
    market_id: str
    series_id: str
    category: Category
    title: str
    settlement_rule: str
    listed_at: datetime
    expiry: datetime
    venue_mode: VenueMode = VenueMode.WHOLE_SHARE
    tick: int = 10_000
    true_prob: float | None = None  # hidden; never shown to agents

    def __post_init__(self) -> None:
        if not self.market_id:
            raise ValueError("market_id is required")
        if self.expiry <= self.listed_at:
            raise ValueError(f"{self.market_id}: expiry must be after listing time")
        if self.tick <= 0 or ONE_DOLLAR % self.tick:
            raise ValueError(f"{self.market_id}: tick {self.tick} must divide {ONE_DOLLAR}")
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))
        if not isinstance(self.venue_mode, VenueMode):
            object.__setattr__(self, "venue_mode", VenueMode(self.venue_mode))
        if self.true_prob is not None and not 0.0 <= self.true_prob <= 1.0:
            raise ValueError(f"{self.market_id}: true_prob must be in [0, 1]")

    def public_dict(self) -> dict:
        """Agent-visible view: everything except the hidden probability."""
        return {
            "market_id": self.market_id,
            "series_id": self.series_id,
            "category": self.category.value,
            "title": self.title,
            "settlement_rule": self.settlement_rule,
            "listed_at": format_ts(self.listed_at),
            "expiry": format_ts(self.expiry),
            "venue_mode": self.venue_mode.value,
            "tick": self.tick,
        }

    def to_dict(self) -> dict:
        d = self.public_dict()
        d["true_prob"] = self.true_prob
        return d

    @classmethod
    def from_dict(cls, d: dict) -> MarketSpec:
        return cls(
            market_id=d["market_id"],
            series_id=d["series_id"],
            category=Category(d["category"]),
            title=d["title"],
            settlement_rule=d["settlement_rule"],
            listed_at=parse_ts(d["listed_at"]),
            expiry=parse_ts(d["expiry"]),
            venue_mode=VenueMode(d["venue_mode"]),
            tick=d["tick"],
            true_prob=d.get("true_prob"),
        )


@dataclass(frozen=True)
class QuoteTop:
    """Top of book for both sides of a binary market, in micro-dollars.

    ``yes_bid_size`` and ``yes_ask_size`` are displayed milli-shares.  A NO buyer
    trades against the YES bid, so the size available at ``no_ask`` is
    ``yes_bid_size``.
    """

    market_id: str
    yes_bid: int
    yes_ask: int
    no_bid: int
    no_ask: int
    yes_bid_size: int = 0
    yes_ask_size: int = 0
    last_price: int | None = None
    volume: int = 0
    as_of: datetime | None = None

    def __post_init__(self) -> None:
        for name in ("yes_bid", "yes_ask", "no_bid", "no_ask"):
            _check_price(name, getattr(self, name))
        if self.yes_bid > self.yes_ask:
            raise ValueError(f"{self.market_id}: yes_bid {self.yes_bid} > yes_ask {self.yes_ask}")
        if self.no_bid > self.no_ask:
            raise ValueError(f"{self.market_id}: no_bid {self.no_bid} > no_ask {self.no_ask}")
        if self.yes_bid_size < 0 or self.yes_ask_size < 0 or self.volume < 0:
            raise ValueError(f"{self.market_id}: sizes and volume must be non-negative")

    def bid(self, side: Side) -> int:
        return self.yes_bid if side is Side.YES else self.no_bid

    def ask(self, side: Side) -> int:
        return self.yes_ask if side is Side.YES else self.no_ask

    def ask_size(self, side: Side) -> int:
        return self.yes_ask_size if side is Side.YES else self.yes_bid_size

    @property
    def mid2(self) -> int:
        """Twice the YES mid-price (kept integral)."""
        return self.yes_bid + self.yes_ask

    def to_dict(self) -> dict:
        d = asdict(self)
        d["as_of"] = format_ts(self.as_of) if self.as_of else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> QuoteTop:
        d = dict(d)
        d["as_of"] = parse_ts(d["as_of"]) if d.get("as_of") else None
        return cls(**d)


@dataclass(frozen=True)
class SettlementOutcome:
    market_id: str
    outcome: Outcome
    settled_at: datetime

    def to_dict(self) -> dict:
        return {"market_id": self.market_id, "outcome": self.outcome.value,
                "settled_at": format_ts(self.settled_at)}

    @classmethod
    def from_dict(cls, d: dict) -> SettlementOutcome:
        return cls(d["market_id"], Outcome(d["outcome"]), parse_ts(d["settled_at"]))


def derive_complement(
    market_id: str,
    yes_bid: int,
    yes_ask: int,
    *,
    yes_bid_size: int = 0,
    yes_ask_size: int = 0,
    last_price: int | None = None,
    volume: int = 0,
    as_of: datetime | None = None,
) -> QuoteTop:
    """Build a full two-sided quote from the YES book alone."""
    _check_price("yes_bid", yes_bid)
    _check_price("yes_ask", yes_ask)
    if yes_bid > yes_ask:
        raise ValueError(f"{market_id}: yes_bid {yes_bid} > yes_ask {yes_ask}")
    return QuoteTop(
        market_id=market_id,
        yes_bid=yes_bid,
        yes_ask=yes_ask,
        no_bid=ONE_DOLLAR - yes_ask,
        no_ask=ONE_DOLLAR - yes_bid,
        yes_bid_size=yes_bid_size,
        yes_ask_size=yes_ask_size,
        last_price=last_price,
        volume=volume,
        as_of=as_of,
    )


@dataclass(frozen=True)
class UniverseConfig:
    """Knobs for the synthetic market process.

    ``reversion`` is the fraction of the gap to the fair price closed per cycle;
    ``price_noise`` is the per-cycle standard deviation of the mid in dollars.
    Depth is a seeded fraction of the cycle's traded volume; ``empty_book_prob``
    blanks a side's displayed size entirely.
    """

    start: datetime = datetime(2026, 1, 12, 14, 0, tzinfo=timezone.utc)
    cycle_minutes: int = 30
    prob_low: float = 0.05
    prob_high: float = 0.95
    initial_noise: float = 0.05
    price_noise: float = 0.01
    reversion: float = 0.1
    half_spread_ticks: int = 1
    tick: int = 10_000
    void_prob: float = 0.0
    venue_mode: VenueMode = VenueMode.WHOLE_SHARE
    volume_rate: float = 50.0  # mean shares traded per cycle
    depth_fraction: float = 1.0
    empty_book_prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob_low <= self.prob_high <= 1.0:
            raise ValueError("need 0 <= prob_low <= prob_high <= 1")
        if self.tick <= 0 or ONE_DOLLAR % self.tick:
            raise ValueError(f"tick {self.tick} must divide {ONE_DOLLAR}")
        if self.half_spread_ticks < 0:
            raise ValueError("half_spread_ticks must be >= 0")
        if 2 * (1 + self.half_spread_ticks) * self.tick > ONE_DOLLAR:
            raise ValueError("spread too wide for the price range")
        if not 0.0 <= self.reversion <= 1.0:
            raise ValueError("reversion must be in [0, 1]")
        if self.cycle_minutes <= 0:
            raise ValueError("cycle_minutes must be positive")
        for name in ("void_prob", "empty_book_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not isinstance(self.venue_mode, VenueMode):
            object.__setattr__(self, "venue_mode", VenueMode(self.venue_mode))

    @property
    def cycle_interval(self) -> timedelta:
        return timedelta(minutes=self.cycle_minutes)

    def cycle_time(self, cycle_index: int) -> datetime:
        return self.start + cycle_index * self.cycle_interval

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = format_ts(self.start)
        d["venue_mode"] = self.venue_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> UniverseConfig:
        d = dict(d)
        if isinstance(d.get("start"), str):
            d["start"] = parse_ts(d["start"])
        return cls(**d)


@dataclass
class Universe:
    seed: int
    horizon: int
    config: UniverseConfig
    markets: list[MarketSpec] = field(default_factory=list)
    initial_quotes: dict[str, QuoteTop] = field(default_factory=dict)
    outcomes: dict[str, SettlementOutcome] = field(default_factory=dict)
    _by_id: dict[str, MarketSpec] = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def by_id(self) -> dict[str, MarketSpec]:
        if len(self._by_id) != len(self.markets):
            self._by_id = {m.market_id: m for m in self.markets}
        return self._by_id


def _price_bounds(cfg: UniverseConfig) -> tuple[int, int]:
    half = cfg.half_spread_ticks * cfg.tick
    return cfg.tick + half, ONE_DOLLAR - cfg.tick - half


def _snap(value: float, tick: int) -> int:
    return int(round(value / tick)) * tick


def _quote_from_mid(
    market_id: str, mid: int, cfg: UniverseConfig, *, bid_size: int, ask_size: int,
    volume: int, as_of: datetime,
) -> QuoteTop:
    half = cfg.half_spread_ticks * cfg.tick
    return derive_complement(
        market_id, mid - half, mid + half,
        yes_bid_size=bid_size, yes_ask_size=ask_size,
        last_price=mid, volume=volume, as_of=as_of,
    )


def _depth(rng: np.random.Generator, cfg: UniverseConfig, volume_inc: int) -> tuple[int, int]:
    sizes = []
    for u, blank in zip(rng.random(2), rng.random(2)):
        if blank < cfg.empty_book_prob:
            sizes.append(0)
        else:
            shares = int(cfg.depth_fraction * (volume_inc // SHARE) * u)
            sizes.append(shares * SHARE)
    return sizes[0], sizes[1]


def synthetic_universe(
    seed: int, n_markets: int, horizon: int, config: UniverseConfig | None = None
) -> Universe:
    """Generate ``n_markets`` markets expiring within ``horizon`` cycles.

    Every market draws a fair probability uniformly from
    ``[prob_low, prob_high]``, an expiry cycle in ``[1, horizon]`` and an outcome
    that is YES with that probability.  Pure in ``(seed, n_markets, horizon, config)``.
    """
    if n_markets < 1:
        raise ValueError("n_markets must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    cfg = config or UniverseConfig()
    rng = np.random.default_rng([seed, 0])
    categories = list(CURATED_SERIES)
    lo, hi = _price_bounds(cfg)
    universe = Universe(seed=seed, horizon=horizon, config=cfg)
    for i in range(n_markets):
        category = categories[int(rng.integers(len(categories)))]
        series = CURATED_SERIES[category]
        series_id = series[int(rng.integers(len(series)))]
        template = _TITLE_TEMPLATES[category][int(rng.integers(len(_TITLE_TEMPLATES[category])))]
        title = template.format(
            n=int(rng.integers(10, 99)), d=int(rng.integers(0, 9)),
            t=int(rng.integers(10, 99)), w=_WORDS[int(rng.integers(len(_WORDS)))],
        )
        true_prob = float(rng.uniform(cfg.prob_low, cfg.prob_high))
        expiry_cycle = int(rng.integers(1, horizon + 1))
        u_outcome, u_void = rng.random(2)
        mid0 = float(true_prob + rng.normal(0.0, cfg.initial_noise))
        volume0 = int(rng.poisson(cfg.volume_rate)) * SHARE
        bid_size, ask_size = _depth(rng, cfg, volume0)

        market_id = f"{series_id}-{i:05d}"
        expiry = cfg.cycle_time(expiry_cycle)
        market = MarketSpec(
            market_id=market_id,
            series_id=series_id,
            category=category,
            title=title,
            settlement_rule=f"Resolves YES if the event in '{title}' occurs by {format_ts(expiry)}; otherwise NO.",
            listed_at=cfg.start,
            expiry=expiry,
            venue_mode=cfg.venue_mode,
            tick=cfg.tick,
            true_prob=true_prob,
        )
        if u_void < cfg.void_prob:
            outcome = Outcome.VOID
        else:
            outcome = Outcome.YES if u_outcome < true_prob else Outcome.NO
        mid = min(max(_snap(mid0 * ONE_DOLLAR, cfg.tick), lo), hi)
        universe.markets.append(market)
        universe.initial_quotes[market_id] = _quote_from_mid(
            market_id, mid, cfg, bid_size=bid_size, ask_size=ask_size,
            volume=volume0, as_of=cfg.start,
        )
        universe.outcomes[market_id] = SettlementOutcome(market_id, outcome, expiry)
    return universe


def step_quotes(
    universe: Universe, quotes: dict[str, QuoteTop], cycle_index: int, seed: int
) -> dict[str, QuoteTop]:
    """Advance every live quote one cycle along a clamped mean-reverting walk.

    Quotes for markets at or past expiry are returned unchanged.  The noise for
    a cycle comes from a generator keyed on ``(seed, cycle_index)`` and is drawn
    in universe order, so the result is a pure function of the inputs.
    """
    if cycle_index < 0:
        raise ValueError(f"cycle_index {cycle_index} must be >= 0")
    cfg = universe.config
    now = cfg.cycle_time(cycle_index)
    lo, hi = _price_bounds(cfg)
    rng = np.random.default_rng([seed, 1, cycle_index])
    n = len(universe.markets)
    shocks = rng.normal(0.0, 1.0, n)
    volumes = rng.poisson(cfg.volume_rate, n)
    out: dict[str, QuoteTop] = {}
    for i, market in enumerate(universe.markets):
        q = quotes[market.market_id]
        if now >= market.expiry:
            out[market.market_id] = q
            continue
        # Depth draws are keyed per market so they don't shift with universe order.
        depth_rng = np.random.default_rng([seed, 2, cycle_index, zlib.crc32(market.market_id.encode())])
        mid = q.mid2 // 2
        target = market.true_prob * ONE_DOLLAR if market.true_prob is not None else mid
        move = cfg.reversion * (target - mid) + cfg.price_noise * ONE_DOLLAR * shocks[i]
        new_mid = min(max(mid + _snap(move, cfg.tick), lo), hi)
        volume_inc = int(volumes[i]) * SHARE
        bid_size, ask_size = _depth(depth_rng, cfg, volume_inc)
        out[market.market_id] = _quote_from_mid(
            market.market_id, new_mid, cfg, bid_size=bid_size, ask_size=ask_size,
            volume=q.volume + volume_inc, as_of=now,
        )
    return out


def empty_universe(horizon: int = 1, config: UniverseConfig | None = None, seed: int = 0) -> Universe:
    return Universe(seed=seed, horizon=horizon, config=config or UniverseConfig())


def universe_records(universe: Universe) -> Iterable[dict]:
    yield {
        "kind": "universe",
        "version": UNIVERSE_FORMAT_VERSION,
        "seed": universe.seed,
        "horizon": universe.horizon,
        "config": universe.config.to_dict(),
    }
    for m in universe.markets:
        yield {
            "kind": "market",
            "market": m.to_dict(),
            "quote": universe.initial_quotes[m.market_id].to_dict(),
            "outcome": universe.outcomes[m.market_id].to_dict(),
        }


def save_universe(universe: Universe, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in universe_records(universe):
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_universe(path: str | Path) -> Universe:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty universe file")
    header = json.loads(lines[0])
    if header.get("kind") != "universe":
        raise ValueError(f"{path}: first record must be the universe header")
    if header.get("version") != UNIVERSE_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported universe version {header.get('version')}")
    universe = Universe(
        seed=header["seed"], horizon=header["horizon"],
        config=UniverseConfig.from_dict(header["config"]),
    )
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed record") from exc
        market = MarketSpec.from_dict(rec["market"])
        universe.markets.append(market)
        universe.initial_quotes[market.market_id] = QuoteTop.from_dict(rec["quote"])
        universe.outcomes[market.market_id] = SettlementOutcome.from_dict(rec["outcome"])
    return universe


def with_venue_mode(universe: Universe, mode: VenueMode) -> Universe:
    """Copy of ``universe`` with every market relabelled to ``mode``."""
    return Universe(
        seed=universe.seed,
        horizon=universe.horizon,
        config=replace(universe.config, venue_mode=mode),
        markets=[replace(m, venue_mode=mode) for m in universe.markets],
        initial_quotes=dict(universe.initial_quotes),
        outcomes=dict(universe.outcomes),
    )
