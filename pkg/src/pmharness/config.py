"""Run configuration: a single YAML file, validated before anything runs."""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .agents import AGENT_KINDS
from .exchange import ExecutionMode, FeeKind, FeeSchedule, VenueConfig
from .markets import UniverseConfig, VenueMode
from .risk import RiskConfig
from .units import ONE_DOLLAR

CYCLE_MINUTES_RANGE = (15, 45)
LOG_CONTEXT_MODES = ("full", "digest", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"agent_id": self.agent_id, "kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class UniverseSpec:
    """Either a fixture file or generation parameters for a synthetic universe.

    ``horizon`` defaults to one less than the run length so every market
    resolves inside the run.  ``params`` overrides ``UniverseConfig`` fields.
    """

    n_markets: int = 20
    horizon: int | None = None
    fixture: str | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_markets": self.n_markets, "horizon": self.horizon,
                "fixture": self.fixture, "params": dict(self.params)}


@dataclass(frozen=True)
class Windows:
    settlements: int = 10
    nettings: int = 10
    expiry_reminder_cycles: int = 2

    def to_dict(self) -> dict:
        return {"settlements": self.settlements, "nettings": self.nettings,
                "expiry_reminder_cycles": self.expiry_reminder_cycles}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n_cycles: int
    agents: tuple[AgentSpec, ...]
    cycle_minutes: int | None = None
    starting_capital: int = 10_000 * ONE_DOLLAR
    venue: VenueConfig = field(default_factory=VenueConfig)
    concentration_fraction: float = 0.15
    universe: UniverseSpec = field(default_factory=UniverseSpec)
    windows: Windows = field(default_factory=Windows)
    research_noise: float = 0.1
    log_context: str = "full"
    record_durations: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        self.validate()

    @property
    def risk(self) -> RiskConfig:
        return RiskConfig(self.concentration_fraction, self.venue.fee_schedule)

    @property
    def resolved_cycle_minutes(self) -> int:
        """The configured interval, or one drawn from the seed inside the allowed range."""
        if self.cycle_minutes is not None:
            return self.cycle_minutes
        lo, hi = CYCLE_MINUTES_RANGE
        return int(np.random.default_rng([self.seed, 9]).integers(lo, hi + 1))

    @property
    def resolved_horizon(self) -> int:
        if self.universe.horizon is not None:
            return self.universe.horizon
        return max(1, self.n_cycles - 1)

    def universe_config(self) -> UniverseConfig:
        params = dict(self.universe.params)
        params.setdefault("cycle_minutes", self.resolved_cycle_minutes)
        params["venue_mode"] = self.venue.share_rule
        try:
            return UniverseConfig.from_dict(params)
        except TypeError as exc:
            raise ConfigError(f"universe.params: {exc}") from None

    def validate(self) -> None:
        if self.n_cycles < 1:
            raise ConfigError("n_cycles must be >= 1")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        if self.starting_capital <= 0:
            raise ConfigError("starting_capital must be positive")
        if self.cycle_minutes is not None and self.cycle_minutes <= 0:
            raise ConfigError("cycle_minutes must be positive")
        if self.log_context not in LOG_CONTEXT_MODES:
            raise ConfigError(f"log_context must be one of {LOG_CONTEXT_MODES}")
        if self.research_noise < 0:
            raise ConfigError("research_noise must be >= 0")
        if min(self.windows.settlements, self.windows.nettings, self.windows.expiry_reminder_cycles) < 0:
            raise ConfigError("window sizes must be >= 0")
        if self.universe.fixture is None and self.universe.n_markets < 0:
            raise ConfigError("universe.n_markets must be >= 0")
        if self.universe.horizon is not None and self.universe.horizon < 1:
            raise ConfigError("universe.horizon must be >= 1")
        try:
            self.risk
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        seen: set[str] = set()
        for spec in self.agents:
            if not spec.agent_id:
                raise ConfigError("agent_id must be non-empty")
            if spec.agent_id in seen:
                raise ConfigError(f"duplicate agent_id {spec.agent_id!r}")
            seen.add(spec.agent_id)
            cls = AGENT_KINDS.get(spec.kind)
            if cls is None:
                raise ConfigError(f"unknown agent kind {spec.kind!r}; choose from {sorted(AGENT_KINDS)}")
            accepted = set(inspect.signature(cls.__init__).parameters) - {"self", "agent_id", "estimator"}
            unknown = set(spec.params) - accepted
            if unknown:
                raise ConfigError(f"agent {spec.agent_id}: unknown params {sorted(unknown)}")
        if self.universe.fixture is None:
            self.universe_config()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_cycles": self.n_cycles,
            "cycle_minutes": self.resolved_cycle_minutes,
            "starting_capital": str(Decimal(self.starting_capital) / ONE_DOLLAR),
            "agents": [a.to_dict() for a in self.agents],
            "venue": self.venue.to_dict(),
            "concentration_fraction": self.concentration_fraction,
            "universe": self.universe.to_dict(),
            "windows": self.windows.to_dict(),
            "research_noise": self.research_noise,
            "log_context": self.log_context,
            "record_durations": self.record_durations,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
        """Build from a parsed YAML mapping; money is given in dollars."""
        data = dict(raw)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("seed", "n_cycles", "agents"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        try:
            agents = []
            for i, a in enumerate(data["agents"] or []):
                a = dict(a)
                agents.append(AgentSpec(
                    agent_id=str(a.pop("agent_id", a.pop("id", f"agent-{i}"))),
                    kind=a.pop("kind"),
                    params=dict(a.pop("params", {}) or {}),
                ))
                if a:
                    raise ConfigError(f"agents[{i}]: unknown keys {sorted(a)}")
            data["agents"] = agents

            venue = dict(data.get("venue") or {})
            fee = dict(venue.pop("fee_schedule", {}) or {})
            data["venue"] = VenueConfig(
                execution_mode=ExecutionMode(venue.pop("execution_mode", ExecutionMode.PAPER.value)),
                fee_schedule=FeeSchedule(FeeKind(fee.pop("kind", FeeKind.QUADRATIC_TAKER.value)),
                                         float(fee.pop("rate", 0.07))),
                share_rule=VenueMode(venue.pop("share_rule", VenueMode.WHOLE_SHARE.value)),
            )
            if venue or fee:
                raise ConfigError(f"venue: unknown keys {sorted(set(venue) | set(fee))}")

            uni = dict(data.get("universe") or {})
            fixture = uni.get("fixture")
            if fixture is not None and base_dir is not None and not Path(fixture).is_absolute():
                uni["fixture"] = str(base_dir / fixture)
            data["universe"] = UniverseSpec(**uni)
            data["windows"] = Windows(**(data.get("windows") or {}))
            if "starting_capital" in data:
                data["starting_capital"] = int(Decimal(str(data["starting_capital"])) * ONE_DOLLAR)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        return cls(**data)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(raw, base_dir=path.parent)


def with_overrides(config: RunConfig, **changes: Any) -> RunConfig:
    return replace(config, **changes)
