"""Offline stand-in for the web-search tool.

Queries are matched against market ids and title tokens; each hit returns a
snippet carrying a noisy probability read-out, seeded by cycle and market so
the same query in the same cycle always returns the same text.
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .discovery import tokens
from .markets import Universe


@dataclass(frozen=True)
class ResearchSnippet:
    market_id: str
    text: str
    signal: float | None = None

    def to_dict(self) -> dict:
        return {"market_id": self.market_id, "text": self.text, "signal": self.signal}

    @classmethod
    def from_dict(cls, d: dict) -> ResearchSnippet:
        return cls(d["market_id"], d["text"], d.get("signal"))


class ResearchProvider(ABC):
    @abstractmethod
    def search(self, query: str, cycle_index: int) -> list[ResearchSnippet]: ...


class NullResearch(ResearchProvider):
    def search(self, query: str, cycle_index: int) -> list[ResearchSnippet]:
        return []


class CannedResearch(ResearchProvider):
    def __init__(self, universe: Universe, seed: int, noise: float = 0.1, max_results: int = 3):
        self.universe = universe
        self.seed = seed
        self.noise = noise
        self.max_results = max_results
        self._title_tokens = {m.market_id: tokens(m.title) for m in universe.markets}

    def _matches(self, query: str) -> list[str]:
        by_id = self.universe.by_id
        if query in by_id:
            return [query]
        wanted = tokens(query)
        if not wanted:
            return []
        scored = sorted(
            (-len(wanted & toks), mid) for mid, toks in self._title_tokens.items() if wanted & toks
        )
        return [mid for _, mid in scored[: self.max_results]]

    def search(self, query: str, cycle_index: int) -> list[ResearchSnippet]:
        out = []
        for market_id in self._matches(query):
            market = self.universe.by_id[market_id]
            rng = np.random.default_rng(
                [self.seed, 3, cycle_index, zlib.crc32(market_id.encode())]
            )
            base = market.true_prob if market.true_prob is not None else 0.5
            signal = round(float(np.clip(base + rng.normal(0.0, self.noise), 0.01, 0.99)), 4)
            text = f"Analysts following '{market.title}' put the chance near {signal:.0%}."
            out.append(ResearchSnippet(market_id, text, signal))
        return out
