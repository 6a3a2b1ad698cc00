from __future__ import annotations

import pytest

from pmharness.markets import UniverseConfig, synthetic_universe


@pytest.fixture
def small_universe():
    return synthetic_universe(7, 20, 10)


@pytest.fixture
def flat_config():
    """Zero-spread, zero-noise universe settings."""
    return UniverseConfig(price_noise=0.0, initial_noise=0.0, half_spread_ticks=0)
