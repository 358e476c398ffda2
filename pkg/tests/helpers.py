"""Shared builders for the test suite."""
from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

from impliedcurves.market_data import build_slices, MarketSlice
from impliedcurves.synth import TruthSpec, generate_market

UTC = timezone.utc

START = datetime(2024, 1, 1, 0, 0, tzinfo=UTC)


def flat_spec(
    r_ref: float,
    r_crypto: float,
    days_to_expiry: float = 91.0,
    n_strikes: int = 30,
    m_lo: float = 0.5,
    m_hi: float = 2.0,
    hours: int = 1,
    start: datetime = START,
    **overrides,
) -> TruthSpec:
    """A one-expiry market with flat rate curves."""
    step = (m_hi - m_lo) / (n_strikes - 1) if n_strikes > 1 else 0.0
    grid = tuple(m_lo + k * step for k in range(n_strikes))
    return TruthSpec(
        start=start,
        hours=hours,
        spot0=overrides.pop("spot0", 60000.0),
        expiries=(start + timedelta(days=days_to_expiry),),
        moneyness_grid=overrides.pop("moneyness_grid", grid),
        rate_ref_knots=overrides.pop("rate_ref_knots", ((0.0, r_ref),)),
        rate_crypto_knots=overrides.pop("rate_crypto_knots", ((0.0, r_crypto),)),
        **overrides,
    )


def one_slice(spec: TruthSpec) -> MarketSlice:
    """Generate a spec's market and return its single assembled slice."""
    dataset = generate_market(spec)
    slices, issues = build_slices(dataset.records)
    assert not issues, issues
    assert len(slices) == spec.hours * len(spec.expiries)
    return slices[0]


def truth_zc(rate: float, tau_years: float) -> float:
    return math.exp(-rate * tau_years)
