"""Daily aggregation of hourly estimates and tenor interpolation.

Hourly estimates of the same (day, expiry) are combined into one daily
point.  The default POOL policy screens each hour separately, concatenates
the surviving pairs (each keeps the moneyness computed from its own hour's
index level), averages the hourly futures/index ratios, and solves once on
the pooled set.  The alternative MEDIAN policy estimates every hour on its
own and takes the median of the per-hour rates.  Either way the daily
year fraction is anchored at 12:00 UTC of the valuation day.

A day's points across expiries form a curve in (tau, rate) space, one rate
per leg; tenor lookups interpolate linearly in the rate against the year
fraction and never extrapolate beyond the observed maturity span.
"""
from __future__ import annotations

import math
import statistics
from bisect import bisect_left
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from typing import Literal, Sequence

from .errors import DegenerateSystem, DegenerateX, DuplicateExpiry, EmptyDay, NoConsensus, TooFewPoints
from .estimator import (
    DAYS_PER_YEAR,
    LambdaPolicy,
    SliceRejected,
    ZcEstimate,
    estimate_from_observations,
    estimate_slice,
    solve_closed_form,
    _safe_rate,
)
from .market_data import MarketSlice
from .ransac import RansacConfig, Rejected, spread_screen
from .seeding import mix_seed

Leg = Literal["crypto", "ref"]
AGGREGATION_POLICIES = ("pool", "median")


@dataclass(frozen=True)
class CurvePoint:
    expiry: datetime
    tau_years: float
    rate_crypto: float | None
    rate_ref: float | None
    n_used: int
    hours_pooled: int


@dataclass(frozen=True)
class YieldCurve:
    valuation_date: date
    points: tuple[CurvePoint, ...]          # sorted by tau, strictly increasing
    dropped: tuple[CurvePoint, ...] = ()    # both legs undefined


@dataclass(frozen=True)
class TenorRow:
    valuation_date: date
    rate_crypto: float | None
    rate_ref: float | None
    interpolated: bool


@dataclass(frozen=True)
class TenorSeries:
    tenor_days: float
    rows: tuple[TenorRow, ...]


def noon_anchor(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, 12, 0, tzinfo=timezone.utc)


def _check_same_day_expiry(slices: Sequence[MarketSlice]) -> tuple[date, datetime]:
    day = slices[0].timestamp.date()
    expiry = slices[0].expiry
    for sl in slices:
        if sl.timestamp.date() != day or sl.expiry != expiry:
            raise ValueError("slices must share one UTC day and one expiry")
    return day, expiry


def aggregate_daily(
    slices: Sequence[MarketSlice],
    ransac_config: RansacConfig,
    policy: LambdaPolicy = LambdaPolicy("n", 1.0),
    aggregation: str = "pool",
    days_per_year: float = DAYS_PER_YEAR,
) -> ZcEstimate | SliceRejected:
    """Combine one (day, expiry)'s hourly slices into a daily estimate.

    Raises EmptyDay when no hour survives screening (or the input is
    empty); solver-level failures come back as SliceRejected.
    """
    if aggregation not in AGGREGATION_POLICIES:
        raise ValueError(f"unknown aggregation policy {aggregation!r}")
    if not slices:
        raise EmptyDay("no slices supplied")
    day, expiry = _check_same_day_expiry(slices)
    ordered = sorted(slices, key=lambda s: s.timestamp)
    tau = (expiry - noon_anchor(day)).total_seconds() / 86400.0 / days_per_year

    if aggregation == "median":
        return _aggregate_median(ordered, ransac_config, policy, tau, days_per_year)
    return _aggregate_pool(ordered, ransac_config, policy, tau)


def _aggregate_pool(
    ordered: Sequence[MarketSlice],
    ransac_config: RansacConfig,
    policy: LambdaPolicy,
    tau: float,
) -> ZcEstimate | SliceRejected:
    pooled = []
    ratios = []
    slopes = []
    intercepts = []
    inliers = 0
    hours_rejected = 0
    arb = False
    for sl in ordered:
        cfg = replace(
            ransac_config, seed=mix_seed(ransac_config.seed, sl.timestamp, sl.expiry)
        )
        try:
            outcome = spread_screen(sl.observations, cfg)
        except (TooFewPoints, NoConsensus, DegenerateX):
            hours_rejected += 1
            continue
        if isinstance(outcome, Rejected):
            hours_rejected += 1
            continue
        pooled.extend(outcome.observations)
        if sl.futures_ratio is not None:
            ratios.append(sl.futures_ratio)
        slopes.append(outcome.result.slope)
        intercepts.append(outcome.result.intercept)
        inliers += outcome.result.n_inliers
        arb = arb or outcome.arbitrage_warning

    hours_pooled = len(slopes)
    if hours_pooled == 0:
        raise EmptyDay(f"all {len(ordered)} hourly slices screened out")

    flags = ["pool"]
    ratio = math.fsum(ratios) / len(ratios) if ratios else None
    if ratio is None:
        lam = 0.0
        flags.append("no_futures")
    else:
        lam = policy.resolve(len(pooled))
    inp = estimate_from_observations(pooled, ratio, lam)
    try:
        alpha, beta, det = solve_closed_form(inp)
    except DegenerateSystem:
        return SliceRejected(
            reason="degenerate system",
            screen_slope=math.fsum(slopes) / hours_pooled,
            screen_intercept=math.fsum(intercepts) / hours_pooled,
        )
    rate_crypto = _safe_rate(alpha, tau)
    rate_ref = _safe_rate(beta, tau)
    if rate_crypto is None:
        flags.append("neg_zc_crypto")
    if rate_ref is None:
        flags.append("neg_zc_ref")
    if arb:
        flags.append("arb_warning")
    return ZcEstimate(
        zc_crypto=alpha,
        zc_ref=beta,
        determinant=det,
        n_used=len(pooled),
        lambda_used=lam,
        tau_years=tau,
        rate_crypto=rate_crypto,
        rate_ref=rate_ref,
        futures_ratio=ratio,
        screen_slope=math.fsum(slopes) / hours_pooled,
        screen_intercept=math.fsum(intercepts) / hours_pooled,
        inlier_count=inliers,
        arbitrage_warning=arb,
        hours_pooled=hours_pooled,
        hours_rejected=hours_rejected,
        flags=tuple(flags),
    )


def _aggregate_median(
    ordered: Sequence[MarketSlice],
    ransac_config: RansacConfig,
    policy: LambdaPolicy,
    tau: float,
    days_per_year: float,
) -> ZcEstimate | SliceRejected:
    hourly: list[ZcEstimate] = []
    hours_rejected = 0
    for sl in ordered:
        est = estimate_slice(sl, ransac_config, policy, days_per_year)
        if isinstance(est, SliceRejected):
            hours_rejected += 1
        else:
            hourly.append(est)
    if not hourly:
        raise EmptyDay(f"all {len(ordered)} hourly slices screened out")

    flags = ["median"]
    crypto_rates = [e.rate_crypto for e in hourly if e.rate_crypto is not None]
    ref_rates = [e.rate_ref for e in hourly if e.rate_ref is not None]
    rate_crypto = statistics.median(crypto_rates) if crypto_rates else None
    rate_ref = statistics.median(ref_rates) if ref_rates else None
    if rate_crypto is None:
        flags.append("neg_zc_crypto")
        zc_crypto = statistics.median([e.zc_crypto for e in hourly])
    else:
        zc_crypto = math.exp(-rate_crypto * tau)
    if rate_ref is None:
        flags.append("neg_zc_ref")
        zc_ref = statistics.median([e.zc_ref for e in hourly])
    else:
        zc_ref = math.exp(-rate_ref * tau)
    arb = any(e.arbitrage_warning for e in hourly)
    if arb:
        flags.append("arb_warning")
    ratios = [e.futures_ratio for e in hourly if e.futures_ratio is not None]
    if not ratios:
        flags.append("no_futures")
    return ZcEstimate(
        zc_crypto=zc_crypto,
        zc_ref=zc_ref,
        determinant=statistics.median([e.determinant for e in hourly]),
        n_used=sum(e.n_used for e in hourly),
        lambda_used=statistics.median([e.lambda_used for e in hourly]),
        tau_years=tau,
        rate_crypto=rate_crypto,
        rate_ref=rate_ref,
        futures_ratio=math.fsum(ratios) / len(ratios) if ratios else None,
        screen_slope=statistics.median([e.screen_slope for e in hourly]),
        screen_intercept=statistics.median([e.screen_intercept for e in hourly]),
        inlier_count=sum(e.inlier_count or 0 for e in hourly),
        arbitrage_warning=arb,
        hours_pooled=len(hourly),
        hours_rejected=hours_rejected,
        flags=tuple(flags),
    )


def build_curve(
    valuation_date: date,
    estimates: Sequence[tuple[datetime, ZcEstimate]],
) -> YieldCurve:
    """Assemble one day's per-expiry estimates into a curve.

    Points are sorted by year fraction.  A point with both leg rates
    undefined cannot sit on any curve; it is parked on the ``dropped``
    sidecar rather than discarded silently.
    """
    seen: set[datetime] = set()
    points = []
    dropped = []
    for expiry, est in estimates:
        if expiry in seen:
            raise DuplicateExpiry(f"duplicate expiry {expiry.isoformat()}")
        seen.add(expiry)
        point = CurvePoint(
            expiry=expiry,
            tau_years=est.tau_years,
            rate_crypto=est.rate_crypto,
            rate_ref=est.rate_ref,
            n_used=est.n_used,
            hours_pooled=est.hours_pooled,
        )
        if point.rate_crypto is None and point.rate_ref is None:
            dropped.append(point)
        else:
            points.append(point)
    points.sort(key=lambda p: p.tau_years)
    dropped.sort(key=lambda p: p.tau_years)
    return YieldCurve(valuation_date, tuple(points), tuple(dropped))


def interpolate_tenor(
    curve: YieldCurve,
    tenor_days: float,
    leg: Leg,
    days_per_year: float = DAYS_PER_YEAR,
) -> float | None:
    """Rate at a fixed tenor, linear in (tau, rate); None when out of span.

    Only points where the requested leg has a defined rate act as knots.
    Exact at knots; never extrapolates.
    """
    if leg not in ("crypto", "ref"):
        raise ValueError(f"unknown leg {leg!r}")
    knots = [
        (p.tau_years, p.rate_crypto if leg == "crypto" else p.rate_ref)
        for p in curve.points
        if (p.rate_crypto if leg == "crypto" else p.rate_ref) is not None
    ]
    if not knots:
        return None
    target = tenor_days / days_per_year
    taus = [k[0] for k in knots]
    rates = [k[1] for k in knots]
    i = bisect_left(taus, target)
    if i < len(taus) and taus[i] == target:
        return rates[i]
    if i == 0 or i == len(taus):
        return None
    w = (target - taus[i - 1]) / (taus[i] - taus[i - 1])
    return rates[i - 1] + w * (rates[i] - rates[i - 1])


def build_tenor_series(
    curves: Sequence[YieldCurve],
    tenors: Sequence[float],
    days_per_year: float = DAYS_PER_YEAR,
) -> list[TenorSeries]:
    """Fixed-tenor rate series across days, one series per requested tenor.

    Days where a tenor falls outside the curve's span on both legs are
    omitted from that tenor's series.
    """
    ordered = sorted(curves, key=lambda c: c.valuation_date)
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.valuation_date == cur.valuation_date:
            raise ValueError(f"duplicate valuation date {cur.valuation_date}")
    series = []
    for tenor in tenors:
        rows = []
        for curve in ordered:
            rc = interpolate_tenor(curve, tenor, "crypto", days_per_year)
            rr = interpolate_tenor(curve, tenor, "ref", days_per_year)
            if rc is None and rr is None:
                continue
            target = tenor / days_per_year
            at_knot = any(p.tau_years == target for p in curve.points)
            rows.append(TenorRow(curve.valuation_date, rc, rr, not at_knot))
        series.append(TenorSeries(tenor_days=tenor, rows=tuple(rows)))
    return series
