"""Synthetic option markets with known discount curves, plus a grid oracle.

The generator manufactures hourly books whose mids encode chosen zero-coupon
curves exactly:

    zc_ref = exp(-r_ref * tau)          zc_crypto = exp(-r_crypto * tau)
    F = S * zc_crypto / zc_ref          y(m) = zc_crypto - m * zc_ref + eps

Put mids follow a positive skeleton s(m) and call mids are y(m) + s(m), so
call mid - put mid reproduces y.  The skeleton is a discounted intrinsic
floor plus a small premium,

    s(m) = 0.02 * (1 + m) + max(0, m * zc_ref - zc_crypto)
         + 0.03 * zc_crypto * min(m, 1)

which keeps both leg mids positive for any moneyness and any rate pair
(the call mid equals the premium terms wherever the floor binds, and
exceeds them elsewhere).

Bid/ask pairs are placed symmetrically around the mids with the total
spread h chosen so the cross-spread relation of the screening step,

    put_ask - call_bid = zeta + xi * (call_ask - put_bid),

holds exactly for clean points.  Writing p, c for the mids and hp, hc for
the half-spreads, the two sides are y' = (p - c) + (hp + hc) = -y + h and
x' = (c - p) + (hc + hp) = y + h, so the relation pins only the total
h = hp + hc:

    -y + h = zeta + xi * (y + h)   =>   h = (zeta + (1 + xi) * y) / (1 - xi)

and the put/call split of h is a free parameter.  Planted outliers displace
the ask of one leg, which moves one screened coordinate and not the other,
giving a controlled vertical offset from the spread line.

`brute_force_minimize` is a coarse-to-fine grid search over the estimation
objective, used as an independent oracle for the closed-form solver.  It
only ever evaluates the objective (via its expanded quadratic coefficients,
in extended precision) and recenters/shrinks a search box around the best
grid point, expanding sideways when the best point lands on the current
box's edge.  Hitting the edge of the outermost box raises BoxTooSmall.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta, timezone
from typing import Iterator, Sequence

import numpy as np

from .errors import BoxTooSmall, InfeasibleSkeleton, MissingFuturesRatio
from .estimator import DAYS_PER_YEAR, EstimatorInput
from .market_data import FuturesQuote, IndexPoint, OptionQuote, Side
from .seeding import mix_seed

CLEAN = "clean"
OUTLIER = "outlier"


@dataclass(frozen=True)
class TruthSpec:
    """Everything that defines a synthetic market.

    Rate curves are piecewise linear in the year fraction with flat
    extrapolation outside the knots; knots are (days, rate) pairs.  At each
    timestamp quotes are emitted for the nearest ``active_count`` expiries
    at least ``active_min_days`` away (0 means all expiries).  Strikes are
    fixed per expiry on its first active hour as round(m * S) over the
    moneyness grid.
    """
    start: datetime
    hours: int
    spot0: float
    expiries: tuple[datetime, ...]
    moneyness_grid: tuple[float, ...]
    rate_ref_knots: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    rate_crypto_knots: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    noise_sd: float = 0.0
    spread_intercept: float = 0.02     # zeta
    spread_slope: float = -1.0         # xi
    half_spread_split: float = 0.5     # put leg's share of the total spread
    futures_rel_spread: float = 1e-4
    outlier_fraction: float = 0.0
    outlier_magnitude: float = 0.25
    seed: int = 0
    spot_drift: float = 0.0            # log drift per year
    spot_vol: float = 0.0              # log vol per year
    active_count: int = 0
    active_min_days: float = 30.0
    size_lots: float = 10.0

    def __post_init__(self) -> None:
        if self.hours < 1:
            raise ValueError("hours must be at least 1")
        if self.spot0 <= 0.0:
            raise ValueError("spot0 must be positive")
        if not self.expiries:
            raise ValueError("need at least one expiry")
        if list(self.expiries) != sorted(set(self.expiries)):
            raise ValueError("expiries must be strictly increasing")
        if not self.moneyness_grid or any(m <= 0 for m in self.moneyness_grid):
            raise ValueError("moneyness grid must be positive")
        if self.spread_slope >= 1.0:
            raise ValueError("spread slope must be below 1")
        if not 0.0 <= self.half_spread_split <= 1.0:
            raise ValueError("half_spread_split must lie in [0, 1]")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.noise_sd < 0.0 or self.outlier_magnitude < 0.0:
            raise ValueError("noise_sd and outlier_magnitude must be non-negative")

    def rate_ref(self, tau_years: float) -> float:
        return _interp_knots(self.rate_ref_knots, tau_years)

    def rate_crypto(self, tau_years: float) -> float:
        return _interp_knots(self.rate_crypto_knots, tau_years)

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(hours=i) for i in range(self.hours)]


def _interp_knots(knots: tuple[tuple[float, float], ...], tau_years: float) -> float:
    days = [k[0] / DAYS_PER_YEAR for k in knots]
    rates = [k[1] for k in knots]
    return float(np.interp(tau_years, days, rates))


@dataclass(frozen=True)
class ExcludedStrike:
    timestamp: datetime
    expiry: datetime
    strike: float
    reason: str


@dataclass(frozen=True)
class LabeledDataset:
    spec: TruthSpec
    records: tuple[OptionQuote | FuturesQuote | IndexPoint, ...]
    labels: dict          # (timestamp, expiry, strike) -> CLEAN | OUTLIER per pair
    excluded: tuple[ExcludedStrike, ...]

    def option_rows(self) -> list[tuple[int, OptionQuote]]:
        """(1-based data row number, quote) for every option record."""
        return [
            (i, rec)
            for i, rec in enumerate(self.records, start=1)
            if isinstance(rec, OptionQuote)
        ]


def spot_path(spec: TruthSpec) -> np.ndarray:
    """Hourly spot levels, a seeded geometric walk (flat when vol/drift are 0)."""
    rng = np.random.default_rng(mix_seed(spec.seed, "spot"))
    dt = 1.0 / (24.0 * DAYS_PER_YEAR)
    shocks = rng.standard_normal(spec.hours - 1) if spec.hours > 1 else np.empty(0)
    increments = spec.spot_drift * dt + spec.spot_vol * math.sqrt(dt) * shocks
    log_path = np.concatenate([[0.0], np.cumsum(increments)])
    return spec.spot0 * np.exp(log_path)


def _expiry_strikes(spec: TruthSpec, spots: np.ndarray) -> dict[datetime, np.ndarray]:
    """Fix each expiry's strikes at its first active hour."""
    timestamps = spec.timestamps()
    strikes: dict[datetime, np.ndarray] = {}
    for expiry in spec.expiries:
        for i, ts in enumerate(timestamps):
            if _is_active(spec, ts, expiry):
                grid = np.unique(np.maximum(1.0, np.round(
                    np.asarray(spec.moneyness_grid) * spots[i]
                )))
                strikes[expiry] = grid
                break
    return strikes


def _is_active(spec: TruthSpec, ts: datetime, expiry: datetime) -> bool:
    if expiry <= ts:
        return False
    return (expiry - ts) >= timedelta(days=spec.active_min_days)


def _active_expiries(spec: TruthSpec, ts: datetime) -> list[datetime]:
    active = [T for T in spec.expiries if _is_active(spec, ts, T)]
    if spec.active_count > 0:
        active = active[: spec.active_count]
    return active


def _displace(quote: OptionQuote, magnitude: float) -> OptionQuote:
    return replace(quote, ask=quote.ask + magnitude)


def iter_market(
    spec: TruthSpec,
) -> Iterator[tuple[list, list[tuple[tuple, str]], list[ExcludedStrike]]]:
    """Yield per-timestamp (records, pair labels, exclusions), streaming.

    Record order within a timestamp: index point, futures by expiry, then
    options by (expiry, strike) with the call before the put.  Labels are
    ((timestamp, expiry, strike), label) per emitted pair.
    """
    spots = spot_path(spec)
    strikes_by_expiry = _expiry_strikes(spec, spots)
    zeta, xi = spec.spread_intercept, spec.spread_slope
    split = spec.half_spread_split

    for i, ts in enumerate(spec.timestamps()):
        spot = float(spots[i])
        records: list = [IndexPoint(ts, spot)]
        labels: list[tuple[tuple, str]] = []
        exclusions: list[ExcludedStrike] = []
        for expiry in _active_expiries(spec, ts):
            tau = (expiry - ts).total_seconds() / 86400.0 / DAYS_PER_YEAR
            zc_ref = math.exp(-spec.rate_ref(tau) * tau)
            zc_crypto = math.exp(-spec.rate_crypto(tau) * tau)
            fut = spot * zc_crypto / zc_ref
            half = fut * spec.futures_rel_spread / 2.0
            records.append(FuturesQuote(ts, expiry, fut - half, fut + half))

            strikes = strikes_by_expiry[expiry]
            m = strikes / spot
            rng = np.random.default_rng(mix_seed(spec.seed, "slice", ts, expiry))
            eps = rng.normal(0.0, spec.noise_sd, len(strikes))
            y = zc_crypto - m * zc_ref + eps
            skel = (
                0.02 * (1.0 + m)
                + np.maximum(0.0, m * zc_ref - zc_crypto)
                + 0.03 * zc_crypto * np.minimum(m, 1.0)
            )
            put_mid = skel
            call_mid = y + skel
            h = (zeta + (1.0 + xi) * y) / (1.0 - xi)
            hp = split * h
            hc = (1.0 - split) * h

            quotes: list[tuple[float, OptionQuote, OptionQuote]] = []
            for k in range(len(strikes)):
                strike = float(strikes[k])
                if call_mid[k] <= 0.0 or put_mid[k] <= 0.0:
                    exclusions.append(ExcludedStrike(ts, expiry, strike, "non-positive mid"))
                    continue
                if h[k] < 0.0:
                    exclusions.append(ExcludedStrike(ts, expiry, strike, "negative spread"))
                    continue
                call = OptionQuote(
                    ts, expiry, Side.CALL, strike,
                    float(call_mid[k] - hc[k]), float(call_mid[k] + hc[k]),
                    spec.size_lots, spec.size_lots,
                )
                put = OptionQuote(
                    ts, expiry, Side.PUT, strike,
                    float(put_mid[k] - hp[k]), float(put_mid[k] + hp[k]),
                    spec.size_lots, spec.size_lots,
                )
                if call.bid < 0.0 or put.bid < 0.0:
                    exclusions.append(ExcludedStrike(ts, expiry, strike, "negative bid"))
                    continue
                quotes.append((strike, call, put))
            if not quotes:
                raise InfeasibleSkeleton(
                    f"no strike feasible at {ts.isoformat()} / {expiry.isoformat()}"
                )

            flagged = _pick_outliers(
                spec.seed, ts, expiry, len(quotes),
                spec.outlier_fraction, spec.outlier_magnitude,
            )
            for k, (strike, call, put) in enumerate(quotes):
                if k in flagged:
                    if flagged[k] == 0:
                        put = _displace(put, spec.outlier_magnitude)
                    else:
                        call = _displace(call, spec.outlier_magnitude)
                    labels.append(((ts, expiry, strike), OUTLIER))
                else:
                    labels.append(((ts, expiry, strike), CLEAN))
                records.append(call)
                records.append(put)
        yield records, labels, exclusions


def _pick_outliers(
    seed: int, ts: datetime, expiry: datetime, n: int,
    fraction: float, magnitude: float,
) -> dict[int, int]:
    """Choose which pairs to displace and which leg (0 put, 1 call)."""
    count = int(n * fraction + 0.5)
    if count == 0 or magnitude == 0.0:
        return {}
    rng = np.random.default_rng(mix_seed(seed, "outliers", ts, expiry))
    chosen = rng.choice(n, size=count, replace=False)
    legs = rng.integers(0, 2, size=count)
    return {int(k): int(leg) for k, leg in zip(chosen, legs)}


def generate_market(spec: TruthSpec) -> LabeledDataset:
    """Materialise the full synthetic dataset in memory."""
    records: list = []
    labels: dict = {}
    excluded: list[ExcludedStrike] = []
    for recs, labs, excl in iter_market(spec):
        records.extend(recs)
        labels.update(labs)
        excluded.extend(excl)
    return LabeledDataset(
        spec=spec, records=tuple(records), labels=labels, excluded=tuple(excluded)
    )


def inject_outliers(
    dataset: LabeledDataset, fraction: float, magnitude: float, seed: int
) -> LabeledDataset:
    """Displace a seeded fraction of pairs per slice; relabel accordingly.

    Per slice, round(n * fraction) pairs are chosen and the ask of one leg
    (coin flip) is raised by ``magnitude``.  The seed is mixed with each
    slice's (timestamp, expiry), so the choice is independent of slice
    processing order.  Fraction 0 returns an identical dataset.
    """
    pairs: dict[tuple, dict[float, list[int]]] = {}
    for pos, rec in enumerate(dataset.records):
        if isinstance(rec, OptionQuote):
            pairs.setdefault((rec.timestamp, rec.expiry), {}).setdefault(
                rec.strike, []
            ).append(pos)

    records = list(dataset.records)
    labels = dict(dataset.labels)
    for key in sorted(pairs):
        ts, expiry = key
        strikes = sorted(pairs[key])
        flagged = _pick_outliers(seed, ts, expiry, len(strikes), fraction, magnitude)
        for k, leg in flagged.items():
            strike = strikes[k]
            for pos in pairs[key][strike]:
                quote = records[pos]
                if (leg == 0) == (quote.side is Side.PUT):
                    records[pos] = _displace(quote, magnitude)
            labels[(ts, expiry, strike)] = OUTLIER
    return replace(dataset, records=tuple(records), labels=labels)


def truth_rows(
    dataset: LabeledDataset,
) -> list[tuple[date, datetime, float, float]]:
    """True (date, expiry, rate_ref, rate_crypto) per day and expiry.

    The year fraction is anchored at 12:00 UTC like the daily estimates.
    """
    spec = dataset.spec
    keys: set[tuple[date, datetime]] = set()
    for rec in dataset.records:
        if isinstance(rec, OptionQuote):
            keys.add((rec.timestamp.date(), rec.expiry))
    rows = []
    for day, expiry in sorted(keys):
        anchor = datetime(day.year, day.month, day.day, 12, 0, tzinfo=timezone.utc)
        tau = (expiry - anchor).total_seconds() / 86400.0 / DAYS_PER_YEAR
        rows.append((day, expiry, spec.rate_ref(tau), spec.rate_crypto(tau)))
    return rows


# --- independent grid-search oracle ---------------------------------------

@dataclass(frozen=True)
class GridConfig:
    points_per_axis: int = 121
    shrink: float = 2.0
    final_step: float = 1e-9
    initial_halfwidth: tuple[float, float] | None = None
    max_rounds: int = 100000


@dataclass(frozen=True)
class BruteForceResult:
    alpha: float
    beta: float
    f_value: float


def _quadratic_coefficients(inp: EstimatorInput) -> tuple[float, ...]:
    if inp.lam > 0.0 and inp.futures_ratio is None:
        raise MissingFuturesRatio("lambda > 0 requires a futures/index ratio")
    c = inp.futures_ratio if inp.lam > 0.0 else 0.0
    n = float(inp.n)
    sm = math.fsum(inp.moneyness)
    sm2 = math.fsum(mi * mi for mi in inp.moneyness)
    sy = math.fsum(inp.y)
    smy = math.fsum(mi * yi for mi, yi in zip(inp.moneyness, inp.y))
    syy = math.fsum(yi * yi for yi in inp.y)
    return n, sm, sm2, sy, smy, syy, inp.lam, c


def _default_box(inp: EstimatorInput) -> tuple[float, float]:
    m = np.asarray(inp.moneyness, dtype=float)
    y = np.asarray(inp.y, dtype=float)
    y_scale = max(1.0, float(np.max(np.abs(y))))
    m_centered = m - m.mean()
    smm = float(np.dot(m_centered, m_centered))
    y_centered = y - y.mean()
    syy = float(np.dot(y_centered, y_centered))
    cs_bound = math.sqrt(syy / smm) if smm > 0.0 else 0.0
    half_beta = 4.0 * (cs_bound + 1.0) + 100.0 * (1.0 + y_scale)
    half_alpha = (1.0 + float(np.max(np.abs(m)))) * half_beta + y_scale + 100.0
    return half_alpha, half_beta


def brute_force_minimize(
    inp: EstimatorInput, grid: GridConfig = GridConfig()
) -> BruteForceResult:
    """Minimise the estimation objective by recentering grid search.

    The search runs in sheared coordinates u = alpha - c*beta, v = beta
    (identical to (alpha, beta) when lambda = 0, where c is taken as 0):
    there the penalty term is lambda * u**2, axis-aligned, so the grid
    stays well conditioned even at extreme lambda where the (alpha, beta)
    valley degenerates into a razor-thin diagonal.

    Evaluates the objective on an N x N grid in extended precision, moves
    the box onto the best point, and shrinks it whenever the best point is
    interior, until the grid step is at or below grid.final_step on both
    axes.  A best point on the edge of the outermost box raises
    BoxTooSmall.  Returns the best grid point visited.
    """
    n, sm, sm2, sy, smy, syy, lam, c = (
        np.longdouble(v) for v in _quadratic_coefficients(inp)
    )

    def evaluate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        a = u + c * v
        b = v
        f = (
            syy - 2.0 * a * sy + 2.0 * b * smy
            + a * a * n - 2.0 * a * b * sm + b * b * sm2
        )
        if lam > 0.0:
            f = f + lam * u * u
        return f

    if grid.initial_halfwidth is not None:
        halves = grid.initial_halfwidth
    else:
        half_alpha, half_beta = _default_box(inp)
        # cover every (alpha, beta) of the native box: |u| <= |a| + |c||b|
        halves = (half_alpha + abs(float(c)) * half_beta, half_beta)
    width = [np.longdouble(halves[0]), np.longdouble(halves[1])]
    center = [np.longdouble(0.0), np.longdouble(0.0)]
    outer_lo = [center[k] - width[k] for k in range(2)]
    outer_hi = [center[k] + width[k] for k in range(2)]
    n_pts = grid.points_per_axis
    offsets = np.linspace(-1.0, 1.0, n_pts).astype(np.longdouble)

    for _ in range(grid.max_rounds):
        u_axis = center[0] + width[0] * offsets
        v_axis = center[1] + width[1] * offsets
        f = evaluate(u_axis[:, None], v_axis[None, :])
        flat = int(np.argmin(f))
        iu, iv = divmod(flat, n_pts)
        best = (u_axis[iu], v_axis[iv])
        on_edge = iu in (0, n_pts - 1) or iv in (0, n_pts - 1)

        if on_edge:
            for k, idx in ((0, iu), (1, iv)):
                at_lo = idx == 0 and center[k] - width[k] <= outer_lo[k]
                at_hi = idx == n_pts - 1 and center[k] + width[k] >= outer_hi[k]
                if at_lo or at_hi:
                    raise BoxTooSmall(
                        "optimum at search box boundary"
                        f" (alpha={float(best[0] + c * best[1])!r},"
                        f" beta={float(best[1])!r})"
                    )
            # walk: recenter on the best point, clipped inside the outer box
            for k in range(2):
                center[k] = min(max(best[k], outer_lo[k] + width[k]),
                                outer_hi[k] - width[k])
            continue

        step = [2.0 * width[k] / (n_pts - 1) for k in range(2)]
        center = [best[0], best[1]]
        if max(step) <= grid.final_step:
            return BruteForceResult(
                alpha=float(best[0] + c * best[1]),
                beta=float(best[1]),
                f_value=float(evaluate(np.array(best[0]), np.array(best[1]))),
            )
        width = [w / np.longdouble(grid.shrink) for w in width]
        for k in range(2):
            center[k] = min(max(center[k], outer_lo[k] + width[k]),
                            outer_hi[k] - width[k])
    raise RuntimeError("grid search failed to converge")
