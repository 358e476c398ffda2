"""Robust screening of call-put pairs via a sampled consensus line fit.

For a matched pair at one strike, the cost of lifting the put offer while
hitting the call bid should mirror the cost of the opposite round trip:
plotting y = put_ask - call_bid against x = call_ask - put_bid across
strikes of a slice gives a line with slope near -1 whose intercept is the
aggregate bid-ask cost.  Points far off that line are stale or erroneous
quotes; a slice whose fitted slope strays too far from -1 is screened out
entirely.  A negative fitted intercept would mean the round trip pays you,
an arbitrage signal worth flagging but not by itself grounds for removal.

The consensus fit samples two points per iteration, draws the exact line
through them, and classifies the rest by squared vertical residual.  The
best iteration wins by inlier count, ties broken by smaller inlier residual
sum, then by iteration order; the final line is an ordinary least squares
refit on the winning inlier set.  Everything is driven by a seeded
generator, so results depend only on the points, their order, and the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateX, NoConsensus, TooFewPoints
from .market_data import PairedObservation


@dataclass(frozen=True)
class SpreadPoint:
    x: float   # call_ask - put_bid
    y: float   # put_ask - call_bid


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float


@dataclass(frozen=True)
class RansacConfig:
    residual_sq_threshold: float = 0.004
    iterations: int = 200
    min_inliers: int | None = None   # None: max(4, ceil(n / 2))
    slope_tolerance: float = 0.10
    seed: int = 0

    def resolve_min_inliers(self, n: int) -> int:
        if self.min_inliers is not None:
            return self.min_inliers
        return max(4, math.ceil(0.5 * n))


@dataclass(frozen=True)
class RansacResult:
    slope: float
    intercept: float
    inlier_flags: tuple[bool, ...]
    best_iteration: int
    refit_on_inliers: bool = True   # final line is an OLS refit on the consensus set

    @property
    def n_inliers(self) -> int:
        return sum(self.inlier_flags)


@dataclass(frozen=True)
class Kept:
    """Screen passed; observations are the surviving (inlier) pairs."""
    observations: tuple[PairedObservation, ...]
    result: RansacResult
    arbitrage_warning: bool = False


@dataclass(frozen=True)
class Rejected:
    """Screen failed for the whole slice."""
    reason: str
    result: RansacResult


ScreenOutcome = Kept | Rejected


def fit_line_ols(points: Sequence[SpreadPoint]) -> LineFit:
    """Ordinary least squares line y = intercept + slope * x."""
    n = len(points)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    xbar = math.fsum(p.x for p in points) / n
    ybar = math.fsum(p.y for p in points) / n
    sxx = math.fsum((p.x - xbar) ** 2 for p in points)
    if sxx == 0.0:
        raise DegenerateX("all x values coincide")
    sxy = math.fsum((p.x - xbar) * (p.y - ybar) for p in points)
    slope = sxy / sxx
    return LineFit(slope=slope, intercept=ybar - slope * xbar)


def ransac_line(points: Sequence[SpreadPoint], config: RansacConfig) -> RansacResult:
    """Consensus line fit with a fixed iteration budget.

    Runs config.iterations sampling rounds regardless of intermediate fit
    quality.  Iterations that draw two points with equal x carry no candidate
    line and count zero inliers.  Raises NoConsensus when the best iteration
    has fewer inliers than the minimum; reported flags are classified under
    the refit line, so every flagged inlier sits within the threshold of the
    model actually returned.
    """
    n = len(points)
    min_inliers = config.resolve_min_inliers(n)
    if n < max(2, min_inliers):
        raise TooFewPoints(f"{n} points < required {max(2, min_inliers)}")

    x = np.array([p.x for p in points])
    y = np.array([p.y for p in points])
    rng = np.random.default_rng(config.seed)
    iters = config.iterations
    i = rng.integers(0, n, size=iters)
    j = rng.integers(0, n - 1, size=iters)
    j = j + (j >= i)          # two distinct indices per iteration

    dx = x[j] - x[i]
    valid = dx != 0.0
    slope_c = np.where(valid, (y[j] - y[i]) / np.where(valid, dx, 1.0), np.nan)
    inter_c = y[i] - slope_c * x[i]

    resid_sq = (y[None, :] - inter_c[:, None] - slope_c[:, None] * x[None, :]) ** 2
    is_in = resid_sq <= config.residual_sq_threshold      # nan rows all False
    counts = is_in.sum(axis=1)
    rss = np.where(is_in, resid_sq, 0.0).sum(axis=1)

    # lexsort: last key is primary
    order = np.lexsort((np.arange(iters), rss, -counts))
    best = int(order[0])
    if int(counts[best]) < min_inliers:
        raise NoConsensus(
            f"best sample has {int(counts[best])} inliers < {min_inliers}"
        )

    candidate = [points[k] for k in np.flatnonzero(is_in[best])]
    fit = fit_line_ols(candidate)
    final_sq = (y - fit.intercept - fit.slope * x) ** 2
    flags = tuple(bool(v) for v in final_sq <= config.residual_sq_threshold)
    return RansacResult(
        slope=fit.slope, intercept=fit.intercept,
        inlier_flags=flags, best_iteration=best,
    )


def spread_points(observations: Iterable[PairedObservation]) -> list[SpreadPoint]:
    return [
        SpreadPoint(x=o.call_ask - o.put_bid, y=o.put_ask - o.call_bid)
        for o in observations
    ]


def spread_screen(
    observations: Sequence[PairedObservation], config: RansacConfig
) -> ScreenOutcome:
    """Trim outlier pairs and accept or reject the slice on the fitted slope.

    Kept outcomes carry the inlier observations in the original order.
    The slice is rejected when |slope + 1| exceeds config.slope_tolerance.
    A negative intercept is flagged, not rejected.
    """
    result = ransac_line(spread_points(observations), config)
    if abs(result.slope + 1.0) > config.slope_tolerance:
        return Rejected(reason="slope deviation", result=result)
    survivors = tuple(
        obs for obs, flag in zip(observations, result.inlier_flags) if flag
    )
    return Kept(
        observations=survivors,
        result=result,
        arbitrage_warning=result.intercept < 0.0,
    )
