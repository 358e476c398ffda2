"""Weighted least squares estimation of the two implied discount factors.

A call-put pair at strike K replicates a position whose value is linear in
the two zero-coupon prices: with y = call mid - put mid (crypto units) and
m = K / S (moneyness),

    y_i  =  alpha - beta * m_i + noise

where alpha is the crypto-denominated discount factor and beta the
reference-currency one.  The futures price of the same expiry ties the two
legs together, F / S = alpha / beta, which enters as a quadratic penalty
with weight lambda.  The estimate minimises

    f(alpha, beta) = sum_i (y_i - alpha + beta * m_i)^2
                   + lambda * (alpha - beta * F / S)^2

which is an unconstrained convex quadratic with a closed-form solution via
its normal equations.  The penalty vanishes exactly on the carry relation
alpha = beta * F / S, so consistent data is recovered without bias at any
lambda.  With c = F / S and sums over observations:

    P = n + lambda              Q = sum(m) + lambda * c
    R = sum(m^2) + lambda * c^2 d = R * P - Q^2

    alpha = (R * sum(y) - Q * sum(m y)) / d
    beta  = (Q * sum(y) - P * sum(m y)) / d

Rates are continuously compounded on an ACT/365 year fraction:
rate = -log(zc) / tau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import (
    DegenerateSystem,
    DegenerateX,
    MissingFuturesRatio,
    NoConsensus,
    NonPositiveDiscount,
    NonPositiveTenor,
    TooFewPoints,
)
from .market_data import MarketSlice
from .ransac import RansacConfig, Rejected, spread_screen
from .seeding import mix_seed

DAYS_PER_YEAR = 365.0

# d below this fraction of the squared normal-matrix trace counts as singular
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class LambdaPolicy:
    """Penalty weight schedule: a constant, or a multiple of the pair count."""
    kind: str              # "const" | "n"
    coefficient: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("const", "n"):
            raise ValueError(f"unknown lambda policy kind {self.kind!r}")
        if self.coefficient < 0.0:
            raise ValueError("lambda coefficient must be non-negative")

    def resolve(self, n: int) -> float:
        return self.coefficient if self.kind == "const" else self.coefficient * n

    @classmethod
    def parse(cls, text: str) -> "LambdaPolicy":
        """Parse 'n', 'n:<c>', or 'const:<v>'."""
        text = text.strip()
        if text == "n":
            return cls("n", 1.0)
        for kind in ("n", "const"):
            prefix = kind + ":"
            if text.startswith(prefix):
                return cls(kind, float(text[len(prefix):]))
        raise ValueError(f"bad lambda policy {text!r} (expected n or const:<v>)")

    def spell(self) -> str:
        if self.kind == "n" and self.coefficient == 1.0:
            return "n"
        return f"{self.kind}:{self.coefficient!r}"


@dataclass(frozen=True)
class EstimatorInput:
    """One slice's worth of paired observations, ready to solve."""
    moneyness: tuple[float, ...]
    y: tuple[float, ...]
    lam: float = 0.0
    futures_ratio: float | None = None

    def __post_init__(self) -> None:
        if len(self.moneyness) != len(self.y):
            raise ValueError("moneyness and y must have equal length")
        if len(self.y) == 0:
            raise ValueError("need at least one observation")
        if self.lam < 0.0:
            raise ValueError("lambda must be non-negative")

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class ZcEstimate:
    zc_crypto: float            # alpha
    zc_ref: float               # beta
    determinant: float
    n_used: int
    lambda_used: float
    tau_years: float
    rate_crypto: float | None
    rate_ref: float | None
    futures_ratio: float | None = None
    screen_slope: float | None = None
    screen_intercept: float | None = None
    inlier_count: int | None = None
    arbitrage_warning: bool = False
    hours_pooled: int = 1
    hours_rejected: int = 0
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SliceRejected:
    reason: str
    screen_slope: float | None = None
    screen_intercept: float | None = None


def _ratio(inp: EstimatorInput) -> float:
    if inp.lam == 0.0:
        return 0.0          # unused: the penalty term is dropped entirely
    if inp.futures_ratio is None:
        raise MissingFuturesRatio("lambda > 0 requires a futures/index ratio")
    return inp.futures_ratio


def objective(inp: EstimatorInput, alpha: float, beta: float) -> float:
    """Evaluate f(alpha, beta); the penalty term is omitted when lambda is 0."""
    c = _ratio(inp)
    total = math.fsum(
        (yi - alpha + beta * mi) ** 2 for mi, yi in zip(inp.moneyness, inp.y)
    )
    if inp.lam > 0.0:
        total += inp.lam * (alpha - beta * c) ** 2
    return total


def gradient(inp: EstimatorInput, alpha: float, beta: float) -> tuple[float, float]:
    """Analytic gradient of the objective at (alpha, beta)."""
    c = _ratio(inp)
    n = inp.n
    sm = math.fsum(inp.moneyness)
    sm2 = math.fsum(mi * mi for mi in inp.moneyness)
    sy = math.fsum(inp.y)
    smy = math.fsum(mi * yi for mi, yi in zip(inp.moneyness, inp.y))
    lam = inp.lam
    g_alpha = 2.0 * alpha * (n + lam) - 2.0 * beta * (sm + lam * c) - 2.0 * sy
    g_beta = -2.0 * alpha * (sm + lam * c) + 2.0 * beta * (sm2 + lam * c * c) + 2.0 * smy
    return g_alpha, g_beta


def solve_closed_form(inp: EstimatorInput) -> tuple[float, float, float]:
    """Minimise the objective exactly; returns (alpha, beta, determinant).

    Raises DegenerateSystem when the normal equations are singular relative
    to their scale (d <= tol * trace^2), which covers a single strike with
    no futures penalty and repeated-moneyness-only inputs.
    """
    c = _ratio(inp)
    n = inp.n
    lam = inp.lam
    sm = math.fsum(inp.moneyness)
    sm2 = math.fsum(mi * mi for mi in inp.moneyness)
    sy = math.fsum(inp.y)
    smy = math.fsum(mi * yi for mi, yi in zip(inp.moneyness, inp.y))

    p = n + lam
    q = sm + lam * c
    r = sm2 + lam * c * c
    d = r * p - q * q
    trace = p + r
    if d <= DEGENERACY_TOL * trace * trace:
        raise DegenerateSystem(f"normal equations singular: d={d!r}, trace={trace!r}")
    alpha = (r * sy - q * smy) / d
    beta = (q * sy - p * smy) / d
    return alpha, beta, d


def zc_to_rate(zc: float, tau_years: float) -> float:
    """Continuously compounded rate implied by a discount factor."""
    if tau_years <= 0.0:
        raise NonPositiveTenor(f"tau must be positive, got {tau_years}")
    if zc <= 0.0:
        raise NonPositiveDiscount(f"discount factor must be positive, got {zc}")
    return -math.log(zc) / tau_years


def _safe_rate(zc: float, tau: float) -> float | None:
    if zc <= 0.0 or tau <= 0.0:
        return None
    return -math.log(zc) / tau


def estimate_from_observations(
    observations: Sequence, futures_ratio: float | None, lam: float
) -> EstimatorInput:
    """Build an EstimatorInput from surviving paired observations."""
    return EstimatorInput(
        moneyness=tuple(o.moneyness for o in observations),
        y=tuple(o.y for o in observations),
        lam=lam,
        futures_ratio=futures_ratio,
    )


def estimate_slice(
    slice_: MarketSlice,
    ransac_config: RansacConfig,
    policy: LambdaPolicy = LambdaPolicy("n", 1.0),
    days_per_year: float = DAYS_PER_YEAR,
) -> ZcEstimate | SliceRejected:
    """Screen one hourly slice and estimate its two discount factors.

    The screen's RNG seed is derived from the config seed and the slice's
    (timestamp, expiry), so batch results do not depend on scheduling
    order.  Data-quality failures come back as SliceRejected, never raise.
    A slice without a futures quote is estimated with lambda = 0 and
    flagged.  Negative discount estimates are returned with the affected
    leg's rate set to None and a flag recorded.
    """
    cfg = replace(
        ransac_config,
        seed=mix_seed(ransac_config.seed, slice_.timestamp, slice_.expiry),
    )
    try:
        outcome = spread_screen(slice_.observations, cfg)
    except (TooFewPoints, NoConsensus, DegenerateX) as exc:
        return SliceRejected(reason=str(exc) or type(exc).__name__)
    if isinstance(outcome, Rejected):
        return SliceRejected(
            reason=outcome.reason,
            screen_slope=outcome.result.slope,
            screen_intercept=outcome.result.intercept,
        )

    survivors = outcome.observations
    flags: list[str] = []
    ratio = slice_.futures_ratio
    if ratio is None:
        lam = 0.0
        flags.append("no_futures")
    else:
        lam = policy.resolve(len(survivors))
    inp = estimate_from_observations(survivors, ratio, lam)
    try:
        alpha, beta, det = solve_closed_form(inp)
    except DegenerateSystem:
        return SliceRejected(
            reason="degenerate system",
            screen_slope=outcome.result.slope,
            screen_intercept=outcome.result.intercept,
        )

    tau = slice_.days_to_expiry() / days_per_year
    rate_crypto = _safe_rate(alpha, tau)
    rate_ref = _safe_rate(beta, tau)
    if rate_crypto is None:
        flags.append("neg_zc_crypto")
    if rate_ref is None:
        flags.append("neg_zc_ref")
    if outcome.arbitrage_warning:
        flags.append("arb_warning")
    return ZcEstimate(
        zc_crypto=alpha,
        zc_ref=beta,
        determinant=det,
        n_used=len(survivors),
        lambda_used=lam,
        tau_years=tau,
        rate_crypto=rate_crypto,
        rate_ref=rate_ref,
        futures_ratio=ratio,
        screen_slope=outcome.result.slope,
        screen_intercept=outcome.result.intercept,
        inlier_count=outcome.result.n_inliers,
        arbitrage_warning=outcome.arbitrage_warning,
        flags=tuple(flags),
    )
