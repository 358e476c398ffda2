"""Implied yield curves for cryptocurrencies from inverse derivatives quotes.

Call-put pairs on inverse options replicate zero-coupon bonds in the crypto
and reference currencies; this package screens the quotes, solves for both
discount factors per expiry, aggregates hourly estimates into daily curves,
and interpolates fixed-tenor rate series.  A synthetic market generator
with known curves supports end-to-end validation.
"""
from . import config, curve, errors, estimator, market_data, pipeline, ransac, synth
from .curve import (
    CurvePoint,
    TenorRow,
    TenorSeries,
    YieldCurve,
    aggregate_daily,
    build_curve,
    build_tenor_series,
    interpolate_tenor,
)
from .estimator import (
    EstimatorInput,
    LambdaPolicy,
    SliceRejected,
    ZcEstimate,
    estimate_slice,
    gradient,
    objective,
    solve_closed_form,
    zc_to_rate,
)
from .market_data import (
    ColumnMapping,
    FuturesQuote,
    IndexPoint,
    MarketSlice,
    OptionQuote,
    PairedObservation,
    Side,
    build_slices,
    filter_by_maturity,
    filter_by_relative_spread,
    mid_price,
    moneyness,
    pair_by_strike,
    parse_snapshot_csv,
)
from .ransac import (
    Kept,
    LineFit,
    RansacConfig,
    RansacResult,
    Rejected,
    SpreadPoint,
    fit_line_ols,
    ransac_line,
    spread_screen,
)
from .synth import (
    BruteForceResult,
    GridConfig,
    LabeledDataset,
    TruthSpec,
    brute_force_minimize,
    generate_market,
    inject_outliers,
)

__version__ = "0.1.0"
