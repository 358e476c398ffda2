"""Exception types shared across the package."""


class CurveError(Exception):
    """Base class for all errors raised by this package."""


# --- market data ---

class MissingColumn(CurveError):
    """A required column is absent from a CSV header."""


class CrossedBook(CurveError):
    """Best ask is below best bid."""


class NonPositiveInput(CurveError):
    """Strike or index level is zero or negative where a positive value is required."""


class DuplicateStrike(CurveError):
    """Two quotes on the same side share a strike within one slice."""


# --- robust line fit ---

class DegenerateX(CurveError):
    """All x values coincide; no line slope is identifiable."""


class TooFewPoints(CurveError):
    """Not enough points to run the fit."""


class NoConsensus(CurveError):
    """No sampled model reached the required inlier count."""


# --- zero-coupon estimation ---

class MissingFuturesRatio(CurveError):
    """The penalty weight is positive but no futures/index ratio was supplied."""


class DegenerateSystem(CurveError):
    """The normal equations are singular to working precision."""


class NonPositiveDiscount(CurveError):
    """Discount factor must be positive to imply a rate."""


class NonPositiveTenor(CurveError):
    """Year fraction must be positive to imply a rate."""


# --- curve assembly ---

class EmptyDay(CurveError):
    """No hourly slice survived screening for the day."""


class DuplicateExpiry(CurveError):
    """Two curve points share an expiry."""


# --- synthetic markets ---

class InfeasibleSkeleton(CurveError):
    """No strike on the requested grid produced positive mids on both legs."""


class BoxTooSmall(CurveError):
    """Grid search hit the boundary of its search box."""
