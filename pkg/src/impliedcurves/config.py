"""Key = value configuration files and the pipeline configuration.

The on-disk format is one dotted key per line::

    # comment
    io.store_dir = ./store
    ransac.iterations = 200
    tenors.days = 90, 180, 360

Unknown keys and malformed values are reported with their line number.
Command-line flags override file values after parsing.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .errors import CurveError
from .estimator import LambdaPolicy
from .market_data import parse_timestamp
from .ransac import RansacConfig
from .synth import TruthSpec


class ConfigError(CurveError):
    """A configuration file failed to parse or validate."""


def parse_kv_file(path: Path | str) -> dict[str, tuple[str, int]]:
    """Parse a key = value file into {key: (raw value, line number)}."""
    entries: dict[str, tuple[str, int]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {line_no}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"{path}: line {line_no}: empty key")
        if key in entries:
            raise ConfigError(f"{path}: line {line_no}: duplicate key {key!r}")
        entries[key] = (value, line_no)
    return entries


class _Reader:
    """Typed, validated access to parsed entries with line-aware messages."""

    def __init__(self, path: Path | str, entries: dict[str, tuple[str, int]]):
        self.path = path
        self.entries = entries
        self.used: set[str] = set()

    def _fail(self, key: str, message: str) -> CurveError:
        line = self.entries[key][1] if key in self.entries else "?"
        return ConfigError(f"{self.path}: line {line}: {key}: {message}")

    def has(self, key: str) -> bool:
        return key in self.entries

    def raw(self, key: str, default: str | None = None) -> str | None:
        if key not in self.entries:
            return default
        self.used.add(key)
        return self.entries[key][0]

    def text(self, key: str, default: str) -> str:
        value = self.raw(key)
        return default if value is None else value

    def floating(self, key: str, default: float) -> float:
        value = self.raw(key)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError:
            raise self._fail(key, f"not a number: {value!r}") from None

    def integer(self, key: str, default: int) -> int:
        value = self.raw(key)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise self._fail(key, f"not an integer: {value!r}") from None

    def timestamp(self, key: str) -> datetime | None:
        value = self.raw(key)
        if value is None:
            return None
        try:
            return parse_timestamp(value)
        except ValueError:
            raise self._fail(key, f"not an ISO-8601 timestamp: {value!r}") from None

    def float_list(self, key: str, default: tuple[float, ...]) -> tuple[float, ...]:
        value = self.raw(key)
        if value is None:
            return default
        try:
            return tuple(float(part) for part in value.split(",") if part.strip())
        except ValueError:
            raise self._fail(key, f"not a comma-separated number list: {value!r}") from None

    def knots(self, key: str, default: tuple[tuple[float, float], ...]) -> tuple[tuple[float, float], ...]:
        """Parse 'days:rate, days:rate' pairs."""
        value = self.raw(key)
        if value is None:
            return default
        pairs = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                days, _, rate = part.partition(":")
                pairs.append((float(days), float(rate)))
            except ValueError:
                raise self._fail(key, f"bad knot {part!r}, expected days:rate") from None
        if not pairs:
            raise self._fail(key, "no knots given")
        return tuple(pairs)

    def reject_unknown(self) -> None:
        for key in self.entries:
            if key not in self.used:
                raise self._fail(key, "unknown key")


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: Path = Path("input")
    store_dir: Path = Path("store")
    output_dir: Path = Path("output")
    underlying: str = "BTC"
    min_days: float = 30.0
    max_rel_spread: float = 0.20
    ransac: RansacConfig = field(default_factory=RansacConfig)
    lambda_policy: LambdaPolicy = field(default_factory=lambda: LambdaPolicy("n", 1.0))
    aggregation: str = "pool"
    tenors: tuple[float, ...] = (90.0, 180.0, 360.0)
    days_per_year: float = 365.0
    plot_dates: str = "last"
    truth_file: str | None = None


def load_pipeline_config(path: Path | str) -> PipelineConfig:
    reader = _Reader(path, parse_kv_file(path))
    base = Path(path).parent

    def respath(key: str, default: str) -> Path:
        p = Path(reader.text(key, default))
        return p if p.is_absolute() else base / p

    min_inliers = reader.integer("ransac.min_inliers", 0)
    cfg = PipelineConfig(
        input_dir=respath("io.input_dir", "input"),
        store_dir=respath("io.store_dir", "store"),
        output_dir=respath("io.output_dir", "output"),
        underlying=reader.text("io.underlying", "BTC"),
        min_days=reader.floating("filters.min_days", 30.0),
        max_rel_spread=reader.floating("filters.max_rel_spread", 0.20),
        ransac=RansacConfig(
            residual_sq_threshold=reader.floating("ransac.threshold_sq", 0.004),
            iterations=reader.integer("ransac.iterations", 200),
            min_inliers=None if min_inliers == 0 else min_inliers,
            slope_tolerance=reader.floating("ransac.slope_tolerance", 0.10),
            seed=reader.integer("ransac.seed", 0),
        ),
        lambda_policy=_parse_policy(reader),
        aggregation=reader.text("aggregation.policy", "pool"),
        tenors=reader.float_list("tenors.days", (90.0, 180.0, 360.0)),
        days_per_year=reader.floating("daycount.days_per_year", 365.0),
        plot_dates=reader.text("plot.dates", "last"),
        truth_file=(
            str(respath("synth.truth_file", "")) if reader.has("synth.truth_file")
            else None
        ),
    )
    reader.reject_unknown()
    if cfg.aggregation not in ("pool", "median"):
        raise ConfigError(
            f"{path}: aggregation.policy must be pool or median, got {cfg.aggregation!r}"
        )
    if cfg.ransac.iterations < 1:
        raise ConfigError(f"{path}: ransac.iterations must be positive")
    return cfg


def _parse_policy(reader: _Reader) -> LambdaPolicy:
    text = reader.text("estimator.lambda_policy", "n")
    try:
        return LambdaPolicy.parse(text)
    except ValueError as exc:
        raise reader._fail("estimator.lambda_policy", str(exc)) from None


def apply_overrides(
    cfg: PipelineConfig,
    seed: int | None = None,
    tenors: str | None = None,
    lambda_policy: str | None = None,
    aggregation: str | None = None,
) -> PipelineConfig:
    """Apply command-line overrides on top of a file configuration."""
    if seed is not None:
        cfg = replace(cfg, ransac=replace(cfg.ransac, seed=seed))
    if tenors is not None:
        try:
            parsed = tuple(float(part) for part in tenors.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"bad --tenors value {tenors!r}") from None
        if not parsed:
            raise ConfigError("empty --tenors value")
        cfg = replace(cfg, tenors=parsed)
    if lambda_policy is not None:
        try:
            cfg = replace(cfg, lambda_policy=LambdaPolicy.parse(lambda_policy))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if aggregation is not None:
        if aggregation not in ("pool", "median"):
            raise ConfigError(f"bad --aggregation value {aggregation!r}")
        cfg = replace(cfg, aggregation=aggregation)
    return cfg


def load_truth_spec(path: Path | str, seed_override: int | None = None) -> TruthSpec:
    """Load a synthetic-market description from a key = value file.

    Expiries come either as an explicit ISO list (truth.expiries) or as a
    rolling schedule (truth.first_expiry_days, truth.expiry_spacing_days,
    truth.expiry_count) expiring at 08:00 UTC.  The horizon is truth.hours
    or truth.days (whole days of hourly stamps).
    """
    reader = _Reader(path, parse_kv_file(path))

    start = reader.timestamp("truth.start")
    if start is None:
        raise ConfigError(f"{path}: truth.start is required")
    if reader.has("truth.hours") and reader.has("truth.days"):
        raise ConfigError(f"{path}: give truth.hours or truth.days, not both")
    if reader.has("truth.hours"):
        hours = reader.integer("truth.hours", 0)
    else:
        hours = reader.integer("truth.days", 0) * 24
    if hours < 1:
        raise ConfigError(f"{path}: horizon must be at least one hour")

    if reader.has("truth.expiries"):
        raw = reader.raw("truth.expiries") or ""
        try:
            expiries = tuple(
                parse_timestamp(part.strip())
                for part in raw.split(",") if part.strip()
            )
        except ValueError:
            raise reader._fail("truth.expiries", "bad ISO-8601 list") from None
    else:
        first = reader.floating("truth.first_expiry_days", 60.0)
        spacing = reader.floating("truth.expiry_spacing_days", 60.0)
        count = reader.integer("truth.expiry_count", 8)
        if count < 1 or spacing <= 0:
            raise ConfigError(f"{path}: bad expiry schedule")
        day0 = start.date()
        expiries = tuple(
            datetime(day0.year, day0.month, day0.day, 8, 0, tzinfo=timezone.utc)
            + timedelta(days=first + k * spacing)
            for k in range(count)
        )

    if reader.has("truth.moneyness"):
        grid = reader.float_list("truth.moneyness", ())
    else:
        lo = reader.floating("truth.moneyness_lo", 0.5)
        hi = reader.floating("truth.moneyness_hi", 2.0)
        count = reader.integer("truth.strikes", 30)
        if count < 1 or lo <= 0 or hi < lo:
            raise ConfigError(f"{path}: bad moneyness grid")
        step = (hi - lo) / (count - 1) if count > 1 else 0.0
        grid = tuple(lo + k * step for k in range(count))

    spec = TruthSpec(
        start=start,
        hours=hours,
        spot0=reader.floating("truth.spot", 60000.0),
        expiries=expiries,
        moneyness_grid=grid,
        rate_ref_knots=reader.knots("truth.rate_ref", ((0.0, 0.0),)),
        rate_crypto_knots=reader.knots("truth.rate_crypto", ((0.0, 0.0),)),
        noise_sd=reader.floating("truth.noise_sd", 0.0),
        spread_intercept=reader.floating("truth.spread_intercept", 0.02),
        spread_slope=reader.floating("truth.spread_slope", -1.0),
        half_spread_split=reader.floating("truth.half_spread_split", 0.5),
        futures_rel_spread=reader.floating("truth.futures_rel_spread", 1e-4),
        outlier_fraction=reader.floating("truth.outlier_fraction", 0.0),
        outlier_magnitude=reader.floating("truth.outlier_magnitude", 0.25),
        seed=seed_override if seed_override is not None
        else reader.integer("truth.seed", 0),
        spot_drift=reader.floating("truth.spot_drift", 0.0),
        spot_vol=reader.floating("truth.spot_vol", 0.0),
        active_count=reader.integer("truth.active_count", 2),
        active_min_days=reader.floating("truth.active_min_days", 30.0),
    )
    if seed_override is not None:
        reader.raw("truth.seed")        # mark as consumed either way
    reader.reject_unknown()
    return spec
