"""Batch pipeline: ingest, daily estimation, tenor series, synthetic data.

File layout. Raw snapshot CSVs are read from the input directory, validated
row by row, and rewritten as normalized per-day partitions under
``store/<underlying>/<YYYY-MM-DD>.csv``.  Estimation walks the partitions
one day at a time and writes ``curves.csv`` (one row per day and expiry)
plus ``rejections.csv``; the tenor step reads ``curves.csv`` back and
writes ``tenors.csv`` with one row per date, tenor, and leg.

All writes are atomic (temp file in the target directory, then rename) and
all row orders, float renderings, and timestamps are canonical, so rerunning
any step on the same inputs reproduces its outputs byte for byte.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

from .config import PipelineConfig
from .curve import CurvePoint, YieldCurve, aggregate_daily, build_tenor_series
from .errors import CurveError, DuplicateExpiry, EmptyDay
from .estimator import SliceRejected, ZcEstimate
from .market_data import (
    CSV_COLUMNS,
    FuturesQuote,
    IndexPoint,
    MarketSlice,
    OptionQuote,
    build_slices,
    filter_by_maturity,
    filter_by_relative_spread,
    parse_snapshot_csv,
    parse_timestamp,
    serialize_record,
)
from .synth import OUTLIER, TruthSpec, iter_market

log = logging.getLogger("impliedcurves")

DATE_FILE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}\.csv$")

CURVES_COLUMNS = (
    "date", "expiry", "tau_years", "rate_crypto", "rate_ref",
    "n_used", "lambda", "pooled_hours", "flags",
)
TENORS_COLUMNS = ("date", "tenor_days", "leg", "rate")
REJECTIONS_COLUMNS = ("date", "expiry", "stage", "reason")


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(header: tuple[str, ...], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(cell) for cell in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write text then rename into place; readers never see partial files."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _record_sort_key(rec) -> tuple:
    if isinstance(rec, IndexPoint):
        return (rec.timestamp, 0, datetime.min.replace(tzinfo=rec.timestamp.tzinfo), 0.0, 0)
    if isinstance(rec, FuturesQuote):
        return (rec.timestamp, 1, rec.expiry, 0.0, 0)
    side = 0 if rec.side.value == "call" else 1
    return (rec.timestamp, 2, rec.expiry, rec.strike, side)


# --- ingest ---------------------------------------------------------------

@dataclass(frozen=True)
class IngestReport:
    files: int
    rows_ok: int
    rows_rejected: int
    days: int


def run_ingest(cfg: PipelineConfig) -> IngestReport:
    if not cfg.input_dir.is_dir():
        raise CurveError(f"input directory {cfg.input_dir} does not exist")
    files = sorted(p for p in cfg.input_dir.glob("*.csv") if p.is_file())
    by_day: dict[date, list] = {}
    rejection_rows: list[list] = []
    rows_ok = 0
    for path in files:
        with open(path, newline="", encoding="utf-8") as handle:
            records, rejected = parse_snapshot_csv(handle)
        rows_ok += len(records)
        for rec in records:
            by_day.setdefault(rec.timestamp.date(), []).append(rec)
        for rej in rejected:
            rejection_rows.append([path.name, rej.row, rej.reason])
        log.info("ingest %s: %d rows, %d rejected", path.name, len(records), len(rejected))

    part_dir = cfg.store_dir / cfg.underlying
    part_dir.mkdir(parents=True, exist_ok=True)
    for stale in part_dir.iterdir():
        if DATE_FILE_RE.match(stale.name):
            stale.unlink()
    for day in sorted(by_day):
        records = sorted(by_day[day], key=_record_sort_key)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(serialize_record(rec))
        write_atomic(part_dir / f"{day.isoformat()}.csv", buf.getvalue())

    rejection_rows.sort(key=lambda r: (r[0], r[1]))
    write_atomic(
        part_dir / "ingest_rejections.csv",
        csv_text(("file", "row", "reason"), rejection_rows),
    )
    return IngestReport(
        files=len(files), rows_ok=rows_ok,
        rows_rejected=len(rejection_rows), days=len(by_day),
    )


# --- estimate ---------------------------------------------------------------

@dataclass(frozen=True)
class EstimateReport:
    days: int
    rows: int
    rejections: int


def run_estimate(cfg: PipelineConfig) -> EstimateReport:
    part_dir = cfg.store_dir / cfg.underlying
    if not part_dir.is_dir():
        raise CurveError(f"no store partition directory {part_dir}; run ingest first")
    files = sorted(p for p in part_dir.iterdir() if DATE_FILE_RE.match(p.name))
    if not files:
        raise CurveError(f"no per-day partitions in {part_dir}; run ingest first")

    curve_rows: list[list] = []
    rejection_rows: list[list] = []
    for path in files:
        day = date.fromisoformat(path.stem)
        with open(path, newline="", encoding="utf-8") as handle:
            records, rejected = parse_snapshot_csv(handle)
        for rej in rejected:
            rejection_rows.append([day.isoformat(), "", "parse", f"row {rej.row}: {rej.reason}"])

        slices, issues = build_slices(records)
        for issue in issues:
            rejection_rows.append([
                day.isoformat(),
                issue.expiry.isoformat() if issue.expiry else "",
                "assembly", issue.reason,
            ])
        slices = filter_by_maturity(slices, cfg.min_days)
        filtered: list[MarketSlice] = []
        for sl in slices:
            sl = filter_by_relative_spread(sl, cfg.max_rel_spread)
            if sl.observations:
                filtered.append(sl)
            else:
                rejection_rows.append([
                    day.isoformat(), sl.expiry.isoformat(),
                    "filter", "no pairs after spread filter",
                ])

        by_expiry: dict[datetime, list[MarketSlice]] = {}
        for sl in filtered:
            by_expiry.setdefault(sl.expiry, []).append(sl)
        for expiry in sorted(by_expiry):
            try:
                result = aggregate_daily(
                    by_expiry[expiry], cfg.ransac, cfg.lambda_policy,
                    cfg.aggregation, cfg.days_per_year,
                )
            except EmptyDay as exc:
                rejection_rows.append([day.isoformat(), expiry.isoformat(), "screen", str(exc)])
                continue
            if isinstance(result, SliceRejected):
                rejection_rows.append([day.isoformat(), expiry.isoformat(), "solve", result.reason])
                continue
            curve_rows.append(_curve_row(day, expiry, result))
        log.info("estimate %s: %d expiries", day.isoformat(), len(by_expiry))

    curve_rows.sort(key=lambda r: (r[0], r[1]))
    rejection_rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(cfg.output_dir / "curves.csv", csv_text(CURVES_COLUMNS, curve_rows))
    write_atomic(
        cfg.output_dir / "rejections.csv",
        csv_text(REJECTIONS_COLUMNS, rejection_rows),
    )
    return EstimateReport(
        days=len(files), rows=len(curve_rows), rejections=len(rejection_rows)
    )


def _curve_row(day: date, expiry: datetime, est: ZcEstimate) -> list:
    return [
        day.isoformat(), expiry.isoformat(), est.tau_years,
        est.rate_crypto, est.rate_ref, est.n_used, est.lambda_used,
        est.hours_pooled, ";".join(est.flags),
    ]


# --- tenors -----------------------------------------------------------------

@dataclass(frozen=True)
class TenorsReport:
    dates: int
    rows: int


def read_curves_csv(path: Path) -> list[YieldCurve]:
    """Rebuild per-day curves from curves.csv."""
    if not path.is_file():
        raise CurveError(f"missing {path}; run estimate first")
    by_date: dict[date, list[CurvePoint]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(CURVES_COLUMNS) - set(reader.fieldnames):
            raise CurveError(f"{path}: malformed header")
        for row in reader:
            try:
                day = date.fromisoformat(row["date"])
                point = CurvePoint(
                    expiry=parse_timestamp(row["expiry"]),
                    tau_years=float(row["tau_years"]),
                    rate_crypto=float(row["rate_crypto"]) if row["rate_crypto"] else None,
                    rate_ref=float(row["rate_ref"]) if row["rate_ref"] else None,
                    n_used=int(row["n_used"]),
                    hours_pooled=int(row["pooled_hours"]),
                )
            except (ValueError, KeyError) as exc:
                raise CurveError(f"{path}: bad row {row!r}: {exc}") from None
            by_date.setdefault(day, []).append(point)

    curves = []
    for day in sorted(by_date):
        points = by_date[day]
        expiries = [p.expiry for p in points]
        if len(set(expiries)) != len(expiries):
            raise DuplicateExpiry(f"{path}: duplicate expiry on {day.isoformat()}")
        kept = tuple(sorted(
            (p for p in points if not (p.rate_crypto is None and p.rate_ref is None)),
            key=lambda p: p.tau_years,
        ))
        dropped = tuple(sorted(
            (p for p in points if p.rate_crypto is None and p.rate_ref is None),
            key=lambda p: p.tau_years,
        ))
        curves.append(YieldCurve(day, kept, dropped))
    return curves


def run_tenors(cfg: PipelineConfig) -> TenorsReport:
    curves = read_curves_csv(cfg.output_dir / "curves.csv")
    series = build_tenor_series(curves, cfg.tenors, cfg.days_per_year)
    rows: list[list] = []
    for s in series:
        for row in s.rows:
            if row.rate_crypto is not None:
                rows.append([row.valuation_date.isoformat(), s.tenor_days, "crypto", row.rate_crypto])
            if row.rate_ref is not None:
                rows.append([row.valuation_date.isoformat(), s.tenor_days, "ref", row.rate_ref])
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(cfg.output_dir / "tenors.csv", csv_text(TENORS_COLUMNS, rows))
    return TenorsReport(dates=len(curves), rows=len(rows))


# --- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SynthReport:
    rows: int
    pairs: int
    outliers: int
    excluded: int


def run_synth(cfg: PipelineConfig, spec: TruthSpec) -> SynthReport:
    """Write dataset.csv (input dir) plus labels/truth/exclusions (output dir)."""
    cfg.input_dir.mkdir(parents=True, exist_ok=True)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = cfg.input_dir / "dataset.csv"

    label_rows: list[list] = []
    exclusion_rows: list[list] = []
    truth_keys: set[tuple[date, datetime]] = set()
    n_rows = 0
    n_pairs = 0
    n_outliers = 0

    fd, tmp = tempfile.mkstemp(
        dir=dataset_path.parent, prefix=dataset_path.name + ".", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for records, labels, exclusions in iter_market(spec):
                pair_label = dict(labels)
                n_pairs += len(labels)
                n_outliers += sum(1 for _, lab in labels if lab == OUTLIER)
                for rec in records:
                    writer.writerow(serialize_record(rec))
                    n_rows += 1
                    if isinstance(rec, OptionQuote):
                        key = (rec.timestamp, rec.expiry, rec.strike)
                        label_rows.append([n_rows, pair_label[key]])
                        truth_keys.add((rec.timestamp.date(), rec.expiry))
                for excl in exclusions:
                    exclusion_rows.append([
                        excl.timestamp.isoformat(), excl.expiry.isoformat(),
                        excl.strike, excl.reason,
                    ])
        os.replace(tmp, dataset_path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise

    write_atomic(cfg.output_dir / "labels.csv", csv_text(("row", "label"), label_rows))
    truth_rows_out = [
        [day.isoformat(), expiry.isoformat(), spec.rate_ref(tau), spec.rate_crypto(tau)]
        for day, expiry, tau in (
            (d, e, _noon_tau(d, e, cfg.days_per_year)) for d, e in sorted(truth_keys)
        )
    ]
    write_atomic(
        cfg.output_dir / "truth.csv",
        csv_text(("date", "expiry", "rate_ref", "rate_crypto"), truth_rows_out),
    )
    write_atomic(
        cfg.output_dir / "excluded.csv",
        csv_text(("timestamp", "expiry", "strike", "reason"), exclusion_rows),
    )
    return SynthReport(
        rows=n_rows, pairs=n_pairs, outliers=n_outliers, excluded=len(exclusion_rows)
    )


def _noon_tau(day: date, expiry: datetime, days_per_year: float) -> float:
    from .curve import noon_anchor

    return (expiry - noon_anchor(day)).total_seconds() / 86400.0 / days_per_year
