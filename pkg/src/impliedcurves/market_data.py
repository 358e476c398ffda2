"""Market data types, CSV parsing, and slice assembly.

Input files are CSV snapshots of inverse option books, inverse futures
books, and the underlying index level.  One file may mix all three record
kinds (a ``kind`` column tells them apart) or carry a single kind; either
way the full canonical header must be present.

Canonical columns::

    timestamp, expiry, kind, strike, bid, ask, bid_size, ask_size, price

* options  (kind ``call``/``put``): timestamp, expiry, strike, bid, ask, sizes
* futures  (kind ``future``):       timestamp, expiry, bid, ask
* index    (kind ``index``):        timestamp, price

Option and futures prices are quoted in units of the cryptocurrency;
strikes and the index are in the reference currency.  Malformed data rows
never raise: they are collected into a rejection report so one bad row
cannot poison a batch.  Quotes are binned to the hour (floor) for slice
assembly, and calls/puts are paired by exact strike equality.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Iterable, TextIO

from .errors import CrossedBook, DuplicateStrike, MissingColumn, NonPositiveInput

CSV_COLUMNS = (
    "timestamp", "expiry", "kind", "strike",
    "bid", "ask", "bid_size", "ask_size", "price",
)


class Side(enum.Enum):
    CALL = "call"
    PUT = "put"


@dataclass(frozen=True)
class OptionQuote:
    timestamp: datetime
    expiry: datetime
    side: Side
    strike: float
    bid: float
    ask: float
    bid_size: float
    ask_size: float


@dataclass(frozen=True)
class FuturesQuote:
    timestamp: datetime
    expiry: datetime
    bid: float
    ask: float


@dataclass(frozen=True)
class IndexPoint:
    timestamp: datetime
    price: float


@dataclass(frozen=True)
class PairedObservation:
    """A call and put at the same strike within one (timestamp, expiry) slice.

    ``y`` is the call mid minus the put mid, in crypto units; ``moneyness``
    is strike over index level.
    """
    strike: float
    moneyness: float
    y: float
    call_bid: float
    call_ask: float
    put_bid: float
    put_ask: float


@dataclass(frozen=True)
class MarketSlice:
    """Everything known about one (timestamp, expiry) pair after assembly."""
    timestamp: datetime
    expiry: datetime
    index_price: float
    observations: tuple[PairedObservation, ...]
    futures_mid: float | None = None

    @property
    def futures_ratio(self) -> float | None:
        if self.futures_mid is None:
            return None
        return self.futures_mid / self.index_price

    def days_to_expiry(self) -> float:
        return (self.expiry - self.timestamp).total_seconds() / 86400.0


@dataclass(frozen=True)
class RejectedRow:
    row: int          # 1-based data row index (header not counted)
    reason: str


@dataclass(frozen=True)
class SliceIssue:
    timestamp: datetime | None
    expiry: datetime | None
    reason: str


@dataclass(frozen=True)
class ColumnMapping:
    """Maps canonical field names to the column names used in a file."""
    timestamp: str = "timestamp"
    expiry: str = "expiry"
    kind: str = "kind"
    strike: str = "strike"
    bid: str = "bid"
    ask: str = "ask"
    bid_size: str = "bid_size"
    ask_size: str = "ask_size"
    price: str = "price"


def mid_price(bid: float, ask: float) -> float:
    """Average of best bid and best ask."""
    if bid < 0.0:
        raise NonPositiveInput(f"negative bid {bid}")
    if ask < bid:
        raise CrossedBook(f"ask {ask} below bid {bid}")
    return (bid + ask) / 2.0


def moneyness(strike: float, index_price: float) -> float:
    """Strike over index level."""
    if strike <= 0.0:
        raise NonPositiveInput(f"non-positive strike {strike}")
    if index_price <= 0.0:
        raise NonPositiveInput(f"non-positive index {index_price}")
    return strike / index_price


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_float(cell: str, what: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"bad {what}") from None
    if not math.isfinite(value):
        raise ValueError(f"bad {what}")
    return value


def parse_snapshot_csv(
    stream: TextIO | Iterable[str],
    schema: ColumnMapping = ColumnMapping(),
) -> tuple[list[OptionQuote | FuturesQuote | IndexPoint], list[RejectedRow]]:
    """Parse one snapshot CSV into typed records plus a rejection report.

    The header must contain every column named by ``schema`` or
    MissingColumn is raised.  Data rows that fail to parse or violate a
    quote invariant are returned as RejectedRow entries, never raised, so
    count(records) + count(rejections) equals the number of data rows.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty file: no header row")
    positions: dict[str, int] = {}
    for field in CSV_COLUMNS:
        name = getattr(schema, field)
        try:
            positions[field] = header.index(name)
        except ValueError:
            raise MissingColumn(f"column {name!r} not in header") from None
    n_cols = len(header)

    records: list[OptionQuote | FuturesQuote | IndexPoint] = []
    rejected: list[RejectedRow] = []
    for row_no, row in enumerate(reader, start=1):
        try:
            records.append(_parse_row(row, positions, n_cols))
        except ValueError as exc:
            rejected.append(RejectedRow(row_no, str(exc)))
    return records, rejected


def _parse_row(
    row: list[str], pos: dict[str, int], n_cols: int
) -> OptionQuote | FuturesQuote | IndexPoint:
    if len(row) != n_cols:
        raise ValueError("wrong field count")
    kind = row[pos["kind"]].strip().lower()
    try:
        ts = parse_timestamp(row[pos["timestamp"]])
    except ValueError:
        raise ValueError("bad timestamp") from None

    if kind == "index":
        price = _parse_float(row[pos["price"]], "price")
        if price <= 0.0:
            raise ValueError("non-positive price")
        return IndexPoint(ts, price)

    try:
        expiry = parse_timestamp(row[pos["expiry"]])
    except ValueError:
        raise ValueError("bad expiry") from None
    if expiry <= ts:
        raise ValueError("expiry not after timestamp")
    bid = _parse_float(row[pos["bid"]], "bid")
    ask = _parse_float(row[pos["ask"]], "ask")
    if ask < bid:
        raise ValueError("crossed book")

    if kind == "future":
        if bid <= 0.0:
            raise ValueError("non-positive futures bid")
        return FuturesQuote(ts, expiry, bid, ask)

    if kind in ("call", "put"):
        if bid < 0.0:
            raise ValueError("negative bid")
        strike = _parse_float(row[pos["strike"]], "strike")
        if strike <= 0.0:
            raise ValueError("non-positive strike")
        bid_size = _parse_float(row[pos["bid_size"]], "bid_size")
        ask_size = _parse_float(row[pos["ask_size"]], "ask_size")
        if bid_size < 0.0 or ask_size < 0.0:
            raise ValueError("negative size")
        side = Side.CALL if kind == "call" else Side.PUT
        return OptionQuote(ts, expiry, side, strike, bid, ask, bid_size, ask_size)

    raise ValueError("unknown kind")


def serialize_record(rec: OptionQuote | FuturesQuote | IndexPoint) -> list[str]:
    """Render one record as a canonical CSV row (round-trips exactly)."""
    if isinstance(rec, OptionQuote):
        return [
            rec.timestamp.isoformat(), rec.expiry.isoformat(), rec.side.value,
            repr(rec.strike), repr(rec.bid), repr(rec.ask),
            repr(rec.bid_size), repr(rec.ask_size), "",
        ]
    if isinstance(rec, FuturesQuote):
        return [
            rec.timestamp.isoformat(), rec.expiry.isoformat(), "future",
            "", repr(rec.bid), repr(rec.ask), "", "", "",
        ]
    return [rec.timestamp.isoformat(), "", "index", "", "", "", "", "", repr(rec.price)]


def write_records(
    stream: TextIO, records: Iterable[OptionQuote | FuturesQuote | IndexPoint]
) -> int:
    """Write records in the canonical CSV schema; returns the row count."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    n = 0
    for rec in records:
        writer.writerow(serialize_record(rec))
        n += 1
    return n


def floor_hour(ts: datetime) -> datetime:
    return ts.replace(minute=0, second=0, microsecond=0)


def pair_by_strike(
    calls: list[OptionQuote],
    puts: list[OptionQuote],
    index_price: float,
) -> tuple[list[PairedObservation], list[OptionQuote]]:
    """Inner-join calls and puts on exact strike equality.

    Listed strikes are discrete, so exact equality is the join key.  Two
    same-side quotes at one strike raise DuplicateStrike.  Returns the
    pairs sorted by strike plus the quotes left without a counterpart.
    """
    by_strike: dict[float, dict[Side, OptionQuote]] = {}
    for quote in calls + puts:
        sides = by_strike.setdefault(quote.strike, {})
        if quote.side in sides:
            raise DuplicateStrike(
                f"duplicate {quote.side.value} at strike {quote.strike}"
            )
        sides[quote.side] = quote

    pairs: list[PairedObservation] = []
    unmatched: list[OptionQuote] = []
    for strike in sorted(by_strike):
        sides = by_strike[strike]
        if Side.CALL in sides and Side.PUT in sides:
            call, put = sides[Side.CALL], sides[Side.PUT]
            y = mid_price(call.bid, call.ask) - mid_price(put.bid, put.ask)
            pairs.append(PairedObservation(
                strike=strike,
                moneyness=moneyness(strike, index_price),
                y=y,
                call_bid=call.bid, call_ask=call.ask,
                put_bid=put.bid, put_ask=put.ask,
            ))
        else:
            unmatched.extend(sides.values())
    return pairs, unmatched


def build_slices(
    records: Iterable[OptionQuote | FuturesQuote | IndexPoint],
) -> tuple[list[MarketSlice], list[SliceIssue]]:
    """Group records into per-(hour, expiry) slices.

    Timestamps are floored to the hour.  The index level for an hour is the
    latest index observation within it (ties broken by input order, last
    wins); the futures mid per (hour, expiry) likewise.  Hours without an
    index level, slices without pairs, and duplicate-strike slices are
    reported as issues and skipped.
    """
    index_by_hour: dict[datetime, IndexPoint] = {}
    futures: dict[tuple[datetime, datetime], FuturesQuote] = {}
    options: dict[tuple[datetime, datetime], list[OptionQuote]] = {}

    for rec in records:
        hour = floor_hour(rec.timestamp)
        if isinstance(rec, IndexPoint):
            cur = index_by_hour.get(hour)
            if cur is None or rec.timestamp >= cur.timestamp:
                index_by_hour[hour] = rec
        elif isinstance(rec, FuturesQuote):
            key = (hour, rec.expiry)
            cur = futures.get(key)
            if cur is None or rec.timestamp >= cur.timestamp:
                futures[key] = rec
        else:
            options.setdefault((hour, rec.expiry), []).append(rec)

    slices: list[MarketSlice] = []
    issues: list[SliceIssue] = []
    for (hour, expiry) in sorted(options):
        quotes = options[(hour, expiry)]
        idx = index_by_hour.get(hour)
        if idx is None:
            issues.append(SliceIssue(hour, expiry, "missing index"))
            continue
        calls = [q for q in quotes if q.side is Side.CALL]
        puts = [q for q in quotes if q.side is Side.PUT]
        try:
            pairs, unmatched = pair_by_strike(calls, puts, idx.price)
        except DuplicateStrike as exc:
            issues.append(SliceIssue(hour, expiry, str(exc)))
            continue
        if unmatched:
            issues.append(SliceIssue(hour, expiry, f"unmatched quotes: {len(unmatched)}"))
        if not pairs:
            issues.append(SliceIssue(hour, expiry, "no pairs"))
            continue
        fut = futures.get((hour, expiry))
        fut_mid = mid_price(fut.bid, fut.ask) if fut is not None else None
        slices.append(MarketSlice(
            timestamp=hour, expiry=expiry, index_price=idx.price,
            observations=tuple(pairs), futures_mid=fut_mid,
        ))
    return slices, issues


def filter_by_maturity(
    slices: Iterable[MarketSlice], min_days: float = 30.0
) -> list[MarketSlice]:
    """Keep slices whose time to expiry is at least min_days calendar days."""
    cutoff = timedelta(days=min_days)
    return [s for s in slices if s.expiry - s.timestamp >= cutoff]


def filter_by_relative_spread(
    slice_: MarketSlice, max_rel: float = 0.20
) -> MarketSlice:
    """Drop pairs where either leg has a zero mid or too wide a spread.

    A leg fails when its mid is zero or (ask - bid) / mid exceeds max_rel;
    the whole pair goes with it.  Idempotent.
    """
    kept = []
    for obs in slice_.observations:
        ok = True
        for bid, ask in ((obs.call_bid, obs.call_ask), (obs.put_bid, obs.put_ask)):
            mid = mid_price(bid, ask)
            if mid == 0.0 or (ask - bid) / mid > max_rel:
                ok = False
                break
        if ok:
            kept.append(obs)
    return replace(slice_, observations=tuple(kept))
