"""Normalized trade/quote tape: parsing, validation and per-symbol merging.

Prices are held as integer ten-thousandths of a dollar so that tick
comparisons downstream are exact.  Each symbol's trades and quotes are merged
into one columnar :class:`EventStream` ordered by ``(ts, source, line)`` with
trades placed before quotes at identical timestamps.
"""

from __future__ import annotations

import gzip
import heapq
import io
import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DomainError, MalformedRecord, RejectRateExceeded, UnsortedInput

logger = logging.getLogger(__name__)

PRICE_SCALE = 10_000
MS_PER_DAY = 86_400_000

TRADE = 0
QUOTE = 1

TRADE_HEADER = "ts_ms,symbol,exchange,price,size,condition"
QUOTE_HEADER = "ts_ms,symbol,exchange,bid,bid_size,offer,offer_size"


class ExchangeId(IntEnum):
    OTHER = 0
    NYSE = 1
    NASDAQ = 2
    ARCA = 3
    AMEX = 4
    BATS = 5
    ISE = 6

    @classmethod
    def parse(cls, name: str) -> "ExchangeId":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            return cls.OTHER

    @property
    def label(self) -> str:
        return "Other" if self is ExchangeId.OTHER else self.name


N_VENUES = len(ExchangeId)

_Q = Decimal(1) / PRICE_SCALE


def to_fixed(value) -> int:
    """Convert a dollar amount (str, int, float or Decimal) to fixed point.

    Raises MalformedRecord if the value carries more than four decimals.
    """
    try:
        d = Decimal(str(value).strip())
    except InvalidOperation:
        raise MalformedRecord(f"unparseable price {value!r}") from None
    if not d.is_finite():
        raise MalformedRecord(f"non-finite price {value!r}")
    scaled = d * PRICE_SCALE
    if scaled != scaled.to_integral_value():
        raise MalformedRecord(f"price {value!r} has more than 4 decimals")
    return int(scaled)


def from_fixed(value: int) -> float:
    return value / PRICE_SCALE


def format_price(value: int) -> str:
    sign = "-" if value < 0 else ""
    whole, frac = divmod(abs(int(value)), PRICE_SCALE)
    return f"{sign}{whole}.{frac:04d}"


@dataclass(frozen=True, slots=True)
class TradeRecord:
    ts: int
    symbol: str
    exchange: ExchangeId
    price: int
    size: int
    is_iso: bool
    condition: str = ""
    seq: int = -1  # position in the merged stream, -1 when standalone

    @property
    def price_float(self) -> float:
        return self.price / PRICE_SCALE


@dataclass(frozen=True, slots=True)
class QuoteRecord:
    ts: int
    symbol: str
    exchange: ExchangeId
    bid: int
    bid_size: int
    offer: int
    offer_size: int
    seq: int = -1

    @property
    def has_bid(self) -> bool:
        return self.bid_size > 0

    @property
    def has_offer(self) -> bool:
        return self.offer_size > 0

    @property
    def self_crossed(self) -> bool:
        return self.has_bid and self.has_offer and self.bid > self.offer


def _int_field(raw: str, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise MalformedRecord(f"unparseable {name} {raw!r}") from None


def _ts_field(raw: str) -> int:
    ts = _int_field(raw, "timestamp")
    if not 0 <= ts <= MS_PER_DAY:
        raise DomainError(f"timestamp {ts} outside the trading day")
    return ts


def parse_trade_line(line: str) -> TradeRecord:
    parts = line.rstrip("\r\n").split(",")
    if len(parts) != 6:
        raise MalformedRecord(f"trade record needs 6 fields, got {len(parts)}")
    ts_raw, symbol, exch, price_raw, size_raw, condition = parts
    ts = _ts_field(ts_raw)
    price = to_fixed(price_raw)
    size = _int_field(size_raw, "size")
    if price <= 0:
        raise DomainError(f"non-positive trade price {price_raw!r}")
    if size <= 0:
        raise DomainError(f"non-positive trade size {size_raw!r}")
    condition = condition.strip()
    return TradeRecord(ts, symbol.strip(), ExchangeId.parse(exch), price, size,
                       "F" in condition, condition)


def parse_quote_line(line: str) -> QuoteRecord:
    parts = line.rstrip("\r\n").split(",")
    if len(parts) != 7:
        raise MalformedRecord(f"quote record needs 7 fields, got {len(parts)}")
    ts_raw, symbol, exch, bid_raw, bsz_raw, off_raw, osz_raw = parts
    ts = _ts_field(ts_raw)
    bid, offer = to_fixed(bid_raw), to_fixed(off_raw)
    bsz, osz = _int_field(bsz_raw, "bid_size"), _int_field(osz_raw, "offer_size")
    if bid < 0 or offer < 0 or bsz < 0 or osz < 0:
        raise DomainError("negative quote field")
    # a zero-size side carries no price
    if bsz == 0:
        bid = 0
    if osz == 0:
        offer = 0
    return QuoteRecord(ts, symbol.strip(), ExchangeId.parse(exch), bid, bsz, offer, osz)


def format_trade(t: TradeRecord) -> str:
    return (f"{t.ts},{t.symbol},{t.exchange.label.upper()},{format_price(t.price)},"
            f"{t.size},{t.condition}")


def format_quote(q: QuoteRecord) -> str:
    return (f"{q.ts},{q.symbol},{q.exchange.label.upper()},{format_price(q.bid)},"
            f"{q.bid_size},{format_price(q.offer)},{q.offer_size}")


@dataclass
class EventStream:
    """Columnar, time-ordered trade/quote events for a single symbol.

    For trades ``price``/``size`` hold the print; for quotes they hold the
    bid side and ``offer``/``offer_size`` the offer side.
    """

    symbol: str
    kind: np.ndarray
    ts: np.ndarray
    exchange: np.ndarray
    price: np.ndarray
    size: np.ndarray
    offer: np.ndarray
    offer_size: np.ndarray
    iso: np.ndarray
    condition: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)

    @classmethod
    def empty(cls, symbol: str) -> "EventStream":
        return cls.from_records(symbol, [])

    @classmethod
    def from_records(cls, symbol: str, records: Iterable[TradeRecord | QuoteRecord]) -> "EventStream":
        """Build a stream from records already in stream order."""
        rows = []
        for r in records:
            if isinstance(r, TradeRecord):
                rows.append((TRADE, r.ts, int(r.exchange), r.price, r.size, 0, 0, r.is_iso, r.condition))
            else:
                rows.append((QUOTE, r.ts, int(r.exchange), r.bid, r.bid_size, r.offer, r.offer_size,
                             False, ""))
        cols = list(zip(*rows)) if rows else [()] * 9
        stream = cls(
            symbol=symbol,
            kind=np.asarray(cols[0], dtype=np.int8),
            ts=np.asarray(cols[1], dtype=np.int64),
            exchange=np.asarray(cols[2], dtype=np.int8),
            price=np.asarray(cols[3], dtype=np.int64),
            size=np.asarray(cols[4], dtype=np.int64),
            offer=np.asarray(cols[5], dtype=np.int64),
            offer_size=np.asarray(cols[6], dtype=np.int64),
            iso=np.asarray(cols[7], dtype=bool),
            condition=np.asarray(cols[8], dtype=object),
        )
        if len(stream) and np.any(np.diff(stream.ts) < 0):
            raise UnsortedInput(symbol, int(np.argmax(np.diff(stream.ts) < 0)) + 1, -1, -1)
        return stream

    def record(self, i: int) -> TradeRecord | QuoteRecord:
        ex = ExchangeId(int(self.exchange[i]))
        if self.kind[i] == TRADE:
            return TradeRecord(int(self.ts[i]), self.symbol, ex, int(self.price[i]), int(self.size[i]),
                               bool(self.iso[i]), str(self.condition[i]), i)
        return QuoteRecord(int(self.ts[i]), self.symbol, ex, int(self.price[i]), int(self.size[i]),
                           int(self.offer[i]), int(self.offer_size[i]), i)

    def __iter__(self) -> Iterator[TradeRecord | QuoteRecord]:
        for i in range(len(self)):
            yield self.record(i)

    @property
    def trade_idx(self) -> np.ndarray:
        return np.flatnonzero(self.kind == TRADE)

    @property
    def quote_idx(self) -> np.ndarray:
        return np.flatnonzero(self.kind == QUOTE)


@dataclass
class LoadStats:
    trades_read: int = 0
    trades_kept: int = 0
    trades_rejected: int = 0
    quotes_read: int = 0
    quotes_kept: int = 0
    quotes_rejected: int = 0
    self_crossed_quotes: int = 0
    reject_examples: list = field(default_factory=list)

    @property
    def read(self) -> int:
        return self.trades_read + self.quotes_read

    @property
    def kept(self) -> int:
        return self.trades_kept + self.quotes_kept

    @property
    def rejected(self) -> int:
        return self.trades_rejected + self.quotes_rejected


@dataclass
class LoadResult:
    streams: dict[str, EventStream]
    stats: LoadStats

    def stream(self, symbol: str) -> EventStream:
        return self.streams.get(symbol) or EventStream.empty(symbol)


def open_text(path) -> io.TextIOBase:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", newline="")
    return open(path, "r", newline="")


def _is_header(line: str) -> bool:
    head = line.split(",", 1)[0].strip().lower()
    return head in ("ts", "ts_ms")


def _read_records(path, parser, source: int, stats: LoadStats, prefix: str):
    """Yield ``(ts, source, line_no, record)`` in file order, validating sortedness."""
    prev_ts = -1
    with open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or (line_no == 1 and _is_header(line)):
                continue
            setattr(stats, prefix + "_read", getattr(stats, prefix + "_read") + 1)
            try:
                rec = parser(line)
            except (MalformedRecord, DomainError) as exc:
                setattr(stats, prefix + "_rejected", getattr(stats, prefix + "_rejected") + 1)
                if len(stats.reject_examples) < 20:
                    stats.reject_examples.append(f"{path}:{line_no}: {exc}")
                continue
            if rec.ts < prev_ts:
                raise UnsortedInput(path, line_no, rec.ts, prev_ts)
            prev_ts = rec.ts
            yield rec.ts, source, line_no, rec


def load_merged_stream(trades_path, quotes_path=None, symbols=None, time_range=None,
                       max_reject_rate: float = 0.01) -> LoadResult:
    """Parse and merge a trade file and a quote file into per-symbol streams.

    ``symbols`` restricts the symbols kept; ``time_range`` is an inclusive
    ``(from_ms, to_ms)`` pair with either end possibly None.  Malformed lines
    are counted and skipped; if their share of all lines read exceeds
    ``max_reject_rate`` a RejectRateExceeded error is raised after loading.
    """
    stats = LoadStats()
    wanted = set(symbols) if symbols else None
    lo, hi = time_range if time_range else (None, None)

    sources = []
    if trades_path is not None:
        sources.append(_read_records(trades_path, parse_trade_line, 0, stats, "trades"))
    if quotes_path is not None:
        sources.append(_read_records(quotes_path, parse_quote_line, 1, stats, "quotes"))

    rows: dict[str, list] = {}
    for ts, source, _, rec in heapq.merge(*sources, key=lambda item: item[:3]):
        if wanted is not None and rec.symbol not in wanted:
            continue
        if (lo is not None and ts < lo) or (hi is not None and ts > hi):
            continue
        if source == 0:
            stats.trades_kept += 1
        else:
            stats.quotes_kept += 1
            if rec.self_crossed:
                stats.self_crossed_quotes += 1
        rows.setdefault(rec.symbol, []).append(rec)

    if stats.read and stats.rejected / stats.read > max_reject_rate:
        raise RejectRateExceeded(
            f"{stats.rejected} of {stats.read} records rejected "
            f"(limit {max_reject_rate:.2%}); first: {stats.reject_examples[:3]}")
    if stats.self_crossed_quotes:
        logger.warning("%d quotes with bid above offer on a single venue", stats.self_crossed_quotes)

    streams = {sym: EventStream.from_records(sym, recs) for sym, recs in sorted(rows.items())}
    return LoadResult(streams, stats)


def write_trades_csv(path, trades: Iterable[TradeRecord], header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(TRADE_HEADER + "\n")
        for t in trades:
            fh.write(format_trade(t) + "\n")


def write_quotes_csv(path, quotes: Iterable[QuoteRecord], header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(QUOTE_HEADER + "\n")
        for q in quotes:
            fh.write(format_quote(q) + "\n")
