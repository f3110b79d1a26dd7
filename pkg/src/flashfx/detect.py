"""Mini Flash Crash detection over per-(symbol, exchange) trade sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .tape import PRICE_SCALE, TRADE, EventStream, ExchangeId, TradeRecord


class TickDirection(Enum):
    UP = "Up"
    DOWN = "Down"
    ZERO = "Zero"


class Direction(Enum):
    DOWN = "Down"
    UP = "Up"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.DOWN else -1


def tick_direction(prev_price: int, cur_price: int) -> TickDirection:
    if cur_price > prev_price:
        return TickDirection.UP
    if cur_price < prev_price:
        return TickDirection.DOWN
    return TickDirection.ZERO


def pct_as_fraction(pct: float) -> tuple[int, int]:
    """Exact rational form of a percentage threshold given in decimal."""
    f = Fraction(Decimal(str(pct)))
    return f.numerator, f.denominator


@dataclass(frozen=True)
class DetectorConfig:
    min_ticks: int = 10
    max_window_ms: int = 1500
    min_move_pct: float = 0.8

    def __post_init__(self):
        if self.min_ticks < 1 or self.max_window_ms < 0 or self.min_move_pct < 0:
            raise ValueError("detector thresholds must be positive")


@dataclass(frozen=True)
class CrashEvent:
    symbol: str
    exchange: ExchangeId
    direction: Direction
    trades: tuple[TradeRecord, ...]
    tick_count: int
    truncated: bool = False

    @property
    def start_ts(self) -> int:
        return self.trades[0].ts

    @property
    def end_ts(self) -> int:
        return self.trades[-1].ts

    @property
    def duration_ms(self) -> int:
        return self.end_ts - self.start_ts

    @property
    def n_trades(self) -> int:
        return len(self.trades)

    @property
    def total_volume(self) -> int:
        return sum(t.size for t in self.trades)

    @property
    def pct_change(self) -> float:
        return (self.trades[-1].price / self.trades[0].price - 1.0) * 100.0

    @property
    def iso_fraction(self) -> float:
        return sum(t.is_iso for t in self.trades) / len(self.trades)

    @property
    def start_seq(self) -> int:
        return self.trades[0].seq

    @property
    def crash_id(self) -> str:
        return f"{self.symbol}:{self.exchange.label}:{self.direction.value}:{self.start_ts}:{self.start_seq}"

    def validate(self, config: DetectorConfig = DetectorConfig()) -> None:
        """Re-check the event against the crash definition; raises ValueError."""
        sign = self.direction.sign
        prices = [t.price for t in self.trades]
        if any(t.exchange != self.exchange for t in self.trades):
            raise ValueError("constituent trades span venues")
        ticks = [sign * (a - b) for a, b in zip(prices, prices[1:])]
        if any(d < 0 for d in ticks):
            raise ValueError("opposing tick inside crash")
        if ticks[0] <= 0 or ticks[-1] <= 0:
            raise ValueError("crash must start and end on a directional tick")
        if sum(d > 0 for d in ticks) != self.tick_count or self.tick_count < config.min_ticks:
            raise ValueError("tick count below threshold")
        num, den = pct_as_fraction(config.min_move_pct)
        if sign * (prices[0] - prices[-1]) * 100 * den <= num * prices[0]:
            raise ValueError("move does not exceed threshold")


def _to_arrays(trades: Sequence[TradeRecord]):
    ts = np.fromiter((t.ts for t in trades), np.int64, len(trades))
    px = np.fromiter((t.price for t in trades), np.int64, len(trades))
    return ts, px


def _runs(ts, px, config: DetectorConfig):
    """(direction, start, end, ticks, truncated) tuples for one venue's trades."""
    num, den = pct_as_fraction(config.min_move_pct)
    out = []
    for direction in Direction:
        s, e, k, tr = kernels.detect_runs(ts, px, direction.sign, config.min_ticks,
                                          config.max_window_ms, num, den)
        out.extend((direction, int(a), int(b), int(c), bool(d)) for a, b, c, d in zip(s, e, k, tr))
    out.sort(key=lambda r: (r[1], r[0] is Direction.UP))
    return out


def detect_crashes(trades: Sequence[TradeRecord], config: DetectorConfig = DetectorConfig()) -> list[CrashEvent]:
    """Crashes in one (symbol, exchange) trade sequence ordered by time."""
    if not trades:
        return []
    ts, px = _to_arrays(trades)
    if np.any(np.diff(ts) < 0):
        raise ValueError("trades must be ordered by timestamp")
    first = trades[0]
    return [CrashEvent(first.symbol, first.exchange, d, tuple(trades[s:e + 1]), k, tr)
            for d, s, e, k, tr in _runs(ts, px, config)]


def detect_stream(stream: EventStream, config: DetectorConfig = DetectorConfig()) -> list[CrashEvent]:
    """Run the detector separately on each exchange's trades in a symbol stream."""
    crashes = []
    trade_rows = np.flatnonzero(stream.kind == TRADE)
    venues = stream.exchange[trade_rows]
    for v in np.unique(venues):
        rows = trade_rows[venues == v]
        runs = _runs(stream.ts[rows], stream.price[rows], config)
        for d, s, e, k, tr in runs:
            trades = tuple(stream.record(int(i)) for i in rows[s:e + 1])
            crashes.append(CrashEvent(stream.symbol, ExchangeId(int(v)), d, trades, k, tr))
    crashes.sort(key=lambda c: (c.start_ts, c.start_seq, c.direction is Direction.UP))
    return crashes


@dataclass
class CrashStats:
    n_crashes: int
    n_up: int
    n_down: int
    avg_pct_change: float | None
    avg_duration_ms: float | None
    avg_volume: float | None
    avg_trades: float | None
    iso_trade_pct: float | None
    exchange_shares: dict = field(default_factory=dict)


def crash_stats(crashes: Sequence[CrashEvent]) -> CrashStats:
    """Table-1 style aggregates.

    The average percentage change uses absolute moves and skips crashes in
    stocks priced under $1 as well as moves beyond 100%.  The ISO share is
    total ISO trades over total trades.
    """
    n = len(crashes)
    n_up = sum(c.direction is Direction.UP for c in crashes)
    if n == 0:
        return CrashStats(0, 0, 0, None, None, None, None, None, {})
    moves = [abs(c.pct_change) for c in crashes
             if c.trades[0].price >= PRICE_SCALE and abs(c.pct_change) <= 100.0]
    total_trades = sum(c.n_trades for c in crashes)
    iso = sum(sum(t.is_iso for t in c.trades) for c in crashes)
    shares = {}
    for ex in ExchangeId:
        cnt = sum(c.exchange == ex for c in crashes)
        if cnt:
            shares[ex.label] = 100.0 * cnt / n
    return CrashStats(
        n_crashes=n,
        n_up=n_up,
        n_down=n - n_up,
        avg_pct_change=sum(moves) / len(moves) if moves else None,
        avg_duration_ms=sum(c.duration_ms for c in crashes) / n,
        avg_volume=sum(c.total_volume for c in crashes) / n,
        avg_trades=total_trades / n,
        iso_trade_pct=100.0 * iso / total_trades,
        exchange_shares=shares,
    )
