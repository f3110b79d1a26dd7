"""Attribute detected crashes to ISO sweeps or to Order Protection auto-routing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .detect import CrashEvent, Direction
from .errors import InsufficientQuoteHistory, NoHistory
from .nbbo import NbboHistory, QuoteBounds, quote_bounds
from .tape import TRADE, EventStream, TradeRecord


class CrashType(IntEnum):
    ISO_INITIATED = 1
    AUTO_ROUTING_INITIATED = 2
    UNCLASSIFIED = 3

    @property
    def label(self) -> str:
        return ("IsoInitiated", "AutoRoutingInitiated", "Unclassified")[self - 1]

    @classmethod
    def from_label(cls, label: str) -> "CrashType":
        return {t.label: t for t in cls}[label]


@dataclass(frozen=True)
class ClassifierConfig:
    flicker_ms: int = 1000
    stub_pct: float = 50.0
    clear_lookback_ms: int = 1000


@dataclass(frozen=True)
class CrashClassification:
    kind: CrashType
    prefix_k: int
    top_cleared: bool
    notes: str = ""


def exception_prefix(trades: Sequence[TradeRecord], bounds: QuoteBounds | None, require_iso: bool) -> int:
    """Length of the leading stretch holding every wrongly-marked trade that
    printed inside ``bounds``.

    Scanning stops at the first wrongly-marked trade outside the bounds (or at
    any wrongly-marked trade when ``bounds`` is None); the result is one past
    the last tolerated exception, so correctly marked leading trades do not
    count on their own.
    """
    k = 0
    for i, t in enumerate(trades):
        if t.is_iso == require_iso:
            continue
        if bounds is None or not bounds.contains(t.price):
            break
        k = i + 1
    return k


def _suffix_marked(trades: Sequence[TradeRecord], k: int, require_iso: bool) -> bool:
    return k < len(trades) and all(t.is_iso == require_iso for t in trades[k:])


def top_of_book_cleared(crash: CrashEvent, history: NbboHistory, stream: EventStream, k: int = 0,
                        lookback_ms: int = 1000) -> bool:
    """Were the protected quotes of every other venue at the NBBO (crash side)
    executed in full before the crash's first regular trade ``crash.trades[k]``?

    Each NBBO state in force during the lookback is tried, newest first; a
    state passes when, for every away venue at the national best, trades at
    that venue and that exact price printed after the state appeared and
    before the run, summing to at least the displayed size.  A newest state
    with no away venue at the best passes vacuously.
    """
    first = crash.trades[k]
    t_r, seq_r = first.ts, first.seq
    last = history.index_before_seq(seq_r)
    if last < 0:
        raise InsufficientQuoteHistory(f"no quotes before {crash.crash_id}")
    t0 = t_r - lookback_ms
    oldest = max(history.index_at_time(t0), 0)

    side = 0 if crash.direction is Direction.DOWN else 2
    mask_col = history.bid_mask if side == 0 else history.offer_mask
    crash_bit = 1 << int(crash.exchange)

    trade_rows = np.flatnonzero(stream.kind == TRADE)
    lo = np.searchsorted(stream.ts[trade_rows], t0, side="left")
    hi = np.searchsorted(trade_rows, seq_r, side="left")
    rows = trade_rows[lo:hi]
    t_seq, t_ex, t_px, t_sz = rows, stream.exchange[rows], stream.price[rows], stream.size[rows]

    for i in range(last, oldest - 1, -1):
        away = int(mask_col[i]) & ~crash_bit
        if away == 0:
            if i == last:
                return True
            continue
        book = history.venue_tops(i)
        after = t_seq > history.seq[i]
        cleared = True
        for v in range(book.shape[1]):
            if not away >> v & 1:
                continue
            hit = after & (t_ex == v) & (t_px == book[side, v])
            if t_sz[hit].sum() < book[side + 1, v]:
                cleared = False
                break
        if cleared:
            return True
    return False


def _reference_price(crash: CrashEvent, stream: EventStream) -> int | None:
    rows = np.flatnonzero(stream.kind[:crash.start_seq] == TRADE)
    return int(stream.price[rows[-1]]) if rows.size else None


def classify_crash(crash: CrashEvent, history: NbboHistory, stream: EventStream,
                   config: ClassifierConfig = ClassifierConfig()) -> CrashClassification:
    trades = crash.trades
    bounds: QuoteBounds | None = None
    notes = []
    # bounds matter only when some trade carries the minority mark
    if len({t.is_iso for t in trades}) > 1:
        try:
            bounds = quote_bounds(history, crash.start_ts, config.flicker_ms,
                                  _reference_price(crash, stream), config.stub_pct)
        except NoHistory as exc:
            notes.append(f"no quote bounds: {exc}")

    k_iso = exception_prefix(trades, bounds, require_iso=True)
    if _suffix_marked(trades, k_iso, True):
        return CrashClassification(CrashType.ISO_INITIATED, k_iso, False, "; ".join(notes))

    k_reg = exception_prefix(trades, bounds, require_iso=False)
    if _suffix_marked(trades, k_reg, False):
        try:
            cleared = top_of_book_cleared(crash, history, stream, k_reg, config.clear_lookback_ms)
        except InsufficientQuoteHistory as exc:
            notes.append(str(exc))
            return CrashClassification(CrashType.UNCLASSIFIED, k_reg, False, "; ".join(notes))
        if cleared:
            return CrashClassification(CrashType.AUTO_ROUTING_INITIATED, k_reg, True, "; ".join(notes))
        notes.append("protected quotes not cleared before run")
        return CrashClassification(CrashType.UNCLASSIFIED, k_reg, False, "; ".join(notes))

    notes.append("mixed ISO and regular marks")
    return CrashClassification(CrashType.UNCLASSIFIED, 0, False, "; ".join(notes))
