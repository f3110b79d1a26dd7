"""Per-venue top-of-book state, NBBO consolidation and quote-history queries."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels
from .errors import NoHistory, StaleQuote
from .tape import PRICE_SCALE, QUOTE, EventStream, ExchangeId, QuoteRecord, format_price


class NbboStatus(IntEnum):
    NORMAL = kernels.NORMAL
    LOCKED = kernels.LOCKED
    CROSSED = kernels.CROSSED
    ONE_SIDED = kernels.ONE_SIDED
    EMPTY = kernels.EMPTY

    @property
    def label(self) -> str:
        return {0: "Normal", 1: "Locked", 2: "Crossed", 3: "OneSided", 4: "Empty"}[int(self)]


def _venues(mask: int) -> frozenset:
    return frozenset(ExchangeId(v) for v in range(kernels.N_VENUES) if mask >> v & 1)


@dataclass(frozen=True)
class Nbbo:
    best_bid: int
    best_bid_size: int
    best_offer: int
    best_offer_size: int
    bid_venues: frozenset
    offer_venues: frozenset
    status: NbboStatus

    @property
    def has_bid(self) -> bool:
        return self.best_bid_size > 0

    @property
    def has_offer(self) -> bool:
        return self.best_offer_size > 0


def nbbo_status(n: Nbbo) -> NbboStatus:
    if not n.has_bid and not n.has_offer:
        return NbboStatus.EMPTY
    if not (n.has_bid and n.has_offer):
        return NbboStatus.ONE_SIDED
    if n.best_bid > n.best_offer:
        return NbboStatus.CROSSED
    if n.best_bid == n.best_offer:
        return NbboStatus.LOCKED
    return NbboStatus.NORMAL


def is_stub_quote(price: int, ref_price: int, threshold_pct: float = 50.0) -> bool:
    """True for a one-sided price far from the market (fixed-point inputs).

    A price at or below one cent is always a stub.
    """
    if ref_price <= 0:
        raise ValueError("reference price must be positive")
    if price <= PRICE_SCALE // 100:
        return True
    return abs(price / ref_price - 1.0) * 100.0 > threshold_pct


class NbboState:
    """Incremental NBBO for one symbol, fed one quote at a time."""

    def __init__(self, symbol: str | None = None):
        self.symbol = symbol
        self.book, self._last = kernels.new_book()
        self.clock = -1
        self.stale_count = 0
        self.nbbo: Nbbo | None = None

    def apply_quote(self, q: QuoteRecord, strict: bool = False) -> Nbbo | None:
        """Replace ``q.exchange``'s top and return the new NBBO if it changed.

        A quote older than the state clock is counted and ignored (or raises
        StaleQuote when ``strict``).
        """
        if self.symbol is not None and q.symbol != self.symbol:
            raise ValueError(f"quote for {q.symbol} fed to {self.symbol} book")
        if q.ts < self.clock:
            self.stale_count += 1
            if strict:
                raise StaleQuote(f"quote at {q.ts} older than clock {self.clock}")
            return None
        self.clock = q.ts
        out = kernels.nbbo_scan(np.array([int(q.exchange)]), np.array([q.bid]), np.array([q.bid_size]),
                                np.array([q.offer]), np.array([q.offer_size]), self.book, self._last)
        nbb, nbb_sz, nbo, nbo_sz, status, bmask, omask, changed = (a[0] for a in out)
        self.nbbo = Nbbo(int(nbb), int(nbb_sz), int(nbo), int(nbo_sz), _venues(int(bmask)),
                         _venues(int(omask)), NbboStatus(int(status)))
        return self.nbbo if changed else None

    def exchange_top(self, exchange: ExchangeId) -> tuple[int, int, int, int]:
        v = int(exchange)
        return tuple(int(x) for x in self.book[:, v])

    def protected_quotes(self) -> list[tuple[ExchangeId, str, int, int]]:
        if self.nbbo is None:
            return []
        return _protected(self.nbbo, self.book)


def _protected(n: Nbbo, book: np.ndarray) -> list[tuple[ExchangeId, str, int, int]]:
    out = []
    if n.has_bid:
        for ex in sorted(n.bid_venues):
            out.append((ex, "bid", int(book[0, ex]), int(book[1, ex])))
    if n.has_offer:
        for ex in sorted(n.offer_venues):
            out.append((ex, "offer", int(book[2, ex]), int(book[3, ex])))
    return out


def protected_quotes(state) -> list[tuple[ExchangeId, str, int, int]]:
    """Venues quoting at the national best on each side with displayed size.

    Accepts an :class:`NbboState` or a ``(NbboHistory, index)`` pair.
    """
    if isinstance(state, NbboState):
        return state.protected_quotes()
    history, i = state
    if i < 0:
        return []
    return _protected(history.nbbo_at(i), history.venue_tops(i))


@dataclass(frozen=True)
class QuoteBounds:
    least_bid: int
    least_offer: int

    def contains(self, price: int) -> bool:
        return self.least_bid <= price <= self.least_offer


class NbboHistory:
    """NBBO after every quote of one symbol's stream, plus the raw quotes.

    Quote ``i`` sits at stream position ``seq[i]``; trades interleave by
    comparing stream positions.
    """

    def __init__(self, stream: EventStream):
        idx = np.flatnonzero(stream.kind == QUOTE)
        self.symbol = stream.symbol
        self.seq = idx.astype(np.int64)
        self.ts = stream.ts[idx]
        self.exchange = stream.exchange[idx].astype(np.int64)
        self.bid = stream.price[idx]
        self.bid_size = stream.size[idx]
        self.offer = stream.offer[idx]
        self.offer_size = stream.offer_size[idx]
        (self.nbb, self.nbb_size, self.nbo, self.nbo_size, self.status, self.bid_mask,
         self.offer_mask, self.changed) = kernels.nbbo_scan(
            self.exchange, self.bid, self.bid_size, self.offer, self.offer_size)
        self._by_venue = [np.flatnonzero(self.exchange == v) for v in range(kernels.N_VENUES)]
        self.change_idx = np.flatnonzero(self.changed)

    def __len__(self) -> int:
        return len(self.seq)

    def index_before_seq(self, seq: int) -> int:
        """Last quote strictly before stream position ``seq`` (-1 if none)."""
        return int(np.searchsorted(self.seq, seq, side="left")) - 1

    def index_at_time(self, t: int) -> int:
        """Last quote with ts <= t (-1 if none)."""
        return int(np.searchsorted(self.ts, t, side="right")) - 1

    def nbbo_at(self, i: int) -> Nbbo:
        return Nbbo(int(self.nbb[i]), int(self.nbb_size[i]), int(self.nbo[i]), int(self.nbo_size[i]),
                    _venues(int(self.bid_mask[i])), _venues(int(self.offer_mask[i])),
                    NbboStatus(int(self.status[i])))

    def venue_tops(self, i: int) -> np.ndarray:
        """int64[4, venues] book (bid, bid size, offer, offer size) after quote ``i``."""
        book = np.zeros((4, kernels.N_VENUES), np.int64)
        if i < 0:
            return book
        for v, rows in enumerate(self._by_venue):
            k = int(np.searchsorted(rows, i, side="right")) - 1
            if k >= 0:
                r = rows[k]
                if self.bid_size[r] > 0:
                    book[0, v], book[1, v] = self.bid[r], self.bid_size[r]
                if self.offer_size[r] > 0:
                    book[2, v], book[3, v] = self.offer[r], self.offer_size[r]
        return book

    def venue_top_series(self, exchange: int):
        """Raw quote rows of one venue: (ts, seq, bid, bid size, offer, offer size)."""
        rows = self._by_venue[int(exchange)]
        return (self.ts[rows], self.seq[rows], self.bid[rows], self.bid_size[rows],
                self.offer[rows], self.offer_size[rows])


def quote_bounds(history: NbboHistory, t: int, window: int = 1000, ref_price: int | None = None,
                 stub_pct: float = 50.0) -> QuoteBounds:
    """Least aggressive national best bid and offer over ``(t - window, t]``.

    The snapshot in force when the window opens is included.  Stub prices
    (relative to ``ref_price``, or each snapshot's midprice when None) are
    skipped.  Raises NoHistory when either side has no usable snapshot.
    """
    ch = history.change_idx
    ts = history.ts[ch]
    lo = int(np.searchsorted(ts, t - window, side="right"))
    hi = int(np.searchsorted(ts, t, side="right"))
    first = max(lo - 1, 0)
    rows = ch[first:hi]
    least_bid = None
    least_offer = None
    for i in rows:
        b, bs, o, os_ = history.nbb[i], history.nbb_size[i], history.nbo[i], history.nbo_size[i]
        ref = ref_price
        if ref is None and bs > 0 and os_ > 0:
            ref = (b + o) // 2
        if bs > 0 and not (b <= PRICE_SCALE // 100 or (ref and is_stub_quote(int(b), int(ref), stub_pct))):
            least_bid = int(b) if least_bid is None else min(least_bid, int(b))
        if os_ > 0 and not (o <= PRICE_SCALE // 100 or (ref and is_stub_quote(int(o), int(ref), stub_pct))):
            least_offer = int(o) if least_offer is None else max(least_offer, int(o))
    if least_bid is None or least_offer is None:
        raise NoHistory(f"no two-sided non-stub NBBO in ({t - window}, {t}]")
    return QuoteBounds(least_bid, least_offer)


def write_nbbo_log(path, history: NbboHistory) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("ts,best_bid,bid_size,best_offer,offer_size,status\n")
        for i in history.change_idx:
            fh.write(f"{history.ts[i]},{format_price(history.nbb[i])},{history.nbb_size[i]},"
                     f"{format_price(history.nbo[i])},{history.nbo_size[i]},"
                     f"{NbboStatus(int(history.status[i])).label}\n")
