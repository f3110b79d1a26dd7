"""Chunked NBBO + detection pipeline whose memory tracks open state only.

Events arrive as columnar chunks of one symbol's merged stream.  The NBBO
book and each (venue, direction) detector carry their state between chunks;
a venue keeps just the trailing trades an unfinished crash could still use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .detect import DetectorConfig, Direction, pct_as_fraction
from .tape import QUOTE, TRADE


@dataclass(frozen=True)
class StreamCrash:
    exchange: int
    direction: Direction
    start_index: int  # position among the venue's trades
    end_index: int
    start_ts: int
    end_ts: int
    start_price: int
    end_price: int
    tick_count: int
    truncated: bool


@dataclass
class _VenueState:
    ts: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    px: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    base: int = 0  # absolute index of ts[0]
    scanned: int = 0
    det: dict = field(default_factory=lambda: {d: kernels.new_detect_state() for d in Direction})


@dataclass
class PipelineStats:
    events: int = 0
    trades: int = 0
    quotes: int = 0
    nbbo_changes: int = 0
    locked_crossed: int = 0
    two_sided: int = 0


class StreamingPipeline:
    def __init__(self, config: DetectorConfig = DetectorConfig()):
        self.config = config
        self.num, self.den = pct_as_fraction(config.min_move_pct)
        self.book, self.last = kernels.new_book()
        self.venues: dict[int, _VenueState] = {}
        self.stats = PipelineStats()
        self.crashes: list[StreamCrash] = []

    def feed(self, kind, ts, exchange, price, size, offer, offer_size) -> list[StreamCrash]:
        """Process one chunk; returns the crashes completed by it."""
        kind = np.asarray(kind)
        st = self.stats
        st.events += len(kind)
        q = kind == QUOTE
        if q.any():
            nbb, nbb_sz, nbo, nbo_sz, status, _, _, changed = kernels.nbbo_scan(
                exchange[q], price[q], size[q], offer[q], offer_size[q], self.book, self.last)
            s = status[changed]
            st.quotes += int(q.sum())
            st.nbbo_changes += int(changed.sum())
            st.locked_crossed += int(((s == kernels.LOCKED) | (s == kernels.CROSSED)).sum())
            st.two_sided += int((s <= kernels.CROSSED).sum())
        t = kind == TRADE
        done = []
        if t.any():
            st.trades += int(t.sum())
            t_ex, t_ts, t_px = exchange[t], ts[t], price[t]
            for v in np.unique(t_ex):
                sel = t_ex == v
                done.extend(self._scan_venue(int(v), t_ts[sel], t_px[sel], final=False))
        self.crashes.extend(done)
        return done

    def close(self) -> list[StreamCrash]:
        """Flush runs still open at the end of the tape (marked truncated)."""
        done = []
        for v in sorted(self.venues):
            done.extend(self._scan_venue(v, np.empty(0, np.int64), np.empty(0, np.int64), final=True))
        self.crashes.extend(done)
        return done

    def _scan_venue(self, v: int, ts, px, final: bool) -> list[StreamCrash]:
        vs = self.venues.get(v)
        if vs is None:
            vs = self.venues[v] = _VenueState()
        if len(ts):
            vs.ts = np.concatenate([vs.ts, ts])
            vs.px = np.concatenate([vs.px, px])
        n = len(vs.ts)
        if n == 0:
            return []
        out = []
        keep = n - 1
        for d in Direction:
            state = vs.det[d]
            s, e, k, tr = kernels.detect_scan(vs.ts, vs.px, d.sign, self.config.min_ticks,
                                              self.config.max_window_ms, self.num, self.den,
                                              max(vs.scanned, 1), state, final)
            for a, b, c, x in zip(s, e, k, tr):
                out.append(StreamCrash(v, d, vs.base + int(a), vs.base + int(b), int(vs.ts[a]),
                                       int(vs.ts[b]), int(vs.px[a]), int(vs.px[b]), int(c), bool(x)))
            need = max(state[0], state[1])
            if state[2]:
                need = min(need, state[3])
            keep = min(keep, int(need))
        keep = max(keep, 0)
        if keep:
            vs.ts = vs.ts[keep:].copy()
            vs.px = vs.px[keep:].copy()
            vs.base += keep
            for state in vs.det.values():
                state[0] = max(state[0] - keep, 0)
                state[1] = max(state[1] - keep, 0)
                state[3] -= keep
                state[4] -= keep
        vs.scanned = len(vs.ts)
        out.sort(key=lambda c: (c.start_ts, c.direction is Direction.UP))
        return out


def synthetic_chunks(n_events: int, chunk: int = 1 << 18, seed: int = 0, n_venues: int = 3,
                     quote_share: float = 0.7):
    """Yield columnar chunks of a synthetic single-symbol tape.

    Trades follow per-venue random walks with occasional sharp runs so the
    detector has work to do; quotes jitter around the walk.
    """
    rng = np.random.default_rng(seed)
    t0 = 34_200_000
    mid = 500_000
    done = 0
    while done < n_events:
        m = min(chunk, n_events - done)
        kind = (rng.random(m) < quote_share).astype(np.int8)
        ts = t0 + np.cumsum(rng.integers(0, 2, m))
        t0 = int(ts[-1])
        exch = rng.integers(1, n_venues + 1, m).astype(np.int64)
        steps = rng.choice(np.array([-100, 0, 100]), m)
        burst = rng.random(m) < 0.002
        steps[burst] = -400
        path = mid + np.cumsum(steps)
        path = np.clip(path, 100_000, 2_000_000)
        mid = int(path[-1])
        half = rng.integers(1, 6, m) * 100
        price = np.where(kind == TRADE, path, path - half).astype(np.int64)
        size = rng.integers(1, 11, m).astype(np.int64) * 100
        offer = np.where(kind == QUOTE, path + half, 0).astype(np.int64)
        offer_size = np.where(kind == QUOTE, rng.integers(1, 11, m) * 100, 0).astype(np.int64)
        yield kind, ts.astype(np.int64), exch, price, size, offer, offer_size
        done += m


def run_synthetic(n_events: int, chunk: int = 1 << 18, seed: int = 0,
                  config: DetectorConfig = DetectorConfig()) -> tuple[StreamingPipeline, float]:
    """Push a synthetic tape through the pipeline; returns it and busy seconds
    (time inside :meth:`StreamingPipeline.feed`, generation excluded)."""
    import time

    pipe = StreamingPipeline(config)
    busy = 0.0
    for c in synthetic_chunks(n_events, chunk, seed):
        t = time.perf_counter()
        pipe.feed(*c)
        busy += time.perf_counter() - t
    t = time.perf_counter()
    pipe.close()
    busy += time.perf_counter() - t
    return pipe, busy
