"""Event-study liquidity metrics in fixed windows around each crash.

Quote state is a step function, so each 100 ms bucket takes the state in
force at the bucket's end (last observation carried forward).  Buckets with
no usable state are NaN and left out of every mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyWindow, MissingSide
from .nbbo import NbboHistory, NbboStatus

METRICS = (
    "nbbo_spread",
    "exchange_spread",
    "nbbo_bid_volume",
    "nbbo_offer_volume",
    "exchange_bid_volume",
    "exchange_offer_volume",
)


def midprice(bid: float, offer: float) -> float:
    if bid <= 0 or offer <= 0:
        raise MissingSide("midprice needs both sides")
    return (offer + bid) / 2


def relative_spread(bid: float, offer: float) -> float:
    """Quoted spread as a percentage of the midprice."""
    return (offer - bid) / midprice(bid, offer) * 100.0


def nbbo_spread(bid: float, offer: float) -> float:
    """Relative NBBO spread, defined as zero for locked or crossed markets."""
    if bid <= 0 or offer <= 0:
        raise MissingSide("NBBO spread needs both sides")
    if bid >= offer:
        return 0.0
    return relative_spread(bid, offer)


@dataclass(frozen=True)
class StudyConfig:
    window_ms: int = 60_000
    bucket_ms: int = 100

    @property
    def n_side(self) -> int:
        return self.window_ms // self.bucket_ms

    def offsets(self) -> np.ndarray:
        return np.arange(-self.n_side, self.n_side, dtype=np.int64) * self.bucket_ms


@dataclass
class EventWindowSeries:
    crash_id: str
    metric: str
    offsets: np.ndarray
    values: np.ndarray  # NaN where absent


@dataclass
class AggregateSeries:
    metric: str
    offsets: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    pre_mean: float | None
    post_mean: float | None

    @property
    def pct_change(self) -> float | None:
        if self.pre_mean is None or self.post_mean is None or self.pre_mean == 0:
            return None
        return (self.post_mean - self.pre_mean) / self.pre_mean * 100.0


def _rel_spread_array(bid, offer, zero_when_crossed: bool):
    bid = bid.astype(float)
    offer = offer.astype(float)
    mid = (bid + offer) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (offer - bid) / mid * 100.0
    if zero_when_crossed:
        out = np.where(bid >= offer, 0.0, out)
    else:
        out = np.where(bid > offer, np.nan, out)
    return out


def event_window_series(start_ts: int, history: NbboHistory, metric: str, exchange: int | None = None,
                        config: StudyConfig = StudyConfig(), crash_id: str = "") -> EventWindowSeries:
    """Sample ``metric`` at the end of every bucket around ``start_ts``.

    Bucket ``b`` covers ``[start + b*w, start + (b+1)*w)`` and takes the
    state after the last quote stamped strictly before its end.  Exchange
    metrics read ``exchange``'s own top of book.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    offsets = config.offsets()
    ends = start_ts + offsets + config.bucket_ms
    values = np.full(offsets.shape, np.nan)

    if metric.startswith("nbbo"):
        idx = np.searchsorted(history.ts, ends, side="left") - 1
        ok = idx >= 0
        i = idx[ok]
        bid, bsz = history.nbb[i], history.nbb_size[i]
        off, osz = history.nbo[i], history.nbo_size[i]
    else:
        if exchange is None:
            raise ValueError("exchange metrics need a venue")
        v_ts, _, v_bid, v_bsz, v_off, v_osz = history.venue_top_series(exchange)
        idx = np.searchsorted(v_ts, ends, side="left") - 1
        ok = idx >= 0
        i = idx[ok]
        bid, bsz, off, osz = v_bid[i], v_bsz[i], v_off[i], v_osz[i]

    if metric.endswith("spread"):
        two = (bsz > 0) & (osz > 0)
        vals = _rel_spread_array(bid, off, zero_when_crossed=metric == "nbbo_spread")
        vals = np.where(two, vals, np.nan)
    elif metric.endswith("bid_volume"):
        vals = np.where(bsz > 0, bsz.astype(float), np.nan)
    else:
        vals = np.where(osz > 0, osz.astype(float), np.nan)
    values[ok] = vals
    return EventWindowSeries(crash_id, metric, offsets, values)


def quoted_volume_series(start_ts: int, history: NbboHistory, side: str, scope: str = "nbbo",
                         exchange: int | None = None, config: StudyConfig = StudyConfig(),
                         crash_id: str = "") -> EventWindowSeries:
    if side not in ("bid", "offer") or scope not in ("nbbo", "exchange"):
        raise ValueError("side must be bid/offer and scope nbbo/exchange")
    return event_window_series(start_ts, history, f"{scope}_{side}_volume", exchange, config, crash_id)


def locked_crossed_pct(statuses: Iterable[int]) -> float:
    """Percentage of two-sided NBBO updates that are locked or crossed."""
    s = np.asarray(list(statuses), dtype=np.int64)
    two = (s == NbboStatus.NORMAL) | (s == NbboStatus.LOCKED) | (s == NbboStatus.CROSSED)
    n = int(two.sum())
    if n == 0:
        raise EmptyWindow("no two-sided NBBO updates")
    bad = int(((s == NbboStatus.LOCKED) | (s == NbboStatus.CROSSED)).sum())
    return 100.0 * bad / n


def locked_crossed_fraction(history: NbboHistory, t0: int, t1: int) -> float:
    """Locked/crossed share of NBBO changes stamped in ``[t0, t1)``."""
    ch = history.change_idx
    ts = history.ts[ch]
    rows = ch[np.searchsorted(ts, t0, side="left"):np.searchsorted(ts, t1, side="left")]
    return locked_crossed_pct(history.status[rows])


def aggregate_event_study(series: Sequence[EventWindowSeries], metric: str | None = None) -> AggregateSeries:
    """Per-offset mean across crashes plus pre/post scalar means.

    Series are reduced in crash-id order so the result does not depend on
    the order in which they were computed.
    """
    if not series:
        raise ValueError("need at least one series")
    metric = metric or series[0].metric
    ordered = sorted(series, key=lambda s: s.crash_id)
    offsets = ordered[0].offsets
    stack = np.vstack([s.values for s in ordered])
    present = ~np.isnan(stack)
    count = present.sum(axis=0)
    total = np.where(present, stack, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)

    def _side_mean(sel):
        m = mean[sel & (count > 0)]
        return float(m.mean()) if m.size else None

    return AggregateSeries(metric, offsets, mean, count, _side_mean(offsets < 0), _side_mean(offsets >= 0))


@dataclass
class LockedCrossedSummary:
    pre: float | None
    during: float | None
    post: float | None


def locked_crossed_around(history: NbboHistory, start_ts: int, end_ts: int,
                          config: StudyConfig = StudyConfig()) -> LockedCrossedSummary:
    """Locked/crossed share before, during and after one crash.

    "During" is the crash interval itself; "post" runs from the crash start to
    the end of the study window, matching the spread windows.
    """
    def _safe(a, b):
        try:
            return locked_crossed_fraction(history, a, b)
        except EmptyWindow:
            return None

    return LockedCrossedSummary(
        pre=_safe(start_ts - config.window_ms, start_ts),
        during=_safe(start_ts, end_ts + 1),
        post=_safe(start_ts, start_ts + config.window_ms),
    )


def write_series_csv(path, agg: AggregateSeries) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("offset_ms,mean,count\n")
        for off, m, c in zip(agg.offsets, agg.mean, agg.count):
            fh.write(f"{off},{'' if np.isnan(m) else f'{m:.10g}'},{c}\n")


def summary_dict(agg: AggregateSeries) -> dict:
    def _r(x):
        return None if x is None else round(x, 10)
    return {"pre_mean": _r(agg.pre_mean), "post_mean": _r(agg.post_mean), "pct_change": _r(agg.pct_change)}


def write_summary_json(path, summaries: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
        fh.write("\n")
