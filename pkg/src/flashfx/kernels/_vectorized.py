"""Whole-array numpy implementations used when numba is disabled."""

import numpy as np

from ._loops import CROSSED, EMPTY, LOCKED, N_VENUES, NORMAL, ONE_SIDED


def nbbo_scan(exch, bid, bsz, off, osz, book, last):
    n = exch.shape[0]
    if n == 0:
        e = np.empty(0, np.int64)
        return (e, e, e, e, np.empty(0, np.int8), np.empty(0, np.int16),
                np.empty(0, np.int16), np.empty(0, bool))
    # prepend the carried book as one pseudo-quote per venue
    venues = np.arange(N_VENUES)
    ex = np.concatenate([venues, exch.astype(np.int64)])
    b = np.concatenate([book[0], np.where(bsz > 0, bid, 0)])
    bs = np.concatenate([book[1], np.maximum(bsz, 0)])
    o = np.concatenate([book[2], np.where(osz > 0, off, 0)])
    os_ = np.concatenate([book[3], np.maximum(osz, 0)])
    pos = np.arange(ex.shape[0])

    tops = np.empty((4, N_VENUES, n), np.int64)
    for v in range(N_VENUES):
        last_idx = np.maximum.accumulate(np.where(ex == v, pos, -1))[N_VENUES:]
        tops[0, v] = b[last_idx]
        tops[1, v] = bs[last_idx]
        tops[2, v] = o[last_idx]
        tops[3, v] = os_[last_idx]

    bid_live = tops[1] > 0
    off_live = tops[3] > 0
    bid_px = np.where(bid_live, tops[0], -1)
    nbb = bid_px.max(axis=0)
    at_bid = bid_live & (bid_px == nbb)
    nbb_sz = np.where(at_bid, tops[1], 0).sum(axis=0)
    big = np.iinfo(np.int64).max
    off_px = np.where(off_live, tops[2], big)
    nbo = off_px.min(axis=0)
    at_off = off_live & (off_px == nbo)
    nbo_sz = np.where(at_off, tops[3], 0).sum(axis=0)
    weights = (1 << venues)[:, None]
    bmask = (at_bid * weights).sum(axis=0).astype(np.int16)
    omask = (at_off * weights).sum(axis=0).astype(np.int16)
    has_b = nbb_sz > 0
    has_o = nbo_sz > 0
    nbb = np.where(has_b, nbb, 0)
    nbo = np.where(has_o, nbo, 0)

    status = np.full(n, EMPTY, np.int8)
    status[has_b ^ has_o] = ONE_SIDED
    two = has_b & has_o
    status[two & (nbb < nbo)] = NORMAL
    status[two & (nbb == nbo)] = LOCKED
    status[two & (nbb > nbo)] = CROSSED

    cols = np.stack([nbb, nbb_sz, nbo, nbo_sz, status.astype(np.int64)])
    prev = np.concatenate([last[:, None], cols[:, :-1]], axis=1)
    changed = np.any(cols != prev, axis=0)

    book[0], book[1], book[2], book[3] = tops[0, :, -1], tops[1, :, -1], tops[2, :, -1], tops[3, :, -1]
    last[:] = cols[:, -1]
    return nbb, nbb_sz, nbo, nbo_sz, status, bmask, omask, changed


def detect_runs(ts, px, sign, min_ticks, max_window, move_num, move_den):
    """Whole-tape equivalent of the streaming scan in ``_loops.detect_scan``."""
    n = ts.shape[0]
    empty = np.empty(0, np.int64)
    if n < 2:
        return empty, empty, empty, np.empty(0, bool)
    d = sign * (px[:-1] - px[1:])  # d[k] is the tick from trade k to k+1
    directional = d > 0
    opposing = d < 0
    cum = np.concatenate([[0], np.cumsum(directional)])

    # segment start for trade j: one past the last opposing tick landing at or before j
    land = np.where(np.concatenate([[False], opposing]), np.arange(n), 0)
    seg_start = np.maximum.accumulate(land)

    # next trade at or after k whose outgoing tick is directional
    tight = np.concatenate([directional, [False]])
    nxt = np.where(tight, np.arange(n), n)
    nxt = np.minimum.accumulate(nxt[::-1])[::-1]

    ends = np.flatnonzero(np.concatenate([[False], directional]))
    if ends.size == 0:
        return empty, empty, empty, np.empty(0, bool)
    by_time = np.searchsorted(ts, ts[ends] - max_window, side="left")
    cand = np.maximum(by_time, seg_start[ends])
    starts = nxt[np.minimum(cand, n - 1)]
    ok = starts < ends
    starts_c = np.where(ok, starts, 0)
    ticks = cum[ends] - cum[starts_c]
    move = sign * (px[starts_c] - px[ends])
    ok &= ticks >= min_ticks
    ok &= move * 100 * move_den > move_num * np.abs(px[starts_c])
    q_start = starts[ok]
    q_end = ends[ok]
    if q_end.size == 0:
        return empty, empty, empty, np.empty(0, bool)

    new = np.ones(q_end.size, bool)
    new[1:] = q_start[1:] > q_end[:-1]
    group = np.cumsum(new) - 1
    comp_start = q_start[new]
    comp_end = np.zeros(comp_start.size, np.int64)
    np.maximum.at(comp_end, group, q_end)
    comp_ticks = cum[comp_end] - cum[comp_start]
    trunc = np.zeros(comp_start.size, bool)
    if not opposing[comp_end[-1]:].any():
        trunc[-1] = True
    return comp_start, comp_end, comp_ticks, trunc
