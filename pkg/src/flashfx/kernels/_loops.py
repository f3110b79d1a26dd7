"""Scalar-loop kernels.  Written in the numba-compatible subset; the package
either compiles them with ``numba.njit`` or runs them as plain Python."""

import numpy as np

N_VENUES = 7

NORMAL = 0
LOCKED = 1
CROSSED = 2
ONE_SIDED = 3
EMPTY = 4


def nbbo_scan(exch, bid, bsz, off, osz, book, last):
    """Consolidate per-venue tops into the NBBO after every quote.

    ``book`` is an int64[4, N_VENUES] array (bid px, bid size, offer px,
    offer size) and ``last`` an int64[5] array holding the previous NBBO
    (nbb, nbb size, nbo, nbo size, status); both are updated in place so a
    caller can feed a long tape in chunks.
    """
    n = exch.shape[0]
    nbb = np.empty(n, np.int64)
    nbb_sz = np.empty(n, np.int64)
    nbo = np.empty(n, np.int64)
    nbo_sz = np.empty(n, np.int64)
    status = np.empty(n, np.int8)
    bmask = np.empty(n, np.int16)
    omask = np.empty(n, np.int16)
    changed = np.empty(n, np.bool_)
    for i in range(n):
        v = exch[i]
        if bsz[i] > 0:
            book[0, v] = bid[i]
            book[1, v] = bsz[i]
        else:
            book[0, v] = 0
            book[1, v] = 0
        if osz[i] > 0:
            book[2, v] = off[i]
            book[3, v] = osz[i]
        else:
            book[2, v] = 0
            book[3, v] = 0

        bb = -1
        bs = 0
        bm = 0
        bo = -1
        os_ = 0
        om = 0
        for k in range(N_VENUES):
            if book[1, k] > 0:
                p = book[0, k]
                if p > bb:
                    bb = p
                    bs = book[1, k]
                    bm = 1 << k
                elif p == bb:
                    bs += book[1, k]
                    bm |= 1 << k
            if book[3, k] > 0:
                p = book[2, k]
                if bo < 0 or p < bo:
                    bo = p
                    os_ = book[3, k]
                    om = 1 << k
                elif p == bo:
                    os_ += book[3, k]
                    om |= 1 << k
        if bb < 0:
            bb = 0
        if bo < 0:
            bo = 0
        if bs > 0 and os_ > 0:
            if bb > bo:
                st = CROSSED
            elif bb == bo:
                st = LOCKED
            else:
                st = NORMAL
        elif bs > 0 or os_ > 0:
            st = ONE_SIDED
        else:
            st = EMPTY

        changed[i] = (bb != last[0] or bs != last[1] or bo != last[2]
                      or os_ != last[3] or st != last[4])
        last[0] = bb
        last[1] = bs
        last[2] = bo
        last[3] = os_
        last[4] = st
        nbb[i] = bb
        nbb_sz[i] = bs
        nbo[i] = bo
        nbo_sz[i] = os_
        status[i] = st
        bmask[i] = bm
        omask[i] = om
    return nbb, nbb_sz, nbo, nbo_sz, status, bmask, omask, changed


def detect_scan(ts, px, sign, min_ticks, max_window, move_num, move_den, j0, state, final):
    """Streaming single-direction crash scan over one venue's trades.

    ``sign`` is +1 for down crashes and -1 for up crashes.  A qualifying
    window (i, j) lies inside a stretch free of opposing ticks, starts and
    ends on a directional tick, has at least ``min_ticks`` directional ticks,
    spans at most ``max_window`` ms and moves by more than
    ``move_num / move_den`` percent of the starting price.  Overlapping
    qualifying windows are merged and each merged run is emitted once.

    ``state`` is int64[5]: segment start, start pointer, open flag,
    component start, component end (indices into this buffer).  Trades
    before ``j0`` were already scanned by a previous call.  Returns the
    emitted (start, end, ticks, truncated) arrays.
    """
    n = ts.shape[0]
    seg_start = state[0]
    ptr = state[1]
    comp_open = state[2]
    comp_start = state[3]
    comp_end = state[4]

    cap = n // 2 + 2
    out_s = np.empty(cap, np.int64)
    out_e = np.empty(cap, np.int64)
    out_k = np.empty(cap, np.int64)
    out_t = np.empty(cap, np.bool_)
    m = 0

    cum = np.zeros(n, np.int64)
    first = 1
    if j0 > first:
        for j in range(1, j0):
            d = sign * (px[j - 1] - px[j])
            cum[j] = cum[j - 1] + (1 if d > 0 else 0)
        first = j0

    for j in range(first, n):
        d = sign * (px[j - 1] - px[j])
        if d > 0:
            cum[j] = cum[j - 1] + 1
        else:
            cum[j] = cum[j - 1]
        if d < 0:
            if comp_open == 1:
                out_s[m] = comp_start
                out_e[m] = comp_end
                out_k[m] = cum[comp_end] - cum[comp_start]
                out_t[m] = False
                m += 1
                comp_open = 0
            seg_start = j
            continue
        if d == 0:
            continue
        if ptr < seg_start:
            ptr = seg_start
        lo = ts[j] - max_window
        while ptr < j and (ts[ptr] < lo or sign * (px[ptr] - px[ptr + 1]) <= 0):
            ptr += 1
        if ptr >= j:
            continue
        if cum[j] - cum[ptr] < min_ticks:
            continue
        p0 = px[ptr]
        if p0 < 0:
            p0 = -p0
        if sign * (px[ptr] - px[j]) * 100 * move_den <= move_num * p0:
            continue
        if comp_open == 1 and ptr <= comp_end:
            comp_end = j
        else:
            if comp_open == 1:
                out_s[m] = comp_start
                out_e[m] = comp_end
                out_k[m] = cum[comp_end] - cum[comp_start]
                out_t[m] = False
                m += 1
            comp_open = 1
            comp_start = ptr
            comp_end = j

    if final and comp_open == 1:
        out_s[m] = comp_start
        out_e[m] = comp_end
        out_k[m] = cum[comp_end] - cum[comp_start]
        out_t[m] = True
        m += 1
        comp_open = 0

    state[0] = seg_start
    state[1] = ptr
    state[2] = comp_open
    state[3] = comp_start
    state[4] = comp_end
    return out_s[:m], out_e[:m], out_k[:m], out_t[:m]
