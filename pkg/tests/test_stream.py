import numpy as np
import pytest

from flashfx import kernels
from flashfx.detect import DetectorConfig, Direction, pct_as_fraction
from flashfx.stream import StreamingPipeline, run_synthetic, synthetic_chunks
from flashfx.tape import TRADE


def _whole(n, seed):
    cols = [np.concatenate(c) for c in zip(*synthetic_chunks(n, chunk=n, seed=seed))]
    return cols


def _key(c):
    return (c.exchange, c.direction.value, c.start_index, c.end_index, c.tick_count, c.truncated)


def _run(cols, chunk):
    pipe = StreamingPipeline()
    n = len(cols[0])
    for a in range(0, n, chunk):
        pipe.feed(*(c[a:a + chunk] for c in cols))
    pipe.close()
    return pipe


@pytest.mark.parametrize("chunk", [1, 7, 997, 4096, 50_000])
def test_chunking_invariant(chunk):
    cols = _whole(20_000 if chunk == 1 else 50_000, seed=3)
    ref = _run(cols, len(cols[0]))
    got = _run(cols, chunk)
    assert sorted(map(_key, got.crashes)) == sorted(map(_key, ref.crashes))
    assert got.stats == ref.stats


def test_matches_batch_detector():
    cols = _whole(200_000, seed=1)
    kind, ts, ex, px = cols[0], cols[1], cols[2], cols[3]
    pipe = _run(cols, 8192)
    cfg = DetectorConfig()
    num, den = pct_as_fraction(cfg.min_move_pct)
    want = set()
    t = kind == TRADE
    for v in np.unique(ex[t]):
        sel = t & (ex == v)
        for d in Direction:
            s, e, k, tr = kernels.detect_runs(ts[sel], px[sel], d.sign, cfg.min_ticks, cfg.max_window_ms, num, den)
            want |= {(int(v), d.value, int(a), int(b), int(c), bool(x)) for a, b, c, x in zip(s, e, k, tr)}
    assert len(want) > 10
    assert set(map(_key, pipe.crashes)) == want


def test_nbbo_stats_match_batch():
    cols = _whole(30_000, seed=2)
    kind, _, ex, px, sz, off, osz = cols
    q = kind != TRADE
    *_, status, _, _, changed = kernels.nbbo_scan(ex[q], px[q], sz[q], off[q], osz[q])
    pipe = _run(cols, 1000)
    assert pipe.stats.nbbo_changes == int(changed.sum())
    assert pipe.stats.quotes == int(q.sum()) and pipe.stats.trades == int((~q).sum())


def test_buffers_stay_small():
    pipe = StreamingPipeline()
    for c in synthetic_chunks(400_000, chunk=20_000, seed=5):
        pipe.feed(*c)
        assert max(len(v.ts) for v in pipe.venues.values()) < 5_000
    pipe.close()


def test_run_synthetic_counts():
    pipe, busy = run_synthetic(100_000, chunk=30_000, seed=0)
    assert pipe.stats.events == 100_000 and busy > 0
    assert all(c.end_ts - c.start_ts >= 0 for c in pipe.crashes)
