"""Build acceptance checks, one per criterion.

Each check prints a single ``[PASS]``/``[FAIL]`` line with its measured
numbers.  Under pytest the lines are also gathered into the terminal
summary; run this file directly to see just the report.
"""

from __future__ import annotations

import json
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np
import pytest

from flashfx.classify import CrashType, classify_crash
from flashfx.cli import main as cli_main
from flashfx.detect import detect_stream
from flashfx.fleetliq import fit_logit, information, log_likelihood, score, sigmoid
from flashfx.liquidity import aggregate_event_study, event_window_series, locked_crossed_fraction, nbbo_spread, \
    relative_spread
from flashfx.nbbo import NbboHistory, NbboState
from flashfx.simgen import generate_scenario, write_scenario
from flashfx.stream import StreamingPipeline, run_synthetic
from flashfx.tape import TRADE, EventStream, ExchangeId, QuoteRecord, TradeRecord

sys.path.insert(0, str(Path(__file__).parent))
import gs_fixture  # noqa: E402
from oracles import brute_force_crashes, nbbo_from_scratch, random_tape  # noqa: E402
from scenario_tools import analyse_scenario, streams_of  # noqa: E402

pytestmark = pytest.mark.acceptance

REPORT: list[str] = []


def report(num: int, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] C{num:02d} {text}"
    REPORT.append(line)
    print(line, flush=True)


def _labels(found):
    return [{k: v for k, v in d.items() if k not in ("crash", "class")} for d in found]


# 1 ---------------------------------------------------------------------------

def test_c01_replay_fixture():
    t0 = time.perf_counter()
    trades, quotes = gs_fixture.build()
    (s,) = streams_of(trades, quotes).values()
    h = NbboHistory(s)
    crashes = detect_stream(s)
    kinds = [classify_crash(c, h, s).kind for c in crashes]
    dt = time.perf_counter() - t0
    c = crashes[0] if crashes else None
    ok = (len(crashes) == 1 and c.direction.value == "Down" and kinds[0] is CrashType.ISO_INITIATED
          and c.iso_fraction == 57 / 58 and -1.7 <= c.pct_change <= -1.5 and dt < 1.0)
    report(1, ok, f"replay: {len(crashes)} crash, {kinds[0].label if kinds else '-'}, "
                  f"iso={c.iso_fraction if c else float('nan'):.6f} pct={c.pct_change if c else float('nan'):.4f}% "
                  f"trades={c.n_trades if c else 0} vol={c.total_volume if c else 0} in {dt:.3f}s (< 1 s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def _stream_detect(ts, px, rng):
    """Feed one venue's trades through the streaming pipeline in random chunks."""
    n = len(ts)
    pipe = StreamingPipeline()
    kind = np.full(n, TRADE, np.int8)
    ex = np.ones(n, np.int64)
    zero = np.zeros(n, np.int64)
    cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(0, 6))), replace=False)) \
        if n > 1 else []
    bounds = [0, *cuts, n]
    for a, b in zip(bounds, bounds[1:]):
        pipe.feed(kind[a:b], ts[a:b], ex[a:b], px[a:b], zero[a:b] + 100, zero[a:b], zero[a:b])
    pipe.close()
    out = {1: [], -1: []}
    for c in pipe.crashes:
        out[c.direction.sign].append((c.start_index, c.end_index, c.tick_count, c.truncated))
    return {k: sorted(v) for k, v in out.items()}


def test_c02_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = total = 0
    for _ in range(1000):
        ts, px = random_tape(rng, int(rng.integers(2, 10_001)))
        got = _stream_detect(ts, px, rng)
        for sign in (1, -1):
            want = brute_force_crashes(ts, px, sign)
            total += len(want)
            mismatches += got[sign] != want
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and total > 0 and dt < 60
    report(2, ok, f"oracle: 1000 tapes, {total} crashes, {mismatches} mismatching tape-directions in {dt:.1f}s (< 60 s)")
    assert ok


# 3 ---------------------------------------------------------------------------

def _run_tape(ticks, units, span, up=False):
    step = units // ticks
    sgn = 1 if up else -1
    px = [1_000_000 + sgn * step * k for k in range(ticks + 1)] + [1_000_000 + sgn * step * ticks - sgn * 100]
    ts = [round(span * k / ticks) for k in range(ticks + 1)] + [span + 5000]
    trades = [TradeRecord(t, "X", ExchangeId.NYSE, p, 100, False, "@") for t, p in zip(ts, px)]
    return len(detect_stream(EventStream.from_records("X", trades)))


def test_c03_threshold_boundaries():
    cases = [("9 ticks", (9, 18_000, 500), 0), ("10 ticks / 1501 ms", (10, 9_000, 1501), 0),
             ("10 ticks / exactly 0.8%", (10, 8_000, 1000), 0), ("10 ticks / 1500 ms / 0.81%", (10, 8_100, 1500), 1)]
    got = {name: (_run_tape(*args), _run_tape(*args, up=True)) for name, args, _ in cases}
    ok = all(got[name] == (want, want) for name, _, want in cases)
    report(3, ok, "boundaries: " + ", ".join(f"{n} -> {got[n][0]}/{got[n][1]}" for n, _, _ in cases)
           + " (down/up; want 0,0,0,1)")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c04_classification_ground_truth():
    t0 = time.perf_counter()
    venues = ["NYSE", "NASDAQ", "ARCA"]
    agree = n = 0
    for kind in ("IsoSweep", "AutoRouting"):
        for i in range(100):
            sc = generate_scenario({"kind": kind, "seed": i, "direction": ("down", "up")[i % 2],
                                    "crash_venue": venues[i % 3]})
            n += 1
            agree += _labels(analyse_scenario(sc)) == sc.label["crashes"]
    benign_hits = 0
    for i in range(100):
        sc = generate_scenario({"kind": "BenignRandomWalk", "seed": i})
        benign_hits += len(analyse_scenario(sc))
    dt = time.perf_counter() - t0
    ok = agree == n and benign_hits == 0 and dt < 120
    report(4, ok, f"ground truth: {agree}/{n} crash scenarios match labels, "
                  f"{benign_hits} detections on 100 benign tapes in {dt:.1f}s (< 120 s)")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c05_nbbo_oracle():
    rng = np.random.default_rng(55)
    n = 100_000
    is_trade = rng.random(n) < 0.2
    ex = rng.integers(0, 7, n)
    bid = rng.integers(9990, 10010, n) * 100
    off = bid + rng.integers(-3, 6, n) * 100
    bsz = np.where(rng.random(n) < 0.1, 0, rng.integers(1, 10, n) * 100)
    osz = np.where(rng.random(n) < 0.1, 0, rng.integers(1, 10, n) * 100)
    recs = []
    for i in range(n):
        e = ExchangeId(int(ex[i]))
        if is_trade[i]:
            recs.append(TradeRecord(i, "X", e, int(bid[i]), 100, False, "@"))
        else:
            recs.append(QuoteRecord(i, "X", e, int(bid[i]) if bsz[i] else 0, int(bsz[i]),
                                    int(off[i]) if osz[i] else 0, int(osz[i])))
    h = NbboHistory(EventStream.from_records("X", recs))
    state = NbboState("X")
    tops: dict = {}
    bad = qi = 0
    for r in recs:
        if isinstance(r, QuoteRecord):
            state.apply_quote(r)
            tops[r.exchange] = (r.bid, r.bid_size, r.offer, r.offer_size)
        want = nbbo_from_scratch(tops)
        nb = state.nbbo
        got = (nb.best_bid, nb.best_bid_size, nb.best_offer, nb.best_offer_size, int(nb.status))
        bad += got != want
        if isinstance(r, QuoteRecord):
            bad += (int(h.nbb[qi]), int(h.nbb_size[qi]), int(h.nbo[qi]), int(h.nbo_size[qi]),
                    int(h.status[qi])) != want
            qi += 1
    ok = bad == 0
    report(5, ok, f"nbbo: {n} events ({qi} quotes), {bad} mismatches vs from-scratch recomputation")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c06_spread_formulas():
    rs = relative_spread(100, 101)
    zeros = (nbbo_spread(10.05, 10.05), nbbo_spread(10.06, 10.05))
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10_000):
        b = float(rng.uniform(0.01, 5000))
        o = b + float(rng.uniform(0, 0.05 * b))
        c = float(10 ** rng.uniform(-3, 3))
        worst = max(worst, abs(relative_spread(b, o) - relative_spread(c * b, c * o)))
    ok = abs(rs - 0.99502) <= 1e-6 and zeros == (0.0, 0.0) and worst <= 1e-12
    # the stated 0.99502 is 100/100.5 cut to five decimals; both deviations are shown
    report(6, ok, f"spreads: relative_spread(100,101)={rs:.8f}% (|-0.99502|={abs(rs - 0.99502):.1e}, "
                  f"|-100/100.5|={abs(rs - 100 / 100.5):.1e}; tol 1e-6), locked/crossed={zeros}, "
                  f"max scale deviation over 1e4 pairs={worst:.2e} (<= 1e-12)")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_c07_event_study_calibration():
    series = []
    for i in range(30):
        sc = generate_scenario({"kind": "IsoSweep", "seed": 700 + i, "direction": ("down", "up")[i % 2],
                                "pre_ms": 65_000, "post_ms": 65_000, "post_crash_spread_widen_pct": 1.0})
        (s,) = streams_of(sc.trades, sc.quotes).values()
        h = NbboHistory(s)
        for c in detect_stream(s):
            series.append(event_window_series(c.start_ts, h, "nbbo_spread", crash_id=c.crash_id))
    agg = aggregate_event_study(series)
    shift = agg.post_mean - agg.pre_mean

    quotes, t = [], 0
    for _ in range(25):
        for k in range(3):
            quotes.append(QuoteRecord(t, "X", ExchangeId.NYSE, 100_000, 100, 100_500 + 100 * k, 100))
            t += 10
        quotes.append(QuoteRecord(t, "X", ExchangeId.NYSE, 100_000, 100, 100_000, 100))
        t += 10
    lc = locked_crossed_fraction(NbboHistory(EventStream.from_records("X", quotes)), 0, t)
    ok = abs(shift - 1.0) <= 0.01 and lc == 25.0
    report(7, ok, f"event study: {len(series)} crashes, post-pre spread shift={shift:.5f} pp (1.00 +/- 0.01); "
                  f"constructed tape locked={lc:.2f}% (25.00)")
    assert ok


# 8 ---------------------------------------------------------------------------

def _feature_like(rng, n):
    return np.column_stack([np.ones(n), rng.integers(10, 1500, n), rng.uniform(0.8, 3, n), rng.choice([1, 2, 3, 5], n),
                            rng.integers(1000, 50_000, n), rng.integers(0, 2, n), rng.integers(11, 60, n),
                            rng.choice([1, 2, 3], n)]).astype(float)


def test_c08_logit():
    rng = np.random.default_rng(8)
    Xg = _feature_like(rng, 400)
    Xg /= np.abs(Xg).max(axis=0)
    yg = (rng.random(400) < 0.4).astype(float)
    worst_grad = 0.0
    h = 1e-6
    for _ in range(20):
        a = rng.normal(0, 1, 8)
        num = np.array([(log_likelihood(a + h * e, Xg, yg) - log_likelihood(a - h * e, Xg, yg)) / (2 * h)
                        for e in np.eye(8)])
        g = score(a, Xg, yg)
        worst_grad = max(worst_grad, float(np.linalg.norm(g - num) / np.linalg.norm(num)))
    # the information matrix is the negative Hessian of the same likelihood
    assert np.allclose(information(a, Xg), -np.array([(score(a + h * e, Xg, yg) - score(a - h * e, Xg, yg)) / (2 * h)
                                                       for e in np.eye(8)]), rtol=1e-4, atol=1e-6)

    alpha = np.array([-1.0, 8e-4, -0.4, 0.15, 1e-5, 0.5, -0.01, -0.3])
    X = _feature_like(rng, 5000)
    y = (rng.random(5000) < sigmoid(X @ alpha)).astype(float)
    m = fit_logit(X, y)
    z_err = np.abs(m.coef - alpha) / m.std_err
    sc = float(np.abs(score(m.coef, X, y)).max())
    p0 = float(sigmoid(0.0))
    ok = worst_grad < 1e-5 and bool(np.all(z_err < 3)) and sc < 1e-6 and p0 == 0.5
    report(8, ok, f"logit: max gradient rel. error={worst_grad:.2e} (< 1e-5) over 20 points; "
                  f"max |coef-true|/SE={z_err.max():.3f} (< 3); max |score| at MLE={sc:.2e} (< 1e-6); "
                  f"p(f=0)={p0!r}")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c09_fleeting_mechanism():
    agree = n = 0
    wrong_expect = 0
    for i in range(40):
        for lat in (0, 20, 50, 120, 400):
            sc = generate_scenario({"kind": "IsoSweep", "seed": 900 + i, "direction": ("down", "up")[i % 2],
                                    "crash_venue_at_nbbo": True, "cancel_top_before_crash": True,
                                    "sip_latency_ms": lat})
            (lab,) = sc.label["crashes"]
            crash_trades = [t for t in sc.trades if t.exchange.label == lab["exchange"]
                            and lab["start_ts"] <= t.ts <= lab["start_ts"] + 100]
            sweep_ms = max(t.ts for t in crash_trades) - lab["start_ts"]
            expect = None if 0 < lat <= sweep_ms else lat > 0
            if expect is not None:
                wrong_expect += lab["fleeting"] != expect
            found = analyse_scenario(sc)
            n += 1
            agree += len(found) == 1 and found[0]["fleeting"] == lab["fleeting"]
    ok = agree == n and wrong_expect == 0
    report(9, ok, f"fleeting: {agree}/{n} detector labels match ground truth; {wrong_expect} scenarios "
                  f"where latency 0 / latency > sweep duration gave the wrong label")
    assert ok


# 10 --------------------------------------------------------------------------

def _peak(n):
    tracemalloc.start()
    pipe, _ = run_synthetic(n)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return peak, pipe


def test_c10_throughput_and_memory():
    run_synthetic(50_000, chunk=10_000)  # warm the compiled kernels
    pipe, busy = run_synthetic(10_000_000)
    rate = pipe.stats.events / busy
    small, _ = _peak(1_000_000)
    big, bpipe = _peak(10_000_000)
    ratio = big / small
    ok = rate >= 500_000 and ratio < 1.25 and pipe.stats.events == 10_000_000
    report(10, ok, f"throughput: {rate:,.0f} events/s on one core over 1e7 events (>= 500,000); "
                   f"peak traced memory {small / 1e6:.1f} MB at 1e6 vs {big / 1e6:.1f} MB at 1e7 (ratio {ratio:.2f})")
    assert ok


# 11 --------------------------------------------------------------------------

def test_c11_determinism(tmp_path):
    tp, qp = [], []
    for day, seed in (("20100506", 1), ("20100507", 2)):
        sc = generate_scenario({"kind": "Mixed", "seed": seed, "n_crashes": 40})
        d = tmp_path / day
        write_scenario(sc, d)
        (d / "trades.csv").rename(d / f"sim_{day}_trades.csv")
        (d / "quotes.csv").rename(d / f"sim_{day}_quotes.csv")
        tp.append(str(d / f"sim_{day}_trades.csv"))
        qp.append(str(d / f"sim_{day}_quotes.csv"))
    outs = {}
    for tag, jobs in (("a", 1), ("b", 1), ("c", 8)):
        o = tmp_path / tag
        rc = cli_main(["all", "--trades", *tp, "--quotes", *qp, "--out", str(o), "--jobs", str(jobs)])
        assert rc == 0
        outs[tag] = {p.name: p.read_bytes() for p in sorted(o.iterdir())}
    same_runs = outs["a"] == outs["b"]
    same_jobs = outs["a"] == outs["c"]
    n = json.loads(outs["a"]["study_summary.json"])["n_crashes"]
    ok = same_runs and same_jobs and n == 80
    report(11, ok, f"determinism: {len(outs['a'])} report files, {n} crashes; rerun identical={same_runs}, "
                   f"jobs 1 vs 8 identical={same_jobs}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
