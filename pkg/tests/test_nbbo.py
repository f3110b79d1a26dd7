import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flashfx.errors import NoHistory, StaleQuote
from flashfx.nbbo import (Nbbo, NbboHistory, NbboState, NbboStatus, is_stub_quote, nbbo_status,
                          protected_quotes, quote_bounds, write_nbbo_log)
from flashfx.tape import EventStream, ExchangeId, QuoteRecord, to_fixed

from oracles import nbbo_from_scratch

f = to_fixed
NYSE, ARCA, NASDAQ = ExchangeId.NYSE, ExchangeId.ARCA, ExchangeId.NASDAQ


def q(ts, ex, bid, bsz, off, osz, sym="X"):
    return QuoteRecord(ts, sym, ex, f(bid) if bsz else 0, bsz, f(off) if osz else 0, osz)


def test_apply_quote_sequence():
    s = NbboState("X")
    n = s.apply_quote(q(1, ARCA, "10.00", 300, "10.05", 200))
    assert (n.best_bid, n.best_offer, n.status) == (f("10.00"), f("10.05"), NbboStatus.NORMAL)
    n = s.apply_quote(q(2, NYSE, "10.02", 100, "10.06", 100))
    assert n.best_bid == f("10.02") and n.bid_venues == {NYSE}
    assert n.best_offer == f("10.05") and n.offer_venues == {ARCA}
    n = s.apply_quote(q(3, NYSE, "10.07", 100, "10.06", 100))
    assert n.status is NbboStatus.CROSSED


def test_no_change_returns_none():
    s = NbboState()
    s.apply_quote(q(1, ARCA, "10.00", 300, "10.05", 200))
    assert s.apply_quote(q(2, NYSE, "9.00", 100, "11.00", 100)) is None


def test_stale_quote():
    s = NbboState()
    s.apply_quote(q(5, ARCA, "10.00", 300, "10.05", 200))
    assert s.apply_quote(q(4, ARCA, "10.01", 300, "10.05", 200)) is None
    assert s.stale_count == 1
    with pytest.raises(StaleQuote):
        s.apply_quote(q(4, ARCA, "10.01", 300, "10.05", 200), strict=True)


def test_zero_quote_removes_venue():
    s = NbboState()
    s.apply_quote(q(1, ARCA, "10.00", 300, "10.05", 200))
    n = s.apply_quote(q(2, ARCA, "0", 0, "0", 0))
    assert n.status is NbboStatus.EMPTY


def _n(b, o):
    return Nbbo(f(b), 100, f(o), 100, frozenset(), frozenset(), NbboStatus.NORMAL)


@pytest.mark.parametrize("b,o,want", [("10.05", "10.05", NbboStatus.LOCKED),
                                      ("10.06", "10.05", NbboStatus.CROSSED),
                                      ("10.00", "10.05", NbboStatus.NORMAL)])
def test_status(b, o, want):
    assert nbbo_status(_n(b, o)) is want


def test_one_sided_status():
    assert nbbo_status(Nbbo(f("10"), 100, 0, 0, frozenset(), frozenset(), NbboStatus.NORMAL)) is NbboStatus.ONE_SIDED


def test_protected_quotes():
    s = NbboState()
    assert protected_quotes(s) == []
    s.apply_quote(q(1, ARCA, "10.00", 300, "10.05", 200))
    s.apply_quote(q(1, NYSE, "10.00", 100, "10.06", 100))
    s.apply_quote(q(1, NASDAQ, "9.99", 100, "10.07", 100))
    pq = protected_quotes(s)
    bids = {(ex, px, sz) for ex, side, px, sz in pq if side == "bid"}
    assert bids == {(NYSE, f("10.00"), 100), (ARCA, f("10.00"), 300)}
    assert [(ex, side) for ex, side, _, _ in pq if side == "offer"] == [(ARCA, "offer")]


def _hist(quotes):
    return NbboHistory(EventStream.from_records("X", quotes))


def test_bounds_constant():
    h = _hist([q(0, ARCA, "10.00", 100, "10.05", 100)])
    assert quote_bounds(h, 5000) == quote_bounds(h, 500)
    b = quote_bounds(h, 5000)
    assert (b.least_bid, b.least_offer) == (f("10.00"), f("10.05"))


def test_bounds_varying():
    h = _hist([q(100, ARCA, "10.00", 100, "10.05", 100), q(400, ARCA, "10.02", 100, "10.04", 100)])
    b = quote_bounds(h, 900, 1000)
    assert (b.least_bid, b.least_offer) == (f("10.00"), f("10.05"))
    # the straddling snapshot counts, later quotes past t do not
    b = quote_bounds(h, 1200, 1000)
    assert (b.least_bid, b.least_offer) == (f("10.00"), f("10.05"))
    b = quote_bounds(h, 1500, 1000)
    assert (b.least_bid, b.least_offer) == (f("10.02"), f("10.04"))


def test_bounds_skip_stubs():
    h = _hist([q(0, ARCA, "0.01", 100, "10.05", 100), q(1, NYSE, "10.00", 100, "200.00", 100)])
    b = quote_bounds(h, 10, 1000, ref_price=f("10.02"))
    assert (b.least_bid, b.least_offer) == (f("10.00"), f("10.05"))


def test_bounds_empty():
    with pytest.raises(NoHistory):
        quote_bounds(_hist([]), 1000)
    with pytest.raises(NoHistory):
        quote_bounds(_hist([q(0, ARCA, "10.00", 100, "0", 0)]), 10)


def test_stub_examples():
    assert is_stub_quote(f("0.01"), f("120"))
    assert not is_stub_quote(f("119"), f("120"))
    assert is_stub_quote(f("200"), f("120"))


def _fuzz_quotes(rng, n, sym="X"):
    ex = rng.integers(0, 7, n)
    bid = rng.integers(9990, 10010, n) * 100
    off = bid + rng.integers(-3, 6, n) * 100
    bsz = np.where(rng.random(n) < 0.1, 0, rng.integers(1, 10, n) * 100)
    osz = np.where(rng.random(n) < 0.1, 0, rng.integers(1, 10, n) * 100)
    return [QuoteRecord(i, sym, ExchangeId(int(ex[i])), int(bid[i]) if bsz[i] else 0, int(bsz[i]),
                        int(off[i]) if osz[i] else 0, int(osz[i])) for i in range(n)]


def test_incremental_matches_oracle():
    rng = np.random.default_rng(7)
    quotes = _fuzz_quotes(rng, 5000)
    s = NbboState("X")
    h = _hist(quotes)
    tops = {}
    for i, qu in enumerate(quotes):
        s.apply_quote(qu)
        tops[qu.exchange] = (qu.bid, qu.bid_size, qu.offer, qu.offer_size)
        want = nbbo_from_scratch(tops)
        n = s.nbbo
        assert (n.best_bid, n.best_bid_size, n.best_offer, n.best_offer_size, int(n.status)) == want
        assert (h.nbb[i], h.nbb_size[i], h.nbo[i], h.nbo_size[i], h.status[i]) == want


def test_replay_deterministic():
    quotes = _fuzz_quotes(np.random.default_rng(3), 2000)
    a, b = _hist(quotes), _hist(quotes)
    assert np.array_equal(a.change_idx, b.change_idx) and np.array_equal(a.nbb, b.nbb)


def test_venue_tops():
    h = _hist([q(0, ARCA, "10.00", 100, "10.05", 200), q(1, NYSE, "10.01", 300, "0", 0)])
    book = h.venue_tops(1)
    assert book[:, int(ARCA)].tolist() == [f("10.00"), 100, f("10.05"), 200]
    assert book[:, int(NYSE)].tolist() == [f("10.01"), 300, 0, 0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3000), st.integers(1, 3000), st.integers(0, 5000))
def test_bounds_monotone_in_window(seed, w1, w2, t):
    h = _hist(_fuzz_quotes(np.random.default_rng(seed), 300))
    lo, hi = sorted((w1, w2))
    try:
        narrow = quote_bounds(h, t, lo)
    except NoHistory:
        return
    wide = quote_bounds(h, t, hi)
    assert wide.least_bid <= narrow.least_bid and wide.least_offer >= narrow.least_offer


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7))
def test_scale_invariance(seed, c):
    quotes = _fuzz_quotes(np.random.default_rng(seed), 200)
    scaled = [QuoteRecord(x.ts, x.symbol, x.exchange, x.bid * c, x.bid_size, x.offer * c, x.offer_size)
              for x in quotes]
    a, b = _hist(quotes), _hist(scaled)
    assert np.array_equal(a.status, b.status) and np.array_equal(a.nbb * c, b.nbb)
    try:
        ba = quote_bounds(a, 150, 100)
    except NoHistory:
        return
    bb = quote_bounds(b, 150, 100)
    assert (bb.least_bid, bb.least_offer) == (ba.least_bid * c, ba.least_offer * c)


def test_nbbo_log(tmp_path):
    h = _hist([q(0, ARCA, "10.00", 100, "10.05", 200), q(1, NYSE, "10.05", 300, "0", 0)])
    p = tmp_path / "nbbo.csv"
    write_nbbo_log(p, h)
    lines = p.read_text().splitlines()
    assert lines[0] == "ts,best_bid,bid_size,best_offer,offer_size,status"
    assert lines[2] == "1,10.0500,300,10.0500,200,Locked"
