"""Multi-venue limit order book simulator producing labelled trade/quote tapes.

Each venue keeps price-ordered ladders with FIFO queues per level.  Order
Protection routing and ISO packages are modelled at the top of book only,
which is what lets a large order walk one venue's book while deeper
liquidity sits untouched elsewhere.  Venue book changes reach the SIP quote
feed after a fixed dissemination latency.

Simulated time advances one millisecond per matching step.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import EmptyBook, InvalidSpec
from .tape import (PRICE_SCALE, ExchangeId, QuoteRecord, TradeRecord, write_quotes_csv,
                   write_trades_csv)

logger = logging.getLogger(__name__)

CENT = PRICE_SCALE // 100
ISO_COND = "F"
REGULAR_COND = "@"
SESSION_OPEN_MS = 34_200_000

SELL, BUY = "sell", "buy"


class Ladder:
    """One side of one venue's book, best level first."""

    def __init__(self, side: str):
        if side not in ("bid", "offer"):
            raise ValueError(side)
        self.side = side
        self.levels: list[list] = []  # [price, deque of order sizes]

    def _better(self, a: int, b: int) -> bool:
        return a > b if self.side == "bid" else a < b

    def set_levels(self, levels) -> None:
        """Replace the ladder.  ``levels`` holds (price, size) or (price, [order sizes])."""
        out = []
        for price, size in levels:
            orders = deque(size if isinstance(size, (list, tuple, deque)) else [size])
            if price <= 0 or any(s <= 0 for s in orders):
                raise ValueError("ladder levels need positive prices and sizes")
            out.append([int(price), orders])
        for a, b in zip(out, out[1:]):
            if not self._better(a[0], b[0]):
                raise ValueError(f"{self.side} ladder prices must be strictly ordered")
        self.levels = out

    def add(self, price: int, size: int) -> None:
        for i, lvl in enumerate(self.levels):
            if lvl[0] == price:
                lvl[1].append(size)
                return
            if self._better(price, lvl[0]):
                self.levels.insert(i, [price, deque([size])])
                return
        self.levels.append([price, deque([size])])

    def top(self) -> tuple[int, int] | None:
        if not self.levels:
            return None
        p, q = self.levels[0]
        return p, sum(q)

    def depth(self) -> int:
        return sum(sum(q) for _, q in self.levels)

    def snapshot(self) -> list[tuple[int, int]]:
        return [(p, sum(q)) for p, q in self.levels]

    def take_top(self, qty: int) -> tuple[int, int]:
        """Fill up to ``qty`` at the best level in FIFO order; returns (price, filled)."""
        price, orders = self.levels[0]
        filled = 0
        while orders and filled < qty:
            take = min(orders[0], qty - filled)
            filled += take
            if take == orders[0]:
                orders.popleft()
            else:
                orders[0] -= take
        if not orders:
            self.levels.pop(0)
        return price, filled

    def cancel_top(self) -> None:
        if self.levels:
            self.levels.pop(0)

    def within(self, price: int, limit: int | None) -> bool:
        if limit is None:
            return True
        return price >= limit if self.side == "bid" else price <= limit


@dataclass
class ExchangeBook:
    exchange: ExchangeId
    bids: Ladder = field(default_factory=lambda: Ladder("bid"))
    offers: Ladder = field(default_factory=lambda: Ladder("offer"))

    def side(self, order_side: str) -> Ladder:
        """The ladder an order of ``order_side`` executes against."""
        return self.bids if order_side == SELL else self.offers

    def top_tuple(self) -> tuple[int, int, int, int]:
        b = self.bids.top() or (0, 0)
        o = self.offers.top() or (0, 0)
        return b[0], b[1], o[0], o[1]


class Market:
    """A set of venue books for one symbol plus the tapes they generate."""

    def __init__(self, symbol: str, venues, sip_latency_ms: int = 10, depth_protection: bool = False,
                 clock: int = 0):
        self.symbol = symbol
        self.books = {ExchangeId(v): ExchangeBook(ExchangeId(v)) for v in venues}
        self.sip_latency_ms = sip_latency_ms
        self.depth_protection = depth_protection
        self.clock = clock
        self.trades: list[TradeRecord] = []
        self.quotes: list[QuoteRecord] = []
        self._sent: dict[ExchangeId, tuple] = {}

    def book(self, ex) -> ExchangeBook:
        return self.books[ExchangeId(ex)]

    def publish(self, ex: ExchangeId, t: int | None = None) -> None:
        """Queue a SIP quote for ``ex`` if its top changed since the last one."""
        t = self.clock if t is None else t
        top = self.books[ex].top_tuple()
        if self._sent.get(ex) == top:
            return
        self._sent[ex] = top
        self.quotes.append(QuoteRecord(t + self.sip_latency_ms, self.symbol, ex, *top))

    def set_book(self, ex, bids=None, offers=None, t: int | None = None) -> None:
        b = self.book(ex)
        if bids is not None:
            b.bids.set_levels(bids)
        if offers is not None:
            b.offers.set_levels(offers)
        self.publish(b.exchange, t)

    def cancel_top(self, ex, ladder_side: str, t: int | None = None) -> None:
        b = self.book(ex)
        (b.bids if ladder_side == "bid" else b.offers).cancel_top()
        self.publish(b.exchange, t)

    def national_best(self, order_side: str) -> int | None:
        tops = [b.side(order_side).top() for b in self.books.values()]
        prices = [t[0] for t in tops if t]
        if not prices:
            return None
        return max(prices) if order_side == SELL else min(prices)

    def print_trade(self, ex: ExchangeId, price: int, size: int, iso: bool, t: int) -> TradeRecord:
        tr = TradeRecord(t, self.symbol, ex, price, size, iso, ISO_COND if iso else REGULAR_COND)
        self.trades.append(tr)
        return tr

    def _execute(self, ex: ExchangeId, order_side: str, qty: int, iso: bool, t: int) -> tuple[TradeRecord, int]:
        price, filled = self.books[ex].side(order_side).take_top(qty)
        tr = self.print_trade(ex, price, filled, iso, t)
        self.publish(ex, t)
        return tr, filled

    def consolidated_walk(self, order_side: str, size: int, limit: int | None, iso: bool) -> list[TradeRecord]:
        """Fill against the best displayed level anywhere, one step per level."""
        out = []
        remaining = size
        while remaining > 0:
            best = None
            for ex, b in self.books.items():
                top = b.side(order_side).top()
                if top is None or not b.side(order_side).within(top[0], limit):
                    continue
                if best is None or (top[0] > best[1] if order_side == SELL else top[0] < best[1]):
                    best = (ex, top[0])
            if best is None:
                break
            tr, filled = self._execute(best[0], order_side, remaining, iso, self.clock)
            out.append(tr)
            remaining -= filled
            self.clock += 1
        return out

    def walk(self, ex: ExchangeId, order_side: str, size: int, limit: int | None, iso: bool,
             marks=None) -> list[TradeRecord]:
        """Walk one venue's ladder level by level.  ``marks`` overrides ISO flags per step."""
        ladder = self.books[ex].side(order_side)
        out = []
        remaining = size
        while remaining > 0:
            top = ladder.top()
            if top is None or not ladder.within(top[0], limit):
                break
            flag = iso if marks is None else bool(marks[len(out) % len(marks)])
            tr, filled = self._execute(ex, order_side, remaining, flag, self.clock)
            out.append(tr)
            remaining -= filled
            self.clock += 1
        return out


def _side_of(side: str) -> str:
    if side not in (SELL, BUY):
        raise ValueError(f"order side must be {SELL!r} or {BUY!r}")
    return side


@dataclass(frozen=True)
class IsoPackage:
    side: str
    limit: int | None
    size: int
    target: ExchangeId
    companions: tuple = ()  # (venue, price, size)

    @classmethod
    def build(cls, market: Market, side: str, target, size: int, limit: int | None = None) -> "IsoPackage":
        """Package with one companion per away venue whose displayed top the
        main order would otherwise trade through, sized to that top."""
        side = _side_of(side)
        comps = []
        for ex, b in market.books.items():
            if ex == ExchangeId(target):
                continue
            top = b.side(side).top()
            if top and b.side(side).within(top[0], limit):
                comps.append((ex, top[0], top[1]))
        return cls(side, limit, size, ExchangeId(target), tuple(comps))


@dataclass(frozen=True)
class RoutableOrder:
    side: str
    size: int
    venue: ExchangeId
    limit: int | None = None


def submit_iso_package(market: Market, pkg: IsoPackage, marks=None) -> list[TradeRecord]:
    """Execute companions against each protected top, then sweep the target.

    Companions share one matching step; the main order then takes one step
    per level.  With depth protection on, the whole package instead fills
    best-price-first across all venues.
    """
    side = _side_of(pkg.side)
    if market.books[pkg.target].side(side).top() is None:
        raise EmptyBook(f"{pkg.target.label} has no {'bids' if side == SELL else 'offers'}")
    if market.depth_protection:
        return market.consolidated_walk(side, pkg.size, pkg.limit, True)
    out = []
    for ex, price, size in pkg.companions:
        ladder = market.books[ex].side(side)
        top = ladder.top()
        if top is None or top[0] != price:
            continue
        tr, _ = market._execute(ex, side, min(size, top[1]), True, market.clock)
        out.append(tr)
    if out:
        market.clock += 1
    out.extend(market.walk(pkg.target, side, pkg.size, pkg.limit, True, marks))
    return out


def submit_routable_order(market: Market, order: RoutableOrder) -> list[TradeRecord]:
    """Route slices to away venues displaying a better top, then fill the
    balance on the receiving venue's own ladder."""
    side = _side_of(order.side)
    venue = ExchangeId(order.venue)
    if all(b.side(side).top() is None for b in market.books.values()):
        raise EmptyBook("no liquidity on any venue")
    if market.depth_protection:
        return market.consolidated_walk(side, order.size, order.limit, False)
    home = market.books[venue].side(side).top()
    away = []
    for ex, b in market.books.items():
        top = b.side(side).top()
        if ex == venue or top is None or not b.side(side).within(top[0], order.limit):
            continue
        if home is None or (top[0] > home[0] if side == SELL else top[0] < home[0]):
            away.append((top[0], ex))
    away.sort(key=lambda a: (-a[0] if side == SELL else a[0], a[1]))
    out = []
    remaining = order.size
    for _, ex in away:
        if remaining <= 0:
            break
        top = market.books[ex].side(side).top()
        tr, filled = market._execute(ex, side, min(remaining, top[1]), False, market.clock)
        out.append(tr)
        remaining -= filled
    if out:
        market.clock += 1
    if remaining > 0:
        out.extend(market.walk(venue, side, remaining, order.limit, False))
    return out


# ---------------------------------------------------------------------------
# scenarios

KINDS = ("IsoSweep", "AutoRouting", "BenignRandomWalk", "Mixed")
LABELS = {"IsoSweep": "IsoInitiated", "AutoRouting": "AutoRoutingInitiated", "MixedMarks": "Unclassified"}


@dataclass
class ScenarioSpec:
    kind: str
    seed: int = 0
    symbol: str = "SIM"
    venues: list = field(default_factory=lambda: ["NYSE", "NASDAQ", "ARCA"])
    crash_venue: str | None = None
    direction: str = "down"
    start_price: float = 50.0
    levels: int = 13
    level_step_pct: float = 0.1
    level_size: int = 500
    away_levels: int = 20
    away_size: int = 2000
    sweep_size: int | None = None
    crash_venue_at_nbbo: bool = False
    prefix_regular: bool = False
    cancel_top_before_crash: bool = False
    depth_protection: bool = False
    mixed_marks: bool = False
    sip_latency_ms: int = 10
    pre_ms: int = 5000
    post_ms: int = 5000
    duration_ms: int = 60_000
    quote_interval_ms: int = 100
    trade_interval_ms: int = 250
    run_cap: int = 5
    base_spread_pct: float = 0.05
    spread_noise_pct: float = 0.02
    post_crash_spread_widen_pct: float = 0.0
    n_crashes: int = 200
    mix: dict = field(default_factory=lambda: {"IsoSweep": 0.7, "AutoRouting": 0.2, "MixedMarks": 0.1})

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        if not isinstance(d, dict):
            raise InvalidSpec("scenario spec must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise InvalidSpec(f"unknown spec fields: {', '.join(extra)}")
        if "kind" not in d:
            raise InvalidSpec("spec needs a 'kind'")
        try:
            spec = cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise InvalidSpec(msg)

        need(self.kind in KINDS, f"kind must be one of {', '.join(KINDS)}")
        need(isinstance(self.seed, int) and not isinstance(self.seed, bool), "seed must be an integer")
        need(isinstance(self.venues, list) and 1 <= len(self.venues) <= 6, "venues must list 1 to 6 exchanges")
        ids = [ExchangeId.parse(str(v)) for v in self.venues]
        need(ExchangeId.OTHER not in ids and len(set(ids)) == len(ids), "venues must be distinct known exchanges")
        if self.crash_venue is not None:
            need(ExchangeId.parse(self.crash_venue) in ids, "crash_venue must be one of venues")
        need(self.direction in ("down", "up"), "direction must be 'down' or 'up'")
        need(self.start_price >= 1.0, "start_price must be at least 1")
        need(self.levels >= 2 and self.level_size > 0 and self.level_step_pct > 0, "bad crash ladder")
        need(self.away_levels >= 1 and self.away_size > 0, "bad away ladder")
        need(0 <= self.sip_latency_ms <= 400, "sip_latency_ms must be in [0, 400]")
        need(self.pre_ms >= 3000 and self.post_ms >= 2500, "pre_ms >= 3000 and post_ms >= 2500 required")
        need(self.quote_interval_ms >= 2 and self.trade_interval_ms >= 2, "intervals must be >= 2 ms")
        need(1 <= self.run_cap < 10, "run_cap must be in [1, 9]")
        need(self.base_spread_pct > self.spread_noise_pct >= 0, "spread noise must stay below the base spread")
        need(self.post_crash_spread_widen_pct >= 0, "spread widening must be non-negative")
        need(not (self.prefix_regular and not self.crash_venue_at_nbbo),
             "prefix_regular needs crash_venue_at_nbbo (the regular print must sit inside the quotes)")
        need(not (self.kind == "AutoRouting" and self.crash_venue_at_nbbo),
             "AutoRouting needs an away venue ahead of the crash venue")
        need(not (self.kind == "AutoRouting" and len(ids) < 2), "AutoRouting needs at least two venues")
        need(self.n_crashes >= 1, "n_crashes must be positive")
        need(isinstance(self.mix, dict) and self.mix and set(self.mix) <= set(LABELS)
             and all(w >= 0 for w in self.mix.values()) and sum(self.mix.values()) > 0, "bad mix weights")


def load_spec(path) -> ScenarioSpec:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ScenarioSpec.from_dict(d)


@dataclass
class Scenario:
    spec: ScenarioSpec
    trades: list
    quotes: list
    label: dict


def _round(x: float, unit: int = 1) -> int:
    return int(round(x / unit)) * unit


class _Background:
    """Seeded quote and trade noise with a hard cap on same-direction ticks."""

    def __init__(self, market: Market, spec: ScenarioSpec, rng: random.Random, start_price: int):
        self.m = market
        self.spec = spec
        self.rng = rng
        self.anchor = start_price
        self.mid = start_price
        self.last_px = {ex: start_price for ex in market.books}
        self.run = {ex: 0 for ex in market.books}  # signed count since last opposing tick
        self.widen_from: int | None = None

    def spread_pct(self, t: int) -> float:
        s = self.spec.base_spread_pct + self.rng.uniform(-self.spec.spread_noise_pct, self.spec.spread_noise_pct)
        if self.widen_from is not None and t >= self.widen_from:
            s += self.spec.post_crash_spread_widen_pct
        return s

    def nbbo_targets(self, t: int) -> tuple[int, int]:
        half = _round(self.spread_pct(t) * self.mid / 200.0)
        return self.mid - half, self.mid + half

    def step_mid(self) -> None:
        d = self.rng.choice((-CENT, 0, CENT))
        if abs(self.mid + d - self.anchor) > 50 * CENT:
            d = -d
        self.mid += d

    def requote(self, t: int) -> None:
        self.step_mid()
        nbb, nbo = self.nbbo_targets(t)
        venues = list(self.m.books)
        lead_b, lead_o = self.rng.choice(venues), self.rng.choice(venues)
        for ex in venues:
            ob = 0 if ex == lead_b else self.rng.choice((0, 1, 2)) * CENT
            oo = 0 if ex == lead_o else self.rng.choice((0, 1, 2)) * CENT
            bids = [(nbb - ob - k * CENT, self.rng.randint(1, 10) * 100) for k in range(5)]
            offers = [(nbo + oo + k * CENT, self.rng.randint(1, 10) * 100) for k in range(5)]
            self.m.set_book(ex, bids, offers, t)

    def trade(self, ex: ExchangeId, t: int) -> None:
        cap = self.spec.run_cap
        r = self.run[ex]
        px = self.last_px[ex]
        choices = [-1, 0, 1]
        if r >= cap:
            choices.remove(1)
        if r <= -cap:
            choices.remove(-1)
        # lean back toward the quote midpoint
        if px > self.mid + 3 * CENT and -1 in choices:
            choices.append(-1)
        elif px < self.mid - 3 * CENT and 1 in choices:
            choices.append(1)
        d = self.rng.choice(choices)
        if d:
            self.run[ex] = r + d if r * d > 0 else d
            px += d * CENT
        self.last_px[ex] = px
        self.m.print_trade(ex, px, self.rng.randint(1, 10) * 100, False, t)

    def play(self, q_from: int, q_to: int, t_from: int, t_to: int) -> None:
        """Quote updates in [q_from, q_to) and trades in [t_from, t_to), in time order."""
        rng = self.rng
        events = []
        qi = self.spec.quote_interval_ms
        t = q_from
        while t < q_to:
            events.append((t, 1, -1))
            t += rng.randint(qi // 2, qi + qi // 2)
        ti = self.spec.trade_interval_ms
        for ex in self.m.books:
            t = t_from + rng.randint(0, ti)
            while t < t_to:
                events.append((t, 0, int(ex)))
                t += rng.randint(ti // 2, ti + ti // 2)
        events.sort()
        for t, kind, ex in events:
            if kind == 1:
                self.requote(t)
            else:
                self.trade(ExchangeId(ex), t)


def _crash_ladder(top: int, n: int, step_pct: float, down: bool) -> list[int]:
    out = [top]
    for j in range(1, n):
        f = (1 - step_pct / 100.0) ** j if down else (1 + step_pct / 100.0) ** j
        p = _round(top * f, CENT)
        if down:
            p = min(p, out[-1] - CENT)
        else:
            p = max(p, out[-1] + CENT)
        out.append(p)
    return out


def _split_orders(rng: random.Random, size: int) -> list[int]:
    k = rng.randint(1, 3)
    base = size // k
    parts = [base] * k
    parts[-1] += size - base * k
    return [p for p in parts if p > 0]


def _fleeting(trades: list[TradeRecord], quotes: list[QuoteRecord], down: bool) -> bool:
    """Replay the SIP feed: did any crash trade reach the displayed best?"""
    tops: dict = {}
    qi = 0
    for t in trades:
        while qi < len(quotes) and quotes[qi].ts < t.ts:
            q = quotes[qi]
            tops[q.exchange] = q
            qi += 1
        if down:
            bids = [q.bid for q in tops.values() if q.bid_size > 0]
            if bids and t.price >= max(bids):
                return False
        else:
            offers = [q.offer for q in tops.values() if q.offer_size > 0]
            if offers and t.price <= min(offers):
                return False
    return True


def _crash_scenario(spec: ScenarioSpec, rng: random.Random, flavor: str, symbol: str) -> tuple:
    venues = [ExchangeId.parse(v) for v in spec.venues]
    crash_ex = ExchangeId.parse(spec.crash_venue) if spec.crash_venue else venues[0]
    down = spec.direction == "down"
    side = SELL if down else BUY
    sgn = 1 if down else -1  # +1 when better means higher (bids)
    start = _round(spec.start_price * PRICE_SCALE, CENT)

    T = SESSION_OPEN_MS + spec.pre_ms
    setup_t = T - 1500
    m = Market(symbol, venues, spec.sip_latency_ms, spec.depth_protection, clock=SESSION_OPEN_MS)
    bg = _Background(m, spec, rng, start)
    bg.widen_from = T
    bg.play(SESSION_OPEN_MS, setup_t, SESSION_OPEN_MS, T - 2000)

    # crash book: the crash venue holds a ladder of spaced levels, the others
    # quote at the NBBO (or just behind the crash venue) with dense depth
    bg.step_mid()
    nbb, nbo = bg.nbbo_targets(setup_t)
    near = nbb if down else nbo
    gap = max(CENT, _round(near * spec.level_step_pct / 100.0, CENT))
    a_top = near if spec.crash_venue_at_nbbo else near - sgn * gap
    a_px = _crash_ladder(a_top, spec.levels, spec.level_step_pct, down)
    a_levels = [(p, _split_orders(rng, spec.level_size)) for p in a_px]
    away_top = a_px[1] - sgn * CENT if spec.crash_venue_at_nbbo else near
    away_levels = [(away_top - sgn * k * CENT, spec.away_size) for k in range(spec.away_levels)]
    far = nbo if down else nbb
    other_side = [(far + sgn * k * CENT, rng.randint(1, 10) * 100) for k in range(5)]
    for ex in venues:
        mine = a_levels if ex == crash_ex else away_levels
        if down:
            m.set_book(ex, mine, other_side, setup_t)
        else:
            m.set_book(ex, other_side, mine, setup_t)
    if spec.cancel_top_before_crash:
        m.cancel_top(crash_ex, "bid" if down else "offer", T - 1)

    m.clock = T
    sweep = spec.sweep_size or spec.levels * spec.level_size
    prefix: list[TradeRecord] = []
    if spec.prefix_regular:
        top = m.book(crash_ex).side(side).top()
        prefix = m.walk(crash_ex, side, top[1], None, False)
        sweep -= top[1]
    if flavor == "AutoRouting":
        away_disp = sum(m.book(ex).side(side).top()[1] for ex in venues if ex != crash_ex)
        trades = submit_routable_order(m, RoutableOrder(side, sweep + away_disp, crash_ex))
    else:
        limit = a_px[-1]
        pkg = IsoPackage.build(m, side, crash_ex, sweep, limit)
        marks = (True, False) if flavor == "MixedMarks" else None
        trades = submit_iso_package(m, pkg, marks)
    crash_trades = prefix + [t for t in trades if t.exchange == crash_ex]
    end = m.clock

    # background resumes: fresh quotes right after the crash, prints after 2 s
    t_resume = end + spec.sip_latency_ms + 1
    bg.play(t_resume, T + spec.post_ms, T + 2000, T + spec.post_ms)

    label = {
        "symbol": symbol,
        "exchange": crash_ex.label,
        "direction": "Down" if down else "Up",
        "type": LABELS[flavor],
        "fleeting": _fleeting(crash_trades, m.quotes, down) if crash_trades else False,
        "start_ts": crash_trades[0].ts if crash_trades else T,
    }
    crashes = [] if spec.depth_protection else [label]
    return m.trades, m.quotes, crashes


def _benign(spec: ScenarioSpec, rng: random.Random, symbol: str) -> tuple:
    venues = [ExchangeId.parse(v) for v in spec.venues]
    m = Market(symbol, venues, spec.sip_latency_ms, clock=SESSION_OPEN_MS)
    bg = _Background(m, spec, rng, _round(spec.start_price * PRICE_SCALE, CENT))
    end = SESSION_OPEN_MS + spec.duration_ms
    bg.play(SESSION_OPEN_MS, end, SESSION_OPEN_MS, end)
    return m.trades, m.quotes, []


def _mixed_part(spec: ScenarioSpec, i: int) -> ScenarioSpec:
    rng = random.Random(f"{spec.seed}:{i}")
    names = list(spec.mix)
    flavor = rng.choices(names, weights=[spec.mix[n] for n in names])[0]
    venues = rng.sample(["NYSE", "NASDAQ", "ARCA", "AMEX", "BATS", "ISE"], rng.randint(2, 4))
    d = spec.to_dict()
    d.update(kind="AutoRouting" if flavor == "AutoRouting" else "IsoSweep",
             seed=rng.randrange(2**31), symbol=f"{spec.symbol}{i:03d}", venues=venues,
             crash_venue=rng.choice(venues), direction=rng.choice(("down", "up")),
             start_price=round(rng.uniform(10, 200), 2), sip_latency_ms=rng.randint(0, 30),
             levels=rng.randint(12, 16), level_size=rng.randint(2, 10) * 100)
    if flavor != "AutoRouting":
        at_nbbo, prefix, cancel = rng.choice([(False, False, False), (True, False, False),
                                              (True, True, False), (True, False, True)])
        d.update(crash_venue_at_nbbo=at_nbbo, prefix_regular=prefix and flavor == "IsoSweep",
                 cancel_top_before_crash=cancel)
    d["mixed_marks"] = flavor == "MixedMarks"
    return ScenarioSpec(**d)


def generate_scenario(spec: ScenarioSpec | dict) -> Scenario:
    """Build the tapes and ground-truth label for ``spec``; deterministic in (spec, seed)."""
    if isinstance(spec, dict):
        spec = ScenarioSpec.from_dict(spec)
    spec.validate()
    if spec.kind == "Mixed":
        parts = [generate_scenario(_mixed_part(spec, i)) for i in range(spec.n_crashes)]
        trades = list(heapq.merge(*(p.trades for p in parts), key=lambda r: r.ts))
        quotes = list(heapq.merge(*(p.quotes for p in parts), key=lambda r: r.ts))
        crashes = [c for p in parts for c in p.label["crashes"]]
    else:
        rng = random.Random(spec.seed)
        if spec.kind == "BenignRandomWalk":
            trades, quotes, crashes = _benign(spec, rng, spec.symbol)
        else:
            flavor = "MixedMarks" if spec.kind == "IsoSweep" and spec.mixed_marks else spec.kind
            trades, quotes, crashes = _crash_scenario(spec, rng, flavor, spec.symbol)
    label = {"kind": spec.kind, "seed": spec.seed, "crashes": crashes}
    return Scenario(spec, trades, quotes, label)


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trades": out / "trades.csv", "quotes": out / "quotes.csv", "label": out / "label.json"}
    write_trades_csv(paths["trades"], scenario.trades)
    write_quotes_csv(paths["quotes"], scenario.quotes)
    with open(paths["label"], "w") as fh:
        json.dump(scenario.label, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("wrote %d trades, %d quotes to %s", len(scenario.trades), len(scenario.quotes), out)
    return paths
