"""Command-line front end: ingest, NBBO, detection, classification, event
study, Fleeting Liquidity logit, and scenario generation."""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .classify import ClassifierConfig, CrashClassification, CrashType, classify_crash
from .detect import CrashEvent, DetectorConfig, crash_stats, detect_stream
from .errors import FlashFxError, InsufficientQuoteHistory, InvalidSpec, Separation, Singular
from .fleetliq import build_feature_rows, detect_fleeting_liquidity, fit_logit, format_table2
from .liquidity import (METRICS, StudyConfig, aggregate_event_study, event_window_series,
                        locked_crossed_around, summary_dict, write_series_csv, write_summary_json)
from .nbbo import NbboHistory, write_nbbo_log
from .simgen import generate_scenario, load_spec, write_scenario
from .tape import MS_PER_DAY, ExchangeId, load_merged_stream

logger = logging.getLogger("flashfx")

COMMANDS = ("detect", "classify", "study", "fleetliq", "all")
CRASH_HEADER = "symbol,exchange,direction,start_ts,end_ts,n_trades,tick_count,pct_change,volume,iso_fraction"


@dataclass
class RunConfig:
    trades: list = field(default_factory=list)
    quotes: list = field(default_factory=list)
    symbols: list | None = None
    from_ms: int | None = None
    to_ms: int | None = None
    min_ticks: int = 10
    max_window_ms: int = 1500
    min_move_pct: float = 0.8
    flicker_ms: int = 1000
    stub_pct: float = 50.0
    study_window_s: int = 60
    bucket_ms: int = 100
    out: str = "flashfx_out"
    jobs: int = 1
    nbbo_log: bool = False
    max_reject_rate: float = 0.01

    def validate(self) -> None:
        if not self.trades:
            raise InvalidSpec("no trade files given")
        if self.quotes and len(self.quotes) != len(self.trades):
            raise InvalidSpec("pass one quote file per trade file")
        for name in ("min_ticks", "max_window_ms", "flicker_ms", "study_window_s", "bucket_ms", "jobs"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be positive")
        if self.min_move_pct <= 0 or self.stub_pct <= 0:
            raise InvalidSpec("thresholds must be positive")
        if (self.study_window_s * 1000) % self.bucket_ms:
            raise InvalidSpec("study window must be a whole number of buckets")

    @property
    def detector(self) -> DetectorConfig:
        return DetectorConfig(self.min_ticks, self.max_window_ms, self.min_move_pct)

    @property
    def classifier(self) -> ClassifierConfig:
        return ClassifierConfig(flicker_ms=self.flicker_ms, stub_pct=self.stub_pct)

    @property
    def study(self) -> StudyConfig:
        return StudyConfig(self.study_window_s * 1000, self.bucket_ms)


def month_label(path) -> str:
    """Calendar month taken from a YYYYMMDD date in the file name."""
    m = re.search(r"(19|20)(\d{2})(0[1-9]|1[0-2])(0[1-9]|[12]\d|3[01])", Path(path).name)
    return f"{m.group(1)}{m.group(2)}-{m.group(3)}" if m else "all"


@dataclass
class UnitResult:
    day: int
    symbol: str
    crashes: list
    classes: list
    fleeting: list
    series: dict
    lc: list


def _analyze(unit) -> UnitResult:
    day, symbol, stream, cfg, want_study = unit
    history = NbboHistory(stream)
    crashes = detect_stream(stream, cfg.detector)
    classes, fleeting = [], []
    for c in crashes:
        classes.append(classify_crash(c, history, stream, cfg.classifier))
        try:
            fleeting.append(detect_fleeting_liquidity(c, history))
        except InsufficientQuoteHistory:
            fleeting.append(False)
    series = {m: [] for m in METRICS}
    lc = []
    if want_study:
        for c in crashes:
            cid = f"{day:04d}:{c.crash_id}"
            for m in METRICS:
                ex = int(c.exchange) if m.startswith("exchange") else None
                series[m].append(event_window_series(c.start_ts, history, m, ex, cfg.study, cid))
            lc.append(locked_crossed_around(history, c.start_ts, c.end_ts, cfg.study))
    if cfg.nbbo_log:
        write_nbbo_log(Path(cfg.out) / f"nbbo_{day:04d}_{symbol}.csv", history)
    return UnitResult(day, symbol, crashes, classes, fleeting, series, lc)


def _units(cfg: RunConfig, want_study: bool):
    time_range = None
    if cfg.from_ms is not None or cfg.to_ms is not None:
        time_range = (cfg.from_ms or 0, MS_PER_DAY if cfg.to_ms is None else cfg.to_ms)
    for day, tpath in enumerate(cfg.trades):
        qpath = cfg.quotes[day] if cfg.quotes else None
        res = load_merged_stream(tpath, qpath, cfg.symbols, time_range, cfg.max_reject_rate)
        logger.info("%s: %d records kept, %d rejected", tpath, res.stats.kept, res.stats.rejected)
        for sym in sorted(res.streams):
            yield day, sym, res.streams[sym], cfg, want_study


def _crash_row(c: CrashEvent) -> str:
    return (f"{c.symbol},{c.exchange.label},{c.direction.value},{c.start_ts},{c.end_ts},{c.n_trades},"
            f"{c.tick_count},{c.pct_change:.6f},{c.total_volume},{c.iso_fraction:.6f}")


def _fmt(x, spec=".2f") -> str:
    return "n/a" if x is None else format(x, spec)


def format_table1(by_month: dict[str, list[tuple[CrashEvent, CrashClassification]]]) -> str:
    months = sorted(by_month)
    cols = months + ["Total"]
    groups = [by_month[m] for m in months] + [[x for m in months for x in by_month[m]]]
    stats = [crash_stats([c for c, _ in g]) for g in groups]
    rows = [
        ("Total Crashes", [str(s.n_crashes) for s in stats]),
        ("Up Crashes", [str(s.n_up) for s in stats]),
        ("Down Crashes", [str(s.n_down) for s in stats]),
        ("Avg. % Price Change", [_fmt(s.avg_pct_change, ".4f") for s in stats]),
        ("Avg. Time (ms)", [_fmt(s.avg_duration_ms) for s in stats]),
        ("Avg. Volume", [_fmt(s.avg_volume) for s in stats]),
        ("Avg. # Trades", [_fmt(s.avg_trades) for s in stats]),
        ("ISO Trades %", [_fmt(s.iso_trade_pct) for s in stats]),
    ]
    for kind in CrashType:
        vals = []
        for g in groups:
            n = sum(k.kind is kind for _, k in g)
            vals.append(f"{100.0 * n / len(g):.2f}" if g else "n/a")
        rows.append((f"{kind.label} %", vals))
    for ex in ExchangeId:
        if ex is ExchangeId.OTHER:
            continue
        rows.append((f"{ex.label} %", [f"{s.exchange_shares.get(ex.label, 0.0):.2f}" if s.n_crashes else "n/a"
                                       for s in stats]))
    lines = ["\t".join([""] + cols)]
    lines.extend("\t".join([name] + vals) for name, vals in rows)
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run(cfg: RunConfig, command: str = "all") -> int:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    want_study = command in ("study", "all")
    units = list(_units(cfg, want_study))
    if cfg.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_analyze, units))
    else:
        results = [_analyze(u) for u in units]
    months = [month_label(p) for p in cfg.trades]

    crashes = [(r.day, c, k, f) for r in results for c, k, f in zip(r.crashes, r.classes, r.fleeting)]
    logger.info("%d crashes across %d streams", len(crashes), len(results))

    if command in ("detect", "all"):
        _write(out / "crashes.csv", "".join([CRASH_HEADER + "\n"] + [_crash_row(c) + "\n" for _, c, _, _ in crashes]))
    if command in ("classify", "all"):
        lines = [CRASH_HEADER + ",type,prefix_k,top_cleared\n"]
        lines += [f"{_crash_row(c)},{k.kind.label},{k.prefix_k},{str(k.top_cleared).lower()}\n"
                  for _, c, k, _ in crashes]
        _write(out / "classified.csv", "".join(lines))
        by_month = {m: [] for m in months}
        for d, c, k, _ in crashes:
            by_month[months[d]].append((c, k))
        _write(out / "table1.txt", format_table1(by_month))
    if want_study:
        summary = {}
        for m in METRICS:
            series = [s for r in results for s in r.series[m]]
            if series:
                agg = aggregate_event_study(series, m)
                write_series_csv(out / f"study_{m}.csv", agg)
                summary[m] = summary_dict(agg)
            else:
                _write(out / f"study_{m}.csv", "offset_ms,mean,count\n")
                summary[m] = {"pre_mean": None, "post_mean": None, "pct_change": None}
        lcs = [x for r in results for x in r.lc]

        def _avg(vals):
            vals = [v for v in vals if v is not None]
            return round(sum(vals) / len(vals), 10) if vals else None

        summary["locked_crossed_pct"] = {
            "pre": _avg([x.pre for x in lcs]),
            "during": _avg([x.during for x in lcs]),
            "post": _avg([x.post for x in lcs]),
        }
        summary["n_crashes"] = len(crashes)
        write_summary_json(out / "study_summary.json", summary)
    if command in ("fleetliq", "all"):
        lines = [CRASH_HEADER + ",type,fleeting\n"]
        lines += [f"{_crash_row(c)},{k.kind.label},{int(f)}\n" for _, c, k, f in crashes]
        _write(out / "fleetliq.csv", "".join(lines))
        monthly = {m: (0, 0) for m in months}
        for d, _, _, f in crashes:
            a, b = monthly[months[d]]
            monthly[months[d]] = (a + int(f), b + 1)
        model = None
        reason = ""
        if crashes:
            rows = build_feature_rows([c for _, c, _, _ in crashes], [k for _, _, k, _ in crashes],
                                      [f for _, _, _, f in crashes])
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    model = fit_logit(rows)
                for w in caught:
                    logger.warning("%s", w.message)
            except (ValueError, Separation, Singular) as exc:
                reason = str(exc)
        _write(out / "table2.txt", format_table2(model, monthly, reason))
    return 0


def _positive_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trades", nargs="+", help="trade CSV file(s), one per trading day")
    p.add_argument("--quotes", nargs="+", help="quote CSV file(s), paired with --trades")
    p.add_argument("--symbols", help="comma-separated symbol filter")
    p.add_argument("--from-ms", type=int, help="keep events at or after this time of day")
    p.add_argument("--to-ms", type=int, help="keep events at or before this time of day")
    p.add_argument("--min-ticks", type=_positive_int)
    p.add_argument("--max-window-ms", type=_positive_int)
    p.add_argument("--min-move-pct", type=float)
    p.add_argument("--flicker-ms", type=_positive_int)
    p.add_argument("--stub-pct", type=float)
    p.add_argument("--study-window-s", type=_positive_int)
    p.add_argument("--bucket-ms", type=_positive_int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=_positive_int, help="worker processes")
    p.add_argument("--nbbo-log", action="store_true", default=None, help="also write per-symbol NBBO logs")
    p.add_argument("--config", help="JSON file with any of the above settings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flashfx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_run_args(sub.add_parser(name, help=f"run the pipeline through {name}"))
    sim = sub.add_parser("simulate", help="generate a labelled scenario tape")
    sim.add_argument("--spec", required=True, help="scenario spec JSON")
    sim.add_argument("--out", required=True, help="output directory")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        known = {f.name for f in fields(RunConfig)}
        bad = sorted(set(values) - known)
        if bad:
            raise InvalidSpec(f"{args.config}: unknown settings {', '.join(bad)}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if isinstance(values.get("symbols"), str):
        values["symbols"] = [s.strip() for s in values["symbols"].split(",") if s.strip()]
    for k in ("trades", "quotes"):
        if isinstance(values.get(k), str):
            values[k] = [values[k]]
    return RunConfig(**values)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FLASHFX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            write_scenario(generate_scenario(load_spec(args.spec)), args.out)
            return 0
        return run(config_from_args(args), args.command)
    except (FlashFxError, OSError) as exc:
        print(f"flashfx: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
