"""Time the hot kernels under both backends.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``FLASHFX_BACKEND``.

    python benchmarks/bench_kernels.py --events 2000000 --repeat 3
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from flashfx import kernels
from flashfx.stream import run_synthetic

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
steps = rng.choice(np.array([-100, 0, 100]), n)
steps[rng.random(n) < 0.002] = -400
px = (1_000_000 + np.cumsum(steps)).astype(np.int64)
ts = np.cumsum(rng.integers(0, 3, n)).astype(np.int64)
ex = rng.integers(1, 7, n).astype(np.int64)
bid = px - rng.integers(1, 6, n) * 100
off = px + rng.integers(1, 6, n) * 100
sz = rng.integers(1, 11, n).astype(np.int64) * 100


def best(fn):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


out = {
    "backend": kernels.BACKEND,
    "detect_runs": best(lambda: [kernels.detect_runs(ts, px, s, 10, 1500, 4, 5) for s in (1, -1)]),
    "nbbo_scan": best(lambda: kernels.nbbo_scan(ex, bid, sz, off, sz)),
    "pipeline": best(lambda: run_synthetic(n)),
}
print(json.dumps(out))
"""


def run_backend(backend: str, events: int, repeat: int) -> dict:
    env = dict(os.environ, FLASHFX_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", WORKER, str(events), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the raw timings here")
    args = ap.parse_args(argv)

    rows = {b: run_backend(b, args.events, args.repeat) for b in ("numba", "numpy")}
    print(f"{args.events:,} events, best of {args.repeat}")
    print(f"{'kernel':<14}{'numba s':>10}{'numpy s':>10}{'speedup':>10}{'numba ev/s':>16}")
    for k in ("detect_runs", "nbbo_scan", "pipeline"):
        a, b = rows["numba"][k], rows["numpy"][k]
        print(f"{k:<14}{a:>10.3f}{b:>10.3f}{b / a:>9.1f}x{args.events / a:>16,.0f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"events": args.events, **rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
