#!/usr/bin/env python3
"""Exact-equivalence sweep with per-config diagnostics.

Runs the strip-replacement construction over a random config grid and
prints the worst |shift-composed - reference| per kernel geometry, in
both element types.  A fatter version of `shiftlab verify` for poking at
specific geometries.

    python3 scripts/equivalence_sweep.py --trials 50
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import shiftlab as sl  # noqa: E402
from shiftlab.rng import CounterRng  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=51)
    args = ap.parse_args()

    worst = {}
    t0 = time.monotonic()
    rng = CounterRng(args.seed, "sweep")
    for i in range(args.trials):
        n = (3, 5)[rng.randint(2)]
        m = n + 2 * rng.randint((51 - n) // 2 + 1)
        c = 1 + rng.randint(8)
        h, w = 8 + rng.randint(33), 8 + rng.randint(33)
        for np_dtype, name in ((np.float64, "f64"), (np.float32, "f32")):
            data = CounterRng(args.seed, "sweep-data", i, name)
            k = data.uniform_array((c, m, n), -0.5, 0.5, np_dtype)
            x = sl.Tensor(data.uniform_array((c, h, w), -0.5, 0.5, np_dtype))
            cfg, wts, plan = sl.from_strip(k)
            d = sl.max_abs_diff(sl.sw_forward(x, wts, cfg, plan),
                                sl.strip_conv_ref(x, k))
            key = (m, n, name)
            worst[key] = max(worst.get(key, 0.0), d)
    for (m, n, name) in sorted(worst):
        print(f"M={m:2d} N={n} {name}: worst diff {worst[(m, n, name)]:.3e}")
    bad64 = max(v for (m, n, d), v in worst.items() if d == "f64")
    bad32 = max(v for (m, n, d), v in worst.items() if d == "f32")
    print(f"{args.trials} configs in {time.monotonic() - t0:.1f} s; "
          f"global worst f64 {bad64:.3e} (tol 1e-10), f32 {bad32:.3e} (tol 1e-4)")
    return 0 if bad64 <= 1e-10 and bad32 <= 1e-4 else 1


if __name__ == "__main__":
    raise SystemExit(main())
