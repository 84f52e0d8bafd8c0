#!/usr/bin/env python3
"""Variant timing grid over spatial sizes and sparsity levels.

    python3 scripts/bench_suite.py --out out/bench_suite.csv --reps 5
    SHIFTLAB_THREADS=8 python3 scripts/bench_suite.py ...
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from shiftlab.bench import (DESK_CONFIG, VARIANTS, run_variant,  # noqa: E402
                            sparsity_speedup)
from shiftlab.sw_op import SwConfig  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/bench_suite.csv")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()

    if os.path.exists(args.out) and not args.force:
        print(f"{args.out} exists; pass --force", file=sys.stderr)
        return 2
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    cfg = SwConfig(**DESK_CONFIG)
    lines = ["variant,h,w,median_ns,mad_ns,moves_per_pixel,peak_bytes"]
    for hw in (28, 56):
        for v in VARIANTS:
            r = run_variant(v, cfg, hw, hw, reps=args.reps, dtype=args.dtype)
            lines.append(f"{v},{hw},{hw},{r.median_ns:.0f},{r.mad_ns:.0f},"
                         f"{r.moves_per_pixel:.4f},{r.peak_intermediate_bytes}")
            print(f"{v:9s} {hw}x{hw}: {r.median_ns / 1e6:8.2f} ms "
                  f"(mad {r.mad_ns / 1e6:.2f})")
    print("sparsity speedup (fused):")
    for row in sparsity_speedup(cfg, [1.0, 0.8, 0.6, 0.4], reps=args.reps,
                                dtype=args.dtype):
        lines.append(f"fused-d{row.density},56,56,{row.median_ns:.0f},,"
                     f"{row.mac_ratio:.4f},")
        print(f"  density {row.density:.1f}: {row.median_ns / 1e6:8.2f} ms, "
              f"mac ratio {row.mac_ratio:.2f}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
