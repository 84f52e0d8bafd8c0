#!/usr/bin/env python3
"""Utilization-vs-edge-count curves for ordered and shuffled assignments.

Sweeps E over {1, 2, 4, 8} for several grid heights and long sides and
writes one CSV of curve points.  The qualitative shape to look for:
ordered curves are flat in E, shuffled curves rise toward full coverage.

    python3 scripts/coverage_curves.py --out out/coverage_curves.csv
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from shiftlab.analysis import coverage_ratio  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/coverage_curves.csv")
    ap.add_argument("--seed", type=int, default=51)
    ap.add_argument("--n-seeds", type=int, default=20)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()

    if os.path.exists(args.out) and not args.force:
        print(f"{args.out} exists; pass --force", file=sys.stderr)
        return 2
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    seeds = [args.seed + i for i in range(args.n_seeds)]
    lines = ["m,n,h,policy,edges,mean_util"]
    for m in (51, 13):
        for h in (14, 28, 56):
            for policy in ("ordered", "per_edge_shuffled"):
                for edges in (1, 2, 4, 8):
                    res = coverage_ratio(m, 3, h, h, edges, policy, seeds)
                    lines.append(f"{m},3,{h},{policy},{edges},"
                                 f"{res.mean_util:.17g}")
                    print(f"M={m:2d} H={h:2d} {policy:17s} E={edges}: "
                          f"mean util {res.mean_util:.4f}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
