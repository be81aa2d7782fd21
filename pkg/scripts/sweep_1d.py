"""Minimal-digit sweep for the 1D P5 problem with IC(0) and ICT smoothing.

    python3 scripts/sweep_1d.py --J-max 10 --csv sweep.csv
"""

import argparse
import time

from mgmp.experiments import run_sweep, sweep_csv
from mgmp.fem import Fem1dSpec, manufactured_rhs_1d
from mgmp.hierarchy import build_1d_hierarchy
from mgmp.icsmooth import ICT_DEFAULT_DPT


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--J-min", type=int, default=2)
    ap.add_argument("--J-max", type=int, default=10)
    ap.add_argument("--smoothers", nargs="+", default=["ic0", "ict"], choices=["ic0", "ict"])
    ap.add_argument("--dpt", type=float, default=ICT_DEFAULT_DPT)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--csv")
    args = ap.parse_args()

    spec = Fem1dSpec(n_levels=args.J_max + 1)
    h = build_1d_hierarchy(spec)
    rhs = lambda J: manufactured_rhs_1d(spec, J) * h.scales[J]
    results = []
    for s in args.smoothers:
        t0 = time.perf_counter()
        rs = run_sweep(h, range(args.J_min, args.J_max + 1), s, args.dpt, rhs_fn=rhs, workers=args.workers)
        print(f"{s}: {time.perf_counter() - t0:.1f}s")
        for r in rs:
            print(f"  J={r.J:>2} dof={h.sizes()[r.J]:>7} iters(double)={r.iterations_double:>3}"
                  f" d_dot_min={r.d_dot_min} d_s_min={r.d_s_min} {r.note}")
        results.extend(rs)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(sweep_csv(results))


if __name__ == "__main__":
    main()
