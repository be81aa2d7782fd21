"""Compare measured V-cycle contraction in reduced precision with the worst-case bound.

    python3 scripts/bound_vs_measured.py --J 6 --digits 3 5 7 9 11
"""

import argparse

from mgmp.bounds import compute_level_constants, lambda_v_ic
from mgmp.cycle import ContractionMode, contraction_samples, make_cycle_config, measure_contraction
from mgmp.fem import Fem1dSpec
from mgmp.fparith import from_decimal_digits
from mgmp.hierarchy import LevelPrecision, build_1d_hierarchy
from mgmp.icsmooth import factorize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--J", type=int, default=6)
    ap.add_argument("--smoother", choices=["ic0", "ict"], default="ic0")
    ap.add_argument("--digits", type=int, nargs="+", default=[3, 5, 7, 9, 11])
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    h = build_1d_hierarchy(Fem1dSpec(n_levels=args.J + 1))
    factors = [None] + [factorize(a, args.smoother) for a in h.A[1:]]
    cs = compute_level_constants(h, factors, tol=1e-6, max_iter=5000)
    base = make_cycle_config(h, args.smoother, factors=factors)
    samples = contraction_samples(base, args.trials, args.seed, power_steps=10)
    rho = measure_contraction(base, mode=ContractionMode.EXACT_REF, samples=samples)
    print(f"double contraction {rho:.5f}")
    print(f"{'digits':>6} {'measured':>10} {'difference':>11} {'Lambda_V':>10} {'smoother':>10} {'dot':>10}")
    for d in args.digits:
        p = LevelPrecision.uniform(from_decimal_digits(d))
        cfg = make_cycle_config(h.with_precisions(p), args.smoother, factors=factors)
        r = measure_contraction(cfg, samples=samples)
        bb = lambda_v_ic(cs, [p] * h.n_levels)
        print(f"{d:>6} {r:>10.5f} {r - rho:>11.2e} {bb.total:>10.3g} {bb.smoother:>10.3g} {bb.dot:>10.3g}")


if __name__ == "__main__":
    main()
