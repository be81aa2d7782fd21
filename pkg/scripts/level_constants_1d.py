"""Per-level constants of the scaled 1D P5 hierarchy (condition numbers, factor norms, counts).

    python3 scripts/level_constants_1d.py --levels 11 --smoother ic0
"""

import argparse

from mgmp.bounds import compute_level_constants, constants_summary
from mgmp.fem import Fem1dSpec
from mgmp.hierarchy import build_1d_hierarchy
from mgmp.icsmooth import factorize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=11)
    ap.add_argument("--smoother", choices=["ic0", "ict"], default="ic0")
    ap.add_argument("--ordering", choices=["vertex-first", "natural"], default="vertex-first")
    args = ap.parse_args()

    h = build_1d_hierarchy(Fem1dSpec(n_levels=args.levels, ordering=args.ordering))
    factors = [None] + [factorize(a, args.smoother) for a in h.A[1:]]
    cs = compute_level_constants(h, factors, tol=1e-6, max_iter=5000)
    print(f"{'j':>3} {'dof':>7} {'|A|':>6} {'||A||':>6} {'kappa^1/2':>10} {'|P|':>6} {'||P||':>6}"
          f" {'xi':>6} {'kbar_L':>7} {'|L^-1|^2':>9} {'mP':>3} {'mL':>3}")
    for c in cs:
        f = lambda x, w=6, p=3: f"{x:>{w}.{p}f}" if x is not None else " " * (w - 1) + "-"
        print(f"{c.level:>3} {c.n:>7} {f(c.norm_A)} {f(c.abs_norm_A)} {c.kappa_sqrt:>10.1f} {f(c.norm_P)}"
              f" {f(c.abs_norm_P)} {f(c.xi)} {f(c.kappa_bar_L, 7, 2)} {f(c.norm_Linv_sq, 9, 2)}"
              f" {c.mb_P if c.mb_P is not None else '-':>3} {c.mb_L if c.mb_L is not None else '-':>3}")
    s = constants_summary(cs)
    print(f"max m_A={s['max_m_A']} max mb_P={s['max_mb_P']} max mb_L={s['max_mb_L']}")


if __name__ == "__main__":
    main()
