"""Command-line interface: ``mgmp {build,solve,sweep,bounds,report}``.

Exit codes: 0 converged / success, 1 error, 2 the solve did not converge
(stagnation, divergence or iteration limit).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import hierarchy as hmod
from .bounds import compute_level_constants, constants_summary, constants_table, lambda_v_ic, predicted_thresholds
from .cycle import CgInner, DenseCholesky
from .drivers import CSV_HEADER, StopKind, StoppingCriterion
from .experiments import Problem, VariantSpec, run_sweep, sweep_csv, sweep_json
from .fem import Fem1dSpec, manufactured_rhs_1d
from .icsmooth import DROP_RULES, ICT_DEFAULT_DPT, factorize

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MGMP_SEED")
    return int(env) if env else DEFAULT_SEED


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _J_range(text):
    try:
        a, b = text.split("..")
        a, b = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a..b") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError("need 1 <= a <= b")
    return list(range(a, b + 1))


def _coarse(text):
    if text == "direct":
        return DenseCholesky()
    parts = text.split(":")
    if parts[0] == "cg":
        tol = float(parts[1]) if len(parts) > 1 else 1e-4
        it = int(parts[2]) if len(parts) > 2 else 100
        return CgInner(tol, it)
    raise argparse.ArgumentTypeError("expected 'direct' or 'cg[:tol[:max_iter]]'")


def _fem_spec(h: hmod.MgHierarchy, J: int) -> Fem1dSpec:
    notes = h.notes or {}
    if h.dim != 1 or "n_elements_coarsest" not in notes:
        raise UsageError("manufactured right-hand side needs a 1D hierarchy built by 'mgmp build'")
    return Fem1dSpec(h.degree, int(notes["n_elements_coarsest"]), J + 1, notes.get("ordering", "vertex-first"))


def _rhs(h: hmod.MgHierarchy, kind: str, J: int, path=None) -> np.ndarray:
    if kind == "manufactured":
        return manufactured_rhs_1d(_fem_spec(h, J), J) * h.scales[J]
    if kind == "ones":
        return np.ones(h.A[J].shape[0])
    if kind == "file":
        if path:
            from .mmio import read_vector
            return read_vector(path)
        if h.b is None or J != h.J:
            raise UsageError("no stored right-hand side for this level; pass --rhs-file")
        return h.b
    raise UsageError(f"unknown rhs {kind!r}")


def _variant(args) -> VariantSpec:
    explicit = [args.prec_dot, args.prec_store, args.prec_solve]
    if any(explicit):
        if not all(explicit):
            raise UsageError("--prec-dot, --prec-store and --prec-solve must be given together")
        return VariantSpec.explicit(*explicit)
    return VariantSpec.parse(args.variant)


def _load(args, J=None) -> hmod.MgHierarchy:
    h = hmod.load(args.hierarchy)
    if J is not None:
        h = h.truncate(J)
    return h


def _write(path, text):
    if path:
        Path(path).write_text(text)


def cmd_build(args) -> int:
    if args.dim != 1:
        raise UsageError("only --dim 1 can be assembled; load 3D hierarchies from MatrixMarket bundles")
    spec = Fem1dSpec(args.degree, args.coarse_elems, args.levels, args.ordering)
    h = hmod.build_1d_hierarchy(spec, scale=args.scale, tau_A=args.filter_A, tau_P=args.filter_P)
    hmod.save(h, args.out)
    gal = [0.0] + hmod.galerkin_residuals(h)
    print(f"{'level':>5} {'dof':>9} {'scale':>12} {'galerkin':>10}")
    for j, n in enumerate(h.sizes()):
        print(f"{j:>5} {n:>9} {h.scales[j]:>12.5g} {gal[j]:>10.2e}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    h = _load(args, args.J)
    v = _variant(args)
    h = h.with_precisions(v.level_precision())
    b = _rhs(h, args.rhs, h.J, args.rhs_file)
    stop = StoppingCriterion.parse(args.stop, args.max_outer, 1.0 / math.sqrt(h.scales[-1]))
    post = None if args.post_smoothing is None else args.post_smoothing
    prob = Problem(h, args.smoother, args.dpt, b, stop, args.outer, args.coarse, post, args.drop_rule)
    rep = prob.run(v.level_precision())
    d = rep.to_dict()
    d.update({"variant": v.name, "outer": args.outer, "smoother": args.smoother, "J": h.J})
    _write(args.report, json.dumps(d, indent=2))
    _write(args.csv, rep.to_csv())
    last = rep.rel_residual[-1]
    print(f"{v.name} {args.outer}: status={rep.status} iterations={rep.iterations} rel_residual={last:.3e}"
          + (f" anorm_error={rep.anorm_error[-1]:.3e}" if rep.anorm_error else "")
          + (f" plateau={rep.plateau:.3e}" if rep.plateau is not None else ""))
    if rep.converged:
        return EXIT_OK
    if rep.status == "overflow":
        print(f"error: {rep.message}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    h = _load(args)
    Js = args.J_range or list(range(1, h.J + 1))
    if Js[-1] > h.J:
        raise UsageError(f"J range exceeds hierarchy depth {h.J}")
    stop = StoppingCriterion.parse(args.stop)
    if stop.kind is not StopKind.ABS_ANORM:
        raise UsageError("sweep uses an absolute A-norm stop (anorm:TOL)")
    results = run_sweep(h, Js, args.smoother, args.dpt, rhs_fn=lambda J: _rhs(h, args.rhs, J), digits_max=args.digits_max,
                        workers=args.workers, tol=stop.tol, max_outer=args.max_outer, drop_rule=args.drop_rule)
    text = sweep_csv(results)
    _write(args.csv, text)
    _write(args.json, sweep_json(results))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bounds(args) -> int:
    h = _load(args, args.J)
    v = _variant(args)
    factors = [None] + [factorize(a, args.smoother, args.dpt, rule=args.drop_rule) for a in h.A[1:]]
    C = compute_level_constants(h, factors, seed=_seed(args))
    precs = [v.level_precision()] * h.n_levels
    coarse_tol = args.coarse.tol if isinstance(args.coarse, CgInner) else None
    bb = lambda_v_ic(C, precs, coarse_tol=coarse_tol)
    out = {"variant": v.name, "smoother": args.smoother, "budget": args.budget, "within_budget": bb.total < args.budget,
           "bound": bb.to_dict(), "summary": constants_summary(C), "levels": constants_table(C),
           "thresholds": predicted_thresholds(C, args.budget)}
    _write(args.json, json.dumps(out, indent=2, default=float))
    rows = [CSV_HEADER, "level,dof,kappa_sqrt_A,kappa_bar_L,norm_Linv_sq,norm_A,abs_norm_A,norm_P,abs_norm_P,m_A,mb_P,mb_L"]
    for c in C:
        rows.append(",".join("" if x is None else repr(x) for x in (
            c.level, c.n, c.kappa_sqrt, c.kappa_bar_L, c.norm_Linv_sq, c.norm_A, c.abs_norm_A, c.norm_P,
            c.abs_norm_P, c.m_A, c.mb_P, c.mb_L)))
    _write(args.csv, "\n".join(rows) + "\n")
    print(f"{'level':>5} {'dof':>8} {'kappa^1/2':>11} {'kbar_L':>8} {'|L^-1|^2':>10} {'smoother':>10} {'dot':>10}")
    per = {r["level"]: r for r in bb.levels}
    for c in C:
        r = per.get(c.level, {})
        print(f"{c.level:>5} {c.n:>8} {c.kappa_sqrt:>11.4g} {_f(c.kappa_bar_L):>8} {_f(c.norm_Linv_sq):>10}"
              f" {_f(r.get('smoother')):>10} {_f(r.get('dot')):>10}")
    print(f"Lambda_V = {bb.total:.4g} (coarse {bb.coarse:.3g}, smoother {bb.smoother:.3g}, dot {bb.dot:.3g});"
          f" budget {args.budget:g}: {'within' if bb.total < args.budget else 'exceeded'}")
    for msg in bb.violations:
        print(f"hypothesis violated: {msg}")
    return EXIT_OK


def _f(x):
    return "-" if x is None else f"{x:.4g}"


def cmd_report(args) -> int:
    p = Path(args.path)
    if p.is_dir():
        h = hmod.load(p)
        gal = [0.0] + hmod.galerkin_residuals(h)
        print(f"hierarchy {p}: {h.n_levels} levels, dim={h.dim}, degree={h.degree}")
        for j, n in enumerate(h.sizes()):
            pr = h.precisions[j]
            print(f"  level {j}: dof={n} nnz={h.A[j].nnz} scale={h.scales[j]:.6g} galerkin={gal[j]:.2e}"
                  f" precisions={pr.dot.label}/{pr.store.label}/{pr.solve.label}")
        return EXIT_OK
    data = json.loads(p.read_text())
    if isinstance(data, list):  # sweep
        print(f"{'J':>3} {'smoother':>8} {'d_dot_min':>9} {'d_s_min':>7} {'iters':>5}")
        for r in data:
            print(f"{r['J']:>3} {r['smoother']:>8} {str(r['d_dot_min']):>9} {str(r['d_s_min']):>7}"
                  f" {str(r['iterations_double']):>5}")
    elif "history" in data:
        print(f"status={data['status']} iterations={data['iterations']} converged={data['converged']}")
        for row in data["history"]:
            e = row["anorm_error"]
            print(f"  {row['iteration']:>4} {row['rel_residual']:.3e}" + ("" if e is None else f" {e:.3e}"))
    elif "bound" in data:
        b = data["bound"]
        print(f"variant={data['variant']} Lambda_V={b['total']:.4g} within_budget={data['within_budget']}")
    else:
        raise UsageError(f"unrecognized report file {p}")
    return EXIT_OK


def _add_solver_opts(p, variant_default="d-d-d-d"):
    p.add_argument("--hierarchy", required=True, help="hierarchy directory")
    p.add_argument("--smoother", choices=["ic0", "ict"], default="ic0")
    p.add_argument("--dpt", type=float, default=ICT_DEFAULT_DPT, help="ICT drop tolerance")
    p.add_argument("--drop-rule", choices=DROP_RULES, default="column-norm")
    p.add_argument("--coarse", type=_coarse, default=DenseCholesky(), help="direct | cg[:tol[:max_iter]]")
    p.add_argument("--J", type=int, default=None, help="use levels 0..J only")


def _add_variant_opts(p):
    p.add_argument("--variant", default="d-d-d-d", help="dot-fact-store-solve, e.g. d-s-h-sh")
    p.add_argument("--prec-dot")
    p.add_argument("--prec-store")
    p.add_argument("--prec-solve")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mgmp", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (default: $MGMP_SEED or 42)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="assemble, scale, filter and save a 1D hierarchy")
    b.add_argument("--dim", type=int, default=1)
    b.add_argument("--degree", type=int, default=5)
    b.add_argument("--levels", type=_positive_int, default=15, help="number of levels J+1")
    b.add_argument("--coarse-elems", type=_positive_int, default=5)
    b.add_argument("--ordering", choices=["vertex-first", "natural"], default="vertex-first")
    b.add_argument("--scale", action=argparse.BooleanOptionalAction, default=True)
    b.add_argument("--filter-A", type=float, default=hmod.FILTER_A)
    b.add_argument("--filter-P", type=float, default=hmod.FILTER_P)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("solve", help="run IR or PCG with a V-cycle")
    _add_solver_opts(s)
    _add_variant_opts(s)
    s.add_argument("--outer", choices=["ir", "pcg"], default="ir")
    s.add_argument("--stop", default="relres:1e-10", help="relres:TOL | anorm:TOL | rel-anorm:TOL")
    s.add_argument("--max-outer", type=_positive_int, default=200)
    s.add_argument("--rhs", choices=["manufactured", "file", "ones"], default="file")
    s.add_argument("--rhs-file")
    s.add_argument("--post-smoothing", action=argparse.BooleanOptionalAction, default=None,
                   help="symmetric pre+post smoothing (default: on for pcg, off for ir)")
    s.add_argument("--report", help="JSON report path")
    s.add_argument("--csv", help="CSV history path")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="minimal decimal digits matching the double iteration count")
    w.add_argument("--hierarchy", required=True)
    w.add_argument("--J-range", type=_J_range, default=None, help="a..b")
    w.add_argument("--smoother", choices=["ic0", "ict"], default="ic0")
    w.add_argument("--dpt", type=float, default=ICT_DEFAULT_DPT)
    w.add_argument("--drop-rule", choices=DROP_RULES, default="column-norm")
    w.add_argument("--stop", default="anorm:1e-5")
    w.add_argument("--max-outer", type=_positive_int, default=200)
    w.add_argument("--digits-max", type=int, default=16, choices=range(1, 17), metavar="1..16")
    w.add_argument("--rhs", choices=["manufactured", "ones"], default="manufactured")
    w.add_argument("--workers", type=_positive_int, default=1)
    w.add_argument("--csv")
    w.add_argument("--json")
    w.set_defaults(func=cmd_sweep)

    bd = sub.add_parser("bounds", help="level constants and V-cycle error bound")
    _add_solver_opts(bd)
    _add_variant_opts(bd)
    bd.add_argument("--budget", type=float, default=0.1)
    bd.add_argument("--json")
    bd.add_argument("--csv")
    bd.set_defaults(func=cmd_bounds)

    r = sub.add_parser("report", help="summarize a hierarchy directory or a JSON report")
    r.add_argument("path")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        np.random.seed(_seed(args) % 2**32)
        return args.func(args)
    except UsageError as exc:
        print(f"mgmp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"mgmp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
