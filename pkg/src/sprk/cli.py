"""Command-line interface: ``sprk <command> [options]``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for usage, input-format or precondition errors.  Data goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Sequence

from . import order as order_mod
from . import simulate as sim
from .bseries import Mode, TableauRangeError
from .tableau import TableauFormatError, check_quadratic_invariant, load_tableau, parse_expression
from .trees import TreeError, count_by_order, enumerate_trees, parse_tree, to_bracket
from .words import expectation, mc_oracle

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _order_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else str(float(x))


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _emit(text: str):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _tableau(args):
    try:
        return load_tableau(args.tableau, M=args.M)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except OSError as exc:
        raise UsageError(f"cannot read tableau {args.tableau!r}: {exc.strerror}") from None


# --------------------------------------------------------------------------
# commands


def cmd_trees(args) -> int:
    filt = order_mod.TreeFilter.parse(args.filter)
    trees = filt.apply(enumerate_trees(args.Q, args.M, args.max_order), args.Q)
    counts = count_by_order(trees)
    if args.json:
        _emit(json.dumps({"Q": args.Q, "M": args.M, "max_order": str(args.max_order),
                          "filter": str(filt),
                          "counts": {_order_text(k): v for k, v in counts.items()},
                          "total": len(trees),
                          "trees": None if args.counts else [to_bracket(t) for t in trees]},
                         indent=2))
    elif args.counts:
        _emit(" ".join(f"{_order_text(k)}:{v}" for k, v in counts.items()) +
              f" total:{len(trees)}")
    else:
        for t in trees:
            _emit(f"{_order_text(t.order)}\t{to_bracket(t)}")
    return EXIT_OK


def cmd_table(args) -> int:
    tab = _tableau(args)
    Q = args.Q or tab.Q
    M = args.M if args.M is not None else tab.M
    rows = order_mod.weight_table(Q, M, args.max_order, tab, args.mode or tab.mode,
                                  args.filter)
    if args.json:
        _emit(json.dumps([r.to_dict() for r in rows], indent=2))
    else:
        _emit(order_mod.format_weight_table(rows))
    return EXIT_OK


def cmd_check(args) -> int:
    tab = _tableau(args)
    query = order_mod.OrderQuery(tab, args.p, args.mode, order_mod.TreeFilter.parse(args.filter),
                                 order_mod.CheckKind(args.kind))
    report = order_mod.check(query)
    _emit(report.to_json() if args.json else report.format_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_qi(args) -> int:
    tab = _tableau(args)
    rep = check_quadratic_invariant(tab)
    if args.json:
        _emit(json.dumps({"tableau": tab.name, **rep.to_dict()}, indent=2))
    else:
        _emit(f"{tab.name}: quadratic-invariant condition {'holds' if rep.holds else 'fails'}")
        for w in rep.witnesses:
            _emit(f"  i={w.i} j={w.j} m1={w.m1} m2={w.m2} residual {w.residual}")
    return EXIT_OK if rep.holds else EXIT_FAIL


def cmd_explain(args) -> int:
    tab = _tableau(args)
    ex = order_mod.explain_tree(tab, parse_tree(args.tree), args.mode)
    _emit(json.dumps(ex.to_dict(), indent=2) if args.json else ex.format_text())
    return EXIT_OK


def _problem_params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"problem parameter must be key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def cmd_simulate(args) -> int:
    try:
        prob = sim.builtin_problem(args.problem, **_problem_params(args.param))
    except (KeyError, TypeError) as exc:
        raise UsageError(str(exc.args[0]) if exc.args else str(exc)) from None
    if args.M is None and prob.M != 1:
        args.M = prob.M
    tab = _tableau(args)
    if args.study == "invariant":
        res = sim.invariant_drift(tab, prob, args.T, args.h0, args.paths, args.seed,
                                  args.workers)
        ok = args.max_drift is None or res.max_drift <= args.max_drift
    else:
        h_list = sim.dyadic_steps(args.h0, args.levels)
        study = sim.strong_study if args.study == "strong" else sim.weak_study
        res = study(tab, prob, args.T, h_list, args.paths, args.seed, workers=args.workers)
        ok = args.expect_slope is None or res.slope_within(args.expect_slope, args.tol)
    _emit(res.to_json() if args.format == "json" else res.to_csv())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    if args.h <= 0:
        raise UsageError("--h must be positive")
    elem = parse_expression(args.expr, M=None, general_words=True)
    exact = expectation(elem)(args.h)
    mean, se = mc_oracle(elem, args.h, paths=args.paths, grid=args.grid, seed=args.seed)
    z = abs(mean - exact) / se if se > 0 else (0.0 if mean == exact else float("inf"))
    ok = z <= 3.0
    out = {"expr": args.expr, "element": str(elem), "h": args.h,
           "expectation": str(expectation(elem)), "exact": exact, "mc_mean": mean,
           "mc_stderr": se, "z": z, "agree": ok}
    if args.json:
        _emit(json.dumps(out, indent=2))
    else:
        _emit(f"element      {elem}\nE[element]   {expectation(elem)} = {exact:.6g} at h={args.h}\n"
              f"Monte Carlo  {mean:.6g} +- {se:.2g}  (z = {z:.2f})\n"
              f"{'agree' if ok else 'DISAGREE'}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sprk",
                                description="Order conditions and simulation for SPRK methods.")
    sub = p.add_subparsers(dest="command", required=True)

    def tableau_args(sp, required=True):
        sp.add_argument("--tableau", required=required,
                        help="built-in name or path to a JSON tableau")
        sp.add_argument("--M", type=int, default=None, help="override the noise count")

    filt_help = "all | separable[:q,...] | additive3 | qi"

    t = sub.add_parser("trees", help="enumerate colored trees")
    t.add_argument("--Q", type=int, required=True)
    t.add_argument("--M", type=int, required=True)
    t.add_argument("--max-order", type=_fraction, required=True)
    t.add_argument("--filter", default="all", help=filt_help)
    t.add_argument("--counts", action="store_true", help="print counts per order only")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_trees)

    t = sub.add_parser("table", help="tree / exact weight / method weight table")
    tableau_args(t)
    t.add_argument("--Q", type=int, default=None)
    t.add_argument("--max-order", type=_fraction, required=True)
    t.add_argument("--mode", choices=["ito", "strat"], default=None)
    t.add_argument("--filter", default="all", help=filt_help)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_table)

    t = sub.add_parser("check", help="decide strong and/or weak order")
    tableau_args(t)
    t.add_argument("--mode", choices=["ito", "strat"], default=None)
    t.add_argument("--p", type=_fraction, required=True)
    t.add_argument("--kind", choices=["strong", "weak", "both"], default="strong")
    t.add_argument("--filter", default="all", help=filt_help)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_check)

    t = sub.add_parser("qi", help="quadratic-invariant condition")
    tableau_args(t)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_qi)

    t = sub.add_parser("explain", help="symbolic trace of one tree")
    tableau_args(t)
    t.add_argument("--tree", required=True, help="bracket form, e.g. '[b(2,0)](1,1)'")
    t.add_argument("--mode", choices=["ito", "strat"], default=None)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_explain)

    t = sub.add_parser("simulate", help="Monte Carlo convergence or invariant study")
    tableau_args(t)
    t.add_argument("--problem", required=True, choices=sorted(sim.PROBLEMS))
    t.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="problem parameter (repeatable)")
    t.add_argument("--study", choices=["strong", "weak", "invariant"], default="strong")
    t.add_argument("--T", type=float, default=1.0)
    t.add_argument("--h0", type=float, default=0.125)
    t.add_argument("--levels", type=int, default=4)
    t.add_argument("--paths", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--workers", type=int, default=None,
                   help=f"threads (default from ${sim.WORKERS_ENV} or 1)")
    t.add_argument("--format", choices=["csv", "json"], default="csv")
    t.add_argument("--expect-slope", type=float, default=None)
    t.add_argument("--tol", type=float, default=0.15)
    t.add_argument("--max-drift", type=float, default=None)
    t.set_defaults(func=cmd_simulate)

    t = sub.add_parser("oracle", help="symbolic expectation against Monte Carlo")
    t.add_argument("--expr", required=True,
                   help="expression in h, dW[m], J[m,0], I[w..], S[w..]")
    t.add_argument("--h", type=float, default=1.0)
    t.add_argument("--paths", type=int, default=100_000)
    t.add_argument("--grid", type=int, default=1024)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, TableauFormatError, TreeError, TableauRangeError,
            order_mod.OrderCheckError, order_mod.MultisetCapExceeded, sim.StudyError,
            sim.SimulationError, ValueError) as exc:
        print(f"sprk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run(argv: Sequence[str] | None = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
