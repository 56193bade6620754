"""Command line driver: ``floquet-pml {study,solve,quadrature,selftest}``.

Exit codes: 0 success, 1 failed self-test, 2 config error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import checks, kernels
from .fem import CellSolveError, ExactDtN, Pml
from .quadrature import MAX_ORDER, legendre_rule
from .study import (CellPipeline, ConfigError, StudyError, load_config, quadrature_delta,
                    run_study, write_csv)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("floquet_pml")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    result = run_study(cfg)
    if not args.no_delta:
        delta = quadrature_delta(cfg)
        result.notes.append(f"quadrature N->2N delta at rho={cfg.rho_reference:g}: {delta:.3e}")
    out, close = _open_out(args.output)
    try:
        write_csv(result, out)
    finally:
        if close:
            out.close()
    fit = result.fit
    if fit is not None:
        print(f"k={cfg.k:g}: slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
              f"R^2={fit.r_squared:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    pipe = CellPipeline(cfg)
    if args.dtn:
        bc = ExactDtN()
    else:
        bc = Pml(kernels.sigma(cfg.pml(args.rho)))
    trace = pipe.trace(bc, label="dtn" if args.dtn else args.rho)
    out, close = _open_out(args.output)
    try:
        out.write("x1,x2,re,im\n")
        for x, u in zip(pipe.x1, trace):
            out.write(f"{x:.17g},{cfg.eval_height:.17g},{u.real:.17e},{u.imag:.17e}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_quadrature(args) -> int:
    if not 1 <= args.n <= MAX_ORDER:
        print(f"error: N must lie in [1, {MAX_ORDER}]", file=sys.stderr)
        return EXIT_CONFIG
    rule = legendre_rule(args.n)
    print("j,node,weight")
    for j, (d, s) in enumerate(zip(rule.nodes, rule.weights), start=1):
        print(f"{j},{d:.17g},{s:.17g}")
    results = checks.rule_checks(rule)
    for r in results:
        print("# " + r.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_SELFTEST


def cmd_selftest(args) -> int:
    results = checks.selftest(args.max_order, args.samples)
    for r in results:
        print(r.line())
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floquet-pml",
                                description="PML convergence study for periodic surface scattering")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("study", help="sweep PML strengths and write the error table as CSV")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="CSV path (default stdout)")
    s.add_argument("--workers", type=int, help="override the config worker count")
    s.add_argument("--no-delta", action="store_true", help="skip the N -> 2N quadrature delta report")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("solve", help="synthesize one trace on the evaluation line")
    s.add_argument("config")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--rho", type=float, help="PML strength")
    g.add_argument("--dtn", action="store_true", help="use the exact DtN condition instead")
    s.add_argument("-o", "--output", help="CSV path (default stdout)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("quadrature", help="print a Gauss-Legendre rule and its invariant report")
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(func=cmd_quadrature)

    s = sub.add_parser("selftest", help="run the kernel and quadrature invariant suites")
    s.add_argument("--max-order", type=int, default=64)
    s.add_argument("--samples", type=int, default=10_000)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StudyError, CellSolveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
