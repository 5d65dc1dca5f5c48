"""Command-line entry point: ``netprox solve`` and ``netprox bench``."""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import io
from .bench import BenchmarkReport, benchmark
from .engine import ResidualBalance, Status, StoppingCriteria, solve
from .errors import NetproxError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for MAX_ITERS here.
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netprox", description="ADMM solver for convex problems on graphs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a problem given as files")
    s.add_argument("--graph", required=True, help="edge list file, one 'j k' pair per line")
    s.add_argument("--node-data", required=True, action="append",
                   help="node data CSV (first column id); repeat together with --node-objective for node groups")
    s.add_argument("--node-objective", required=True, action="append",
                   help="node objective template, paired in order with --node-data")
    s.add_argument("--edge-objective", required=True, help="edge objective template")
    s.add_argument("--edge-data", help="edge data CSV (first columns src,dst)")
    s.add_argument("--rho", type=_positive_float, default=1.0)
    s.add_argument("--rho-policy", choices=("fixed", "balance"), default="fixed")
    s.add_argument("--mu", type=float, default=10.0)
    s.add_argument("--tau", type=float, default=2.0)
    s.add_argument("--eps-abs", type=_positive_float, default=1e-4)
    s.add_argument("--eps-rel", type=_positive_float, default=1e-3)
    s.add_argument("--max-iters", type=_positive_int, default=1000)
    s.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: all cores)")
    s.add_argument("--verbose", action="store_true", help="print one residual line per iteration to stderr")
    s.add_argument("--output", help="solution CSV path (default: stdout)")
    s.add_argument("--summary", help="summary JSON path")

    b = sub.add_parser("bench", help="time the Huber / network-lasso scaling instance")
    b.add_argument("--nodes", type=int, nargs="+", required=True)
    b.add_argument("--dim", type=_positive_int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=_positive_int, default=1)
    b.add_argument("--output", help="report CSV path (default: stdout)")
    return parser


def _cmd_solve(args) -> int:
    g = io.load_problem(args.graph, args.node_data, args.node_objective, args.edge_objective, args.edge_data)
    policy = "fixed"
    if args.rho_policy == "balance":
        policy = ResidualBalance(mu=args.mu, tau_incr=args.tau, tau_decr=args.tau)
    result = solve(
        g,
        StoppingCriteria(args.eps_abs, args.eps_rel, args.max_iters),
        rho0=args.rho,
        policy=policy,
        threads=args.threads or os.cpu_count() or 1,
        verbose=args.verbose,
    )
    io.write_solution(result, args.output or sys.stdout)
    if args.summary:
        io.write_summary(result, args.summary, args.rho)
    return EXIT_OK if result.status is Status.CONVERGED else EXIT_MAX_ITERS


def _cmd_bench(args) -> int:
    reports = [benchmark(n, args.dim, args.seed, args.threads) for n in args.nodes]

    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BenchmarkReport.FIELDS)
        for rep in reports:
            writer.writerow(rep.row())

    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(sys.stdout)
    return EXIT_OK if all(r.status == Status.CONVERGED.value for r in reports) else EXIT_MAX_ITERS


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_bench(args)
    except (NetproxError, OSError, ValueError) as exc:
        print(f"netprox: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
