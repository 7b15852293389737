"""Command-line front end: ``beepcount simulate|oracle|regress``.

Exit codes:
  0   success
  2   a Las Vegas batch produced an incorrect or aborted run
  3   blcd requested with n = 1
  64  invalid flags or parameters
  65  malformed input CSV
  66  input file missing
  70  numerical failure in the oracle
  74  output could not be written
"""
from __future__ import annotations

import argparse
import csv
import math
import secrets
import sys

from . import oracle
from .emulation import Global, PerNode, WithHighProbability, choose_r
from .exceptions import ConfigurationError, InvalidInputError, NumericalError
from .harness import (
    BatchConfig,
    CsvFormatError,
    linear_regression,
    read_summary_csv,
    run_batch,
    summarize,
    write_csv,
)
from .simulator import DEFAULT_CAP_FACTOR, ProtocolConfig, get_protocol, run_protocol

EXIT_OK = 0
EXIT_LAS_VEGAS_FAILURE = 2
EXIT_LONE_NODE = 3
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66
EXIT_SOFTWARE = 70
EXIT_IOERR = 74

DEFAULT_SEED = 20160101
TRACE_LIMIT = 1000
TRACE_COLUMNS = (
    "protocol", "n", "run_id", "phase_index", "slot1_beepers", "slot2_beepers",
    "slot3_beepers", "slot4_beepers", "window_heard", "uncounted_before", "k_before",
    "k_after", "counted_this_phase", "terminated",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _n_list(text):
    values = []
    for part in text.split(","):
        part = part.strip()
        if part:
            values.append(int(part))
    if not values:
        raise argparse.ArgumentTypeError("empty n list")
    return values


def _seed(text):
    if text == "random":
        return "random"
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="beepcount", description="Counting in one-hop beeping networks.",
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a batch of simulations", formatter_class=fmt)
    sim.add_argument("--protocol", required=True, choices=["bcdl", "bcdlcd", "blcd", "bl-mc"])
    sim.add_argument("--n", required=True, nargs="+", type=_n_list,
                     help="network sizes, space or comma separated")
    sim.add_argument("--runs", type=int, default=100, help="runs per network size")
    sim.add_argument("--seed", type=_seed, default=DEFAULT_SEED,
                     help="master seed, or 'random' for a fresh one")
    sim.add_argument("--epsilon", type=float, default=None,
                     help="bl-mc: target failure probability, picks r")
    sim.add_argument("--upper-bound", type=int, default=None,
                     help="bl-mc with --epsilon: known upper bound N on n")
    sim.add_argument("--r", type=int, default=None, help="bl-mc: emulation rounds")
    sim.add_argument("--out", default=None, help="results CSV path")
    sim.add_argument("--summary-out", default=None, help="summary CSV path")
    sim.add_argument("--phase-cap", type=int, default=None,
                     help=f"abort a run after this many phases, None means {DEFAULT_CAP_FACTOR}*n")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.add_argument("--trace", default=None,
                     help=f"write a per-phase CSV trace (at most {TRACE_LIMIT} runs)")

    orc = sub.add_parser("oracle", help="exact analytical values", formatter_class=fmt)
    queries = orc.add_subparsers(dest="query", required=True, parser_class=_Parser)
    q = queries.add_parser("phase-probs", help="p_none,p_single,p_collision", formatter_class=fmt)
    q.add_argument("--k", type=int, required=True, help="beep probability is 1/k (k >= 2)")
    q.add_argument("--n-prime", type=int, required=True, help="number of contenders")
    q = queries.add_parser("expected-phases", help="expected phase count of bcdl", formatter_class=fmt)
    q.add_argument("--n", type=int, required=True, help="network size")
    q.add_argument("--k-cap", type=int, default=None,
                   help=f"truncation of k, None means {oracle.K_CAP_FACTOR}*n")
    q.add_argument("--tolerance", type=float, default=1e-10,
                   help="largest accepted truncation and solve residual")
    q = queries.add_parser("chernoff", help="tail bound 2exp(-n/66)", formatter_class=fmt)
    q.add_argument("--n", type=int, required=True, help="network size")
    q = queries.add_parser("choose-r", help="emulation rounds for a policy", formatter_class=fmt)
    q.add_argument("--policy", choices=["per-node", "global", "whp"], default="per-node",
                   help="failure guarantee to meet")
    q.add_argument("--epsilon", type=float, default=None, help="target failure probability")
    q.add_argument("--upper-bound", type=int, default=None, help="known upper bound N on n")

    reg = sub.add_parser("regress", help="fit mean phases against n", formatter_class=fmt)
    reg.add_argument("--in", dest="path", required=True, help="summary CSV from simulate")
    return parser


def _r_setup(args):
    if args.protocol != "bl-mc":
        if args.epsilon is not None or args.r is not None or args.upper_bound is not None:
            raise UsageError("--epsilon, --upper-bound and --r only apply to bl-mc")
        return None, None
    if (args.epsilon is None) == (args.r is None):
        raise UsageError("bl-mc needs exactly one of --epsilon or --r")
    if args.r is not None:
        if args.upper_bound is not None:
            raise UsageError("--upper-bound goes with --epsilon")
        return None, args.r
    if args.upper_bound is not None:
        policy = Global(args.epsilon, args.upper_bound)
    else:
        policy = PerNode(args.epsilon)
    return policy, None


def _write_trace(path, config: BatchConfig):
    pconf = ProtocolConfig(r=config.resolved_r(), phase_cap=config.phase_cap)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for n in config.n_values:
            for run_id, seed in enumerate(config.seeds(n)):
                res = run_protocol(config.protocol, n, seed=int(seed), config=pconf,
                                   trace=True, run_id=run_id, raise_on_cap=False)
                for row in res.trace.phases:
                    writer.writerow([config.protocol, n, run_id] + [
                        _cell(row.get(col)) for col in TRACE_COLUMNS[3:]])


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def cmd_simulate(args) -> int:
    n_values = [n for group in args.n for n in group]
    if args.runs < 1 or args.jobs < 1:
        raise UsageError("--runs and --jobs must be positive")
    if args.protocol == "blcd" and 1 in n_values:
        print("beepcount: blcd cannot run with n = 1: with listener-only collision detection "
              "a lone node cannot tell whether it beeped alone or together with others",
              file=sys.stderr)
        return EXIT_LONE_NODE
    policy, r = _r_setup(args)
    seed = secrets.randbits(64) if args.seed == "random" else args.seed
    config = BatchConfig(protocol=args.protocol, n_values=tuple(n_values), runs=args.runs,
                         master_seed=seed, r_policy=policy, r=r, phase_cap=args.phase_cap)
    if args.trace is not None:
        if args.runs * len(n_values) > TRACE_LIMIT:
            raise UsageError(f"--trace is limited to {TRACE_LIMIT} runs in total")
    results = run_batch(config, jobs=args.jobs)
    summary = summarize(results)
    if args.out:
        write_csv(results, args.out)
    if args.summary_out:
        write_csv(summary, args.summary_out)
    if args.trace:
        _write_trace(args.trace, config)

    proto = get_protocol(args.protocol)
    parts = [f"protocol={proto.name}", f"variant={proto.variant}", f"seed={seed}",
             f"runs={args.runs}"]
    if proto.name == "bl-mc":
        parts.append(f"r={config.resolved_r()}")
    for row in summary.rows:
        parts.append(f"n{row.n}:mean_phases={row.mean_phases!r}")
    parts += [f"incorrect={summary.incorrect}", f"aborted={summary.aborted}"]
    if proto.name == "bl-mc":
        finished = summary.total_runs - summary.aborted
        rate = summary.incorrect / finished if finished else math.nan
        parts.append(f"failure_rate={rate!r}")
    if summary.regression is not None:
        parts.append(f"slope={summary.regression.slope!r}")
    print(" ".join(parts))

    if proto.las_vegas and (summary.incorrect or summary.aborted):
        return EXIT_LAS_VEGAS_FAILURE
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.query == "phase-probs":
        p = oracle.phase_probs(args.k, args.n_prime)
        print(",".join(repr(v) for v in p.as_tuple()))
    elif args.query == "expected-phases":
        print(repr(oracle.expected_phases_exact(args.n, args.k_cap, args.tolerance)))
    elif args.query == "chernoff":
        print(repr(oracle.chernoff_tail(args.n)))
    elif args.query == "choose-r":
        if args.epsilon is None and args.policy != "whp":
            raise UsageError(f"--policy {args.policy} needs --epsilon")
        if args.upper_bound is None and args.policy != "per-node":
            raise UsageError(f"--policy {args.policy} needs --upper-bound")
        policy = {
            "per-node": lambda: PerNode(args.epsilon),
            "global": lambda: Global(args.epsilon, args.upper_bound),
            "whp": lambda: WithHighProbability(args.upper_bound),
        }[args.policy]()
        print(choose_r(policy))
    return EXIT_OK


def cmd_regress(args) -> int:
    try:
        points = read_summary_csv(args.path)
    except FileNotFoundError:
        print(f"beepcount: no such file: {args.path}", file=sys.stderr)
        return EXIT_NOINPUT
    except CsvFormatError as exc:
        print(f"beepcount: {args.path}: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    fit = linear_regression(points)
    print(f"slope={fit.slope!r} intercept={fit.intercept!r} relative_error={fit.relative_error!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": cmd_simulate, "oracle": cmd_oracle, "regress": cmd_regress}[args.command]
    try:
        return handler(args)
    except (UsageError, ConfigurationError, InvalidInputError) as exc:
        print(f"beepcount: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"beepcount: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE
    except OSError as exc:
        print(f"beepcount: {exc}", file=sys.stderr)
        return EXIT_IOERR


if __name__ == "__main__":
    sys.exit(main())
