"""
virelay command line: run performance queries against the scheduling models,
sweep parameter grids, emit SMT-LIB2 scripts and render or re-check traces.

Exit codes: 0 property holds / bound found, 1 counterexample (or invalid
trace), 2 inconclusive, 3 usage or configuration error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime
from fractions import Fraction

from dotenv import load_dotenv

load_dotenv()

from utils.errors import ConfigError, ConstructionError, TraceFileError, VirelayError  # noqa: E402
from utils.framework import QueryKind, prepare_script, run_query  # noqa: E402
from utils.models import MODELS, get_model  # noqa: E402
from utils.optimizer import RatioStatus  # noqa: E402
from utils.params import format_rational, parse_rational  # noqa: E402
from utils.renderer import FORMATS, render  # noqa: E402
from utils.replay import validate_schedule  # noqa: E402
from utils.sweep import expand_grid, run_sweep  # noqa: E402
from utils.trace_file import read_trace_file, write_trace_file  # noqa: E402

logger = logging.getLogger("virelay")

EXIT_OK = 0
EXIT_FOUND = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3

DEFAULT_TIMEOUT = 600
DEFAULT_OUT = "./virelay_out"


# --- Argument handling ---

def load_params(value):
    """--params takes a JSON file or an inline JSON object; numbers stay exact."""
    if not value:
        return {}
    text = value
    if not value.lstrip().startswith("{"):
        try:
            with open(value) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read params file {value}: {e}") from None
    try:
        params = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as e:
        raise ConfigError(f"params are not valid JSON: {e}") from None
    if not isinstance(params, dict):
        raise ConfigError("params must be a JSON object")
    return params


def _timeout(args, config=None):
    if args.timeout is not None:
        return args.timeout
    if config is not None and getattr(config, "timeout", None):
        return config.timeout
    try:
        return int(os.getenv("VIRELAY_TIMEOUT", DEFAULT_TIMEOUT))
    except ValueError:
        raise ConfigError(f"VIRELAY_TIMEOUT must be an integer, got {os.getenv('VIRELAY_TIMEOUT')!r}") from None


def _out_dir(args):
    return args.out or os.getenv("VIRELAY_OUT", DEFAULT_OUT)


def _stamp():
    return datetime.now().strftime("%Y%m%d-%H%M%S")


def _trace_path(args, model, query):
    return os.path.join(_out_dir(args), f"{model}_{query}_{_stamp()}.json")


def _record(args, model, query, params, status, bound=None, wall_time=0.0, trace_path=None):
    if args.no_record:
        return
    from utils.db import save_run

    try:
        save_run(model, query, params, status, bound, wall_time, trace_path)
    except Exception as e:
        logger.warning("could not record run in history: %s", e)


def _resolve(args):
    entry = get_model(args.model)
    params = load_params(args.params)
    config = entry.config(params)
    query = entry.query(config, args.query)
    return entry, config, query


# --- Commands ---

def cmd_check(args):
    entry, config, query = _resolve(args)
    if query.kind is QueryKind.GAP:
        raise ConfigError(f"{args.model}/{args.query} is an optimization query; use 'optimize'")
    trace = entry.build_trace(config)
    result = run_query(trace, query, _timeout(args, config), args.solver)

    path = None
    if result.status == "sat":
        path = write_trace_file(_trace_path(args, entry.name, query.name), result.traces, query.name)
    _record(args, entry.name, query.name, config.as_params(), result.status, None, result.wall_time, path)

    if result.status == "unsat":
        verdict = "holds" if query.kind is QueryKind.INVARIANT else "no such workload"
        print(f"{entry.name}/{query.name}: unsat ({verdict}) in {result.wall_time:.2f}s")
        return EXIT_OK
    if result.status == "sat":
        found = "counterexample" if query.kind is QueryKind.INVARIANT else "witness"
        print(f"{entry.name}/{query.name}: sat ({found}) in {result.wall_time:.2f}s")
        print(f"trace written to {path}")
        return EXIT_FOUND
    print(f"{entry.name}/{query.name}: inconclusive ({result.status}: {result.reason or 'no reason given'})")
    return EXIT_INCONCLUSIVE


def cmd_optimize(args):
    entry, config, query = _resolve(args)
    if query.kind is not QueryKind.GAP:
        raise ConfigError(f"{args.model}/{args.query} is not an optimization query; use 'check'")
    if args.tol is not None:
        query = replace(query, tol=parse_rational(args.tol, "tol"))
        if query.tol <= 0:
            raise ConfigError(f"--tol must be positive, got {args.tol}")
    trace = entry.build_trace(config)
    result = run_query(trace, query, _timeout(args, config), args.solver)

    path = None
    if result.traces:
        path = write_trace_file(_trace_path(args, entry.name, query.name), result.traces, query.name,
                                result.bound)
    _record(args, entry.name, query.name, config.as_params(), result.status, result.bound, result.wall_time, path)

    lo, hi = result.bracket or (None, None)
    if result.status == RatioStatus.INCONCLUSIVE:
        print(f"{entry.name}/{query.name}: inconclusive, bound in "
              f"[{_show(lo)}, {_show(hi)}] ({_decimal(lo)} .. {_decimal(hi)})")
        return EXIT_INCONCLUSIVE
    if result.status == RatioStatus.BELOW_LO:
        print(f"{entry.name}/{query.name}: no workload reaches ratio {query.lo}")
        return EXIT_OK
    suffix = " (search ceiling reached)" if result.status == RatioStatus.AT_HI else ""
    print(f"{entry.name}/{query.name}: bound {format_rational(result.bound)} = {_decimal(result.bound)}{suffix}")
    if hi is not None:
        print(f"bracket [{_show(lo)}, {_show(hi)}]")
    if path:
        print(f"traces written to {path}")
    return EXIT_OK


def _show(value):
    return "-" if value is None else format_rational(value)


def _decimal(value):
    return "-" if value is None else f"{float(value):.6f}"


def cmd_sweep(args):
    entry = get_model(args.model)
    grid = load_params(args.params)
    points = expand_grid(grid)
    if not points:
        raise ConfigError("the sweep grid is empty")
    columns = list(grid)
    tol = parse_rational(args.tol, "tol") if args.tol is not None else None

    def evaluate(params):
        config = entry.config(params)
        query = entry.query(config, args.query)
        if tol is not None and query.kind is QueryKind.GAP:
            query = replace(query, tol=tol)
        result = run_query(entry.build_trace(config), query, _timeout(args, config), args.solver)
        return {"bound": result.bound, "status": result.status, "wall_time": result.wall_time}

    csv_path = args.csv or os.path.join(_out_dir(args), f"sweep_{entry.name}_{args.query}_{_stamp()}.csv")
    table = run_sweep([(p, p) for p in points], evaluate, columns, csv_path, args.jobs)

    for params, (_, row) in zip(points, table.iterrows()):
        bound = None if row["bound"] is None or row["bound"] != row["bound"] else Fraction(row["bound"])
        _record(args, entry.name, args.query, params, row["status"], bound, row["wall_time"])

    print(table.to_string(index=False))
    print(f"sweep written to {csv_path}")
    stuck = table["status"].isin(["unknown", "timeout", RatioStatus.INCONCLUSIVE, "error"])
    return EXIT_INCONCLUSIVE if stuck.any() else EXIT_OK


def cmd_render(args):
    trace_file = read_trace_file(args.trace)
    fmt = args.format or "ascii"
    text = render(trace_file.traces, fmt)
    if args.output:
        os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"{fmt} written to {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_emit_smt(args):
    entry, config, query = _resolve(args)
    if args.tol is not None and query.kind is QueryKind.GAP:
        query = replace(query, tol=parse_rational(args.tol, "tol"))
    script = prepare_script(entry.build_trace(config), query)
    path = args.output or os.path.join(_out_dir(args), f"{entry.name}_{query.name}.smt2")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(script)
    logger.debug("emitted %d characters", len(script))
    print(f"script written to {path}")
    return EXIT_OK


def cmd_validate(args):
    trace_file = read_trace_file(args.trace)
    entry = get_model(trace_file.model)
    config = entry.config(trace_file.params)
    spec = entry.build_trace(config)

    ok = True
    for schedule in trace_file.traces:
        report = validate_schedule(spec, schedule)
        problems = entry.check_discipline(schedule, config)
        print(f"{schedule.label}: {report.summary()}")
        for line in report.missing + report.violations:
            print(f"  constraint: {line}")
        for line in problems:
            print(f"  discipline: {line}")
        ok = ok and report.ok and not problems
    print("valid" if ok else "INVALID")
    return EXIT_OK if ok else EXIT_FOUND


def cmd_history(args):
    from utils.db import get_run_history

    history = get_run_history(args.limit, args.model)
    if history.empty:
        print("no recorded runs")
    else:
        print(history.drop(columns=["params"]).to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "render": cmd_render,
    "emit-smt": cmd_emit_smt,
    "validate": cmd_validate,
    "history": cmd_history,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="virelay", description="SMT-based performance verification")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def query_args(p, needs_query=True):
        p.add_argument("--model", required=True, choices=sorted(MODELS))
        p.add_argument("--query", required=needs_query, help="model-specific query name")
        p.add_argument("--params", help="JSON file (or inline JSON object) of model parameters")
        p.add_argument("--solver", help="solver binary (default: VIRELAY_SOLVER, then z3/cvc5 on PATH)")
        p.add_argument("--timeout", type=int, help="seconds per solver call (default: VIRELAY_TIMEOUT or 600)")
        p.add_argument("--tol", help="bracket tolerance for optimization queries, e.g. 1/1024")
        p.add_argument("--out", help="output directory (default: VIRELAY_OUT or ./virelay_out)")
        p.add_argument("--no-record", action="store_true", help="do not write the run to the history store")

    query_args(sub.add_parser("check", help="run an invariant or existence query"))
    query_args(sub.add_parser("optimize", help="bound the heuristic/ideal gap"))

    p_sweep = sub.add_parser("sweep", help="run a query over a parameter grid")
    query_args(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="grid points solved in parallel")
    p_sweep.add_argument("--csv", help="CSV path (default: <out>/sweep_<model>_<query>_<time>.csv)")

    p_emit = sub.add_parser("emit-smt", help="write the SMT-LIB2 script a query would solve")
    query_args(p_emit)
    p_emit.add_argument("--output", help="script path (default: <out>/<model>_<query>.smt2)")

    p_render = sub.add_parser("render", help="draw a trace file")
    p_render.add_argument("trace", help="trace file (JSON)")
    p_render.add_argument("--format", choices=FORMATS, default="ascii")
    p_render.add_argument("--output", help="write here instead of stdout")

    p_validate = sub.add_parser("validate", help="re-check a trace file against its model")
    p_validate.add_argument("trace", help="trace file (JSON)")

    p_history = sub.add_parser("history", help="list recorded runs")
    p_history.add_argument("--model", choices=sorted(MODELS))
    p_history.add_argument("--limit", type=int, default=20)
    return parser


def setup_logging(verbose=False):
    name = os.getenv("VIRELAY_LOG_LEVEL", "WARNING").upper()
    level = logging.DEBUG if verbose else getattr(logging, name, logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    setup_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ConstructionError, TraceFileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except VirelayError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
