"""
Solver subprocess driver.

Scripts are written to a temporary file and handed to the solver binary as
`<solver> <script_file>`; stdout is parsed into a SolverVerdict.
"""

import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import pyparsing as pp

from utils.errors import SolverConfigError, SolverParseError

logger = logging.getLogger(__name__)

DEFAULT_SOLVERS = ("z3", "cvc5")


class Status(str, Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"
    TIMEOUT = "timeout"


@dataclass
class SolverVerdict:
    status: Status
    wall_time: float = 0.0
    assignment: dict = field(default_factory=dict)
    reason: str = ""
    raw_output: str = ""

    @property
    def is_sat(self):
        return self.status is Status.SAT

    @property
    def is_unsat(self):
        return self.status is Status.UNSAT

    @property
    def inconclusive(self):
        return self.status in (Status.UNKNOWN, Status.TIMEOUT)


def resolve_solver_path(solver_path=None):
    """
    Find the solver binary: explicit path, then VIRELAY_SOLVER, then z3/cvc5 on PATH.

    Raises:
        SolverConfigError: nothing usable was found.
    """
    candidates = []
    if solver_path:
        candidates.append(("--solver", solver_path))
    elif os.getenv("VIRELAY_SOLVER"):
        candidates.append(("VIRELAY_SOLVER", os.getenv("VIRELAY_SOLVER")))
    else:
        candidates.extend(("PATH", name) for name in DEFAULT_SOLVERS)

    for origin, candidate in candidates:
        if os.path.isfile(candidate) and os.access(candidate, os.X_OK):
            return os.path.abspath(candidate)
        found = shutil.which(candidate)
        if found:
            return found
        logger.debug("solver candidate %r from %s not usable", candidate, origin)

    tried = ", ".join(c for _, c in candidates)
    raise SolverConfigError(f"no SMT solver binary found (tried: {tried}); "
                            "pass --solver or set VIRELAY_SOLVER")


# --- Model parsing ---

_SEXPR = pp.ZeroOrMore(pp.nested_expr("(", ")"))


def _parse_value(node, raw):
    if isinstance(node, str):
        if node == "true":
            return True
        if node == "false":
            return False
        try:
            return Fraction(node)
        except ValueError:
            raise SolverParseError(f"unexpected model value {node!r}", raw) from None
    if len(node) == 2 and node[0] == "-":
        return -_parse_value(node[1], raw)
    if len(node) == 3 and node[0] == "/":
        return _parse_value(node[1], raw) / _parse_value(node[2], raw)
    if len(node) == 2 and node[0] in ("to_real", "to_int"):
        return _parse_value(node[1], raw)
    raise SolverParseError(f"unsupported model value {node!r}", raw)


def _collect_definitions(node, found, raw):
    if isinstance(node, str):
        return
    if node and node[0] == "define-fun":
        if len(node) != 5 or node[2]:
            raise SolverParseError(f"unexpected definition {node!r}", raw)
        found[node[1]] = _parse_value(node[4], raw)
        return
    for child in node:
        _collect_definitions(child, found, raw)


def parse_model(text):
    """Turn a get-model response into {name: bool | Fraction}."""
    try:
        parsed = _SEXPR.parse_string(text, parse_all=True).as_list()
    except pp.ParseException as e:
        raise SolverParseError(f"malformed model output: {e}", text) from None
    assignment = {}
    for node in parsed:
        if node and node[0] == "error":
            raise SolverParseError(f"solver reported an error: {' '.join(map(str, node[1:]))}", text)
        _collect_definitions(node, assignment, text)
    return assignment


def parse_solver_output(text, wall_time=0.0):
    lines = text.strip().splitlines()
    if not lines:
        raise SolverParseError("solver produced no output", text)
    head = lines[0].strip()
    rest = "\n".join(lines[1:])

    if head == "unsat":
        return SolverVerdict(Status.UNSAT, wall_time, raw_output=text)
    if head == "unknown":
        return SolverVerdict(Status.UNKNOWN, wall_time, reason="solver returned unknown", raw_output=text)
    if head == "timeout":
        return SolverVerdict(Status.TIMEOUT, wall_time, reason="solver-side timeout", raw_output=text)
    if head == "sat":
        return SolverVerdict(Status.SAT, wall_time, assignment=parse_model(rest), raw_output=text)
    raise SolverParseError(f"unexpected solver status line {head!r}", text)


def run_solver(script, timeout, solver_path=None):
    """
    Run one script to completion or timeout.

    Args:
        script: SMT-LIB2 text ending in check-sat/get-model
        timeout: seconds before the subprocess is killed
        solver_path: explicit binary; falls back per resolve_solver_path

    Returns:
        SolverVerdict
    """
    binary = resolve_solver_path(solver_path)
    handle, script_path = tempfile.mkstemp(prefix="virelay_", suffix=".smt2")
    try:
        with os.fdopen(handle, "w") as fh:
            fh.write(script)

        start = time.monotonic()
        try:
            # run() kills and reaps the child when the timeout expires
            proc = subprocess.run([binary, script_path], capture_output=True,
                                  text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            elapsed = time.monotonic() - start
            logger.info("solver %s timed out after %.2fs", os.path.basename(binary), elapsed)
            return SolverVerdict(Status.TIMEOUT, elapsed, reason=f"killed after {timeout}s")
        except OSError as e:
            raise SolverConfigError(f"could not start solver {binary}: {e}") from e
        elapsed = time.monotonic() - start
    finally:
        os.unlink(script_path)

    output = proc.stdout
    if not output.strip() and proc.stderr.strip():
        raise SolverParseError(f"solver exited with code {proc.returncode}", proc.stderr)
    verdict = parse_solver_output(output, elapsed)
    logger.info("solver %s: %s in %.2fs", os.path.basename(binary), verdict.status.value, elapsed)
    return verdict
