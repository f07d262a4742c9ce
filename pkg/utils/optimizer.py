"""
Ratio maximization by binary search over constant probes.

Each probe asserts numerator >= q * denominator with q a literal, which keeps
the problem linear. A satisfiable probe lifts the lower end of the bracket to
the ratio its witness actually achieves.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from utils.errors import ConfigError, DecodeError
from utils.smt_engine import emit_smtlib, evaluate, ge, mul
from utils.solver import Status, run_solver

logger = logging.getLogger(__name__)

DEFAULT_TOL = Fraction(1, 1024)


class RatioStatus:
    CONVERGED = "converged"
    BELOW_LO = "below_lo"
    AT_HI = "at_hi"
    INCONCLUSIVE = "inconclusive"


@dataclass
class Probe:
    q: Fraction
    status: Status
    wall_time: float


@dataclass
class RatioResult:
    bound: Fraction | None
    witness: dict | None
    status: str
    bracket: tuple
    probes: list = field(default_factory=list)

    @property
    def inconclusive(self):
        return self.status == RatioStatus.INCONCLUSIVE

    @property
    def wall_time(self):
        return sum(p.wall_time for p in self.probes)


def solve_probe(base, numerator, denominator, q, timeout, solver_path=None):
    """One probe: is numerator >= q * denominator satisfiable alongside base?"""
    goal = ge(numerator, mul(q, denominator))
    return run_solver(emit_smtlib(base, goal), timeout, solver_path)


def achieved_ratio(assignment, numerator, denominator):
    try:
        den = evaluate(denominator, assignment)
        if den <= 0:
            return None
        return evaluate(numerator, assignment) / den
    except DecodeError:
        return None


def maximize_ratio(base, numerator, denominator, lo, hi, tol=DEFAULT_TOL, timeout=600,
                   solver_path=None):
    """
    Largest q with numerator >= q * denominator satisfiable, to within tol.

    Args:
        base: Problem whose assertions entail denominator > 0
        lo, hi: initial bracket, lo < hi
        tol: stop once the bracket is narrower than this

    Returns:
        RatioResult; bound is exact (the best witness's own ratio), or None
        when no probe was satisfiable.
    """
    lo, hi, tol = Fraction(lo), Fraction(hi), Fraction(tol)
    if not lo < hi:
        raise ConfigError(f"ratio bracket needs lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise ConfigError(f"tolerance must be positive, got {tol}")

    probes = []

    def probe(q):
        verdict = solve_probe(base, numerator, denominator, q, timeout, solver_path)
        probes.append(Probe(q, verdict.status, verdict.wall_time))
        logger.info("probe q=%s -> %s (%.2fs)", q, verdict.status.value, verdict.wall_time)
        return verdict

    first = probe(lo)
    if first.inconclusive:
        return RatioResult(None, None, RatioStatus.INCONCLUSIVE, (None, lo), probes)
    if first.is_unsat:
        return RatioResult(None, None, RatioStatus.BELOW_LO, (None, lo), probes)

    witness = base.complete(first.assignment)
    best = max(lo, achieved_ratio(witness, numerator, denominator) or lo)
    upper = hi
    if best >= hi:
        return RatioResult(best, witness, RatioStatus.AT_HI, (best, None), probes)

    while upper - best > tol:
        mid = (best + upper) / 2
        verdict = probe(mid)
        if verdict.is_sat:
            witness = base.complete(verdict.assignment)
            best = max(mid, achieved_ratio(witness, numerator, denominator) or mid)
            if best >= hi:
                return RatioResult(best, witness, RatioStatus.AT_HI, (best, None), probes)
            upper = max(upper, best)
        elif verdict.is_unsat:
            upper = mid
        else:
            return RatioResult(best, witness, RatioStatus.INCONCLUSIVE, (best, mid), probes)

    return RatioResult(best, witness, RatioStatus.CONVERGED, (best, upper), probes)
