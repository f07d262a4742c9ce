"""
Independent re-check of decoded traces.

A trace read back from disk (or straight from the decoder) is plugged into a
freshly built problem: auxiliary definitions are recomputed in the order they
were introduced, then every assertion is evaluated exactly.
"""

import logging
from dataclasses import dataclass, field

from utils.errors import DecodeError
from utils.framework import IDEAL, StepKind, build_problem
from utils.smt_engine import evaluate, to_sexpr

logger = logging.getLogger(__name__)


@dataclass
class ReplayReport:
    checked: int = 0
    violations: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations and not self.missing

    def summary(self):
        if self.ok:
            return f"all {self.checked} constraints hold"
        parts = []
        if self.missing:
            parts.append(f"{len(self.missing)} missing values (first: {self.missing[0]})")
        if self.violations:
            parts.append(f"{len(self.violations)} of {self.checked} constraints violated")
        return "; ".join(parts)


def check_assignment(problem, assignment):
    """Evaluate every assertion of problem under assignment plus recomputed auxiliaries."""
    env = dict(assignment)
    report = ReplayReport()
    memo = {}
    for name, term in problem.definitions.items():
        try:
            env[name] = evaluate(term, env, memo)
        except DecodeError as e:
            report.missing.append(str(e))
            return report

    memo = {}
    for assertion in problem.assertions:
        report.checked += 1
        try:
            holds = evaluate(assertion, env, memo)
        except DecodeError as e:
            report.missing.append(str(e))
            continue
        if not holds:
            report.violations.append(to_sexpr(assertion)[:240])
    return report


def _time_order(schedule):
    problems = []
    for before, after in zip(schedule.steps, schedule.steps[1:]):
        if after.kind is StepKind.ALGORITHM and after.time != before.time:
            problems.append(f"algorithm step {after.index} changed time {before.time} -> {after.time}")
        elif after.time < before.time:
            problems.append(f"time went backwards at step {after.index}: {before.time} -> {after.time}")
    return problems


def validate_schedule(trace_spec, schedule):
    """
    Rebuild the trace copy the schedule came from and re-check it.

    Args:
        trace_spec: TraceSpec built from the same parameters as the schedule
        schedule: ScheduleTrace (decoded or loaded from a trace file)

    Returns:
        ReplayReport
    """
    ideal = schedule.label == IDEAL
    unrolled = build_problem(trace_spec, ((schedule.prefix, ideal),))
    report = check_assignment(unrolled.problem, schedule.to_assignment())
    report.violations.extend(_time_order(schedule))
    logger.info("replayed %s/%s trace: %s", schedule.model_name, schedule.label, report.summary())
    return report
