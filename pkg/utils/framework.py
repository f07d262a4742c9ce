"""
Bounded Algorithm/System trace construction and the query forms.

A trace is the alternation state_0 -> state_0' -> state_1 -> ... where the
Algorithm step (zero time) goes from state_i to state_i' and the System
step (advances time) goes from state_i' to state_{i+1}. Every state is a
fresh copy of all variables.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable

from utils.errors import ConstructionError, DecodeError
from utils.optimizer import DEFAULT_TOL, maximize_ratio
from utils.smt_engine import (Problem, Sort, and_, emit_smtlib, eq, ge, gt, implies, le,
                              mul, not_)
from utils.solver import run_solver

logger = logging.getLogger(__name__)

HEURISTIC = "heuristic"
IDEAL = "ideal"
SINGLE_PREFIX = "s"
HEURISTIC_PREFIX = "h"
IDEAL_PREFIX = "o"


class StepKind(str, Enum):
    INITIAL = "initial"
    ALGORITHM = "algorithm"
    SYSTEM = "system"


class QueryKind(str, Enum):
    INVARIANT = "invariant"
    GAP = "gap"
    DUAL = "dual"


def state_tag(index, kind):
    return f"s{index}a" if kind is StepKind.ALGORITHM else f"s{index}"


def step_sequence(horizon):
    """(index, kind) of every state copy in a trace of the given horizon."""
    seq = [(0, StepKind.INITIAL)]
    for i in range(horizon):
        seq.append((i, StepKind.ALGORITHM))
        seq.append((i + 1, StepKind.SYSTEM))
    return seq


def workload_name(name):
    return f"w_{name}"


# --- Schema and states ---

@dataclass
class StateSchema:
    task_fields: list
    queue_fields: list
    global_fields: list
    n_tasks: int
    n_resources: int
    invariants: list = field(default_factory=list)

    def validate(self):
        if self.n_tasks < 1 or self.n_resources < 1:
            raise ConstructionError("a schema needs at least one task and one resource")
        for group, fields in (("task", self.task_fields), ("queue", self.queue_fields),
                              ("global", self.global_fields)):
            names = [name for name, _ in fields]
            if len(set(names)) != len(names):
                raise ConstructionError(f"duplicate {group} field names: {names}")
            for name, sort in fields:
                if not isinstance(sort, Sort):
                    raise ConstructionError(f"{group} field {name!r} has no sort")
        if any(name == "time" for name, _ in self.global_fields):
            raise ConstructionError("'time' is provided by every state; do not declare it")


@dataclass
class StateStep:
    index: int
    kind: StepKind
    prefix: str
    time: object
    tasks: list
    queues: list
    globals: dict

    @property
    def tag(self):
        return state_tag(self.index, self.kind)

    def task(self, i, name):
        try:
            return self.tasks[i][name]
        except (IndexError, KeyError):
            raise ConstructionError(
                f"unknown task field {name!r} for task {i} in state {self.prefix}_{self.tag}") from None

    def queue(self, r, name):
        try:
            return self.queues[r][name]
        except (IndexError, KeyError):
            raise ConstructionError(
                f"unknown queue field {name!r} for resource {r} in state {self.prefix}_{self.tag}") from None

    def glob(self, name):
        if name == "time":
            return self.time
        try:
            return self.globals[name]
        except KeyError:
            raise ConstructionError(
                f"unknown global field {name!r} in state {self.prefix}_{self.tag}") from None

    def variables(self):
        out = [self.time, *self.globals.values()]
        for fields in self.tasks:
            out.extend(fields.values())
        for fields in self.queues:
            out.extend(fields.values())
        return out


class Workload:
    """Solver-chosen constants shared by every trace copy in one problem."""

    def __init__(self, terms):
        self.terms = dict(terms)

    def __getitem__(self, name):
        try:
            return self.terms[name]
        except KeyError:
            raise ConstructionError(f"unknown workload constant {name!r}") from None

    def __contains__(self, name):
        return name in self.terms


@dataclass
class TransitionContext:
    """Handed to every builder: where to put auxiliaries and what is shared."""
    problem: Problem
    workload: Workload
    prefix: str
    scope: str
    index: int = 0
    horizon: int = 0
    ideal: bool = False

    def name(self, label):
        return f"{self.prefix}_{self.scope}_{label}"

    def define(self, label, term):
        return self.problem.define(self.name(label), term)

    def argmin(self, label, values, validity):
        return self.problem.argmin(self.name(label), values, validity)

    def w(self, name):
        return self.workload[name]


@dataclass
class TransitionSpec:
    algorithm: Callable
    system: Callable
    feasibility: Callable | None = None
    done: Callable | None = None


@dataclass
class TraceSpec:
    model_name: str
    schema: StateSchema
    transitions: TransitionSpec
    horizon: int
    workload_vars: list = field(default_factory=list)
    workload_constraints: Callable | None = None
    initial_constraints: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    stage_of: Callable | None = None

    def validate(self):
        self.schema.validate()
        if self.horizon < 1:
            raise ConstructionError(f"horizon must be at least 1, got {self.horizon}")
        names = [name for name, _ in self.workload_vars]
        if len(set(names)) != len(names):
            raise ConstructionError(f"duplicate workload constants: {names}")


@dataclass
class Query:
    kind: QueryKind
    builder: Callable
    name: str = ""
    lo: Fraction = Fraction(1)
    hi: Fraction = Fraction(8)
    tol: Fraction = DEFAULT_TOL


# --- Decoded traces ---

@dataclass
class DecodedStep:
    index: int
    kind: StepKind
    time: Fraction
    tasks: list
    queues: list
    globals: dict
    stages: list = field(default_factory=list)


@dataclass
class ScheduleTrace:
    model_name: str
    parameters: dict
    verdict: str
    label: str
    prefix: str
    steps: list
    workload: dict
    bound: Fraction | None = None
    query: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def final_time(self):
        return self.steps[-1].time if self.steps else Fraction(0)

    @property
    def n_tasks(self):
        return len(self.steps[0].tasks) if self.steps else 0

    def to_assignment(self):
        """Solver-level names -> values, as the decoder read them."""
        out = {}
        for step in self.steps:
            base = f"{self.prefix}_{state_tag(step.index, step.kind)}"
            out[f"{base}_time"] = step.time
            for name, value in step.globals.items():
                out[f"{base}_{name}"] = value
            for i, fields in enumerate(step.tasks):
                for name, value in fields.items():
                    out[f"{base}_t{i}_{name}"] = value
            for r, fields in enumerate(step.queues):
                for name, value in fields.items():
                    out[f"{base}_r{r}_{name}"] = value
        for name, value in self.workload.items():
            out[workload_name(name)] = value
        return out


# --- Construction ---

def _declare_step(problem, schema, prefix, index, kind):
    base = f"{prefix}_{state_tag(index, kind)}"
    time = problem.declare(f"{base}_time", Sort.REAL)
    glob = {name: problem.declare(f"{base}_{name}", sort) for name, sort in schema.global_fields}
    tasks = [{name: problem.declare(f"{base}_t{i}_{name}", sort) for name, sort in schema.task_fields}
             for i in range(schema.n_tasks)]
    queues = [{name: problem.declare(f"{base}_r{r}_{name}", sort) for name, sort in schema.queue_fields}
              for r in range(schema.n_resources)]
    return StateStep(index, kind, prefix, time, tasks, queues, glob)


def frozen(a, b):
    """Every variable of state b equals its counterpart in state a."""
    return and_(*[eq(x, y) for x, y in zip(a.variables(), b.variables())])


def _guarded(problem, done, a, b, body):
    if done is None:
        problem.add(body)
        return
    problem.add(implies(done, frozen(a, b)))
    problem.add([implies(not_(done), c) for c in body])


def _build_trace(problem, trace, workload, prefix, ideal):
    schema, spec = trace.schema, trace.transitions
    if ideal and spec.feasibility is None:
        raise ConstructionError(f"model {trace.model_name} has no feasibility builder for an ideal trace")

    def ctx(scope, index=0):
        return TransitionContext(problem, workload, prefix, scope, index, trace.horizon, ideal)

    def invariants(step):
        c = ctx(f"v{step.tag}", step.index)
        for builder in schema.invariants:
            problem.add(builder(c, step))

    def done_flag(step):
        if spec.done is None:
            return None
        c = ctx(f"d{step.tag}", step.index)
        return c.define("done", spec.done(c, step))

    current = _declare_step(problem, schema, prefix, 0, StepKind.INITIAL)
    init_ctx = ctx("init")
    for builder in trace.initial_constraints:
        problem.add(builder(init_ctx, current))
    invariants(current)
    steps = [current]

    for i in range(trace.horizon):
        post = _declare_step(problem, schema, prefix, i, StepKind.ALGORITHM)
        problem.add(eq(post.time, current.time))
        actx = ctx(f"a{i}", i)
        body = []
        if spec.feasibility is not None:
            body.extend(spec.feasibility(actx, current, post))
        if not ideal:
            body.extend(spec.algorithm(actx, current, post))
        _guarded(problem, done_flag(current), current, post, body)
        invariants(post)
        steps.append(post)

        nxt = _declare_step(problem, schema, prefix, i + 1, StepKind.SYSTEM)
        problem.add(le(post.time, nxt.time))
        sctx = ctx(f"y{i}", i)
        _guarded(problem, done_flag(post), post, nxt, spec.system(sctx, post, nxt))
        invariants(nxt)
        steps.append(nxt)
        current = nxt
    return steps


@dataclass
class Unrolled:
    trace: TraceSpec
    problem: Problem
    workload: Workload
    steps: dict

    def context(self, prefix=SINGLE_PREFIX, scope="q"):
        return TransitionContext(self.problem, self.workload, prefix, scope, 0, self.trace.horizon)


def build_problem(trace, copies=((SINGLE_PREFIX, False),)):
    """
    Declare the shared workload once, then one trace per (prefix, ideal) copy.
    With two copies the second one's initial state equals the first one's.
    """
    trace.validate()
    metadata = {"model": trace.model_name}
    metadata.update({f"param.{k}": str(v) for k, v in trace.parameters.items()})
    metadata.update(trace.metadata)
    problem = Problem(trace.model_name, metadata)

    workload = Workload({name: problem.declare(workload_name(name), sort)
                         for name, sort in trace.workload_vars})
    if trace.workload_constraints is not None:
        wctx = TransitionContext(problem, workload, "w", "c", 0, trace.horizon)
        problem.add(trace.workload_constraints(wctx))

    steps = {}
    for prefix, ideal in copies:
        steps[prefix] = _build_trace(problem, trace, workload, prefix, ideal)
    if len(copies) == 2:
        first, second = (steps[p][0] for p, _ in copies)
        problem.add(frozen(first, second))
    logger.debug("built %r", problem)
    return Unrolled(trace, problem, workload, steps)


def unroll(trace):
    return build_problem(trace).problem


# --- Decoding ---

def _normalize(value, sort):
    return bool(value) if sort is Sort.BOOL else Fraction(value)


def decode_trace(assignment, trace, prefix=SINGLE_PREFIX, label=HEURISTIC, verdict="sat", bound=None):
    """
    Map an assignment back onto named fields, state by state.

    Raises:
        DecodeError: naming the first variable the assignment lacks.
    """
    schema = trace.schema

    def value(name, sort):
        if name not in assignment:
            raise DecodeError(f"assignment has no value for {name!r}")
        return _normalize(assignment[name], sort)

    workload = {name: value(workload_name(name), sort) for name, sort in trace.workload_vars}
    steps = []
    for index, kind in step_sequence(trace.horizon):
        base = f"{prefix}_{state_tag(index, kind)}"
        time = value(f"{base}_time", Sort.REAL)
        glob = {name: value(f"{base}_{name}", sort) for name, sort in schema.global_fields}
        tasks = [{name: value(f"{base}_t{i}_{name}", sort) for name, sort in schema.task_fields}
                 for i in range(schema.n_tasks)]
        queues = [{name: value(f"{base}_r{r}_{name}", sort) for name, sort in schema.queue_fields}
                  for r in range(schema.n_resources)]
        stages = []
        if trace.stage_of is not None:
            stages = [trace.stage_of(i, t, time, workload) for i, t in enumerate(tasks)]
        steps.append(DecodedStep(index, kind, time, tasks, queues, glob, stages))

    return ScheduleTrace(trace.model_name, dict(trace.parameters), verdict, label, prefix,
                         steps, workload, bound, metadata=dict(trace.metadata))


# --- Queries ---

@dataclass
class QueryResult:
    query: Query
    status: str
    traces: list = field(default_factory=list)
    bound: Fraction | None = None
    bracket: tuple | None = None
    wall_time: float = 0.0
    reason: str = ""

    @property
    def inconclusive(self):
        return self.status in ("unknown", "timeout", "inconclusive")


def prepare_invariant(trace, property_builder):
    unrolled = build_problem(trace)
    prop = property_builder(unrolled.context(), unrolled.steps[SINGLE_PREFIX])
    unrolled.problem.add(not_(prop))
    return unrolled


def prepare_dual(trace, relation_builder):
    unrolled = build_problem(trace, ((HEURISTIC_PREFIX, False), (IDEAL_PREFIX, True)))
    relation = relation_builder(unrolled.context(HEURISTIC_PREFIX), unrolled.steps[HEURISTIC_PREFIX],
                                unrolled.steps[IDEAL_PREFIX])
    unrolled.problem.add(relation)
    return unrolled


def prepare_gap(trace, metric_builder):
    unrolled = build_problem(trace, ((HEURISTIC_PREFIX, False), (IDEAL_PREFIX, True)))
    num = unrolled.context(HEURISTIC_PREFIX).define(
        "metric", metric_builder(unrolled.context(HEURISTIC_PREFIX), unrolled.steps[HEURISTIC_PREFIX]))
    den = unrolled.context(IDEAL_PREFIX).define(
        "metric", metric_builder(unrolled.context(IDEAL_PREFIX), unrolled.steps[IDEAL_PREFIX]))
    unrolled.problem.add(gt(den, 0))
    return unrolled, num, den


def _decode_pair(unrolled, assignment, verdict, bound=None):
    trace = unrolled.trace
    return [decode_trace(assignment, trace, HEURISTIC_PREFIX, HEURISTIC, verdict, bound),
            decode_trace(assignment, trace, IDEAL_PREFIX, IDEAL, verdict, bound)]


def check_invariant(trace, property_builder, timeout, solver_path=None, name="invariant"):
    """
    Assert the negated property over the unrolled trace.
    Unsat means the property holds within the horizon.
    """
    unrolled = prepare_invariant(trace, property_builder)
    verdict = run_solver(emit_smtlib(unrolled.problem), timeout, solver_path)
    traces = []
    if verdict.is_sat:
        assignment = unrolled.problem.complete(verdict.assignment)
        traces = [decode_trace(assignment, trace, verdict="sat")]
    return QueryResult(Query(QueryKind.INVARIANT, property_builder, name), verdict.status.value,
                       traces, wall_time=verdict.wall_time, reason=verdict.reason)


def check_dual(trace, relation_builder, timeout, solver_path=None, name="dual"):
    """Is there a shared workload on which heuristic and ideal traces satisfy the relation?"""
    unrolled = prepare_dual(trace, relation_builder)
    verdict = run_solver(emit_smtlib(unrolled.problem), timeout, solver_path)
    traces = []
    if verdict.is_sat:
        traces = _decode_pair(unrolled, unrolled.problem.complete(verdict.assignment), "sat")
    return QueryResult(Query(QueryKind.DUAL, relation_builder, name), verdict.status.value,
                       traces, wall_time=verdict.wall_time, reason=verdict.reason)


def optimal_gap(trace, metric_builder, lo=1, hi=8, tol=DEFAULT_TOL, timeout=600, solver_path=None,
                name="gap"):
    """
    Worst ratio metric(heuristic) / metric(ideal) over workloads, to within tol.
    The ideal copy keeps only the feasibility part of the Algorithm step.
    """
    unrolled, num, den = prepare_gap(trace, metric_builder)
    result = maximize_ratio(unrolled.problem, num, den, lo, hi, tol, timeout, solver_path)
    traces = []
    if result.witness is not None:
        traces = _decode_pair(unrolled, result.witness, "sat", result.bound)
    query = Query(QueryKind.GAP, metric_builder, name, Fraction(lo), Fraction(hi), Fraction(tol))
    return QueryResult(query, result.status, traces, result.bound, result.bracket, result.wall_time)


def prepare_script(trace, query):
    """The exact script the query solves first (for a gap: the probe at lo)."""
    if query.kind is QueryKind.INVARIANT:
        return emit_smtlib(prepare_invariant(trace, query.builder).problem)
    if query.kind is QueryKind.DUAL:
        return emit_smtlib(prepare_dual(trace, query.builder).problem)
    unrolled, num, den = prepare_gap(trace, query.builder)
    return emit_smtlib(unrolled.problem, ge(num, mul(query.lo, den)))


def run_query(trace, query, timeout, solver_path=None):
    if query.kind is QueryKind.INVARIANT:
        return check_invariant(trace, query.builder, timeout, solver_path, query.name)
    if query.kind is QueryKind.DUAL:
        return check_dual(trace, query.builder, timeout, solver_path, query.name)
    return optimal_gap(trace, query.builder, query.lo, query.hi, query.tol, timeout, solver_path,
                       query.name)
