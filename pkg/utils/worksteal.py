"""
Work-stealing scheduler over a task DAG with per-task switching costs.

Each resource owns a queue. A free resource takes the task at the back of
its own queue (the most recently enqueued one); when its queue holds nothing
it steals the oldest task from the other queues. A task pays its switching
cost when the resource last ran a task of a different thread.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

from utils.errors import ConfigError
from utils.framework import (IDEAL, Query, QueryKind, StateSchema, StepKind, TraceSpec,
                             TransitionSpec, check_invariant, optimal_gap)
from utils.optimizer import DEFAULT_TOL
from utils.params import parse_int, parse_rational, read_params
from utils.smt_engine import (Sort, add, and_, const, count, eq, ge, implies, ite, le, lt,
                              minimum, mul, ne, not_, or_)

logger = logging.getLogger(__name__)

MODEL = "worksteal"


@dataclass
class WorkStealConfig:
    n_resources: int = 2
    n_tasks: int = 4
    k: Fraction = Fraction(0)
    c: Fraction = Fraction(1)
    tol: Fraction = DEFAULT_TOL
    timeout: int | None = None
    horizon: int | None = None

    @classmethod
    def from_params(cls, params):
        fields = {
            "n_resources": ("n_resources", parse_int),
            "n_tasks": ("n_tasks", parse_int),
            "k": ("k", parse_rational),
            "c": ("c", parse_rational),
            "tol": ("tol", parse_rational),
            "timeout": ("timeout", parse_int),
            "horizon": ("horizon", parse_int),
        }
        config = cls(**read_params(params, fields))
        config.validate()
        return config

    def validate(self):
        if self.n_resources < 1:
            raise ConfigError(f"n_resources must be at least 1, got {self.n_resources}")
        if self.n_tasks < 1:
            raise ConfigError(f"n_tasks must be at least 1, got {self.n_tasks}")
        if self.k < 0:
            raise ConfigError(f"k must be nonnegative, got {self.k}")
        if self.c < 1:
            raise ConfigError(f"c must be at least 1, got {self.c}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError(f"horizon must be at least 1, got {self.horizon}")

    @property
    def steps(self):
        # each System step finishes at least one task
        return self.horizon or self.n_tasks

    def as_params(self):
        params = {"n_resources": self.n_resources, "n_tasks": self.n_tasks, "k": self.k, "c": self.c}
        if self.horizon is not None:
            params["horizon"] = self.horizon
        return params


def dag_name(i, j):
    return f"dag_{i}_{j}"


def _workload_vars(config):
    out = []
    for t in range(config.n_tasks):
        out += [(f"len_{t}", Sort.REAL), (f"sc_{t}", Sort.REAL), (f"thread_{t}", Sort.INT),
                (f"rank_{t}", Sort.REAL)]
    for i in range(config.n_tasks):
        for j in range(config.n_tasks):
            if i != j:
                out.append((dag_name(i, j), Sort.BOOL))
    return out


def _parents(ctx, t, n_tasks):
    return [(p, ctx.w(dag_name(p, t))) for p in range(n_tasks) if p != t]


def build_ws_trace(config):
    config.validate()
    n_r, n_t = config.n_resources, config.n_tasks
    tasks = range(n_t)
    resources = range(n_r)

    def workload_constraints(ctx):
        out = []
        for t in tasks:
            length, cost = ctx.w(f"len_{t}"), ctx.w(f"sc_{t}")
            out += [lt(0, length), le(length, 1), ge(cost, 0),
                    ge(ctx.w(f"thread_{t}"), 0), le(ctx.w(f"thread_{t}"), n_t - 1)]
            for u in tasks:
                out.append(le(cost, mul(config.k, ctx.w(f"len_{u}"))))
                if u != t:
                    out.append(le(cost, mul(config.c, ctx.w(f"sc_{u}"))))
                    out.append(implies(ctx.w(dag_name(t, u)), lt(ctx.w(f"rank_{t}"), ctx.w(f"rank_{u}"))))
        return out

    def initial(ctx, s0):
        out = [eq(s0.time, 0)]
        for t in tasks:
            is_root = not_(or_(*[edge for _, edge in _parents(ctx, t, n_t)]))
            queue = s0.task(t, "queue")
            out += [not_(s0.task(t, "running")), not_(s0.task(t, "finished")),
                    eq(s0.task(t, "cpu"), -1), eq(s0.task(t, "enq"), 0), eq(s0.task(t, "start"), 0),
                    implies(is_root, and_(ge(queue, 0), le(queue, n_r - 1))),
                    implies(not_(is_root), eq(queue, -1))]
        for r in resources:
            out += [s0.queue(r, "free"), not_(s0.queue(r, "has_run")), eq(s0.queue(r, "last_thread"), 0)]
            out += [not_(s0.glob(f"map_r{r}_t{t}")) for t in tasks]
        return out

    def invariants(ctx, s):
        out = []
        for t in tasks:
            running, finished = s.task(t, "running"), s.task(t, "finished")
            queue, cpu = s.task(t, "queue"), s.task(t, "cpu")
            out += [not_(and_(running, finished)),
                    implies(ge(queue, 0), and_(not_(running), not_(finished))),
                    ge(queue, -1), le(queue, n_r - 1), ge(cpu, -1), le(cpu, n_r - 1),
                    implies(running, ge(cpu, 0))]
            out += [implies(and_(edge, running), s.task(p, "finished")) for p, edge in _parents(ctx, t, n_t)]
            for u in range(t + 1, n_t):
                out.append(not_(and_(running, s.task(u, "running"), eq(cpu, s.task(u, "cpu")))))
        for r in resources:
            busy = or_(*[and_(s.task(t, "running"), eq(s.task(t, "cpu"), r)) for t in tasks])
            out.append(eq(s.queue(r, "free"), not_(busy)))
        return out

    def feasibility(ctx, pre, post):
        out = []
        mapping = [[post.glob(f"map_r{r}_t{t}") for t in tasks] for r in resources]
        for r in resources:
            for t in tasks:
                out.append(implies(mapping[r][t], and_(pre.queue(r, "free"), ge(pre.task(t, "queue"), 0))))
            out.append(le(count(mapping[r]), 1))
        for t in tasks:
            column = [mapping[r][t] for r in resources]
            assigned = ctx.define(f"assigned_t{t}", or_(*column))
            out.append(le(count(column), 1))
            cpu = pre.task(t, "cpu")
            for r in reversed(resources):
                cpu = ite(mapping[r][t], r, cpu, sort=Sort.INT)
            switch = add(*[ite(and_(mapping[r][t], pre.queue(r, "has_run"),
                                    ne(pre.queue(r, "last_thread"), ctx.w(f"thread_{t}"))),
                               ctx.w(f"sc_{t}"), 0, sort=Sort.REAL) for r in resources])
            out += [eq(post.task(t, "queue"), ite(assigned, -1, pre.task(t, "queue"), sort=Sort.INT)),
                    eq(post.task(t, "running"), or_(pre.task(t, "running"), assigned)),
                    eq(post.task(t, "finished"), pre.task(t, "finished")),
                    eq(post.task(t, "cpu"), cpu),
                    eq(post.task(t, "enq"), pre.task(t, "enq")),
                    eq(post.task(t, "start"), ite(assigned, add(pre.time, switch), pre.task(t, "start")))]
        for r in resources:
            taken = or_(*mapping[r])
            thread = pre.queue(r, "last_thread")
            for t in reversed(tasks):
                thread = ite(mapping[r][t], ctx.w(f"thread_{t}"), thread, sort=Sort.INT)
            out += [eq(post.queue(r, "free"), and_(pre.queue(r, "free"), not_(taken))),
                    eq(post.queue(r, "has_run"), or_(pre.queue(r, "has_run"), taken)),
                    eq(post.queue(r, "last_thread"), thread)]
        return out

    def algorithm(ctx, pre, post):
        out = []
        avail = [ge(pre.task(t, "queue"), 0) for t in tasks]
        for r in resources:
            free = pre.queue(r, "free")
            local_ok = [and_(free, avail[t], eq(pre.task(t, "queue"), r)) for t in tasks]
            steal_ok = [and_(free, avail[t], ne(pre.task(t, "queue"), r)) for t in tasks]
            local = ctx.argmin(f"local_r{r}", [(-pre.task(t, "enq"), const(-t)) for t in tasks], local_ok)
            steal = ctx.argmin(f"steal_r{r}", [(pre.task(t, "enq"), pre.task(t, "queue"), const(t))
                                               for t in tasks], steal_ok)
            has_local = ctx.define(f"has_local_r{r}", or_(*local_ok))
            for t in tasks:
                out.append(eq(post.glob(f"map_r{r}_t{t}"), or_(local[t], and_(not_(has_local), steal[t]))))
            avail = [and_(avail[t], not_(post.glob(f"map_r{r}_t{t}"))) for t in tasks]
        return out

    def system(ctx, post, nxt):
        out = []
        ends = [ctx.define(f"end_t{t}", add(post.task(t, "start"), ctx.w(f"len_{t}"))) for t in tasks]
        out.append(or_(*[and_(post.task(t, "running"), eq(nxt.time, ends[t])) for t in tasks]))
        fin = []
        for t in tasks:
            out.append(implies(post.task(t, "running"), le(nxt.time, ends[t])))
            fin.append(ctx.define(f"fin_t{t}", and_(post.task(t, "running"), le(ends[t], nxt.time))))
        for t in tasks:
            done_now = or_(post.task(t, "finished"), fin[t])
            ready = ctx.define(f"ready_t{t}", and_(
                eq(post.task(t, "queue"), -1), not_(post.task(t, "running")), not_(post.task(t, "finished")),
                *[implies(edge, nxt.task(p, "finished")) for p, edge in _parents(ctx, t, n_t)]))
            target = minimum(*[ite(and_(edge, fin[p]), post.task(p, "cpu"), n_r, sort=Sort.INT)
                               for p, edge in _parents(ctx, t, n_t)]) if n_t > 1 else const(0, Sort.INT)
            out += [eq(nxt.task(t, "finished"), done_now),
                    eq(nxt.task(t, "running"), and_(post.task(t, "running"), not_(fin[t]))),
                    eq(nxt.task(t, "cpu"), ite(fin[t], -1, post.task(t, "cpu"), sort=Sort.INT)),
                    eq(nxt.task(t, "start"), post.task(t, "start")),
                    eq(nxt.task(t, "queue"), ite(ready, target, post.task(t, "queue"), sort=Sort.INT)),
                    eq(nxt.task(t, "enq"), ite(ready, nxt.time, post.task(t, "enq")))]
        for r in resources:
            released = or_(*[and_(fin[t], eq(post.task(t, "cpu"), r)) for t in tasks])
            out += [eq(nxt.queue(r, "free"), or_(post.queue(r, "free"), released)),
                    eq(nxt.queue(r, "has_run"), post.queue(r, "has_run")),
                    eq(nxt.queue(r, "last_thread"), post.queue(r, "last_thread"))]
            out += [not_(nxt.glob(f"map_r{r}_t{t}")) for t in tasks]
        return out

    def done(ctx, s):
        return and_(*[s.task(t, "finished") for t in tasks])

    schema = StateSchema(
        task_fields=[("queue", Sort.INT), ("cpu", Sort.INT), ("enq", Sort.REAL), ("start", Sort.REAL),
                     ("running", Sort.BOOL), ("finished", Sort.BOOL)],
        queue_fields=[("free", Sort.BOOL), ("last_thread", Sort.INT), ("has_run", Sort.BOOL)],
        global_fields=[(f"map_r{r}_t{t}", Sort.BOOL) for r in resources for t in tasks],
        n_tasks=n_t, n_resources=n_r, invariants=[invariants])

    return TraceSpec(
        model_name=MODEL, schema=schema,
        transitions=TransitionSpec(algorithm, system, feasibility, done),
        horizon=config.steps, workload_vars=_workload_vars(config),
        workload_constraints=workload_constraints, initial_constraints=[initial],
        parameters=config.as_params(), stage_of=ws_stage)


def ws_stage(i, task, time, workload):
    if task["finished"]:
        return "done"
    if task["running"]:
        return "switching" if task["start"] > time else "running"
    if task["queue"] >= 0:
        return "waiting"
    return "pending"


# --- Queries ---

def _final_done(ctx, steps):
    final = steps[-1]
    return and_(*[final.task(t, "finished") for t in range(len(final.tasks))])


def completion_metric(ctx, steps):
    """Total completion time; the trace must have finished every task."""
    ctx.problem.add(_final_done(ctx, steps))
    return steps[-1].time


def work_conservation_property(ctx, steps):
    out = []
    for s in steps:
        if s.kind is not StepKind.ALGORITHM:
            continue
        idle = or_(*[s.queue(r, "free") for r in range(len(s.queues))])
        waiting = or_(*[ge(s.task(t, "queue"), 0) for t in range(len(s.tasks))])
        out.append(not_(and_(idle, waiting)))
    return and_(*out)


def horizon_property(ctx, steps):
    return _final_done(ctx, steps)


def gap_hi(config):
    # heuristic <= sum of lengths and costs <= n_tasks * (1 + k) * max length
    return config.n_tasks * (1 + config.k) + 1


def ws_gap(config, tol=None, timeout=600, solver_path=None):
    trace = build_ws_trace(config)
    return optimal_gap(trace, completion_metric, 1, gap_hi(config), tol or config.tol, timeout,
                       solver_path, name="gap")


def ws_queries(config):
    return {
        "gap": Query(QueryKind.GAP, completion_metric, "gap", Fraction(1), gap_hi(config), config.tol),
        "work-conservation": Query(QueryKind.INVARIANT, work_conservation_property, "work-conservation"),
        "horizon": Query(QueryKind.INVARIANT, horizon_property, "horizon"),
    }


def ws_work_conservation_query(config, timeout=600, solver_path=None):
    return check_invariant(build_ws_trace(config), work_conservation_property, timeout, solver_path,
                           name="work-conservation")


def ws_horizon_query(config, timeout=600, solver_path=None):
    return check_invariant(build_ws_trace(config), horizon_property, timeout, solver_path, name="horizon")


def ws_sweep(configs, tol=None, timeout=600, solver_path=None, jobs=1, csv_path=None):
    """One ws_gap per config; returns the table as a DataFrame in grid order."""
    from utils.sweep import run_sweep

    def evaluate(config):
        result = ws_gap(config, tol, timeout, solver_path)
        return {"bound": result.bound, "status": result.status, "wall_time": result.wall_time}

    points = [(c.as_params(), c) for c in configs]
    return run_sweep(points, evaluate, ["n_resources", "n_tasks", "k", "c"], csv_path, jobs)


# --- Discipline check over decoded traces ---

def _expected_mapping(pre, n_resources):
    avail = {t for t, task in enumerate(pre.tasks) if task["queue"] >= 0}
    picks = {}
    for r in range(n_resources):
        if not pre.queues[r]["free"]:
            continue
        local = [t for t in avail if pre.tasks[t]["queue"] == r]
        others = [t for t in avail if pre.tasks[t]["queue"] != r]
        if local:
            pick = max(local, key=lambda t: (pre.tasks[t]["enq"], t))
        elif others:
            pick = min(others, key=lambda t: (pre.tasks[t]["enq"], pre.tasks[t]["queue"], t))
        else:
            continue
        picks[r] = pick
        avail.discard(pick)
    return picks


def check_ws_discipline(schedule):
    """
    Each assignment of a heuristic trace is the back of the local queue or
    the oldest task elsewhere. Ideal traces are only checked for feasibility.
    Returns a list of problems (empty when the trace follows the discipline).
    """
    problems = []
    steps = schedule.steps
    n_resources = len(steps[0].queues) if steps else 0
    for pre, post in zip(steps, steps[1:]):
        if post.kind is not StepKind.ALGORITHM:
            continue
        actual = {}
        for name, flag in post.globals.items():
            if flag and name.startswith("map_r"):
                r, t = name[len("map_r"):].split("_t")
                actual[int(r)] = int(t)
        if all(task["finished"] for task in pre.tasks):
            continue
        for r, t in actual.items():
            if not pre.queues[r]["free"] or pre.tasks[t]["queue"] < 0:
                problems.append(f"step {post.index}: task {t} mapped to busy resource or not enqueued")
        if schedule.label == IDEAL:
            continue
        expected = _expected_mapping(pre, n_resources)
        if actual != expected:
            problems.append(f"step {post.index}: mapping {actual} differs from work stealing {expected}")
    return problems

