"""
Single-processor, non-preemptive SRPT with blocking tasks.

Every task alternates run and block periods, `steps` of each, and finishes
when its last block period ends. Whenever the processor is idle the
heuristic starts the ready task with the least remaining processing time.
Durations are solver-chosen and shared with the ideal schedule.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

from utils.errors import ConfigError
from utils.framework import (IDEAL, Query, QueryKind, StateSchema, StepKind, TraceSpec,
                             TransitionSpec, check_dual, optimal_gap)
from utils.optimizer import DEFAULT_TOL
from utils.params import format_rational, parse_int, parse_rational, read_params
from utils.smt_engine import (Sort, add, and_, count, eq, ge, implies, ite, le, lt, mul, not_,
                              or_, sub)

logger = logging.getLogger(__name__)

MODEL = "srpt"
STAGES = ("ready", "running", "blocked", "done")


@dataclass
class SrptConfig:
    n_tasks: int = 3
    steps: int = 2
    alpha: Fraction | None = None
    q: Fraction | None = None
    deadline: Fraction | None = None
    a_srpt: int | None = None
    a_query: int | None = None
    tol: Fraction = DEFAULT_TOL
    timeout: int | None = None
    horizon: int | None = None

    @classmethod
    def from_params(cls, params):
        fields = {
            "n_tasks": ("n_tasks", parse_int),
            "steps": ("steps", parse_int),
            "alpha": ("alpha", lambda v, k: parse_rational(v, k, allow_inf=True)),
            "q": ("q", parse_rational),
            "deadline": ("deadline", parse_rational),
            "a_srpt": ("a_srpt", parse_int),
            "a_query": ("a_query", parse_int),
            "tol": ("tol", parse_rational),
            "timeout": ("timeout", parse_int),
            "horizon": ("horizon", parse_int),
        }
        config = cls(**read_params(params, fields))
        config.validate()
        return config

    def validate(self):
        if self.n_tasks < 1:
            raise ConfigError(f"n_tasks must be at least 1, got {self.n_tasks}")
        if self.steps < 1:
            raise ConfigError(f"steps must be at least 1, got {self.steps}")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError(f"alpha must be positive or 'inf', got {self.alpha}")
        if self.q is not None and self.q <= 0:
            raise ConfigError(f"q must be positive, got {self.q}")
        for key in ("a_srpt", "a_query"):
            value = getattr(self, key)
            if value is not None and not 0 <= value <= self.n_tasks:
                raise ConfigError(f"{key} must lie in [0, {self.n_tasks}], got {value}")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError(f"horizon must be at least 1, got {self.horizon}")

    @property
    def events(self):
        # one run start and one block end per task step
        return self.horizon or 2 * self.n_tasks * self.steps

    def as_params(self):
        params = {"n_tasks": self.n_tasks, "steps": self.steps, "alpha": format_rational(self.alpha)}
        if self.horizon is not None:
            params["horizon"] = self.horizon
        return params


def run_name(i, j):
    return f"run_{i}_{j}"


def blk_name(i, j):
    return f"blk_{i}_{j}"


def _by_phase(ctx, phase, names):
    """Duration of the period selected by an Int phase."""
    return add(*[ite(eq(phase, j), ctx.w(name), 0, sort=Sort.REAL) for j, name in enumerate(names)])


def build_srpt_trace(config):
    config.validate()
    n, s = config.n_tasks, config.steps
    tasks = range(n)

    def runs(i):
        return [run_name(i, j) for j in range(s)]

    def blocks(i):
        return [blk_name(i, j) for j in range(s)]

    def workload_constraints(ctx):
        out = []
        for i in tasks:
            for j in range(s):
                out += [lt(0, ctx.w(run_name(i, j))), ge(ctx.w(blk_name(i, j)), 0)]
        if config.alpha is not None:
            for i in tasks:
                for j in range(s):
                    for k in tasks:
                        for m in range(s):
                            out.append(le(ctx.w(blk_name(i, j)), mul(config.alpha, ctx.w(run_name(k, m)))))
        return out

    def initial(ctx, s0):
        out = [eq(s0.time, 0)]
        for i in tasks:
            out += [s0.task(i, "ready"), not_(s0.task(i, "running")), not_(s0.task(i, "blocked")),
                    not_(s0.task(i, "done")), eq(s0.task(i, "phase"), 0),
                    eq(s0.task(i, "remaining"), add(*[ctx.w(x) for x in runs(i)])),
                    eq(s0.task(i, "run_end"), 0), eq(s0.task(i, "block_end"), 0),
                    eq(s0.task(i, "finish"), 0)]
        out += [eq(s0.glob(f"pick_t{i}"), False) for i in tasks]
        return out

    def invariants(ctx, st):
        out = []
        for i in tasks:
            flags = [st.task(i, name) for name in STAGES]
            out.append(eq(count(flags), 1))
            out += [ge(st.task(i, "phase"), 0), le(st.task(i, "phase"), s),
                    implies(st.task(i, "done"), eq(st.task(i, "phase"), s)),
                    implies(or_(st.task(i, "ready"), st.task(i, "running")), lt(st.task(i, "phase"), s))]
        out.append(le(count([st.task(i, "running") for i in tasks]), 1))
        return out

    def feasibility(ctx, pre, post):
        idle = ctx.define("idle", not_(or_(*[pre.task(i, "running") for i in tasks])))
        picks = [post.glob(f"pick_t{i}") for i in tasks]
        out = [le(count(picks), 1)]
        for i in tasks:
            pick = picks[i]
            out += [implies(pick, and_(idle, pre.task(i, "ready"))),
                    eq(post.task(i, "running"), or_(pre.task(i, "running"), pick)),
                    eq(post.task(i, "ready"), and_(pre.task(i, "ready"), not_(pick))),
                    eq(post.task(i, "blocked"), pre.task(i, "blocked")),
                    eq(post.task(i, "done"), pre.task(i, "done")),
                    eq(post.task(i, "run_end"),
                       ite(pick, add(pre.time, _by_phase(ctx, pre.task(i, "phase"), runs(i))),
                           pre.task(i, "run_end")))]
            for name in ("phase", "remaining", "block_end", "finish"):
                out.append(eq(post.task(i, name), pre.task(i, name)))
        return out

    def algorithm(ctx, pre, post):
        idle = not_(or_(*[pre.task(i, "running") for i in tasks]))
        ready = [pre.task(i, "ready") for i in tasks]
        chosen = ctx.argmin("srpt", [(pre.task(i, "remaining"), i) for i in tasks], ready)
        return [eq(post.glob(f"pick_t{i}"), and_(idle, chosen[i])) for i in tasks]

    def system(ctx, post, nxt):
        t = nxt.time
        out = [eq(nxt.glob(f"pick_t{i}"), False) for i in tasks]
        events = []
        for i in tasks:
            running, blocked = post.task(i, "running"), post.task(i, "blocked")
            out += [implies(running, le(t, post.task(i, "run_end"))),
                    implies(blocked, le(t, post.task(i, "block_end")))]
            events += [and_(running, eq(t, post.task(i, "run_end"))),
                       and_(blocked, eq(t, post.task(i, "block_end")))]
        out.append(or_(*events))

        for i in tasks:
            phase = post.task(i, "phase")
            run_done = ctx.define(f"run_done_t{i}", and_(post.task(i, "running"),
                                                          le(post.task(i, "run_end"), t)))
            blk_done = ctx.define(f"blk_done_t{i}", and_(post.task(i, "blocked"),
                                                          le(post.task(i, "block_end"), t)))
            blk = ctx.define(f"blk_t{i}", _by_phase(ctx, phase, blocks(i)))
            zero = eq(blk, 0)
            last = eq(phase, s - 1)
            finished = or_(and_(blk_done, eq(phase, s)), and_(run_done, zero, last))
            out += [eq(nxt.task(i, "phase"), ite(run_done, add(phase, 1), phase, sort=Sort.INT)),
                    eq(nxt.task(i, "remaining"),
                       ite(run_done, sub(post.task(i, "remaining"), _by_phase(ctx, phase, runs(i))),
                           post.task(i, "remaining"))),
                    eq(nxt.task(i, "running"), and_(post.task(i, "running"), not_(run_done))),
                    eq(nxt.task(i, "blocked"), or_(and_(post.task(i, "blocked"), not_(blk_done)),
                                                   and_(run_done, not_(zero)))),
                    eq(nxt.task(i, "ready"), or_(post.task(i, "ready"),
                                                 and_(blk_done, lt(phase, s)),
                                                 and_(run_done, zero, not_(last)))),
                    eq(nxt.task(i, "done"), or_(post.task(i, "done"), finished)),
                    eq(nxt.task(i, "block_end"), ite(run_done, add(t, blk), post.task(i, "block_end"))),
                    eq(nxt.task(i, "run_end"), post.task(i, "run_end")),
                    eq(nxt.task(i, "finish"), ite(finished, t, post.task(i, "finish")))]
        return out

    def done(ctx, st):
        return and_(*[st.task(i, "done") for i in tasks])

    schema = StateSchema(
        task_fields=[(name, Sort.BOOL) for name in STAGES] + [
            ("phase", Sort.INT), ("remaining", Sort.REAL), ("run_end", Sort.REAL),
            ("block_end", Sort.REAL), ("finish", Sort.REAL)],
        queue_fields=[],
        global_fields=[(f"pick_t{i}", Sort.BOOL) for i in tasks],
        n_tasks=n, n_resources=1, invariants=[invariants])

    workload_vars = [(run_name(i, j), Sort.REAL) for i in tasks for j in range(s)]
    workload_vars += [(blk_name(i, j), Sort.REAL) for i in tasks for j in range(s)]
    return TraceSpec(
        model_name=MODEL, schema=schema,
        transitions=TransitionSpec(algorithm, system, feasibility, done),
        horizon=config.events, workload_vars=workload_vars,
        workload_constraints=workload_constraints, initial_constraints=[initial],
        parameters=config.as_params(), stage_of=srpt_stage)


def srpt_stage(i, task, time, workload):
    for name in STAGES:
        if task[name]:
            return "waiting" if name == "ready" else name
    return "pending"


# --- Queries ---

def _all_done(steps):
    final = steps[-1]
    return and_(*[final.task(i, "done") for i in range(len(final.tasks))])


def total_completion(steps):
    final = steps[-1]
    return add(*[final.task(i, "finish") for i in range(len(final.tasks))])


def completion_metric(ctx, steps):
    ctx.problem.add(_all_done(steps))
    return total_completion(steps)


def avg_ratio_relation(q):
    def relation(ctx, heuristic, ideal):
        return and_(_all_done(heuristic), _all_done(ideal),
                    eq(total_completion(heuristic), mul(q, total_completion(ideal))))
    return relation


def deadline_relation(deadline, a_srpt, a_query):
    def relation(ctx, heuristic, ideal):
        g = deadline if deadline is not None else ctx.problem.declare(ctx.name("deadline"), Sort.REAL)

        def met(steps):
            final = steps[-1]
            return count([le(final.task(i, "finish"), g) for i in range(len(final.tasks))])

        return and_(_all_done(heuristic), _all_done(ideal), ge(g, 0),
                    eq(met(heuristic), a_srpt), eq(met(ideal), a_query))
    return relation


def srpt_avg_ratio_query(config, q, timeout=600, solver_path=None):
    if Fraction(q) <= 0:
        raise ConfigError(f"q must be positive, got {q}")
    return check_dual(build_srpt_trace(config), avg_ratio_relation(Fraction(q)), timeout, solver_path,
                      name="avg-ratio")


def srpt_deadline_query(config, deadline, a_srpt, a_query, timeout=600, solver_path=None):
    for key, value in (("a_srpt", a_srpt), ("a_query", a_query)):
        if not 0 <= value <= config.n_tasks:
            raise ConfigError(f"{key} must lie in [0, {config.n_tasks}], got {value}")
    return check_dual(build_srpt_trace(config), deadline_relation(deadline, a_srpt, a_query),
                      timeout, solver_path, name="deadline")


def srpt_avg_gap(config, tol=None, timeout=600, solver_path=None):
    """Worst ratio of SRPT's total completion time to the best schedule's."""
    return optimal_gap(build_srpt_trace(config), completion_metric, 1, config.n_tasks + 1,
                       tol or config.tol, timeout, solver_path, name="avg-gap")


def srpt_queries(config):
    queries = {"avg-gap": Query(QueryKind.GAP, completion_metric, "avg-gap", Fraction(1),
                                Fraction(config.n_tasks + 1), config.tol)}
    queries["avg-ratio"] = Query(QueryKind.DUAL, avg_ratio_relation(config.q or Fraction(2)), "avg-ratio")
    if config.a_srpt is not None and config.a_query is not None:
        queries["deadline"] = Query(QueryKind.DUAL,
                                    deadline_relation(config.deadline, config.a_srpt, config.a_query),
                                    "deadline")
    return queries


# --- Concrete oracle and discipline check ---

def simulate_srpt(runs, blocks):
    """
    Concrete SRPT schedule.

    Args:
        runs, blocks: per task, the list of run and block durations

    Returns:
        finish time per task
    """
    n = len(runs)
    phase = [0] * n
    remaining = [sum(map(Fraction, r)) for r in runs]
    ready = set(range(n))
    blocked = {}
    finish = [None] * n
    now = Fraction(0)
    current = None
    while any(f is None for f in finish):
        if current is None and ready:
            i = min(ready, key=lambda t: (remaining[t], t))
            ready.discard(i)
            current = (i, now + Fraction(runs[i][phase[i]]))
        events = list(blocked.values()) + ([current[1]] if current else [])
        if not events:
            raise ConfigError("srpt simulation stalled")
        now = min(events)
        for i, end in list(blocked.items()):
            if end <= now:
                del blocked[i]
                if phase[i] == len(runs[i]):
                    finish[i] = now
                else:
                    ready.add(i)
        if current and current[1] <= now:
            i = current[0]
            current = None
            blk = Fraction(blocks[i][phase[i]])
            remaining[i] -= Fraction(runs[i][phase[i]])
            phase[i] += 1
            if blk:
                blocked[i] = now + blk
            elif phase[i] == len(runs[i]):
                finish[i] = now
            else:
                ready.add(i)
    return finish


def check_srpt_discipline(schedule):
    """Heuristic picks minimize remaining time among ready tasks; no two runs overlap."""
    problems = []
    for pre, post in zip(schedule.steps, schedule.steps[1:]):
        if post.kind is not StepKind.ALGORITHM:
            continue
        picks = [i for i in range(len(post.tasks)) if post.globals.get(f"pick_t{i}")]
        running = sum(1 for task in post.tasks if task["running"])
        if running > 1:
            problems.append(f"step {post.index}: {running} tasks running at once")
        if schedule.label == IDEAL or all(task["done"] for task in pre.tasks):
            continue
        ready = [i for i, task in enumerate(pre.tasks) if task["ready"]]
        idle = not any(task["running"] for task in pre.tasks)
        expected = [min(ready, key=lambda i: (pre.tasks[i]["remaining"], i))] if idle and ready else []
        if picks != expected:
            problems.append(f"step {post.index}: picked {picks}, SRPT picks {expected}")
    return problems
