"""
Simplified CFS load balancing over four CPUs in two groups, A={0,1} and B={2,3}.

One period runs, in order: pair-level balancing for CPU0..CPU3 (each CPU
against its partner), then top-level balancing for group A against B and for
B against A. The `version` toggle selects the busiest-CPU rule: 5.7 only
considers CPUs with at least two tasks when migrating utilization.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

from utils.errors import ConfigError
from utils.framework import (Query, QueryKind, StateSchema, StepKind, TraceSpec, TransitionContext,
                             TransitionSpec, Workload, check_invariant)
from utils.params import parse_choice, parse_int, parse_rational, read_params
from utils.smt_engine import (TRUE, Problem, Sort, add, and_, const, count, eq, ge, gt, ite, le, lt,
                              mul, not_, or_, sub)

logger = logging.getLogger(__name__)

MODEL = "linuxlb"
N_CPUS = 4
GROUPS = {"A": (0, 1), "B": (2, 3)}
VERSIONS = {"5.5": "v5_5", "v5_5": "v5_5", "5.7": "v5_7", "v5_7": "v5_7"}

MIGRATE_NONE, MIGRATE_UTIL, MIGRATE_TASK = 0, 1, 2


def _actions():
    out = []
    for c in range(N_CPUS):
        partner = c ^ 1
        out.append((f"l0_c{c}", (c,), (partner,)))
    out.append(("top_A", GROUPS["A"], GROUPS["B"]))
    out.append(("top_B", GROUPS["B"], GROUPS["A"]))
    return out


ACTIONS = _actions()
DIAGNOSTICS = ("mt", "src", "dst", "moved")


@dataclass
class LbConfig:
    version: str = "v5_5"
    n_tasks: int = 5
    periods: int = 2
    balance_period: Fraction = Fraction(1)
    threshold: Fraction = Fraction(2, 5)
    ewma_lambda: Fraction = Fraction(1, 2)
    imbalance_pct: Fraction = Fraction(117, 100)
    restricted: bool = False
    timeout: int | None = None

    @classmethod
    def from_params(cls, params):
        fields = {
            "version": ("version", lambda v, k: parse_choice(v, k, VERSIONS)),
            "n_tasks": ("n_tasks", parse_int),
            "periods": ("periods", parse_int),
            "balance_period": ("balance_period", parse_rational),
            "threshold": ("threshold", parse_rational),
            "lambda": ("ewma_lambda", parse_rational),
            "imbalance_pct": ("imbalance_pct", parse_rational),
            "restricted": ("restricted", lambda v, k: bool(v)),
            "timeout": ("timeout", parse_int),
        }
        config = cls(**read_params(params, fields))
        config.validate()
        return config

    def validate(self):
        if self.version not in ("v5_5", "v5_7"):
            raise ConfigError(f"version must be 5.5 or 5.7, got {self.version!r}")
        if self.n_tasks < 1:
            raise ConfigError(f"n_tasks must be at least 1, got {self.n_tasks}")
        if self.periods < 1:
            raise ConfigError(f"periods must be at least 1, got {self.periods}")
        if self.balance_period <= 0:
            raise ConfigError(f"balance_period must be positive, got {self.balance_period}")
        if not 0 <= self.threshold < 1:
            raise ConfigError(f"threshold must lie in [0, 1), got {self.threshold}")
        if not 0 < self.ewma_lambda < 1:
            raise ConfigError(f"lambda must lie in (0, 1), got {self.ewma_lambda}")
        if self.imbalance_pct < 1:
            raise ConfigError(f"imbalance_pct must be at least 1, got {self.imbalance_pct}")

    @property
    def v5_7(self):
        return self.version == "v5_7"

    def as_params(self):
        return {"version": self.version, "n_tasks": self.n_tasks, "periods": self.periods,
                "balance_period": self.balance_period, "lambda": self.ewma_lambda,
                "imbalance_pct": self.imbalance_pct}


# --- Symbolic balancing pass ---

def balance_terms(ctx, cpu, run_pct, config):
    """
    One full balancing pass as terms.

    Args:
        ctx: TransitionContext that receives the auxiliary definitions
        cpu: Int term per task
        run_pct: Real term per task

    Returns:
        (cpu terms after the pass, {action: {diagnostic: term}})
    """
    tasks = range(len(cpu))
    half = Fraction(1, 2)
    diagnostics = {}
    for name, local, other in ACTIONS:
        nr = [ctx.define(f"{name}_nr_c{c}", count([eq(cpu[t], c) for t in tasks])) for c in range(N_CPUS)]
        util = [ctx.define(f"{name}_util_c{c}",
                           add(*[ite(eq(cpu[t], c), run_pct[t], 0, sort=Sort.REAL) for t in tasks]))
                for c in range(N_CPUS)]
        idle = [eq(nr[c], 0) for c in range(N_CPUS)]
        size_local, size_other = len(local), len(other)
        util_local = add(*[util[c] for c in local])
        util_other = add(*[util[c] for c in other])
        idle_local = count([idle[c] for c in local])
        idle_other = count([idle[c] for c in other])
        nr_other = add(*[nr[c] for c in other])

        if size_local == 1:
            dst, dst_idle = const(local[0], Sort.INT), idle[local[0]]
        else:
            dst = ite(idle[local[0]], local[0], ite(idle[local[1]], local[1], local[0], sort=Sort.INT),
                      sort=Sort.INT)
            dst_idle = or_(*[idle[c] for c in local])

        spare = or_(ge(idle_local, 1), lt(util_local, size_local))
        overloaded = ctx.define(f"{name}_ovl", and_(gt(nr_other, size_other),
                                                    gt(mul(config.imbalance_pct, util_other), size_other)))
        has_cap = lt(util_local, size_local)
        is_util = ctx.define(f"{name}_is_util", and_(spare, overloaded, or_(not_(dst_idle), has_cap)))
        is_task = ctx.define(f"{name}_is_task", and_(spare, not_(is_util)))

        eligible = [ge(nr[c], 2) if config.v5_7 else TRUE for c in other]
        by_util = ctx.argmin(f"{name}_bu", [(-util[c], c) for c in other], eligible)
        by_count = ctx.argmin(f"{name}_bn", [(-nr[c], c) for c in other], [TRUE] * size_other)
        pick = [ctx.define(f"{name}_src_c{c}", or_(and_(is_util, by_util[k]), and_(is_task, by_count[k])))
                for k, c in enumerate(other)]
        nr_src = add(*[ite(pick[k], nr[c], 0, sort=Sort.INT) for k, c in enumerate(other)])
        imbalance = ctx.define(f"{name}_imb", ite(
            is_util, sub(size_local, util_local),
            ite(overloaded, 1, ite(ge(sub(idle_local, idle_other), 2), 1, 0, sort=Sort.REAL), sort=Sort.REAL),
            sort=Sort.REAL))

        moved_sum, moved = const(0), const(0, Sort.INT)
        new_cpu = []
        for t in tasks:
            on_src = or_(*[and_(pick[k], eq(cpu[t], c)) for k, c in enumerate(other)])
            metric = ite(is_util, run_pct[t], 1, sort=Sort.REAL)
            migrate = ctx.define(f"{name}_mig_t{t}", and_(
                on_src, lt(moved_sum, imbalance), le(mul(half, metric), sub(imbalance, moved_sum)),
                lt(add(moved, 1), nr_src)))
            moved_sum = ctx.define(f"{name}_sum_t{t}", add(moved_sum, ite(migrate, metric, 0, sort=Sort.REAL)))
            moved = ctx.define(f"{name}_num_t{t}", add(moved, ite(migrate, 1, 0, sort=Sort.INT)))
            new_cpu.append(ctx.define(f"{name}_cpu_t{t}", ite(migrate, dst, cpu[t], sort=Sort.INT)))

        src = ite(or_(*pick), add(*[ite(pick[k], c, 0, sort=Sort.INT) for k, c in enumerate(other)]), -1,
                  sort=Sort.INT)
        diagnostics[name] = {
            "mt": ite(is_util, MIGRATE_UTIL, ite(is_task, MIGRATE_TASK, MIGRATE_NONE, sort=Sort.INT),
                      sort=Sort.INT),
            "src": src, "dst": dst, "moved": moved,
        }
        cpu = new_cpu
    return cpu, diagnostics


def _share(nr, n_tasks):
    """1/nr as an ite chain over the possible task counts; 0 for an empty CPU."""
    share = const(0)
    for k in range(n_tasks, 0, -1):
        share = ite(eq(nr, k), Fraction(1, k), share, sort=Sort.REAL)
    return share


def build_lb_trace(config):
    config.validate()
    n = config.n_tasks
    tasks = range(n)
    cpus = range(N_CPUS)
    lam = config.ewma_lambda

    def initial(ctx, s0):
        return [eq(s0.time, 0)] + [eq(s0.task(t, "received"), 0) for t in tasks]

    def invariants(ctx, s):
        out = []
        for t in tasks:
            out += [ge(s.task(t, "cpu"), 0), le(s.task(t, "cpu"), N_CPUS - 1),
                    ge(s.task(t, "run_pct"), 0), le(s.task(t, "run_pct"), 1),
                    ge(s.task(t, "runnable_pct"), 0), le(s.task(t, "runnable_pct"), 1),
                    ge(s.task(t, "received"), 0)]
        for c in cpus:
            on = [eq(s.task(t, "cpu"), c) for t in tasks]
            out += [eq(s.queue(c, "nr"), count(on)),
                    eq(s.queue(c, "util"),
                       add(*[ite(on[t], s.task(t, "run_pct"), 0, sort=Sort.REAL) for t in tasks]))]
        return out

    def algorithm(ctx, pre, post):
        cpu, diagnostics = balance_terms(ctx, [pre.task(t, "cpu") for t in tasks],
                                         [pre.task(t, "run_pct") for t in tasks], config)
        out = []
        for t in tasks:
            out.append(eq(post.task(t, "cpu"), cpu[t]))
            for name in ("run_pct", "runnable_pct", "received"):
                out.append(eq(post.task(t, name), pre.task(t, name)))
        for action, values in diagnostics.items():
            out += [eq(post.glob(f"{action}_{key}"), term) for key, term in values.items()]
        return out

    def system(ctx, post, nxt):
        period = config.balance_period
        shares = [ctx.define(f"share_c{c}", _share(post.queue(c, "nr"), n)) for c in cpus]
        out = [eq(nxt.time, add(post.time, period))]
        for t in tasks:
            mine = add(*[ite(eq(post.task(t, "cpu"), c), shares[c], 0, sort=Sort.REAL) for c in cpus])
            out += [eq(nxt.task(t, "cpu"), post.task(t, "cpu")),
                    eq(nxt.task(t, "received"), add(post.task(t, "received"), mul(period, mine))),
                    eq(nxt.task(t, "run_pct"), add(mul(lam, post.task(t, "run_pct")), mul(1 - lam, mine))),
                    eq(nxt.task(t, "runnable_pct"), add(mul(lam, post.task(t, "runnable_pct")), 1 - lam))]
        return out

    schema = StateSchema(
        task_fields=[("cpu", Sort.INT), ("run_pct", Sort.REAL), ("runnable_pct", Sort.REAL),
                     ("received", Sort.REAL)],
        queue_fields=[("nr", Sort.INT), ("util", Sort.REAL)],
        global_fields=[(f"{name}_{key}", Sort.INT) for name, _, _ in ACTIONS for key in DIAGNOSTICS],
        n_tasks=n, n_resources=N_CPUS, invariants=[invariants])

    return TraceSpec(
        model_name=MODEL, schema=schema, transitions=TransitionSpec(algorithm, system),
        horizon=config.periods, initial_constraints=[initial], parameters=config.as_params(),
        metadata={"topology": "A={0,1} B={2,3}", "imbalance_pct": str(config.imbalance_pct)},
        stage_of=lb_stage)


def lb_stage(i, task, time, workload):
    return f"cpu{int(task['cpu'])}"


# --- Queries ---

def _top_util_on(step, c):
    group = "A" if c in GROUPS["A"] else "B"
    action = f"top_{group}"
    return and_(eq(step.glob(f"{action}_mt"), MIGRATE_UTIL), eq(step.glob(f"{action}_dst"), c))


def work_conservation_property(restricted=False):
    def prop(ctx, steps):
        out = []
        for s in steps:
            if s.kind is not StepKind.ALGORITHM:
                continue
            idle = [eq(s.queue(c, "nr"), 0) for c in range(N_CPUS)]
            if restricted:
                idle = [and_(idle[c], _top_util_on(s, c)) for c in range(N_CPUS)]
            crowded = or_(*[ge(s.queue(c, "nr"), 2) for c in range(N_CPUS)])
            out.append(not_(and_(or_(*idle), crowded)))
        return and_(*out)
    return prop


def fairness_property(threshold):
    def prop(ctx, steps):
        final = steps[-1]
        n = len(final.tasks)
        starved = [lt(final.task(i, "received"), mul(threshold, final.task(j, "received")))
                   for i in range(n) for j in range(n) if i != j]
        return not_(or_(*starved))
    return prop


def _check_wc_pre(config):
    if config.n_tasks <= N_CPUS:
        raise ConfigError(f"work conservation needs more tasks than CPUs ({N_CPUS}), got {config.n_tasks}")


def _check_fairness_pre(config, threshold):
    if not 0 <= threshold < 1:
        raise ConfigError(f"threshold must lie in [0, 1), got {threshold}")
    if config.periods < 4:
        raise ConfigError(f"fairness needs at least 4 periods, got {config.periods}")


def lb_work_conservation_query(config, timeout=600, solver_path=None, restricted=None):
    _check_wc_pre(config)
    restricted = config.restricted if restricted is None else restricted
    return check_invariant(build_lb_trace(config), work_conservation_property(restricted), timeout,
                           solver_path, name="work-conservation")


def lb_fairness_query(config, threshold=None, timeout=600, solver_path=None):
    threshold = config.threshold if threshold is None else Fraction(threshold)
    _check_fairness_pre(config, threshold)
    return check_invariant(build_lb_trace(config), fairness_property(threshold), timeout, solver_path,
                           name="fairness")


def lb_queries(config):
    queries = {}
    if config.n_tasks > N_CPUS:
        queries["work-conservation"] = Query(QueryKind.INVARIANT, work_conservation_property(config.restricted),
                                             "work-conservation")
    queries["fairness"] = Query(QueryKind.INVARIANT, fairness_property(config.threshold), "fairness")
    return queries


def lb_query_pre(config, name):
    if name == "work-conservation":
        _check_wc_pre(config)
    elif name == "fairness":
        _check_fairness_pre(config, config.threshold)


# --- Concrete replay ---

def balance_period(placement, run_pct, config):
    """
    Concrete balancing pass, written independently of the term encoding.

    Args:
        placement: CPU index per task
        run_pct: exact run share per task

    Returns:
        (new placement, {action: {"mt", "src", "dst", "moved"}})
    """
    placement = list(placement)
    run_pct = [Fraction(x) for x in run_pct]
    diagnostics = {}
    for name, local, other in ACTIONS:
        nr = [sum(1 for c in placement if c == cpu) for cpu in range(N_CPUS)]
        util = [sum((run_pct[t] for t, c in enumerate(placement) if c == cpu), Fraction(0))
                for cpu in range(N_CPUS)]
        util_local = sum(util[c] for c in local)
        util_other = sum(util[c] for c in other)
        idle_local = sum(1 for c in local if nr[c] == 0)
        idle_other = sum(1 for c in other if nr[c] == 0)
        dst = next((c for c in local if nr[c] == 0), local[0])
        dst_idle = nr[dst] == 0

        spare = idle_local >= 1 or util_local < len(local)
        overloaded = (sum(nr[c] for c in other) > len(other)
                      and config.imbalance_pct * util_other > len(other))
        has_cap = util_local < len(local)
        is_util = spare and overloaded and (not dst_idle or has_cap)
        is_task = spare and not is_util

        src = None
        if is_util:
            candidates = [c for c in other if not config.v5_7 or nr[c] >= 2]
            if candidates:
                src = min(candidates, key=lambda c: (-util[c], c))
            imbalance = len(local) - util_local
        elif is_task:
            src = min(other, key=lambda c: (-nr[c], c))
            imbalance = Fraction(1) if overloaded else Fraction(1 if idle_local - idle_other >= 2 else 0)
        moved_sum, moved = Fraction(0), 0
        if src is not None:
            for t, c in enumerate(placement):
                if c != src:
                    continue
                metric = run_pct[t] if is_util else Fraction(1)
                if moved_sum < imbalance and metric / 2 <= imbalance - moved_sum and moved + 1 < nr[src]:
                    placement[t] = dst
                    moved_sum += metric
                    moved += 1
        mt = MIGRATE_UTIL if is_util else MIGRATE_TASK if is_task else MIGRATE_NONE
        diagnostics[name] = {"mt": mt, "src": -1 if src is None else src, "dst": dst, "moved": moved}
    return placement, diagnostics


def balance_period_terms(placement, run_pct, config):
    """The term encoding evaluated on constants; should agree with balance_period."""
    problem = Problem("lb-constants")
    ctx = TransitionContext(problem, Workload({}), "c", "x")
    cpu, diagnostics = balance_terms(ctx, [const(c, Sort.INT) for c in placement],
                                     [const(Fraction(x)) for x in run_pct], config)
    values = [int(term.value) for term in cpu]
    diags = {name: {k: int(v.value) for k, v in d.items()} for name, d in diagnostics.items()}
    return values, diags


def check_lb_discipline(schedule, config):
    """Replays every balancing pass and the per-period CPU-time accounting."""
    problems = []
    steps = schedule.steps
    for pre, post in zip(steps, steps[1:]):
        if post.kind is StepKind.ALGORITHM:
            expected, diags = balance_period([t["cpu"] for t in pre.tasks], [t["run_pct"] for t in pre.tasks],
                                             config)
            actual = [int(t["cpu"]) for t in post.tasks]
            if actual != expected:
                problems.append(f"period {post.index}: placement {actual}, balancer gives {expected}")
            for action, values in diags.items():
                for key, value in values.items():
                    recorded = post.globals.get(f"{action}_{key}")
                    if recorded is not None and int(recorded) != value:
                        problems.append(f"period {post.index}: {action}_{key} is {recorded}, expected {value}")
        else:
            gained = sum((b["received"] - a["received"] for a, b in zip(pre.tasks, post.tasks)), Fraction(0))
            busy = len({int(t["cpu"]) for t in pre.tasks})
            if gained != busy * config.balance_period:
                problems.append(f"period {post.index}: {gained} CPU time handed out, {busy} CPUs busy")
    return problems
