"""
Packet schedulers over N input queues: single FIFO order, strict priority
(queue 0 highest) and round robin.

Packets live in fixed slots; batch b (up to k_arrivals packets) arrives at
time b, before the b-th dequeue. A packet arriving at a full queue is
dropped. Every invocation dequeues exactly one packet when any is queued.
"""

import logging
from dataclasses import dataclass, replace

from utils.errors import ConfigError
from utils.framework import (Query, QueryKind, StateSchema, StepKind, TraceSpec, TransitionSpec,
                             check_invariant)
from utils.params import parse_choice, parse_int, read_params
from utils.smt_engine import (Sort, add, and_, count, eq, ge, ite, le, lex_le, lt,
                              not_, or_)

logger = logging.getLogger(__name__)

MODEL = "pktsched"
SCHEDULERS = {"fifo": "fifo", "priority": "priority", "round_robin": "round_robin",
              "rr": "round_robin", "round-robin": "round_robin"}
ORDER = "arrivals-then-dequeue"


@dataclass
class PktConfig:
    scheduler: str = "priority"
    n_queues: int = 3
    capacity: int = 2
    k_arrivals: int = 2
    horizon: int = 6
    victim: int = 3
    n_invocations: int = 5
    timeout: int | None = None

    @classmethod
    def from_params(cls, params):
        fields = {
            "scheduler": ("scheduler", lambda v, k: parse_choice(v, k, SCHEDULERS)),
            "queues": ("n_queues", parse_int),
            "capacity": ("capacity", parse_int),
            "k_arrivals": ("k_arrivals", parse_int),
            "horizon": ("horizon", parse_int),
            "victim": ("victim", parse_int),
            "n_invocations": ("n_invocations", parse_int),
            "timeout": ("timeout", parse_int),
        }
        config = cls(**read_params(params, fields))
        config.validate()
        return config

    def validate(self):
        if self.scheduler not in ("fifo", "priority", "round_robin"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.n_queues < 1:
            raise ConfigError(f"queues must be at least 1, got {self.n_queues}")
        if self.capacity < 1:
            raise ConfigError(f"capacity must be at least 1, got {self.capacity}")
        if self.k_arrivals < 0:
            raise ConfigError(f"k_arrivals must be nonnegative, got {self.k_arrivals}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be at least 1, got {self.horizon}")

    def validate_starvation(self):
        if not 1 <= self.victim <= self.n_queues:
            raise ConfigError(f"victim must lie in [1, {self.n_queues}], got {self.victim}")
        if not 1 <= self.n_invocations <= self.horizon:
            raise ConfigError(f"n_invocations must lie in [1, {self.horizon}], got {self.n_invocations}")

    @property
    def n_packets(self):
        return max(1, self.k_arrivals * self.horizon)

    @property
    def out(self):
        return self.n_queues

    @property
    def dropped(self):
        return self.n_queues + 1

    def batch_of(self, p):
        return p // self.k_arrivals if self.k_arrivals else 0

    def batch(self, b):
        return range(b * self.k_arrivals, (b + 1) * self.k_arrivals) if self.k_arrivals else range(0)

    def as_params(self):
        return {"scheduler": self.scheduler, "queues": self.n_queues, "capacity": self.capacity,
                "k_arrivals": self.k_arrivals, "horizon": self.horizon}


def _occupancy_of(step, queue, n_queues):
    return add(*[ite(eq(queue, r), step.queue(r, "occ"), 0, sort=Sort.INT) for r in range(n_queues)])


def _arrive(ctx, config, prev, nxt, b, time):
    """Constraints placing batch b into nxt, given queue occupancy in prev."""
    out = []
    accepted = []
    for p in config.batch(b):
        dest = ctx.w(f"dest_{p}")
        ahead = count([and_(acc, eq(ctx.w(f"dest_{q}"), dest)) for q, acc in accepted])
        acc = ctx.define(f"acc_p{p}", and_(ge(dest, 0), lt(add(_occupancy_of(prev, dest, config.n_queues), ahead),
                                                          config.capacity)))
        accepted.append((p, acc))
        where = ite(lt(dest, 0), -1, ite(acc, dest, config.dropped, sort=Sort.INT), sort=Sort.INT)
        out += [eq(nxt.task(p, "where"), where), eq(nxt.task(p, "arrival"), time),
                eq(nxt.task(p, "served_at"), 0)]
    return out


def _queued(step, p, n_queues):
    where = step.task(p, "where")
    return and_(ge(where, 0), lt(where, n_queues))


def build_pkt_trace(config):
    config.validate()
    n_q, n_p = config.n_queues, config.n_packets
    packets = range(n_p)
    queues = range(n_q)

    def workload_constraints(ctx):
        out = []
        for p in packets:
            out += [ge(ctx.w(f"dest_{p}"), -1), le(ctx.w(f"dest_{p}"), n_q - 1)]
        return out

    def initial(ctx, s0):
        out = [eq(s0.time, 0)]
        out += [eq(s0.queue(r, "tally"), 0) for r in queues]
        out += _arrive(ctx, config, _Empty(), s0, 0, 0)
        first = set(config.batch(0))
        for p in packets:
            if p in first:
                continue
            out += [eq(s0.task(p, "where"), -1), eq(s0.task(p, "arrival"), 0), eq(s0.task(p, "served_at"), 0)]
        return out

    def invariants(ctx, s):
        out = []
        for p in packets:
            out += [ge(s.task(p, "where"), -1), le(s.task(p, "where"), config.dropped)]
        for r in queues:
            out.append(eq(s.queue(r, "occ"), count([eq(s.task(p, "where"), r) for p in packets])))
            out.append(le(s.queue(r, "occ"), config.capacity))
        return out

    def algorithm(ctx, pre, post):
        valid = [_queued(pre, p, n_q) for p in packets]
        keys = []
        for p in packets:
            where, arrival = pre.task(p, "where"), pre.task(p, "arrival")
            if config.scheduler == "fifo":
                keys.append((arrival, p))
            elif config.scheduler == "priority":
                keys.append((where, arrival, p))
            else:
                tally = add(*[ite(eq(where, r), pre.queue(r, "tally"), 0, sort=Sort.INT) for r in queues])
                keys.append((tally, where, arrival, p))
        chosen = ctx.argmin("pick", keys, valid)

        out = []
        for p in packets:
            out += [eq(post.task(p, "where"), ite(chosen[p], config.out, pre.task(p, "where"), sort=Sort.INT)),
                    eq(post.task(p, "arrival"), pre.task(p, "arrival")),
                    eq(post.task(p, "served_at"), ite(chosen[p], pre.time, pre.task(p, "served_at")))]

        any_chosen = or_(*chosen)
        served_queue = add(*[ite(chosen[p], pre.task(p, "where"), 0, sort=Sort.INT) for p in packets])
        served_tally = add(*[ite(chosen[p], keys[p][0], 0, sort=Sort.INT) for p in packets]) \
            if config.scheduler == "round_robin" else None
        for r in queues:
            tally = pre.queue(r, "tally")
            if served_tally is None:
                out.append(eq(post.queue(r, "tally"), tally))
                continue
            polled = and_(any_chosen, lex_le((tally, r), (served_tally, served_queue)))
            out.append(eq(post.queue(r, "tally"), add(tally, ite(polled, 1, 0, sort=Sort.INT))))
        return out

    def system(ctx, post, nxt):
        b = nxt.index
        out = [eq(nxt.time, add(post.time, 1))]
        out += [eq(nxt.queue(r, "tally"), post.queue(r, "tally")) for r in queues]
        arriving = set(config.batch(b)) if b < config.horizon else set()
        if arriving:
            out += _arrive(ctx, config, post, nxt, b, nxt.time)
        for p in packets:
            if p in arriving:
                continue
            for name in ("where", "arrival", "served_at"):
                out.append(eq(nxt.task(p, name), post.task(p, name)))
        return out

    def done(ctx, s):
        future = [p for p in packets if config.batch_of(p) > s.index]
        return and_(*[not_(_queued(s, p, n_q)) for p in packets],
                    *[lt(ctx.w(f"dest_{p}"), 0) for p in future])

    schema = StateSchema(
        task_fields=[("where", Sort.INT), ("arrival", Sort.REAL), ("served_at", Sort.REAL)],
        queue_fields=[("occ", Sort.INT), ("tally", Sort.INT)],
        global_fields=[], n_tasks=n_p, n_resources=n_q, invariants=[invariants])

    return TraceSpec(
        model_name=MODEL, schema=schema, transitions=TransitionSpec(algorithm, system, None, done),
        horizon=config.horizon, workload_vars=[(f"dest_{p}", Sort.INT) for p in packets],
        workload_constraints=workload_constraints, initial_constraints=[initial],
        parameters=config.as_params(), metadata={"order": ORDER}, stage_of=pkt_stage(config))


class _Empty:
    """Occupancy source for the initial batch: every queue starts empty."""

    def queue(self, r, name):
        return 0


def pkt_stage(config):
    def stage(i, task, time, workload):
        where = int(task["where"])
        if where < 0:
            return "absent"
        if where < config.n_queues:
            return f"queued{where}"
        return "sent" if where == config.out else "dropped"
    return stage


# --- Queries ---

def starvation_property(config):
    """No window of n_invocations invocations where the victim stays nonempty and unserved."""
    victim = config.victim - 1

    def prop(ctx, steps):
        invocations = [(pre, post) for pre, post in zip(steps, steps[1:]) if post.kind is StepKind.ALGORITHM]
        starved = []
        for pre, post in invocations:
            served = or_(*[and_(eq(pre.task(p, "where"), victim), eq(post.task(p, "where"), config.out))
                           for p in range(len(pre.tasks))])
            starved.append(and_(ge(pre.queue(victim, "occ"), 1), not_(served)))
        n = config.n_invocations
        windows = [and_(*starved[w:w + n]) for w in range(len(starved) - n + 1)]
        return not_(or_(*windows))
    return prop


def pkt_starvation_query(config, victim=None, n_invocations=None, timeout=600, solver_path=None):
    if victim is not None:
        config = replace(config, victim=victim)
    if n_invocations is not None:
        config = replace(config, n_invocations=n_invocations)
    config.validate_starvation()
    return check_invariant(build_pkt_trace(config), starvation_property(config), timeout, solver_path,
                           name="starvation")


def pkt_queries(config):
    return {"starvation": Query(QueryKind.INVARIANT, starvation_property(config), "starvation")}


# --- Concrete replay and discipline check ---

def simulate_pkt(config, arrivals):
    """
    Concrete scheduler run.

    Args:
        arrivals: per batch, a list of destination queues (-1 for no packet)

    Returns:
        (served, dropped): served is a list of (invocation, slot, queue)
    """
    slots = {}
    tally = [0] * config.n_queues
    served, dropped = [], []
    slot = 0

    def arrive(batch, now):
        nonlocal slot
        for dest in batch:
            if dest >= 0:
                occupancy = sum(1 for q, _ in slots.values() if q == dest)
                if occupancy < config.capacity:
                    slots[slot] = (dest, now)
                else:
                    dropped.append(slot)
            slot += 1

    for b in range(config.horizon):
        if b < len(arrivals):
            arrive(arrivals[b], b)
        if not slots:
            continue
        if config.scheduler == "fifo":
            pick = min(slots, key=lambda p: (slots[p][1], p))
        elif config.scheduler == "priority":
            pick = min(slots, key=lambda p: (slots[p][0], slots[p][1], p))
        else:
            pick = min(slots, key=lambda p: (tally[slots[p][0]], slots[p][0], slots[p][1], p))
            chosen = (tally[slots[pick][0]], slots[pick][0])
            for r in range(config.n_queues):
                if (tally[r], r) <= chosen:
                    tally[r] += 1
        served.append((b, pick, slots.pop(pick)[0]))
    return served, dropped


def check_pkt_discipline(schedule, config):
    """Drop iff full, priority dominance, FIFO output order, one dequeue whenever anything waits."""
    problems = []
    steps = schedule.steps
    out = config.out
    fifo_seen = []
    for pre, post in zip(steps, steps[1:]):
        waiting = [p for p, t in enumerate(pre.tasks) if 0 <= t["where"] < config.n_queues]
        sent = [p for p, (a, b) in enumerate(zip(pre.tasks, post.tasks)) if a["where"] != out and b["where"] == out]
        if post.kind is StepKind.ALGORITHM:
            if waiting and len(sent) != 1:
                problems.append(f"invocation {post.index}: {len(sent)} packets sent with {len(waiting)} waiting")
            for p in sent:
                queue = int(pre.tasks[p]["where"])
                if config.scheduler == "priority" and any(pre.tasks[w]["where"] < queue for w in waiting):
                    problems.append(f"invocation {post.index}: queue {queue} served over a higher priority")
                fifo_seen.append(pre.tasks[p]["arrival"])
            continue
        occupancy = [sum(1 for t in post.tasks if t["where"] == r) for r in range(config.n_queues)]
        before = [sum(1 for t in pre.tasks if t["where"] == r) for r in range(config.n_queues)]
        for p, (a, b) in enumerate(zip(pre.tasks, post.tasks)):
            if a["where"] == -1 and b["where"] == config.dropped:
                dest = int(schedule.workload.get(f"dest_{p}", -1))
                if 0 <= dest < config.n_queues and before[dest] < config.capacity and occupancy[dest] < config.capacity:
                    problems.append(f"packet {p} dropped although queue {dest} had room")
    if config.scheduler == "fifo" and fifo_seen != sorted(fifo_seen):
        problems.append("fifo output is not in arrival order")
    return problems
