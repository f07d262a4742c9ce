"""
Standalone discrete-event work-stealing simulator.

Used as an oracle against decoded heuristic traces: same local/steal
choices, same enqueue placement, same switching-cost rule.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from utils.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class WsWorkload:
    lengths: list
    initial_queues: list
    edges: set = field(default_factory=set)
    switch_costs: list | None = None
    threads: list | None = None

    @property
    def n_tasks(self):
        return len(self.lengths)

    def parents(self, t):
        return [p for p, c in self.edges if c == t]


@dataclass
class Assignment:
    task: int
    resource: int
    at: Fraction
    start: Fraction
    end: Fraction
    stolen: bool


@dataclass
class WsRun:
    makespan: Fraction
    assignments: list


def simulate_work_stealing(workload, n_resources):
    """
    Run the heuristic to completion.

    Args:
        workload: WsWorkload; initial_queues[t] is the queue of root task t
            (ignored for tasks with parents)
        n_resources: number of resources

    Returns:
        WsRun with the completion time and every assignment in order.
    """
    n = workload.n_tasks
    costs = [Fraction(c) for c in (workload.switch_costs or [0] * n)]
    threads = workload.threads or [0] * n
    lengths = [Fraction(x) for x in workload.lengths]

    queue = {}
    for t in range(n):
        if not workload.parents(t):
            q = workload.initial_queues[t]
            if not 0 <= q < n_resources:
                raise ConfigError(f"root task {t} has no valid initial queue ({q})")
            queue[t] = (q, Fraction(0))

    running = {}
    finished = set()
    last_thread = [None] * n_resources
    now = Fraction(0)
    assignments = []

    while len(finished) < n:
        busy = {r for r, _ in running.values()}
        for r in range(n_resources):
            if r in busy or not queue:
                continue
            local = [t for t, (q, _) in queue.items() if q == r]
            if local:
                pick = max(local, key=lambda t: (queue[t][1], t))
            else:
                pick = min(queue, key=lambda t: (queue[t][1], queue[t][0], t))
            cost = costs[pick] if last_thread[r] is not None and last_thread[r] != threads[pick] else 0
            start = now + cost
            running[pick] = (r, start + lengths[pick])
            assignments.append(Assignment(pick, r, now, start, start + lengths[pick], not local))
            last_thread[r] = threads[pick]
            del queue[pick]

        if not running:
            raise ConfigError("work-stealing simulation stalled: nothing runnable (cyclic DAG?)")

        now = min(end for _, end in running.values())
        done_now = {t: r for t, (r, end) in running.items() if end <= now}
        for t in done_now:
            del running[t]
        finished.update(done_now)

        for t in range(n):
            if t in finished or t in running or t in queue:
                continue
            parents = workload.parents(t)
            if parents and all(p in finished for p in parents):
                target = min(done_now[p] for p in parents if p in done_now)
                queue[t] = (target, now)

    logger.debug("simulated %d tasks on %d resources: makespan %s", n, n_resources, now)
    return WsRun(now, assignments)
