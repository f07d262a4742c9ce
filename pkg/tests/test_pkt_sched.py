from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.errors import ConfigError
from utils.framework import DecodedStep, ScheduleTrace, StepKind, prepare_invariant
from utils.models import get_model
from utils.pkt_sched import (PktConfig, build_pkt_trace, check_pkt_discipline, pkt_queries,
                             pkt_stage, pkt_starvation_query, simulate_pkt, starvation_property)
from utils.replay import check_assignment, validate_schedule

STARVING = [[2, 0]] + [[0, -1]] * 5


def pkt_schedule(config, arrivals):
    """Concrete run laid out as decoded states, including the done freeze."""
    k, n_q, n_p = config.k_arrivals, config.n_queues, config.n_packets
    dests = []
    for b in range(config.horizon):
        batch = list(arrivals[b]) if b < len(arrivals) else []
        dests += batch + [-1] * (k - len(batch))
    dests = (dests + [-1] * n_p)[:n_p]
    where, arrival, served_at = [-1] * n_p, [Fraction(0)] * n_p, [Fraction(0)] * n_p
    tally = [0] * n_q
    time = Fraction(0)

    def occ(r):
        return sum(1 for w in where if w == r)

    def arrive(b, now):
        for p in config.batch(b):
            arrival[p], served_at[p] = now, Fraction(0)
            d = dests[p]
            where[p] = -1 if d < 0 else d if occ(d) < config.capacity else config.dropped

    def done(index):
        return all(not 0 <= w < n_q for w in where) and \
            all(dests[p] < 0 for p in range(n_p) if config.batch_of(p) > index)

    def snap(index, kind):
        tasks = [{"where": where[p], "arrival": arrival[p], "served_at": served_at[p]} for p in range(n_p)]
        queues = [{"occ": occ(r), "tally": tally[r]} for r in range(n_q)]
        return DecodedStep(index, kind, time, tasks, queues, {})

    def key(p):
        if config.scheduler == "fifo":
            return (arrival[p], p)
        if config.scheduler == "priority":
            return (where[p], arrival[p], p)
        return (tally[where[p]], where[p], arrival[p], p)

    arrive(0, Fraction(0))
    steps = [snap(0, StepKind.INITIAL)]
    for i in range(config.horizon):
        queued = [p for p in range(n_p) if 0 <= where[p] < n_q]
        if not done(i) and queued:
            pick = min(queued, key=key)
            if config.scheduler == "round_robin":
                chosen = (tally[where[pick]], where[pick])
                tally = [t + 1 if (t, r) <= chosen else t for r, t in enumerate(tally)]
            where[pick], served_at[pick] = config.out, time
        steps.append(snap(i, StepKind.ALGORITHM))
        if not done(i):
            time += 1
            if i + 1 < config.horizon:
                arrive(i + 1, time)
        steps.append(snap(i + 1, StepKind.SYSTEM))
    workload = {f"dest_{p}": dests[p] for p in range(n_p)}
    return ScheduleTrace("pktsched", config.as_params(), "sat", "heuristic", "s", steps, workload)


class TestSimulator:
    def test_drop_when_full(self):
        config = PktConfig(scheduler="fifo", n_queues=1, capacity=2, k_arrivals=2, horizon=2)
        served, dropped = simulate_pkt(config, [[0, 0], [0, 0]])
        assert served == [(0, 0, 0), (1, 1, 0)]
        assert dropped == [3]

    def test_priority_starves_the_lowest_queue(self):
        served, dropped = simulate_pkt(PktConfig(), STARVING)
        assert len(served) == 6
        assert all(queue == 0 for _, _, queue in served)
        assert 0 not in [slot for _, slot, _ in served]
        assert dropped == []

    def test_round_robin_tally_starts_at_zero(self):
        config = PktConfig(scheduler="round_robin", n_queues=2, capacity=2, horizon=4)
        served, _ = simulate_pkt(config, [[0, 0], [0, 1]])
        assert [slot for _, slot, _ in served] == [0, 3, 1, 2]
        assert [queue for _, _, queue in served] == [0, 1, 0, 0]

    def test_fifo_is_arrival_order(self):
        config = PktConfig(scheduler="fifo", n_queues=3, capacity=2, horizon=3)
        served, _ = simulate_pkt(config, [[2, 1], [0, -1]])
        assert [slot for _, slot, _ in served] == [0, 1, 2]

    @settings(max_examples=50, deadline=None)
    @given(data=st.data(), scheduler=st.sampled_from(["fifo", "priority", "round_robin"]))
    def test_every_accepted_packet_is_served_once(self, data, scheduler):
        config = PktConfig(scheduler=scheduler, n_queues=2, capacity=1, k_arrivals=2, horizon=4)
        arrivals = data.draw(st.lists(st.lists(st.integers(-1, 1), min_size=2, max_size=2),
                                      min_size=1, max_size=2))
        served, dropped = simulate_pkt(config, arrivals)
        slots = [slot for _, slot, _ in served]
        arrived = [p for p, d in enumerate(d for batch in arrivals for d in batch) if d >= 0]
        assert len(slots) == len(set(slots))
        # two invocations after the last batch drain both queues
        assert sorted(slots + dropped) == arrived


class TestReplay:
    @pytest.mark.parametrize("scheduler", ["fifo", "priority", "round_robin"])
    def test_concrete_runs_satisfy_the_encoding(self, scheduler):
        config = PktConfig(scheduler=scheduler, n_queues=2, capacity=1, k_arrivals=2, horizon=3)
        schedule = pkt_schedule(config, [[1, 0], [0, 1]])
        assert check_pkt_discipline(schedule, config) == []
        report = validate_schedule(build_pkt_trace(config), schedule)
        assert report.ok, report.summary()

    def test_drained_run_freezes(self):
        config = PktConfig(scheduler="fifo", n_queues=1, capacity=1, k_arrivals=1, horizon=3)
        schedule = pkt_schedule(config, [[0]])
        # the only packet leaves at time 0 and nothing else can arrive, so time stops there
        assert schedule.final_time == 0
        assert validate_schedule(build_pkt_trace(config), schedule).ok

    def test_starving_run_violates_the_property(self):
        config = PktConfig(victim=3, n_invocations=5)
        schedule = pkt_schedule(config, STARVING)
        negated = prepare_invariant(build_pkt_trace(config), starvation_property(config)).problem
        assert check_assignment(negated, schedule.to_assignment()).ok
        top = PktConfig(victim=1, n_invocations=5)
        negated = prepare_invariant(build_pkt_trace(top), starvation_property(top)).problem
        assert not check_assignment(negated, schedule.to_assignment()).ok

    def test_priority_inversion_is_flagged(self):
        config = PktConfig(n_queues=2, capacity=1, horizon=1)
        schedule = pkt_schedule(config, [[1, 0]])
        post = schedule.steps[1]
        tasks = [dict(t) for t in post.tasks]
        tasks[0]["where"], tasks[1]["where"] = config.out, 0
        schedule.steps[1] = DecodedStep(post.index, post.kind, post.time, tasks, post.queues, {})
        problems = check_pkt_discipline(schedule, config)
        assert any("higher priority" in p for p in problems)

    def test_stage_names(self):
        stage = pkt_stage(PktConfig(n_queues=2))
        assert [stage(0, {"where": w}, 0, {}) for w in (-1, 1, 2, 3)] == \
            ["absent", "queued1", "sent", "dropped"]


class TestConfig:
    def test_aliases(self):
        assert PktConfig.from_params({"scheduler": "RR"}).scheduler == "round_robin"
        assert PktConfig.from_params({"queues": 4}).n_queues == 4

    @pytest.mark.parametrize("params", [{"scheduler": "wfq"}, {"queues": 0}, {"capacity": 0},
                                        {"k_arrivals": -1}, {"horizon": 0}])
    def test_rejected(self, params):
        with pytest.raises(ConfigError):
            PktConfig.from_params(params)

    @pytest.mark.parametrize("victim,n", [(0, 5), (4, 5), (3, 0), (3, 7)])
    def test_starvation_preconditions(self, victim, n):
        config = PktConfig(victim=victim, n_invocations=n)
        with pytest.raises(ConfigError):
            get_model("pktsched").query(config, "starvation")
        with pytest.raises(ConfigError):
            pkt_starvation_query(config)

    def test_packet_slots(self):
        config = PktConfig(k_arrivals=2, horizon=6)
        assert config.n_packets == 12
        assert list(config.batch(2)) == [4, 5]
        assert config.batch_of(5) == 2
        assert PktConfig(k_arrivals=0).n_packets == 1
        assert set(pkt_queries(config)) == {"starvation"}
        assert build_pkt_trace(config).metadata == {"order": "arrivals-then-dequeue"}


@pytest.mark.solver
def test_lowest_priority_queue_starves(solver_path):
    config = PktConfig(victim=3, n_invocations=5)
    result = pkt_starvation_query(config, timeout=600, solver_path=solver_path)
    assert result.status == "sat"
    [trace] = result.traces
    assert check_pkt_discipline(trace, config) == []


@pytest.mark.solver
@pytest.mark.slow
def test_highest_priority_queue_never_starves(solver_path):
    result = pkt_starvation_query(PktConfig(victim=1, n_invocations=5), timeout=600, solver_path=solver_path)
    assert result.status == "unsat"
