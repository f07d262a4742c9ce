from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.errors import ConfigError
from utils.framework import DecodedStep, QueryKind, ScheduleTrace, StepKind
from utils.models import get_model
from utils.srpt import (SrptConfig, build_srpt_trace, check_srpt_discipline, simulate_srpt, srpt_avg_gap,
                        srpt_avg_ratio_query, srpt_deadline_query, srpt_queries, srpt_stage)

durations = st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=4)


class TestSimulator:
    def test_shortest_first_without_blocking(self):
        assert simulate_srpt([[1], [3]], [[0], [0]]) == [1, 4]

    def test_blocked_task_overlaps_the_next_run(self):
        assert simulate_srpt([[1], [1]], [[2], [0]]) == [3, 2]

    def test_blocking_between_runs(self):
        assert simulate_srpt([[1, 1]], [[1, 0]]) == [3]

    def test_non_preemptive(self):
        # task 0 comes back at 2 with 1 unit left but task 1 keeps the processor until 3
        assert simulate_srpt([[1, 1], [2]], [[1, 0], [0]]) == [4, 3]

    @settings(max_examples=60, deadline=None)
    @given(runs=st.lists(durations, min_size=1, max_size=4))
    def test_no_blocking_is_shortest_processing_time(self, runs):
        finish = simulate_srpt([[r] for r in runs], [[0]] * len(runs))
        assert max(finish) == sum(runs)
        order = sorted(range(len(runs)), key=lambda i: (runs[i], i))
        elapsed = Fraction(0)
        for i in order:
            elapsed += runs[i]
            assert finish[i] == elapsed

    @settings(max_examples=40, deadline=None)
    @given(runs=st.lists(st.lists(durations, min_size=2, max_size=2), min_size=1, max_size=3),
           data=st.data())
    def test_finish_covers_own_work(self, runs, data):
        blocks = [data.draw(st.lists(st.sampled_from([Fraction(0), Fraction(1, 2), Fraction(2)]),
                                     min_size=2, max_size=2)) for _ in runs]
        finish = simulate_srpt(runs, blocks)
        for i, f in enumerate(finish):
            assert f >= sum(runs[i]) + sum(blocks[i])


class TestConfig:
    def test_infinite_alpha(self):
        config = SrptConfig.from_params({"n_tasks": 3, "alpha": "inf"})
        assert config.alpha is None
        assert config.as_params()["alpha"] == "inf"
        assert config.events == 2 * 3 * 2

    def test_finite_alpha_round_trips_as_text(self):
        config = SrptConfig.from_params({"alpha": "3/2", "steps": 1})
        assert config.as_params() == {"n_tasks": 3, "steps": 1, "alpha": "3/2"}

    @pytest.mark.parametrize("params", [{"n_tasks": 0}, {"steps": 0}, {"alpha": 0}, {"q": -1},
                                        {"a_srpt": 4}, {"a_query": -1}, {"alpha": "lots"}])
    def test_rejected(self, params):
        with pytest.raises(ConfigError):
            SrptConfig.from_params(params)

    def test_deadline_query_needs_counts(self):
        entry = get_model("srpt")
        with pytest.raises(ConfigError, match="a_srpt"):
            entry.query(entry.config({}), "deadline")
        config = entry.config({"a_srpt": 1, "a_query": 2})
        assert entry.query(config, "deadline").kind is QueryKind.DUAL

    def test_queries(self):
        assert set(srpt_queries(SrptConfig())) == {"avg-gap", "avg-ratio"}

    def test_direct_queries_validate(self):
        with pytest.raises(ConfigError):
            srpt_avg_ratio_query(SrptConfig(), 0)
        with pytest.raises(ConfigError):
            srpt_deadline_query(SrptConfig(n_tasks=2), None, 3, 1)


class TestTrace:
    def test_shape(self):
        trace = build_srpt_trace(SrptConfig(n_tasks=2, steps=1))
        assert trace.horizon == 4
        assert [name for name, _ in trace.workload_vars] == ["run_0_0", "run_1_0", "blk_0_0", "blk_1_0"]
        assert trace.parameters["alpha"] == "inf"

    def test_stage_names(self):
        task = {"ready": True, "running": False, "blocked": False, "done": False}
        assert srpt_stage(0, task, 0, {}) == "waiting"
        assert srpt_stage(0, dict(task, ready=False, blocked=True), 0, {}) == "blocked"


def _step(kind, tasks, picks):
    full = [{"ready": r, "running": run, "blocked": False, "done": False, "remaining": Fraction(rem)}
            for r, run, rem in tasks]
    return DecodedStep(0, kind, Fraction(0), full, [], {f"pick_t{i}": i in picks for i in range(len(tasks))})


def _schedule(pre, post, picks, label="heuristic"):
    steps = [_step(StepKind.INITIAL, pre, []), _step(StepKind.ALGORITHM, post, picks)]
    return ScheduleTrace("srpt", {}, "sat", label, "s", steps, {})


class TestDiscipline:
    def test_least_remaining_is_picked(self):
        pre = [(True, False, 3), (True, False, 1)]
        post = [(True, False, 3), (False, True, 1)]
        assert check_srpt_discipline(_schedule(pre, post, [1])) == []

    def test_other_pick_is_flagged(self):
        pre = [(True, False, 3), (True, False, 1)]
        post = [(False, True, 3), (True, False, 1)]
        problems = check_srpt_discipline(_schedule(pre, post, [0]))
        assert problems and "SRPT picks [1]" in problems[0]
        assert check_srpt_discipline(_schedule(pre, post, [0], label="ideal")) == []

    def test_no_pick_while_busy(self):
        pre = [(False, True, 3), (True, False, 1)]
        assert check_srpt_discipline(_schedule(pre, pre, [])) == []

    def test_overlap_is_flagged_for_every_label(self):
        pre = [(True, False, 3), (True, False, 1)]
        post = [(False, True, 3), (False, True, 1)]
        problems = check_srpt_discipline(_schedule(pre, post, [0, 1], label="ideal"))
        assert problems and "running at once" in problems[0]


@pytest.mark.solver
def test_twice_the_ideal_average_is_reachable(solver_path):
    result = srpt_avg_ratio_query(SrptConfig(n_tasks=3), 2, timeout=300, solver_path=solver_path)
    assert result.status == "sat"
    heuristic, ideal = result.traces
    assert sum(t["finish"] for t in heuristic.steps[-1].tasks) == \
        2 * sum(t["finish"] for t in ideal.steps[-1].tasks)
    assert check_srpt_discipline(heuristic) == []


@pytest.mark.solver
@pytest.mark.slow
def test_ratio_of_task_count_is_out_of_reach(solver_path):
    result = srpt_avg_ratio_query(SrptConfig(n_tasks=3), 3, timeout=600, solver_path=solver_path)
    assert result.status == "unsat"


@pytest.mark.solver
@pytest.mark.slow
def test_ratio_just_below_task_count_is_reachable(solver_path):
    result = srpt_avg_ratio_query(SrptConfig(n_tasks=3), Fraction(29, 10), timeout=600, solver_path=solver_path)
    assert result.status == "sat"
    assert all(check_srpt_discipline(trace) == [] for trace in result.traces)


@pytest.mark.solver
@pytest.mark.slow
def test_average_gap_approaches_task_count(solver_path):
    result = srpt_avg_gap(SrptConfig(n_tasks=3), tol=Fraction(1, 64), timeout=1800, solver_path=solver_path)
    assert not result.inconclusive
    assert Fraction(29, 10) <= result.bound < 3


@pytest.mark.solver
@pytest.mark.slow
def test_free_schedule_meets_every_deadline_srpt_meets_one(solver_path):
    result = srpt_deadline_query(SrptConfig(n_tasks=5), None, 1, 5, timeout=1800, solver_path=solver_path)
    assert result.status == "sat"
    assert check_srpt_discipline(result.traces[0]) == []


@pytest.mark.solver
@pytest.mark.slow
@pytest.mark.parametrize("alpha,a_query,expected", [
    (2, 2, "sat"), (2, 3, "unsat"), (3, 3, "sat"),
])
def test_deadline_frontier_is_linear_in_alpha(solver_path, alpha, a_query, expected):
    config = SrptConfig(n_tasks=5, alpha=Fraction(alpha))
    result = srpt_deadline_query(config, None, 1, a_query, timeout=1800, solver_path=solver_path)
    assert result.status == expected


@pytest.mark.solver
@pytest.mark.slow
def test_deadline_frontier_only_widens_with_alpha(solver_path):
    statuses = [srpt_deadline_query(SrptConfig(n_tasks=5, alpha=alpha), None, 1, 3, timeout=1800,
                                    solver_path=solver_path).status
                for alpha in (Fraction(2), Fraction(3), None)]
    assert "timeout" not in statuses and "unknown" not in statuses
    sat = [s == "sat" for s in statuses]
    assert sat == sorted(sat)
