from dataclasses import replace
from fractions import Fraction

import pytest

import utils.framework as framework
from conftest import build_counter_trace, counter_schedule, model_output
from utils.errors import ConstructionError, DecodeError
from utils.framework import (Query, QueryKind, StateSchema, StepKind, build_problem,
                             check_dual, check_invariant, decode_trace, prepare_gap, prepare_script,
                             run_query, state_tag, step_sequence)
from utils.optimizer import RatioResult, RatioStatus
from utils.replay import validate_schedule
from utils.smt_engine import Sort, add, eq, ge, le
from utils.solver import Status


def _time_plus_one(ctx, steps):
    return add(steps[-1].time, 1)


def _ends_by_two(ctx, steps):
    return le(steps[-1].time, 2)


class TestUnrolling:
    def test_step_sequence_alternates(self):
        seq = step_sequence(2)
        assert len(seq) == 5
        assert [state_tag(i, k) for i, k in seq] == ["s0", "s0a", "s1", "s1a", "s2"]
        assert seq[1][1] is StepKind.ALGORITHM

    def test_variable_naming(self, counter_trace):
        unrolled = build_problem(counter_trace)
        names = unrolled.problem.declarations
        for expected in ("s_s0_time", "s_s0a_t1_level", "s_s1_t0_picked", "s_s2_r0_served",
                         "w_inc_0", "s_a0_low_0", "s_ds0_done"):
            assert expected in names
        assert names["s_s2_r0_served"] is Sort.INT
        assert len(unrolled.steps["s"]) == 2 * counter_trace.horizon + 1

    def test_workload_declared_once_for_two_copies(self, counter_trace):
        unrolled = build_problem(counter_trace, (("h", False), ("o", True)))
        workload = [n for n in unrolled.problem.declarations if n.startswith("w_")]
        assert workload == ["w_inc_0", "w_inc_1"]

    def test_ideal_copy_skips_the_algorithm(self, counter_trace):
        names = build_problem(counter_trace, (("h", False), ("o", True))).problem.declarations
        assert "h_a0_low_0" in names
        assert "o_a0_low_0" not in names

    def test_ideal_copy_needs_feasibility(self, counter_trace):
        trace = replace(counter_trace, transitions=replace(counter_trace.transitions, feasibility=None))
        build_problem(trace)
        with pytest.raises(ConstructionError, match="feasibility"):
            build_problem(trace, (("o", True),))

    def test_without_done_no_flags(self):
        names = build_problem(build_counter_trace(with_done=False)).problem.declarations
        assert not any(name.endswith("_done") for name in names)

    def test_validation(self, counter_trace):
        with pytest.raises(ConstructionError, match="horizon"):
            build_problem(replace(counter_trace, horizon=0))
        schema = StateSchema([("x", Sort.REAL), ("x", Sort.INT)], [], [], 1, 1)
        with pytest.raises(ConstructionError, match="duplicate"):
            schema.validate()
        with pytest.raises(ConstructionError, match="time"):
            StateSchema([], [], [("time", Sort.REAL)], 1, 1).validate()

    def test_unknown_field_is_reported(self, counter_trace):
        step = build_problem(counter_trace).steps["s"][0]
        with pytest.raises(ConstructionError, match="'speed'"):
            step.task(0, "speed")
        with pytest.raises(ConstructionError):
            step.queue(3, "served")
        assert step.glob("time") is step.time

    def test_done_freezes_the_state(self, counter_trace):
        # with increments of 1 the counter is done after two steps; one more stays put
        trace = replace(counter_trace, horizon=3)
        schedule = counter_schedule([1, 1], horizon=3)
        assert schedule.steps[-1].time == schedule.steps[-3].time == 2
        assert validate_schedule(trace, schedule).ok


class TestDecoding:
    def test_decode_reads_every_state(self, counter_trace):
        schedule = counter_schedule([1, Fraction(1, 2)])
        decoded = decode_trace(schedule.to_assignment(), counter_trace)
        assert [s.time for s in decoded.steps] == [s.time for s in schedule.steps]
        assert [s.tasks for s in decoded.steps] == [s.tasks for s in schedule.steps]
        assert decoded.workload == {"inc_0": 1, "inc_1": Fraction(1, 2)}
        assert decoded.steps[1].stages == ["running", "waiting"]
        assert decoded.metadata == {"kind": "test"}

    def test_missing_value_is_named(self, counter_trace):
        assignment = counter_schedule([1, 1]).to_assignment()
        del assignment["s_s1a_t0_level"]
        with pytest.raises(DecodeError, match="s_s1a_t0_level"):
            decode_trace(assignment, counter_trace)


class TestScripts:
    def test_invariant_script_is_deterministic(self, counter_trace):
        query = Query(QueryKind.INVARIANT, _ends_by_two, "ends")
        first = prepare_script(counter_trace, query)
        assert first == prepare_script(build_counter_trace(), query)
        assert "(assert (not (<= s_s2_time 2.0)))" in first
        assert first.startswith("; model: counter")

    def test_dual_copies_share_the_initial_state(self, counter_trace):
        query = Query(QueryKind.DUAL, lambda ctx, h, o: ge(h[-1].time, o[-1].time), "slower")
        script = prepare_script(counter_trace, query)
        assert "(= h_s0_time o_s0_time)" in script
        assert "(= h_s0_t1_level o_s0_t1_level)" in script

    def test_gap_defines_both_metrics(self, counter_trace):
        unrolled, num, den = prepare_gap(counter_trace, _time_plus_one)
        assert (num.name, den.name) == ("h_q_metric", "o_q_metric")
        query = Query(QueryKind.GAP, _time_plus_one, "gap", lo=Fraction(3, 2))
        script = prepare_script(counter_trace, query)
        assert "(assert (>= h_q_metric (* (/ 3.0 2.0) o_q_metric)))" in script
        assert "(assert (> o_q_metric 0.0))" in script


class TestQueries:
    def test_invariant_holds_on_unsat(self, counter_trace, fake_solver):
        result = check_invariant(counter_trace, _ends_by_two, 5, fake_solver("unsat"))
        assert result.status == "unsat"
        assert result.traces == []
        assert not result.inconclusive

    def test_unknown_is_inconclusive(self, counter_trace, fake_solver):
        result = check_invariant(counter_trace, _ends_by_two, 5, fake_solver("unknown"))
        assert result.inconclusive

    def test_sat_model_is_decoded(self, counter_trace, fake_solver):
        unrolled = build_problem(counter_trace)
        assignment = counter_schedule([1, 0]).to_assignment()
        path = fake_solver(model_output(assignment, unrolled.problem.declarations))
        result = check_invariant(counter_trace, lambda ctx, steps: eq(steps[-1].time, 1), 5, path)
        assert result.status == Status.SAT.value
        [trace] = result.traces
        assert trace.final_time == 2
        assert trace.workload == {"inc_0": 1, "inc_1": 0}

    def test_dual_sat_returns_both_traces(self, counter_trace, fake_solver):
        unrolled = build_problem(counter_trace, (("h", False), ("o", True)))
        assignment = counter_schedule([1, 1], prefix="h").to_assignment()
        assignment.update(counter_schedule([1, 1], prefix="o", label="ideal").to_assignment())
        path = fake_solver(model_output(assignment, unrolled.problem.declarations))
        result = check_dual(counter_trace, lambda ctx, h, o: ge(h[-1].time, o[-1].time), 5, path)
        assert [t.label for t in result.traces] == ["heuristic", "ideal"]
        assert [t.prefix for t in result.traces] == ["h", "o"]

    def test_gap_dispatch(self, counter_trace, monkeypatch):
        seen = {}

        def fake_maximize(problem, num, den, lo, hi, tol, timeout, solver_path):
            seen.update(lo=lo, hi=hi, tol=tol)
            return RatioResult(Fraction(lo), None, RatioStatus.BELOW_LO, (None, Fraction(lo)))

        monkeypatch.setattr(framework, "maximize_ratio", fake_maximize)
        query = Query(QueryKind.GAP, _time_plus_one, "gap",
                      lo=Fraction(1), hi=Fraction(3), tol=Fraction(1, 8))
        result = run_query(counter_trace, query, 5)
        assert result.status == RatioStatus.BELOW_LO
        assert result.traces == []
        assert seen == {"lo": 1, "hi": 3, "tol": Fraction(1, 8)}
