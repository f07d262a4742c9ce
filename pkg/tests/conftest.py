import os
import stat
import sys
from fractions import Fraction

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.errors import SolverConfigError  # noqa: E402
from utils.framework import (DecodedStep, ScheduleTrace, StateSchema, StepKind, TraceSpec,  # noqa: E402
                             TransitionSpec)
from utils.smt_engine import TRUE, Sort, add, count, eq, ge, ite, le  # noqa: E402
from utils.solver import resolve_solver_path  # noqa: E402


def _real_solver():
    try:
        return resolve_solver_path()
    except SolverConfigError:
        return None


def pytest_collection_modifyitems(config, items):
    if _real_solver() is not None:
        return
    skip = pytest.mark.skip(reason="no SMT solver binary (set VIRELAY_SOLVER or put z3/cvc5 on PATH)")
    for item in items:
        if "solver" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def solver_path():
    path = _real_solver()
    if path is None:
        pytest.skip("no SMT solver binary")
    return path


@pytest.fixture
def fake_solver(tmp_path):
    """Factory: an executable that prints canned output (optionally after sleeping)."""
    def make(output, sleep=0, name="fake_solver"):
        path = tmp_path / name
        body = ["#!/bin/sh"]
        if sleep:
            body.append(f"sleep {sleep}")
        body.append("cat <<'VIRELAY_EOF'")
        body.append(output.rstrip("\n"))
        body.append("VIRELAY_EOF")
        path.write_text("\n".join(body) + "\n")
        path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
        return str(path)
    return make


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """Run history and output directory live in tmp_path; no ambient solver override."""
    monkeypatch.setenv("DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.setenv("VIRELAY_OUT", str(tmp_path / "out"))
    import utils.db as db
    monkeypatch.setattr(db, "Session", None)
    monkeypatch.setattr(db, "engine", None)
    yield


# --- A small counter model used by the framework and replay tests ---

def build_counter_trace(horizon=2, n_tasks=2, with_done=True):
    """
    Each Algorithm step picks the task with the lowest level (smallest index
    on ties); the System step adds that task's workload increment and one
    time unit. The trace is done once every level reaches 1.
    """
    tasks = range(n_tasks)

    def workload_constraints(ctx):
        return [c for t in tasks for c in (ge(ctx.w(f"inc_{t}"), 0), le(ctx.w(f"inc_{t}"), 1))]

    def initial(ctx, s0):
        return [eq(s0.time, 0), eq(s0.queue(0, "served"), 0)] + \
            [c for t in tasks for c in (eq(s0.task(t, "level"), 0), eq(s0.task(t, "picked"), False))]

    def invariants(ctx, s):
        return [ge(s.task(t, "level"), 0) for t in tasks]

    def feasibility(ctx, pre, post):
        picks = [post.task(t, "picked") for t in tasks]
        out = [eq(count(picks), 1), eq(post.queue(0, "served"), pre.queue(0, "served"))]
        out += [eq(post.task(t, "level"), pre.task(t, "level")) for t in tasks]
        return out

    def algorithm(ctx, pre, post):
        chosen = ctx.argmin("low", [(pre.task(t, "level"), t) for t in tasks], [TRUE] * n_tasks)
        return [eq(post.task(t, "picked"), chosen[t]) for t in tasks]

    def system(ctx, post, nxt):
        out = [eq(nxt.time, add(post.time, 1)),
               eq(nxt.queue(0, "served"), add(post.queue(0, "served"), 1))]
        for t in tasks:
            bump = ite(post.task(t, "picked"), ctx.w(f"inc_{t}"), 0, sort=Sort.REAL)
            out += [eq(nxt.task(t, "level"), add(post.task(t, "level"), bump)),
                    eq(nxt.task(t, "picked"), False)]
        return out

    def done(ctx, s):
        return ge(add(*[s.task(t, "level") for t in tasks]), n_tasks)

    schema = StateSchema(task_fields=[("level", Sort.REAL), ("picked", Sort.BOOL)],
                         queue_fields=[("served", Sort.INT)], global_fields=[],
                         n_tasks=n_tasks, n_resources=1, invariants=[invariants])
    return TraceSpec("counter", schema, TransitionSpec(algorithm, system, feasibility,
                                                       done if with_done else None),
                     horizon, workload_vars=[(f"inc_{t}", Sort.REAL) for t in tasks],
                     workload_constraints=workload_constraints, initial_constraints=[initial],
                     parameters={"n_tasks": n_tasks}, metadata={"kind": "test"},
                     stage_of=lambda i, task, time, w: "running" if task["picked"] else "waiting")


def counter_schedule(incs, horizon=2, label="heuristic", prefix="s"):
    """Concrete heuristic run of the counter model with its decoded field values."""
    n = len(incs)
    level = [Fraction(0)] * n
    served = Fraction(0)
    time = Fraction(0)
    steps = [DecodedStep(0, StepKind.INITIAL, time, [{"level": lv, "picked": False} for lv in level],
                         [{"served": served}], {})]
    done = False
    for i in range(horizon):
        if not done:
            pick = min(range(n), key=lambda t: (level[t], t))
        tasks = [{"level": level[t], "picked": (not done and t == pick) or
                  (done and steps[-1].tasks[t]["picked"])} for t in range(n)]
        steps.append(DecodedStep(i, StepKind.ALGORITHM, time, tasks, [{"served": served}], {}))
        done_after = sum(level) >= n
        if not done_after:
            time += 1
            served += 1
            level = [level[t] + (Fraction(incs[t]) if tasks[t]["picked"] else 0) for t in range(n)]
            tasks = [{"level": level[t], "picked": False} for t in range(n)]
        steps.append(DecodedStep(i + 1, StepKind.SYSTEM, time, tasks, [{"served": served}], {}))
        done = sum(level) >= n
    workload = {f"inc_{t}": Fraction(x) for t, x in enumerate(incs)}
    return ScheduleTrace("counter", {"n_tasks": n}, "sat", label, prefix, steps, workload)


@pytest.fixture
def counter_trace():
    return build_counter_trace()


def model_output(assignment, declarations):
    """Solver stdout for a sat verdict whose model is the given assignment."""
    lines = ["sat", "(model"]
    for name, value in assignment.items():
        sort = declarations[name]
        if sort is Sort.BOOL:
            text = "true" if value else "false"
        else:
            value = Fraction(value)
            body = f"{abs(value.numerator)}.0" if value.denominator == 1 else \
                f"(/ {abs(value.numerator)}.0 {value.denominator}.0)"
            text = f"(- {body})" if value < 0 else body
        lines.append(f"  (define-fun {name} () {sort.value} {text})")
    lines.append(")")
    return "\n".join(lines)
