import json
from fractions import Fraction

import pytest

from conftest import counter_schedule
from utils.errors import TraceFileError
from utils.framework import decode_trace
from utils.trace_file import (SCHEMA_VERSION, dumps, loads, read_trace_file, to_document,
                              write_trace_file)


@pytest.fixture
def decoded(counter_trace):
    return decode_trace(counter_schedule([1, Fraction(1, 3)]).to_assignment(), counter_trace)


def test_round_trip_keeps_exact_values(decoded, tmp_path):
    path = write_trace_file(str(tmp_path / "nested" / "t.json"), [decoded], query="ends",
                            bound=Fraction(7, 3))
    tf = read_trace_file(path)
    assert (tf.model, tf.query, tf.verdict, tf.bound) == ("counter", "ends", "sat", Fraction(7, 3))
    [trace] = tf.traces
    assert trace.label == "heuristic" and trace.prefix == "s"
    assert [s.time for s in trace.steps] == [s.time for s in decoded.steps]
    assert [s.tasks for s in trace.steps] == [s.tasks for s in decoded.steps]
    assert [s.stages for s in trace.steps] == [s.stages for s in decoded.steps]
    assert trace.workload == {"inc_0": 1, "inc_1": Fraction(1, 3)}
    assert tf.params == {"n_tasks": 2}
    assert tf.metadata == {"kind": "test"}


def test_rationals_are_strings(decoded):
    doc = json.loads(dumps([decoded]))
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["workload"]["inc_1"] == "1/3"
    assert doc["steps"][1]["tasks"][0] == {"level": "0", "picked": True, "stage": "running"}
    assert doc["bound"] is None


def test_dual_document(counter_trace):
    heuristic = decode_trace(counter_schedule([1, 1], prefix="h").to_assignment(), counter_trace, "h")
    ideal = decode_trace(counter_schedule([1, 1], prefix="o").to_assignment(), counter_trace, "o",
                         label="ideal")
    tf = loads(dumps([heuristic, ideal], query="gap", bound=Fraction(3, 2)))
    assert [t.label for t in tf.traces] == ["heuristic", "ideal"]
    assert tf.ideal.prefix == "o"
    assert tf.heuristic.bound == Fraction(3, 2)


def test_unknown_schema_version(decoded):
    doc = to_document([decoded])
    doc["schema_version"] = 2
    with pytest.raises(TraceFileError, match="schema_version"):
        loads(json.dumps(doc))


def test_bad_rational_is_located(decoded):
    doc = to_document([decoded])
    doc["steps"][2]["time"] = 1.5
    with pytest.raises(TraceFileError, match=r"steps\[2\]\.time"):
        loads(json.dumps(doc))
    doc["steps"][2]["time"] = "one"
    with pytest.raises(TraceFileError, match="not an exact rational"):
        loads(json.dumps(doc))


@pytest.mark.parametrize("text", ["not json", "[]", '{"schema_version": 1}'])
def test_malformed_documents(text):
    with pytest.raises(TraceFileError):
        loads(text)


def test_missing_step_key(decoded):
    doc = to_document([decoded])
    del doc["steps"][0]["queues"]
    with pytest.raises(TraceFileError, match="malformed step"):
        loads(json.dumps(doc))


def test_nothing_to_write():
    with pytest.raises(TraceFileError):
        dumps([])


def test_missing_file(tmp_path):
    with pytest.raises(TraceFileError, match="cannot read"):
        read_trace_file(str(tmp_path / "absent.json"))
