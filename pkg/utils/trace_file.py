"""
TraceFileV1: decoded traces as JSON.

Exact rationals are written as strings ("3", "-1/2") and never as JSON
numbers. A dual trace keeps the heuristic schedule under `steps` and the
ideal one under `ideal_steps`; both share `workload`.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction

from utils.errors import TraceFileError
from utils.framework import HEURISTIC, IDEAL, DecodedStep, ScheduleTrace, StepKind
from utils.params import format_rational

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class TraceFile:
    model: str
    query: str
    params: dict
    verdict: str
    bound: Fraction | None = None
    traces: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def heuristic(self):
        return next((t for t in self.traces if t.label != IDEAL), None)

    @property
    def ideal(self):
        return next((t for t in self.traces if t.label == IDEAL), None)


def _encode_value(value):
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (int, Fraction)):
        return format_rational(value)
    return str(value)


def _decode_value(value, where):
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise TraceFileError(f"{where}: {value!r} is not an exact rational") from None
    raise TraceFileError(f"{where}: expected a boolean or a rational string, got {value!r}")


def _encode_steps(trace):
    out = []
    for step in trace.steps:
        tasks = []
        for i, fields in enumerate(step.tasks):
            entry = {name: _encode_value(v) for name, v in fields.items()}
            if i < len(step.stages):
                entry["stage"] = step.stages[i]
            tasks.append(entry)
        out.append({
            "index": step.index,
            "kind": step.kind.value,
            "time": format_rational(step.time),
            "tasks": tasks,
            "queues": [{name: _encode_value(v) for name, v in q.items()} for q in step.queues],
            "globals": {name: _encode_value(v) for name, v in step.globals.items()},
        })
    return out


def _decode_steps(raw, where):
    if not isinstance(raw, list):
        raise TraceFileError(f"{where} must be a list")
    steps = []
    for n, entry in enumerate(raw):
        at = f"{where}[{n}]"
        try:
            kind = StepKind(entry["kind"])
            stages, tasks = [], []
            for i, task in enumerate(entry["tasks"]):
                task = dict(task)
                if "stage" in task:
                    stages.append(str(task.pop("stage")))
                tasks.append({k: _decode_value(v, f"{at}.tasks[{i}].{k}") for k, v in task.items()})
            queues = [{k: _decode_value(v, f"{at}.queues[{r}].{k}") for k, v in q.items()}
                      for r, q in enumerate(entry["queues"])]
            glob = {k: _decode_value(v, f"{at}.globals.{k}") for k, v in entry["globals"].items()}
            time = _decode_value(entry["time"], f"{at}.time")
            steps.append(DecodedStep(int(entry["index"]), kind, time, tasks, queues, glob, stages))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, TraceFileError):
                raise
            raise TraceFileError(f"{at}: malformed step ({e})") from None
    return steps


def to_document(traces, query="", bound=None):
    if not traces:
        raise TraceFileError("nothing to write: no traces")
    first = traces[0]
    heuristic = next((t for t in traces if t.label != IDEAL), first)
    ideal = next((t for t in traces if t.label == IDEAL), None)
    bound = bound if bound is not None else first.bound
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": first.model_name,
        "query": query or first.query,
        "params": {k: _encode_value(v) for k, v in first.parameters.items()},
        "verdict": first.verdict,
        "bound": None if bound is None else format_rational(bound),
        "metadata": {k: str(v) for k, v in first.metadata.items()},
        "label": heuristic.label,
        "prefix": heuristic.prefix,
        "workload": {k: _encode_value(v) for k, v in first.workload.items()},
        "steps": _encode_steps(heuristic),
    }
    if ideal is not None and ideal is not heuristic:
        doc["ideal_prefix"] = ideal.prefix
        doc["ideal_steps"] = _encode_steps(ideal)
    return doc


def from_document(doc):
    if not isinstance(doc, dict):
        raise TraceFileError("trace file must contain a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TraceFileError(f"unsupported trace schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        model, verdict = doc["model"], doc["verdict"]
        raw_steps = doc["steps"]
    except KeyError as e:
        raise TraceFileError(f"trace file lacks required key {e.args[0]!r}") from None

    bound = None if doc.get("bound") is None else _decode_value(doc["bound"], "bound")
    params = {}
    for k, v in (doc.get("params") or {}).items():
        try:
            params[k] = Fraction(v) if isinstance(v, str) and v != "inf" else v
        except ValueError:
            params[k] = v
    workload = {k: _decode_value(v, f"workload.{k}") for k, v in (doc.get("workload") or {}).items()}
    metadata = dict(doc.get("metadata") or {})
    query = doc.get("query", "")

    def make(label, prefix, steps):
        return ScheduleTrace(model, params, verdict, label, prefix, steps, workload, bound, query, metadata)

    traces = [make(doc.get("label", HEURISTIC), doc.get("prefix", "s"), _decode_steps(raw_steps, "steps"))]
    if "ideal_steps" in doc:
        traces.append(make(IDEAL, doc.get("ideal_prefix", "o"), _decode_steps(doc["ideal_steps"], "ideal_steps")))
    return TraceFile(model, query, params, verdict, bound, traces, metadata)


def dumps(traces, query="", bound=None):
    return json.dumps(to_document(traces, query, bound), indent=2, sort_keys=False) + "\n"


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TraceFileError(f"trace file is not valid JSON: {e}") from None
    return from_document(doc)


def write_trace_file(path, traces, query="", bound=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps(traces, query, bound))
    logger.info("wrote %d trace(s) to %s", len(traces), path)
    return path


def read_trace_file(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise TraceFileError(f"cannot read trace file {path}: {e}") from None
    return loads(text)
