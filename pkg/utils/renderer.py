"""
Gantt-style rendering of decoded traces: ASCII, self-contained SVG and an
interactive plotly HTML page. One row per task, time on the horizontal axis,
stages told apart by character or colour. Output is deterministic.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from html import escape

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("ascii", "svg", "html")
HIDDEN = {"done", "pending", "absent", "sent"}

STAGE_STYLE = {
    "running": ("#", "#4C78A8"),
    "switching": ("s", "#B279A2"),
    "waiting": (".", "#F2CF5B"),
    "blocked": ("~", "#E45756"),
    "dropped": ("x", "#7F7F7F"),
}
_FALLBACK = ["#54A24B", "#F58518", "#72B7B2", "#FF9DA6", "#9D755D", "#BAB0AC", "#EECA3B", "#4C78A8"]


@dataclass
class Segment:
    row: int
    start: Fraction
    end: Fraction
    stage: str


def _stage(step, i):
    return step.stages[i] if i < len(step.stages) else "running"


def trace_segments(trace):
    """Stage intervals per task, merged where consecutive intervals share a stage."""
    segments = []
    steps = trace.steps
    for k, step in enumerate(steps[:-1]):
        end = steps[k + 1].time
        if end <= step.time:
            continue
        for i, task in enumerate(step.tasks):
            stage = _stage(step, i)
            if stage in HIDDEN:
                continue
            start = step.time
            if stage == "switching" and "start" in task and start < task["start"] < end:
                segments.append(Segment(i, start, task["start"], "switching"))
                start, stage = task["start"], "running"
            segments.append(Segment(i, start, end, stage))

    merged = []
    for seg in sorted(segments, key=lambda s: (s.row, s.start)):
        last = merged[-1] if merged else None
        if last and last.row == seg.row and last.stage == seg.stage and last.end == seg.start:
            last.end = seg.end
        else:
            merged.append(Segment(seg.row, seg.start, seg.end, seg.stage))
    return merged


def segments_frame(trace):
    rows = [{"task": f"T{s.row}", "stage": s.stage, "start": s.start, "end": s.end,
             "start_f": float(s.start), "duration_f": float(s.end - s.start)}
            for s in trace_segments(trace)]
    return pd.DataFrame(rows, columns=["task", "stage", "start", "end", "start_f", "duration_f"])


def _style(stage, seen):
    if stage in STAGE_STYLE:
        return STAGE_STYLE[stage]
    digits = "".join(ch for ch in stage if ch.isdigit())
    char = digits[-1] if digits else stage[:1]
    return char, _FALLBACK[seen.index(stage) % len(_FALLBACK)]


def _stages_in(segments):
    return sorted({s.stage for s in segments})


def _title(trace):
    label = trace.label
    if trace.bound is not None:
        label += f" (bound {trace.bound})"
    return f"{trace.model_name} {label}"


# --- ASCII ---

def render_ascii(trace, width=60):
    segments = trace_segments(trace)
    horizon = trace.final_time
    stages = _stages_in(segments)
    lines = [_title(trace)]
    if horizon <= 0 or not trace.steps:
        lines.append("     |" + "-" * width + "|")
        lines.append(f"     0{' ' * (width - 1)}0")
        return "\n".join(lines) + "\n"

    def column(t, last=width - 1):
        return min(last, int(Fraction(t) / horizon * width))

    for row in range(trace.n_tasks):
        cells = [" "] * width
        for seg in segments:
            if seg.row != row:
                continue
            char, _ = _style(seg.stage, stages)
            for x in range(column(seg.start), max(column(seg.start) + 1, column(seg.end, width))):
                cells[x] = char
        lines.append(f"T{row:<3} |{''.join(cells)}|")
    end_label = str(horizon)
    lines.append("     |" + "-" * width + "|")
    lines.append(f"     0{end_label:>{width + 1}}")
    if stages:
        lines.append("     " + "  ".join(f"{_style(s, stages)[0]}={s}" for s in stages))
    return "\n".join(lines) + "\n"


# --- SVG ---

def _fmt(x):
    return f"{float(x):.2f}"


def _svg_chart(trace, y0, width, row_h, left):
    segments = trace_segments(trace)
    stages = _stages_in(segments)
    horizon = trace.final_time
    plot_w = width - left - 20
    rows = max(trace.n_tasks, 1)
    parts = [f'<text x="{left}" y="{y0 + 14}" font-size="13" font-weight="bold">{escape(_title(trace))}</text>']
    top = y0 + 24

    def x_of(t):
        return left + (plot_w * Fraction(t) / horizon if horizon > 0 else 0)

    for row in range(trace.n_tasks):
        y = top + row * row_h
        parts.append(f'<text x="{left - 8}" y="{_fmt(y + row_h * 0.7)}" font-size="11" text-anchor="end">T{row}</text>')
    for seg in segments:
        _, colour = _style(seg.stage, stages)
        x1, x2 = x_of(seg.start), x_of(seg.end)
        y = top + seg.row * row_h
        parts.append(f'<rect x="{_fmt(x1)}" y="{_fmt(y + 2)}" width="{_fmt(x2 - x1)}" height="{row_h - 4}" '
                     f'fill="{colour}"><title>T{seg.row} {escape(seg.stage)} [{seg.start}, {seg.end}]</title></rect>')
    axis_y = top + rows * row_h + 4
    parts.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + plot_w}" y2="{axis_y}" stroke="#333"/>')
    parts.append(f'<text x="{left}" y="{axis_y + 14}" font-size="11">0</text>')
    parts.append(f'<text x="{left + plot_w}" y="{axis_y + 14}" font-size="11" text-anchor="end">{horizon}</text>')
    legend_y = axis_y + 30
    for n, stage in enumerate(stages):
        _, colour = _style(stage, stages)
        x = left + n * 110
        parts.append(f'<rect x="{x}" y="{legend_y - 10}" width="12" height="12" fill="{colour}"/>')
        parts.append(f'<text x="{x + 16}" y="{legend_y}" font-size="11">{escape(stage)}</text>')
    return parts, legend_y + 16


def render_svg(traces, width=720, row_h=22, left=50):
    parts, y = [], 10
    for trace in traces:
        chart, y = _svg_chart(trace, y, width, row_h, left)
        parts += chart
        y += 10
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{y}" '
            f'viewBox="0 0 {width} {y}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{width}" height="{y}" fill="white"/>', *parts, "</svg>"]) + "\n"


# --- plotly ---

def gantt_figure(traces):
    fig = make_subplots(rows=len(traces) or 1, cols=1, shared_xaxes=True,
                        subplot_titles=[_title(t) for t in traces] or ["empty"], vertical_spacing=0.12)
    shown = set()
    for n, trace in enumerate(traces, start=1):
        frame = segments_frame(trace)
        stages = sorted(frame["stage"].unique()) if not frame.empty else []
        for stage in stages:
            part = frame[frame["stage"] == stage]
            _, colour = _style(stage, stages)
            fig.add_trace(go.Bar(
                y=part["task"], x=part["duration_f"], base=part["start_f"], orientation="h",
                name=stage, marker_color=colour, legendgroup=stage, showlegend=stage not in shown,
                hovertext=[f"{t} {stage} [{s}, {e}]" for t, s, e in zip(part["task"], part["start"], part["end"])],
                hoverinfo="text"), row=n, col=1)
            shown.add(stage)
        fig.update_yaxes(categoryorder="array", autorange="reversed",
                         categoryarray=[f"T{i}" for i in range(trace.n_tasks)], row=n, col=1)
    fig.update_layout(barmode="overlay", height=180 + 220 * max(len(traces), 1),
                      margin=dict(l=40, r=20, t=60, b=40), xaxis_title="time")
    return fig


def render_html(traces):
    return gantt_figure(traces).to_html(full_html=True, include_plotlyjs=True, div_id="virelay-trace")


def render(traces, fmt):
    if fmt == "ascii":
        return "\n".join(render_ascii(t) for t in traces) if traces else "(no traces)\n"
    if fmt == "svg":
        return render_svg(traces)
    if fmt == "html":
        return render_html(traces)
    raise ConfigError(f"unknown render format {fmt!r} (expected one of {', '.join(FORMATS)})")
