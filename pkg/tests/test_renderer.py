from fractions import Fraction

import pytest

from conftest import counter_schedule
from utils.errors import ConfigError
from utils.framework import DecodedStep, ScheduleTrace, StepKind, decode_trace
from utils.renderer import (gantt_figure, render, render_ascii, render_svg, segments_frame,
                            trace_segments)


@pytest.fixture
def decoded(counter_trace):
    return decode_trace(counter_schedule([1, 1]).to_assignment(), counter_trace)


def _switching_trace():
    steps = [DecodedStep(0, StepKind.ALGORITHM, Fraction(0), [{"start": Fraction(1, 2)}], [], {},
                         ["switching"]),
             DecodedStep(1, StepKind.SYSTEM, Fraction(2), [{"start": Fraction(1, 2)}], [], {}, ["done"])]
    return ScheduleTrace("worksteal", {}, "sat", "heuristic", "s", steps, {})


class TestSegments:
    def test_stages_per_task(self, decoded):
        segments = [(s.row, s.start, s.end, s.stage) for s in trace_segments(decoded)]
        assert segments == [(0, 0, 1, "running"), (0, 1, 2, "waiting"),
                            (1, 0, 1, "waiting"), (1, 1, 2, "running")]

    def test_switching_cost_is_split_off(self):
        segments = [(s.start, s.end, s.stage) for s in trace_segments(_switching_trace())]
        assert segments == [(0, Fraction(1, 2), "switching"), (Fraction(1, 2), 2, "running")]

    def test_frame_columns(self, decoded):
        frame = segments_frame(decoded)
        assert list(frame.columns) == ["task", "stage", "start", "end", "start_f", "duration_f"]
        assert frame["duration_f"].sum() == 4.0


class TestAscii:
    def test_chart(self, decoded):
        assert render_ascii(decoded, width=4) == "\n".join([
            "counter heuristic",
            "T0   |##..|",
            "T1   |..##|",
            "     |----|",
            "     0    2",
            "     #=running  .=waiting",
        ]) + "\n"

    def test_deterministic(self, decoded):
        assert render([decoded], "ascii") == render([decoded], "ascii")

    def test_empty_trace(self):
        empty = ScheduleTrace("counter", {}, "sat", "heuristic", "s",
                              [DecodedStep(0, StepKind.INITIAL, Fraction(0), [], [], {})], {})
        text = render_ascii(empty, width=3)
        assert text.splitlines()[1:] == ["     |---|", "     0  0"]
        assert render([], "ascii") == "(no traces)\n"


class TestSvgAndHtml:
    def test_svg_rects(self, decoded):
        svg = render_svg([decoded])
        assert svg.startswith('<svg xmlns="http://www.w3.org/2000/svg"')
        assert svg.endswith("</svg>\n")
        assert "<title>T0 running [0, 1]</title>" in svg
        assert svg.count('fill="#4C78A8"') == 3

    def test_dual_titles_are_stacked(self, counter_trace):
        heuristic = decode_trace(counter_schedule([1, 1], prefix="h").to_assignment(), counter_trace, "h")
        ideal = decode_trace(counter_schedule([1, 1], prefix="o").to_assignment(), counter_trace, "o",
                             label="ideal", bound=Fraction(3, 2))
        fig = gantt_figure([heuristic, ideal])
        titles = [a.text for a in fig.layout.annotations]
        assert titles == ["counter heuristic", "counter ideal (bound 3/2)"]
        svg = render_svg([heuristic, ideal])
        assert svg.index("counter heuristic") < svg.index("counter ideal")

    def test_html_page(self, decoded):
        html = render([decoded], "html")
        assert 'id="virelay-trace"' in html
        assert "<html>" in html

    def test_unknown_format(self, decoded):
        with pytest.raises(ConfigError, match="pdf"):
            render([decoded], "pdf")
