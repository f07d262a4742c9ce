import streamlit as st
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

import glob
import pandas as pd

from utils.db import init_db, get_run_history
from utils.errors import VirelayError
from utils.models import MODELS
from utils.renderer import gantt_figure, render_svg, segments_frame
from utils.trace_file import loads, read_trace_file

# Initialize Database
try:
    init_db()
    db_ok = True
except Exception as e:
    db_ok = False
    db_error = str(e)

# Page Config
st.set_page_config(
    page_title="Virelay Trace Explorer",
    page_icon="⏱️",
    layout="wide"
)

import utils.ui as ui

ui.setup_app_styling()

OUT_DIR = os.getenv("VIRELAY_OUT", "./virelay_out")

with st.sidebar:
    st.markdown('<div class="virelay-logo">Virelay</div>', unsafe_allow_html=True)
    st.caption("Read-only explorer over trace files, sweep tables and run history.")
    st.write("")

    selection = st.radio(
        "Navigation",
        ["Trace Viewer", "Sweeps", "Run History"],
        label_visibility="collapsed"
    )
    st.write("")
    st.caption(f"Output directory: `{OUT_DIR}`")


def _artifacts(pattern):
    return sorted(glob.glob(os.path.join(OUT_DIR, pattern)), key=os.path.getmtime, reverse=True)


def _steps_table(trace):
    """One row per step and task; rationals shown exactly."""
    rows = []
    for step in trace.steps:
        for i, task in enumerate(step.tasks):
            row = {"step": step.index, "kind": step.kind.value, "time": str(step.time), "task": f"T{i}"}
            if i < len(step.stages):
                row["stage"] = step.stages[i]
            row.update({k: str(v) for k, v in task.items()})
            rows.append(row)
    return pd.DataFrame(rows)


# --- Trace Viewer ---
if selection == "Trace Viewer":
    st.title("Trace Viewer")

    source = st.radio("Source", ["Output directory", "Upload"], horizontal=True, label_visibility="collapsed")
    trace_file = None
    try:
        if source == "Upload":
            uploaded = st.file_uploader("Trace file (JSON)", type=["json"])
            if uploaded is not None:
                trace_file = loads(uploaded.getvalue().decode("utf-8"))
        else:
            files = _artifacts("*.json")
            if not files:
                st.info(f"No trace files in {OUT_DIR}. Run `python cli.py check ...` first.")
            else:
                picked = st.selectbox("Trace file", files, format_func=os.path.basename)
                trace_file = read_trace_file(picked)
    except VirelayError as e:
        st.error(f"Could not load trace: {e}")

    if trace_file is not None:
        col1, col2, col3, col4 = st.columns(4)
        with col1:
            ui.metric_card("Model", trace_file.model)
        with col2:
            ui.metric_card("Query", trace_file.query or "-")
        with col3:
            ui.metric_card("Verdict", trace_file.verdict)
        with col4:
            ui.metric_card("Bound", "-" if trace_file.bound is None else str(trace_file.bound))

        entry = MODELS.get(trace_file.model)
        if entry is not None:
            st.caption(entry.description)
        if trace_file.metadata:
            st.caption(" · ".join(f"{k}: {v}" for k, v in trace_file.metadata.items()))

        st.plotly_chart(gantt_figure(trace_file.traces), use_container_width=True)
        ui.stage_legend()

        with st.expander("Parameters"):
            st.json({k: str(v) for k, v in trace_file.params.items()})

        tabs = st.tabs([t.label.title() for t in trace_file.traces])
        for tab, trace in zip(tabs, trace_file.traces):
            with tab:
                st.markdown(f"Final time **{trace.final_time}** over {len(trace.steps)} states")
                st.dataframe(_steps_table(trace), use_container_width=True, hide_index=True)
                frame = segments_frame(trace)
                if not frame.empty:
                    st.markdown("**Stage intervals**")
                    st.dataframe(frame[["task", "stage", "start", "end"]].astype(str),
                                 use_container_width=True, hide_index=True)

        ideal = trace_file.ideal
        heuristic = trace_file.heuristic
        if ideal is not None and heuristic is not None and ideal.final_time > 0:
            st.markdown(f"Heuristic / ideal final time: **{heuristic.final_time / ideal.final_time}**")

        st.download_button("Download SVG", render_svg(trace_file.traces),
                           file_name=f"{trace_file.model}_{trace_file.query or 'trace'}.svg", mime="image/svg+xml")

# --- Sweeps ---
elif selection == "Sweeps":
    st.title("Sweeps")
    files = _artifacts("sweep_*.csv")
    if not files:
        st.info(f"No sweep tables in {OUT_DIR}. Run `python cli.py sweep ...` first.")
    else:
        picked = st.selectbox("Sweep table", files, format_func=os.path.basename)
        table = pd.read_csv(picked, dtype=str)
        st.dataframe(table, use_container_width=True, hide_index=True)

        params = [c for c in table.columns if c not in ("bound", "bound_decimal", "status", "wall_time")]
        plotted = table[table["bound_decimal"].notna()].copy()
        if params and not plotted.empty:
            x = st.selectbox("x axis", params, index=len(params) - 1)
            series = [c for c in params if c != x]
            plotted["bound_decimal"] = plotted["bound_decimal"].astype(float)
            plotted["label"] = plotted[series].fillna("").agg(", ".join, axis=1) if series else "bound"
            chart = plotted.pivot_table(index=x, columns="label", values="bound_decimal", aggfunc="max")
            st.line_chart(chart)
        counts = table["status"].value_counts()
        st.bar_chart(counts)

# --- Run History ---
elif selection == "Run History":
    st.title("Run History")
    if not db_ok:
        st.error(f"Database Connection Error: {db_error}")
    else:
        model = st.selectbox("Model", ["(all)"] + sorted(MODELS))
        limit = st.slider("Runs", 10, 500, 50)
        history = get_run_history(limit, None if model == "(all)" else model)
        if history.empty:
            st.info("No recorded runs yet.")
        else:
            for status in history["status"].unique()[:6]:
                st.markdown(ui.status_badge(status) + f" {int((history['status'] == status).sum())} runs",
                            unsafe_allow_html=True)
            st.dataframe(history, use_container_width=True, hide_index=True)
            timing = history.dropna(subset=["wall_time"])
            if not timing.empty:
                st.markdown("**Wall time per run (s)**")
                st.bar_chart(timing.set_index("id")["wall_time"])

st.markdown("---")
st.caption("Traces are decoded solver models; the explorer never runs a solver.")
