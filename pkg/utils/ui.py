import streamlit as st

from utils.renderer import STAGE_STYLE

STATUS_COLOURS = {
    "holds": "#15803d",
    "unsat": "#15803d",
    "converged": "#15803d",
    "violated": "#b91c1c",
    "sat": "#b91c1c",
    "inconclusive": "#b45309",
    "timeout": "#b45309",
    "unknown": "#b45309",
    "config_error": "#64748b",
    "error": "#64748b",
}


def setup_app_styling():
    """
    Injects global CSS for the trace explorer.
    Theme: dark sidebar, light main area, indigo accents.
    """
    st.markdown("""
    <style>
    @import url('https://fonts.googleapis.com/css2?family=Inter:wght@400;500;600;700&family=JetBrains+Mono&display=swap');

    :root {
        --primary: #0f172a;
        --accent: #6366f1;
        --bg-sidebar: #0f172a;
        --bg-body: #f8fafc;
        --text-main: #0f172a;
        --text-muted: #64748b;
        --border-light: #e2e8f0;
        --shadow-sm: 0 1px 2px 0 rgba(0, 0, 0, 0.05);
    }

    html, body, [class*="css"] {
        font-family: 'Inter', sans-serif !important;
    }
    .stApp {
        background-color: var(--bg-body);
    }
    .main .block-container {
        padding-top: 2rem;
        max-width: 1200px !important;
    }
    h1, h2, h3 {
        color: var(--primary) !important;
        letter-spacing: -0.025em !important;
    }

    [data-testid="stSidebar"] {
        background-color: var(--bg-sidebar);
    }
    [data-testid="stSidebar"] h1, [data-testid="stSidebar"] h2, [data-testid="stSidebar"] h3 {
        color: white !important;
    }
    [data-testid="stSidebar"] p, [data-testid="stSidebar"] span, [data-testid="stSidebar"] label {
        color: #cbd5e1 !important;
    }

    .virelay-logo {
        font-weight: 800;
        font-size: 2rem;
        background: linear-gradient(135deg, #ffffff 0%, #94a3b8 100%);
        -webkit-background-clip: text;
        -webkit-text-fill-color: transparent;
        margin-bottom: 1.5rem;
        padding-left: 0.5rem;
    }

    .metric-card {
        background: white;
        padding: 1rem 1.25rem;
        border-radius: 10px;
        border: 1px solid var(--border-light);
        box-shadow: var(--shadow-sm);
        color: var(--text-main);
    }
    .metric-card .label {
        font-size: 0.75rem;
        text-transform: uppercase;
        color: var(--text-muted);
    }
    .metric-card .value {
        font-size: 1.4rem;
        font-weight: 700;
        font-family: 'JetBrains Mono', monospace;
    }

    .status-badge {
        padding: 0.2rem 0.7rem;
        border-radius: 100px;
        font-size: 0.8rem;
        font-weight: 600;
        color: white;
    }

    .stage-chip {
        display: inline-block;
        margin-right: 0.6rem;
        font-size: 0.8rem;
    }
    .stage-chip span {
        display: inline-block;
        width: 0.8rem;
        height: 0.8rem;
        border-radius: 2px;
        margin-right: 0.3rem;
        vertical-align: middle;
    }

    #MainMenu {visibility: hidden;}
    footer {visibility: hidden;}
    </style>
    """, unsafe_allow_html=True)


def status_badge(status):
    colour = STATUS_COLOURS.get(status, "#64748b")
    return f'<span class="status-badge" style="background:{colour}">{status}</span>'


def metric_card(label, value):
    st.markdown(f'<div class="metric-card"><div class="label">{label}</div>'
                f'<div class="value">{value}</div></div>', unsafe_allow_html=True)


def stage_legend():
    chips = "".join(f'<div class="stage-chip"><span style="background:{colour}"></span>{stage}</div>'
                    for stage, (_, colour) in STAGE_STYLE.items())
    st.markdown(chips, unsafe_allow_html=True)
