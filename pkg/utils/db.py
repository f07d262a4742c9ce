"""
Run-history store.
Uses SQLAlchemy ORM; SQLite by default, any SQLAlchemy URL via DATABASE_URL.
"""

import json
import logging
import os
from datetime import datetime
from fractions import Fraction

import pandas as pd
import streamlit as st
from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import sessionmaker

from utils.params import format_rational

logger = logging.getLogger(__name__)

DEFAULT_DATABASE_URL = "sqlite:///virelay_runs.db"

Base = declarative_base()


class Run(Base):
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.utcnow)
    model = Column(String, nullable=False)
    query = Column(String, nullable=False)
    params_json = Column(Text)
    status = Column(String)  # holds / violated / sat / unsat / converged / inconclusive ...
    bound = Column(String, nullable=True)  # exact rational, "p/q"
    wall_time = Column(Float)
    trace_path = Column(String, nullable=True)


engine = None
Session = None


def database_url():
    db_url = os.getenv("DATABASE_URL") or DEFAULT_DATABASE_URL
    # SQLAlchemy wants 'postgresql://', hosted providers hand out 'postgres://'
    if db_url.startswith("postgres://"):
        db_url = db_url.replace("postgres://", "postgresql://", 1)
    return db_url


@st.cache_resource
def get_engine(db_url):
    """
    Creates and caches one engine per URL, so Streamlit reruns and repeated
    CLI calls share a connection pool.
    """
    engine = create_engine(db_url, echo=False, pool_pre_ping=True)
    Base.metadata.create_all(engine)
    return engine


def init_db(db_url=None):
    """Bind the module session factory to DATABASE_URL (or the given URL)."""
    global engine, Session

    engine = get_engine(db_url or database_url())
    Session = sessionmaker(bind=engine)
    return engine


def get_session():
    """Get a new database session."""
    global Session
    if Session is None:
        init_db()
    return Session()


def _params_text(params):
    if isinstance(params, str):
        return params
    return json.dumps({k: format_rational(v) if _rational(v) else v for k, v in (params or {}).items()},
                      sort_keys=True)


def _rational(value):
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def save_run(model, query, params, status, bound=None, wall_time=0.0, trace_path=None):
    """
    Record one query run.

    Args:
        model: model name ('worksteal', 'srpt', ...)
        query: query name
        params: parameter dict (rationals stored as strings) or a JSON string
        status: outcome label
        bound: Fraction for optimize runs
        wall_time: seconds
        trace_path: trace file written by the run, if any

    Returns:
        Run ID
    """
    session = get_session()

    try:
        run = Run(
            model=model,
            query=query,
            params_json=_params_text(params),
            status=status,
            bound=None if bound is None else format_rational(bound),
            wall_time=float(wall_time or 0.0),
            trace_path=trace_path,
        )

        session.add(run)
        session.commit()
        run_id = run.id
        logger.debug("recorded run %s (%s/%s %s)", run_id, model, query, status)

        return run_id

    except Exception as e:
        session.rollback()
        raise e
    finally:
        session.close()


def get_run_history(limit=20, model=None):
    """
    Most recent runs first, as a DataFrame.

    Returns:
        DataFrame with id, created_at, model, query, params, status, bound,
        wall_time, trace_path
    """
    columns = ["id", "created_at", "model", "query", "params", "status", "bound", "wall_time", "trace_path"]
    session = get_session()
    try:
        query = session.query(Run)
        if model:
            query = query.filter(Run.model == model)
        runs = query.order_by(Run.created_at.desc(), Run.id.desc()).limit(limit).all()

        rows = [{
            "id": r.id,
            "created_at": r.created_at.strftime("%Y-%m-%d %H:%M:%S") if r.created_at else "",
            "model": r.model,
            "query": r.query,
            "params": r.params_json,
            "status": r.status,
            "bound": r.bound,
            "wall_time": r.wall_time,
            "trace_path": r.trace_path,
        } for r in runs]
        return pd.DataFrame(rows, columns=columns)

    finally:
        session.close()
