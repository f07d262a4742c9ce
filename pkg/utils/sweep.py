"""
Parameter sweeps: independent query points, optionally run in parallel,
written to CSV one row at a time in grid order.
"""

import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import pandas as pd

from utils.errors import ConfigError, VirelayError
from utils.params import format_rational

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["bound", "bound_decimal", "status", "wall_time"]


def expand_grid(grid):
    """{key: value or [values]} -> list of parameter dicts, last key varying fastest."""
    if not isinstance(grid, dict):
        raise ConfigError("a sweep grid must be a JSON object of parameter lists")
    keys = list(grid)
    values = [v if isinstance(v, list) else [v] for v in grid.values()]
    for key, options in zip(keys, values):
        if not options:
            return []
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _row(params, columns, outcome):
    row = {col: format_rational(params[col]) if _is_number(params.get(col)) else params.get(col)
           for col in columns}
    bound = outcome.get("bound")
    row["bound"] = None if bound is None else format_rational(bound)
    row["bound_decimal"] = None if bound is None else f"{float(bound):.6f}"
    row["status"] = outcome.get("status", "")
    row["wall_time"] = round(float(outcome.get("wall_time", 0.0)), 3)
    return row


def _is_number(value):
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def _safe(evaluate, payload):
    start = time.monotonic()
    try:
        return evaluate(payload)
    except ConfigError as e:
        logger.warning("sweep point rejected: %s", e)
        return {"status": "config_error", "wall_time": time.monotonic() - start, "error": str(e)}
    except VirelayError as e:
        logger.warning("sweep point failed: %s", e)
        return {"status": "error", "wall_time": time.monotonic() - start, "error": str(e)}


def run_sweep(points, evaluate, columns, csv_path=None, jobs=1):
    """
    Evaluate every point and collect one row per point.

    Args:
        points: list of (params dict, payload handed to evaluate)
        evaluate: payload -> {"bound", "status", "wall_time"}
        columns: parameter keys that become CSV columns
        csv_path: append rows here as they complete (header written once)
        jobs: worker threads; solver work happens in subprocesses

    Returns:
        DataFrame with the parameter columns followed by RESULT_COLUMNS
    """
    header = list(columns) + RESULT_COLUMNS
    if csv_path:
        os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
        pd.DataFrame(columns=header).to_csv(csv_path, index=False)

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [pool.submit(_safe, evaluate, payload) for _, payload in points]
        for (params, _), future in zip(points, futures):
            row = _row(params, columns, future.result())
            rows.append(row)
            if csv_path:
                pd.DataFrame([row], columns=header).to_csv(csv_path, mode="a", header=False, index=False)
            logger.info("sweep row %d/%d: %s", len(rows), len(points), row["status"])
    return pd.DataFrame(rows, columns=header)
