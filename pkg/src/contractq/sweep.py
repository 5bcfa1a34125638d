"""Independent solves over a grid of one parameter."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError

log = logging.getLogger(__name__)


def _run_point(task: Callable[[float], dict], value: float) -> dict:
    try:
        out = task(value)
    except ConfigError:
        raise
    except (ContractError, ValueError, ArithmeticError) as exc:
        log.warning("grid point %r failed: %s", value, exc)
        info = {"ok": False, "error": str(exc), "error_type": type(exc).__name__}
        for attr in ("certificate", "diagnostics"):
            if getattr(exc, attr, None):
                info[attr] = getattr(exc, attr)
        return info
    return {"ok": True, **out}


def sweep(parameter: str, grid: Sequence[float], task: Callable[[float], dict], *,
          jobs: int = 1) -> list[dict]:
    """Run ``task(value)`` for every grid value and collect one row per point.

    Rows hold ``parameter``, ``value``, ``ok`` and the task's outputs; a
    point that fails keeps its error message instead, so one bad point does
    not end the sweep.  With ``jobs > 1`` points run in separate processes
    and ``task`` must be picklable.  Rows come back sorted by value, so the
    table does not depend on completion order.
    """
    values = [float(v) for v in grid]
    if not values:
        raise ValueError("sweep grid is empty")
    if not all(np.isfinite(values)):
        raise ValueError("sweep grid must be finite")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("sweep grid must be sorted")
    if jobs > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(values))) as pool:
            outs = list(pool.map(_run_point, [task] * len(values), values))
    else:
        outs = [_run_point(task, v) for v in values]
    rows = [{"parameter": parameter, "value": v, **o} for v, o in zip(values, outs)]
    rows.sort(key=lambda r: r["value"])
    return rows
