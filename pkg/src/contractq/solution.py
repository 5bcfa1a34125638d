"""Monitoring-technology descriptions and the solved-contract record."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .cells import CellSummary, as_arrays
from .wages import DualCertificate, WageSchedule

GAP_TOL = 1e-8


@dataclass(frozen=True)
class CutoffPartition:
    """Cells ``[c_{n-1}, c_n)`` of a scalar score (``z`` or ``z_lambda``)."""

    cutoffs: tuple[float, ...]
    score: str = "z"
    direction: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(float(c) for c in self.cutoffs))
        if self.direction is not None:
            object.__setattr__(self, "direction", tuple(float(d) for d in self.direction))

    @property
    def n_cells(self) -> int:
        return len(self.cutoffs) + 1

    def is_z_convex(self) -> bool:
        return bool(np.all(np.diff(self.cutoffs) > 0))

    def describe(self) -> dict:
        out = {"type": "cutoffs", "score": self.score, "cutoffs": list(self.cutoffs)}
        if self.direction is not None:
            out["direction"] = list(self.direction)
        return out


@dataclass(frozen=True)
class BiPartitionLine:
    """Half-planes ``{n.z < t}`` (cell 0) and ``{n.z >= t}`` (cell 1)."""

    normal: tuple[float, float]
    offset: float
    tag: str = ""

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        norm = float(np.hypot(*n))
        if norm == 0:
            raise ValueError("degenerate line")
        object.__setattr__(self, "normal", (float(n[0] / norm), float(n[1] / norm)))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def n_cells(self) -> int:
        return 2

    def is_z_convex(self) -> bool:
        return True

    def describe(self) -> dict:
        return {"type": "line", "normal": list(self.normal), "offset": self.offset, "tag": self.tag}


@dataclass(frozen=True)
class ProductPartition:
    """Per-agent cutoffs; cells are ordered agent-1-major."""

    cutoffs1: tuple[float, ...]
    cutoffs2: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "cutoffs1", tuple(float(c) for c in self.cutoffs1))
        object.__setattr__(self, "cutoffs2", tuple(float(c) for c in self.cutoffs2))

    @property
    def n_cells(self) -> int:
        return (len(self.cutoffs1) + 1) * (len(self.cutoffs2) + 1)

    def is_z_convex(self) -> bool:
        return bool(np.all(np.diff(self.cutoffs1) > 0) and np.all(np.diff(self.cutoffs2) > 0))

    def describe(self) -> dict:
        return {"type": "product", "cutoffs1": list(self.cutoffs1), "cutoffs2": list(self.cutoffs2)}


@dataclass
class ContractSolution:
    """A monitoring technology together with its cost-minimising wages.

    ``schedules`` and ``duals`` hold one entry per agent.  Costs satisfy
    ``total_cost = incentive_cost + mu * monitoring_cost``.
    """

    partition: Any
    cells: list[CellSummary]
    schedules: tuple[WageSchedule, ...]
    duals: tuple[DualCertificate, ...]
    incentive_cost: float
    monitoring_cost: float
    mu: float
    total_cost: float = field(default=np.nan)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.schedules = tuple(self.schedules)
        self.duals = tuple(self.duals)
        self.total_cost = float(self.incentive_cost + self.mu * self.monitoring_cost)

    @property
    def masses(self) -> np.ndarray:
        return as_arrays(self.cells)[0]

    @property
    def zvalues(self) -> np.ndarray:
        return as_arrays(self.cells)[1]

    @property
    def wages(self) -> np.ndarray:
        """Wages per cell; shape (n_cells,) for one agent, (n_cells, agents) otherwise."""
        if len(self.schedules) == 1:
            return self.schedules[0].wages
        return np.column_stack([s.wages for s in self.schedules])

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def is_consistent(self, tol: float = 1e-9) -> bool:
        expected = sum(s.expected_wage for s in self.schedules)
        return (abs(expected - self.incentive_cost) <= tol * max(1.0, abs(expected))
                and abs(self.total_cost - self.incentive_cost - self.mu * self.monitoring_cost)
                <= tol * max(1.0, abs(self.total_cost)))

    def to_record(self) -> dict:
        rec = {
            "partition": self.partition.describe(),
            "masses": self.masses.tolist(),
            "zvalues": self.zvalues.tolist(),
            "wages": np.asarray(self.wages).tolist(),
            "multipliers": [d.lam.tolist() for d in self.duals],
            "incentive_cost": self.incentive_cost,
            "monitoring_cost": self.monitoring_cost,
            "mu": self.mu,
            "total_cost": self.total_cost,
        }
        diag = {k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, str, bool, list))}
        rec["diagnostics"] = diag
        return rec


def strict_mlrp_violations(z: Sequence[float], wages: Sequence[float], gap: float = GAP_TOL) -> list[str]:
    """Problems with the wage/score ordering of a solved single-score contract.

    Checks that, sorted by wage, scores strictly increase, wages are pairwise
    distinct and the lowest wage is zero.  Returns an empty list when fine.
    """
    z = np.asarray(z, float)
    w = np.asarray(wages, float)
    order = np.argsort(w, kind="stable")
    out = []
    if np.any(np.diff(z[order]) <= gap):
        out.append("scores not strictly increasing in wage")
    if np.any(np.diff(w[order]) <= gap):
        out.append("two cells share a wage")
    if w.size and abs(w[order[0]]) > gap:
        out.append("lowest wage is not zero")
    return out
