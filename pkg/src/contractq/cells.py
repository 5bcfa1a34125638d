"""Per-category summaries consumed by every wage solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyCellError

MASS_TOL = 1e-9
MEAN_TOL = 1e-6


@dataclass(frozen=True)
class CellSummary:
    """Probability mass of a category and its conditional z-values.

    ``zvec`` has one entry per incentive constraint: a single entry for the
    baseline agent, two for the two-agent model, three for multi-task.
    """

    mass: float
    zvec: tuple[float, ...]

    def __post_init__(self):
        if not self.mass > 0:
            raise EmptyCellError()
        object.__setattr__(self, "mass", float(self.mass))
        z = np.atleast_1d(np.asarray(self.zvec, dtype=float))
        object.__setattr__(self, "zvec", tuple(float(v) for v in z))

    @property
    def z(self) -> float:
        """Scalar z-value; only meaningful for one-constraint cells."""
        return self.zvec[0]


def make_cells(masses, zvals) -> list[CellSummary]:
    """Build summaries from parallel arrays; ``zvals`` may be (n,) or (n, d)."""
    masses = np.asarray(masses, dtype=float)
    zvals = np.asarray(zvals, dtype=float)
    if zvals.ndim == 1:
        zvals = zvals[:, None]
    return [CellSummary(m, tuple(z)) for m, z in zip(masses, zvals)]


def as_arrays(cells: Sequence[CellSummary]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(pi, Z)`` with ``Z`` of shape (n_cells, n_constraints)."""
    if len(cells) == 0:
        raise ValueError("no cells")
    pi = np.array([c.mass for c in cells])
    dims = {len(c.zvec) for c in cells}
    if len(dims) != 1:
        raise ValueError("cells have inconsistent z-vector lengths")
    Z = np.array([c.zvec for c in cells])
    return pi, Z


def check_cells(cells: Sequence[CellSummary], mass_tol=MASS_TOL, mean_tol=MEAN_TOL):
    """Validate that masses sum to one and the z-values are mean-zero."""
    pi, Z = as_arrays(cells)
    if abs(pi.sum() - 1.0) > mass_tol:
        raise ValueError(f"cell masses sum to {pi.sum():.12g}, expected 1")
    mean = pi @ Z
    if np.max(np.abs(mean)) > mean_tol:
        raise ValueError(f"mass-weighted z-values sum to {mean}, expected 0")
