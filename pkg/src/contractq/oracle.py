"""Exhaustive search on tiny discrete instances.

Used to certify the optimizers: every grouping of atoms into categories is
priced and the cheapest is returned, together with a check of its shape
(contiguous in z for one agent, cut by a line for two agents).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .cells import make_cells
from .env import ProductEnvironment
from .errors import InfeasibleError
from .monitoring import MonitoringCostSpec
from .solution import strict_mlrp_violations
from .utility import UtilitySpec
from .wages import solve_ll_multiagent, solve_ll_single

MAX_ATOMS = 14
MAX_CATEGORIES = 3
MAX_GRID = 3
CHUNK = 1 << 18
TIE_RTOL = 1e-12
BISECTION_STEPS = 120


@dataclass
class DiscreteInstance:
    """Atoms ``(z_i, p_i)`` under the target action plus the contracting data."""

    z: np.ndarray
    p: np.ndarray
    N: int
    u: UtilitySpec
    c: float
    cost: MonitoringCostSpec

    def __post_init__(self):
        self.z = np.asarray(self.z, float)
        self.p = np.asarray(self.p, float)
        if self.z.shape != self.p.shape or self.z.ndim != 1:
            raise ValueError("z and p must be matching 1-d arrays")
        if np.any(self.p <= 0) or abs(self.p.sum() - 1.0) > 1e-9:
            raise ValueError("atom masses must be positive and sum to 1")
        if abs(self.p @ self.z) > 1e-9:
            raise ValueError("nonzero mean: E[Z | high effort] must be 0")
        if self.z.size > MAX_ATOMS or not 1 <= self.N <= MAX_CATEGORIES:
            raise ValueError(f"instance too large: need m <= {MAX_ATOMS} atoms and N <= {MAX_CATEGORIES}")
        if self.N > self.z.size:
            raise ValueError("instance too large: more categories than atoms")

    @property
    def m(self) -> int:
        return self.z.size


@dataclass
class OracleResult:
    """Cheapest assignment found by enumeration.

    ``assignment[i]`` is the category of atom ``i``; categories are numbered
    by increasing conditional z (first coordinate for two agents).  ``index``
    is the winner's position in the deterministic enumeration order.
    """

    assignment: np.ndarray
    cost: float
    shape_ok: bool
    wages: np.ndarray
    masses: np.ndarray
    zvalues: np.ndarray
    index: int
    evaluated: int
    feasible: int
    details: dict = field(default_factory=dict)

    @property
    def is_interval(self) -> bool:
        return self.shape_ok

    @property
    def is_halfplane_consistent(self) -> bool:
        return self.shape_ok


# --------------------------------------------------------------------------
# enumeration


def set_partitions(m: int, N: int, chunk: int = CHUNK):
    """Yield blocks of restricted growth strings with exactly ``N`` labels.

    Each set partition of ``m`` atoms into ``N`` nonempty groups appears
    once, in lexicographic order; blocks are ``(k, m)`` int8 arrays.
    """
    if m == 0 or N > m:
        return
    total = N ** (m - 1)
    weights = N ** np.arange(m - 2, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = np.zeros((idx.size, m), dtype=np.int8)
        digits[:, 1:] = (idx[:, None] // weights) % N
        # restricted growth: each label is at most one above the running maximum
        run = np.maximum.accumulate(digits, axis=1)
        ok = np.all(digits[:, 1:] <= run[:, :-1] + 1, axis=1) & (run[:, -1] == N - 1)
        if np.any(ok):
            yield digits[ok]


def _label_moments(labels, p, Z, N):
    """Cell masses (k, N) and first moments (k, N, d) for a block of labelings."""
    onehot = labels[:, :, None] == np.arange(N)[None, None, :]
    masses = np.einsum("kin,i->kn", onehot, p)
    firsts = np.einsum("kin,i,id->knd", onehot, p, Z)
    return masses, firsts


def batch_incentive_cost(masses, z, c, u: UtilitySpec) -> np.ndarray:
    """Single-constraint minimal expected wage for many cell lists at once.

    Rows with no informative cell, or beyond the utility bound, get ``inf``.
    """
    masses = np.asarray(masses, float)
    z = np.asarray(z, float)
    zp = np.maximum(z, 0.0)
    if c == 0:
        return np.zeros(masses.shape[0])
    if u.kind == "sqrt":
        s = np.sum(masses * zp ** 2, axis=1)
        with np.errstate(divide="ignore"):
            return np.where(s > 0, c * c / s, np.inf)
    reach = np.sum(masses * zp, axis=1) * u.bound if np.isfinite(u.bound) else np.full(masses.shape[0], np.inf)
    ok = (reach > c) & np.any(zp > 0, axis=1)
    lo = np.full(masses.shape[0], np.log(1e-12))
    hi = np.full(masses.shape[0], np.log(1e12))
    # grow the upper end where the constraint is still slack
    for _ in range(60):
        lhs = np.sum(masses * z * u.utility_at(np.exp(hi)[:, None] * z), axis=1)
        short = ok & (lhs < c)
        if not np.any(short):
            break
        hi = np.where(short, hi + np.log(10.0), hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        lhs = np.sum(masses * z * u.utility_at(np.exp(mid)[:, None] * z), axis=1)
        up = lhs >= c
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    cost = np.sum(masses * u.wage_at(np.exp(hi)[:, None] * z), axis=1)
    return np.where(ok, cost, np.inf)


def batch_monitoring_cost(spec: MonitoringCostSpec, masses) -> np.ndarray:
    masses = np.asarray(masses, float)
    if spec.kind == "rating-scale":
        return np.array([spec.f(int(n)) for n in np.count_nonzero(masses > 0, axis=1)])
    if spec.kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(masses > 0, -masses * np.log2(masses), 0.0)
        return t.sum(axis=1)
    return np.array([spec.raw(row) for row in masses])


def _canonical_order(labels, zmean):
    """Relabel so categories are numbered by increasing ``zmean``."""
    order = np.argsort(zmean, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[labels], order


def is_interval_assignment(z, labels) -> bool:
    """True when each category is a contiguous run of atoms in z order."""
    z = np.asarray(z, float)
    labels = np.asarray(labels)
    cats = np.unique(labels)
    spans = sorted((z[labels == k].min(), z[labels == k].max()) for k in cats)
    return all(spans[i][1] <= spans[i + 1][0] for i in range(len(spans) - 1))


def brute_force_single(inst: DiscreteInstance) -> OracleResult:
    """Cheapest grouping of atoms into exactly ``N`` categories.

    Enumerates all set partitions (Stirling-number many).  ``shape_ok``
    (alias ``is_interval``) is true when some cost-minimising grouping is
    contiguous in z.
    """
    Z = inst.z[:, None]
    best = np.inf
    winners = []
    evaluated = feasible = 0
    offset = 0
    for labels in set_partitions(inst.m, inst.N):
        masses, firsts = _label_moments(labels, inst.p, Z, inst.N)
        z = firsts[:, :, 0] / masses
        total = batch_incentive_cost(masses, z, inst.c, inst.u)
        fin = np.isfinite(total)
        if inst.cost.mu:
            total = total + inst.cost.mu * batch_monitoring_cost(inst.cost, masses)
        evaluated += labels.shape[0]
        feasible += int(np.count_nonzero(fin))
        if np.any(fin):
            k = int(np.argmin(total))
            if total[k] < best * (1 - TIE_RTOL):
                best = float(total[k])
                winners = []
            tied = np.flatnonzero(total <= best * (1 + TIE_RTOL))
            winners.extend((offset + int(i), labels[i].copy()) for i in tied)
        offset += labels.shape[0]
    if not np.isfinite(best):
        raise InfeasibleError("infeasible: every assignment lacks an informative cell",
                              certificate={"evaluated": evaluated})
    shapes = [is_interval_assignment(inst.z, lab) for _, lab in winners]
    pick = next((i for i, s in enumerate(shapes) if s), 0)
    index, labels = winners[pick]
    masses, firsts = _label_moments(labels[None, :], inst.p, Z, inst.N)
    zmean = firsts[0, :, 0] / masses[0]
    labels, order = _canonical_order(labels, zmean)
    cells = make_cells(masses[0][order], zmean[order])
    sched, _ = solve_ll_single(cells, inst.c, inst.u)
    cost = sched.expected_wage + inst.cost.mu * inst.cost.raw(masses[0])
    return OracleResult(
        assignment=labels, cost=float(cost), shape_ok=bool(shapes[pick]), wages=sched.wages,
        masses=masses[0][order], zvalues=zmean[order], index=index, evaluated=evaluated,
        feasible=feasible,
        details={"ties": len(winners), "mlrp": strict_mlrp_violations(zmean[order], sched.wages)},
    )


# --------------------------------------------------------------------------
# two agents


def grid_points(env2: ProductEnvironment):
    """Atoms ``(z1, z2)`` and masses of a finite product grid, agent-1-major."""
    if not env2.is_discrete:
        raise ValueError("the two-agent oracle needs discrete agents")
    e1, e2 = env2.agents
    if e1.z.size > MAX_GRID or e2.z.size > MAX_GRID:
        raise ValueError(f"instance too large: grid must be at most {MAX_GRID}x{MAX_GRID}")
    z1, z2 = np.meshgrid(e1.z, e2.z, indexing="ij")
    pts = np.column_stack([z1.ravel(), z2.ravel()])
    return pts, np.outer(e1.p, e2.p).ravel()


def linearly_separable(a, b) -> bool:
    """Whether two finite point sets in the plane are strictly separated by a line."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    # find (n, t) with n.x - t >= 1 on a and <= -1 on b
    A_ub = np.vstack([np.hstack([-a, np.ones((len(a), 1))]), np.hstack([b, -np.ones((len(b), 1))])])
    res = linprog(np.zeros(3), A_ub=A_ub, b_ub=-np.ones(len(a) + len(b)),
                  bounds=[(None, None)] * 3, method="highs")
    return res.status == 0


def brute_force_bipartition_2d(env2: ProductEnvironment, utils: Sequence[UtilitySpec], costs,
                               cost_spec: MonitoringCostSpec) -> OracleResult:
    """Cheapest two-cell grouping of a product grid, over all ``2^m - 2`` labelings.

    ``shape_ok`` (alias ``is_halfplane_consistent``) reports whether the
    winner's two atom sets are separated by a line.
    """
    pts, p = grid_points(env2)
    m = len(pts)
    idx = np.arange(1, 2 ** m - 1)
    labels = ((idx[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)
    masses, firsts = _label_moments(labels, p, pts, 2)
    z = firsts / masses[:, :, None]
    total = np.zeros(len(idx))
    for i in range(2):
        total += batch_incentive_cost(masses, z[:, :, i], costs[i], utils[i])
    feasible = np.isfinite(total)
    if cost_spec.mu:
        total = total + cost_spec.mu * batch_monitoring_cost(cost_spec, masses)
    if not np.any(feasible):
        raise InfeasibleError("infeasible: no bipartition motivates both agents")
    best = float(np.min(total))
    tied = np.flatnonzero(total <= best * (1 + TIE_RTOL))
    seps = [linearly_separable(pts[labels[k] == 1], pts[labels[k] == 0]) for k in tied]
    pick = int(tied[next((j for j, s in enumerate(seps) if s), 0)])
    lab = labels[pick]
    zmean = z[pick]
    lab, order = _canonical_order(lab, zmean[:, 0])
    cells = make_cells(masses[pick][order], zmean[order])
    (s1, _), (s2, _) = solve_ll_multiagent(cells, costs, utils)
    cost = s1.expected_wage + s2.expected_wage + cost_spec.mu * cost_spec.raw(masses[pick])
    return OracleResult(
        assignment=lab, cost=float(cost), shape_ok=bool(seps[list(tied).index(pick)]),
        wages=np.column_stack([s1.wages, s2.wages]), masses=masses[pick][order],
        zvalues=zmean[order], index=pick, evaluated=len(idx), feasible=int(np.count_nonzero(feasible)),
        details={"ties": len(tied), "separable_ties": int(sum(seps))},
    )
