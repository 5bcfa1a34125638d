"""Two-agent monitoring: one shared line versus separate per-agent scores."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .cells import CellSummary
from .env import EMPTY_MASS, ProductEnvironment, halfplane_moments, halfplane_raw
from .errors import InfeasibleError
from .monitoring import MonitoringCostSpec
from .single import optimize_cutoffs_single
from .solution import BiPartitionLine, ContractSolution, ProductPartition
from .utility import UtilitySpec
from .wages import incentive_cost, solve_ll_multiagent

log = logging.getLogger(__name__)

N_ANGLES = 64
N_OFFSETS = 32
INFORMATIVE_TOL = 1e-9
PENALTY = 1e300
TAIL_MASS = 1e-9


class LineProblem:
    """Total cost of the bi-partition cut by the line ``(cos th, sin th).z = t``."""

    def __init__(self, env2: ProductEnvironment, utils, costs, cost: MonitoringCostSpec):
        self.env2, self.utils, self.costs, self.cost = env2, tuple(utils), tuple(costs), cost
        self.ranges = []
        for e in env2.agents:
            if e.is_discrete:
                self.ranges.append((float(e.z[0]), float(e.z[-1])))
            else:
                lo, hi = e.quantile(np.array([TAIL_MASS, 1.0 - TAIL_MASS]))
                self.ranges.append((float(lo), float(hi)))

    def offset_range(self, theta):
        n = (np.cos(theta), np.sin(theta))
        lo = sum(min(a * r[0], a * r[1]) for a, r in zip(n, self.ranges))
        hi = sum(max(a * r[0], a * r[1]) for a, r in zip(n, self.ranges))
        return lo, hi

    def failing_agent(self, masses, z) -> Optional[int]:
        for i in range(2):
            if self.costs[i] > 0 and np.max(z[:, i]) <= INFORMATIVE_TOL:
                return i
        return None

    def total(self, theta, t) -> float:
        masses, firsts = halfplane_raw(self.env2, (np.cos(theta), np.sin(theta)), t)
        if np.any(masses <= EMPTY_MASS):
            return PENALTY
        z = firsts / masses[:, None]
        if self.failing_agent(masses, z) is not None:
            return PENALTY
        inc = 0.0
        for i in range(2):
            try:
                inc += incentive_cost(masses, z[:, i], self.costs[i], self.utils[i])
            except InfeasibleError:
                return PENALTY
        return inc + self.cost.mu * self.cost.raw(masses)

    def best_offset(self, theta, n_offsets=N_OFFSETS):
        lo, hi = self.offset_range(theta)
        grid = lo + (hi - lo) * (np.arange(n_offsets) + 0.5) / n_offsets
        vals = np.array([self.total(theta, t) for t in grid])
        k = int(np.argmin(vals))
        if vals[k] >= PENALTY:
            return PENALTY, grid[k]
        a = grid[k - 1] if k > 0 else lo
        b = grid[k + 1] if k + 1 < n_offsets else hi
        r = minimize_scalar(lambda t: self.total(theta, t), bounds=(a, b), method="bounded",
                            options={"xatol": 1e-12})
        if r.fun < vals[k]:
            return float(r.fun), float(r.x)
        return float(vals[k]), float(grid[k])


def _discrete_lines(env2: ProductEnvironment):
    """Every distinct half-plane split of a finite product grid, as (theta, t)."""
    z1, z2 = np.meshgrid(env2.agents[0].z, env2.agents[1].z, indexing="ij")
    pts = np.column_stack([z1.ravel(), z2.ravel()])
    # directions at which two atoms project equally; split between them
    crit = []
    for i in range(len(pts)):
        d = pts[i + 1:] - pts[i]
        crit.extend(np.mod(np.arctan2(d[:, 1], d[:, 0]) + np.pi / 2, np.pi))
    crit = np.unique(np.round(np.array(crit + [0.0]), 14))
    mids = np.concatenate([0.5 * (crit[:-1] + crit[1:]), [0.5 * (crit[-1] + crit[0] + np.pi)]])
    out = []
    for th in np.concatenate([mids, mids + np.pi]):
        proj = np.unique(pts @ np.array([np.cos(th), np.sin(th)]))
        out.extend((float(th), float(t)) for t in 0.5 * (proj[:-1] + proj[1:]))
    return out


def _classify(wages1, wages2) -> str:
    return "team" if int(np.argmax(wages1)) == int(np.argmax(wages2)) else "tournament"


def line_solution(env2, utils, costs, cost: MonitoringCostSpec, normal, offset,
                  diagnostics=None) -> ContractSolution:
    """Solve wages for the bi-partition cut by a given line."""
    cells = halfplane_moments(env2, (normal, offset))
    z = np.array([c.zvec for c in cells])
    for i in range(2):
        if costs[i] > 0 and np.max(z[:, i]) <= INFORMATIVE_TOL:
            raise InfeasibleError(f"agent {i + 1}: infeasible: no informative cell", agent=i)
    (s1, d1), (s2, d2) = solve_ll_multiagent(cells, costs, utils)
    masses = np.array([c.mass for c in cells])
    tag = _classify(s1.wages, s2.wages)
    return ContractSolution(
        partition=BiPartitionLine(tuple(normal), offset, tag),
        cells=cells,
        schedules=(s1, s2),
        duals=(d1, d2),
        incentive_cost=s1.expected_wage + s2.expected_wage,
        monitoring_cost=cost.raw(masses),
        mu=cost.mu,
        diagnostics=dict(diagnostics or {}),
    )


def optimize_bipartition(env2: ProductEnvironment, utils: Sequence[UtilitySpec], costs,
                         cost_spec: MonitoringCostSpec, *, n_angles: int = N_ANGLES,
                         normal=None) -> ContractSolution:
    """Cheapest two-cell contract whose cells are half-planes in ``(z1, z2)``.

    Continuous environments: a grid of ``n_angles`` directions, a coarse
    offset grid plus bounded line search per direction, then a simplex
    polish over (angle, offset).  Finite grids: every distinct split is
    evaluated.  Passing ``normal`` fixes the direction and searches offsets
    only.  The result is tagged "team" when both agents are paid in the same
    cell and "tournament" otherwise.
    """
    prob = LineProblem(env2, utils, costs, cost_spec)
    if normal is not None:
        theta = float(np.arctan2(normal[1], normal[0]))
        if np.hypot(*normal) == 0:
            raise ValueError("degenerate line")
        f, t = prob.best_offset(theta, n_offsets=4 * N_OFFSETS)
        if f >= PENALTY:
            lo, hi = prob.offset_range(theta)
            masses, firsts = halfplane_raw(env2, normal, 0.5 * (lo + hi))
            agent = prob.failing_agent(masses, firsts / np.maximum(masses, 1e-300)[:, None])
            agent = 0 if agent is None else agent
            raise InfeasibleError(f"agent {agent + 1}: infeasible: no informative cell", agent=agent)
        n = (np.cos(theta), np.sin(theta))
        return line_solution(env2, utils, costs, cost_spec, n, t, {"search": "fixed-normal"})

    if env2.is_discrete:
        cands = [(prob.total(th, t), th, t) for th, t in _discrete_lines(env2)]
        diag = {"search": "exhaustive-lines", "candidates": len(cands)}
    else:
        thetas = 2 * np.pi * np.arange(n_angles) / n_angles
        cands = []
        for th in thetas:
            f, t = prob.best_offset(th)
            cands.append((f, th, t))
        cands.sort(key=lambda r: r[0])
        polished = []
        for f, th, t in cands[:3]:
            if f >= PENALTY:
                continue
            step = np.pi / n_angles
            r = minimize(lambda x: prob.total(x[0], x[1]), [th, t], method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-13 * max(1.0, f), "maxiter": 2000,
                                  "initial_simplex": [[th, t], [th + step, t], [th, t + 0.02]]})
            polished.append((r.fun, r.x[0], r.x[1]) if r.fun < f else (f, th, t))
        cands = polished + cands
        diag = {"search": "angle-grid", "angles": n_angles}
    cands.sort(key=lambda r: r[0])
    f, th, t = cands[0]
    if f >= PENALTY:
        raise InfeasibleError("infeasible: no line motivates both agents")
    return line_solution(env2, utils, costs, cost_spec, (np.cos(th), np.sin(th)), t, diag)


def product_cells(sol1: ContractSolution, sol2: ContractSolution) -> list[CellSummary]:
    """Cells of the product partition; z-values factor by independence."""
    return [CellSummary(c1.mass * c2.mass, (c1.z, c2.z)) for c1 in sol1.cells for c2 in sol2.cells]


def optimize_individual(env2: ProductEnvironment, utils: Sequence[UtilitySpec], costs,
                        cost_spec: MonitoringCostSpec, Ns=(2, 2), *, n_starts: int = 16,
                        seed: int = 0) -> ContractSolution:
    """Best product of per-agent cutoff partitions with ``Ns`` cells each.

    Incentive costs separate by agent.  Entropy is additive over independent
    marginals and a rating-scale cost depends only on ``N1 * N2``, so both
    reduce to per-agent problems; custom costs are optimised jointly.
    """
    N1, N2 = Ns
    if N1 * N2 > cost_spec.K:
        raise ValueError("cell budget exceeded")
    if cost_spec.kind == "rating-scale":
        per_agent = cost_spec.with_mu(0.0).with_K(max(N1, N2, 2))
    elif cost_spec.kind == "entropy":
        per_agent = cost_spec.with_K(max(N1, N2, 2))
    else:
        per_agent = MonitoringCostSpec("rating-scale", 0.0, max(N1, N2, 2))
    sols = [optimize_cutoffs_single(env2.agents[i], utils[i], costs[i], Ns[i], per_agent,
                                    n_starts=n_starts, seed=seed) for i in range(2)]
    if cost_spec.kind == "custom" and cost_spec.mu > 0:
        sols = _joint_custom(env2, utils, costs, cost_spec, sols)
    cells = product_cells(*sols)
    (s1, d1), (s2, d2) = solve_ll_multiagent(cells, costs, utils)
    masses = np.array([c.mass for c in cells])
    return ContractSolution(
        partition=ProductPartition(sols[0].partition.cutoffs, sols[1].partition.cutoffs),
        cells=cells,
        schedules=(s1, s2),
        duals=(d1, d2),
        incentive_cost=s1.expected_wage + s2.expected_wage,
        monitoring_cost=cost_spec.raw(masses),
        mu=cost_spec.mu,
        diagnostics={"cells_per_agent": [sols[0].n_cells, sols[1].n_cells]},
    )


def _joint_custom(env2, utils, costs, cost_spec, sols):
    """Simplex search over both agents' cell masses for a non-separable cost."""
    from .single import CutoffProblem, solution_from_cutoffs

    free = MonitoringCostSpec("rating-scale", 0.0, cost_spec.K)
    probs = [CutoffProblem(env2.agents[i], utils[i], costs[i], sols[i].n_cells, free) for i in range(2)]
    sizes = [p.N - 1 for p in probs]

    def split(x):
        return x[:sizes[0]], x[sizes[0]:]

    def total(x):
        parts = []
        val = 0.0
        for p, xi in zip(probs, split(x)):
            q, m = p.q_of_x(xi)
            val += p.total(q)
            parts.append(m)
        return val + cost_spec.mu * cost_spec.raw(np.outer(*parts).ravel())

    x0 = np.concatenate([p.x_of_q(np.cumsum(s.masses)[:-1]) for p, s in zip(probs, sols)])
    r = minimize(total, x0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000})
    out = []
    for i, (p, xi) in enumerate(zip(probs, split(r.x))):
        cut = env2.agents[i].quantile(p.q_of_x(xi)[0])
        out.append(solution_from_cutoffs(env2.agents[i], utils[i], costs[i], free, cut))
    return out


def group_index_details(env2, utils, costs, cost_spec: MonitoringCostSpec, mu=None, **kw):
    """``(I, bipartition solution, individual solution)`` at monitoring weight ``mu``."""
    spec = cost_spec if mu is None else cost_spec.with_mu(mu)
    bip = optimize_bipartition(env2, utils, costs, spec)
    ind = optimize_individual(env2, utils, costs, spec, (2, 2), **kw)
    return bip.total_cost / ind.total_cost, bip, ind


def group_vs_individual_index(env2, utils, costs, cost_spec: MonitoringCostSpec, mu=None, **kw) -> float:
    """Cost of the best bi-partition relative to the best 2x2 individual contract.

    Values below 1 mean that evaluating the agents together on one line is
    cheaper than monitoring them separately.
    """
    return group_index_details(env2, utils, costs, cost_spec, mu, **kw)[0]


def group_index_sweep(env2, utils, costs, cost_spec: MonitoringCostSpec, mus, **kw):
    """Index ``I`` over a grid of ``mu``.

    Under a rating-scale cost neither optimal contract depends on ``mu``
    (every candidate has the same number of cells), so each is solved once.
    """
    if cost_spec.kind == "rating-scale":
        _, bip, ind = group_index_details(env2, utils, costs, cost_spec, 0.0, **kw)
        out = []
        for mu in mus:
            b = bip.incentive_cost + mu * cost_spec.f(bip.n_cells)
            i = ind.incentive_cost + mu * cost_spec.f(ind.n_cells)
            out.append((float(mu), b / i, b, i))
        return out
    out = []
    for mu in mus:
        idx, bip, ind = group_index_details(env2, utils, costs, cost_spec, mu, **kw)
        out.append((float(mu), idx, bip.total_cost, ind.total_cost))
    return out
