"""Single-score monitoring: optimal cutoffs and the choice of rating scale.

Cutoffs are searched in mass-quantile space: a vector ``q`` of cumulative
cell masses determines the cutoffs ``F^{-1}(q)``, so every proposal has
ordered cutoffs and positive cell masses.  Unconstrained searches use the
softmax reparametrisation ``masses = softmax([0, x])``.
"""

from __future__ import annotations

import itertools
import logging
from math import comb
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .env import ZEnvironment, cells_from_cutoffs
from .errors import InfeasibleError
from .monitoring import MonitoringCostSpec
from .solution import ContractSolution, CutoffPartition
from .utility import UtilitySpec
from .wages import _single_arrays, incentive_cost, single_ic_multiplier, solve_ll_single

log = logging.getLogger(__name__)

N_STARTS = 16
MASS_MARGIN = 1e-12
DEGENERATE_MASS = 1e-9
PENALTY = 1e300
MAX_INTERVAL_SPLITS = 5_000_000
COORDINATE_MAX_N = 8
COLLAPSE_MASS = 1e-10


class CutoffProblem:
    """Total cost of an N-cell cutoff partition as a function of ``q``."""

    def __init__(self, env: ZEnvironment, u: UtilitySpec, c: float, N: int, cost: MonitoringCostSpec):
        self.env, self.u, self.c, self.N, self.cost = env, u, float(c), N, cost
        self.mu = cost.mu
        self.total_first = float(env.partial_moments(-np.inf, np.inf)[1])
        self.evaluations = 0

    # -- parametrisations -------------------------------------------------
    @staticmethod
    def q_of_x(x):
        y = np.concatenate([[0.0], x])
        p = np.exp(y - y.max())
        p /= p.sum()
        return np.cumsum(p)[:-1], p

    @staticmethod
    def x_of_q(q):
        p = np.diff(np.concatenate([[0.0], q, [1.0]]))
        p = np.maximum(p, 1e-300)
        return np.log(p[1:] / p[0])

    def moments(self, q):
        edges = self.env.quantile(q)
        _, cum = self.env.partial_moments(-np.inf, edges)
        masses = np.diff(np.concatenate([[0.0], q, [1.0]]))
        firsts = np.diff(np.concatenate([[0.0], cum, [self.total_first]]))
        return masses, firsts, edges

    def _inner(self, masses, z):
        """Wages, multiplier and incentive cost for given cell summaries."""
        if self.u.kind == "sqrt":
            zp = np.maximum(z, 0.0)
            s = float(masses @ zp ** 2)
            if s <= 0:
                raise InfeasibleError("infeasible: no informative cell")
            lam = 2.0 * self.c / s
            v = 0.5 * lam * zp
            return v * v, lam, self.c * self.c / s
        w, lam = _single_arrays(masses, z, self.c, self.u)
        return w, lam, float(masses @ w)

    # -- objective --------------------------------------------------------
    def total(self, q) -> float:
        self.evaluations += 1
        masses, firsts, _ = self.moments(q)
        if np.any(masses <= MASS_MARGIN):
            return PENALTY
        try:
            inc = incentive_cost(masses, firsts / masses, self.c, self.u)
        except InfeasibleError:
            return PENALTY
        return inc + self.mu * self.cost.raw(masses)

    def value_and_grad_q(self, q):
        """Total cost and its derivative in each cumulative mass ``q_n``.

        Moving boundary ``n`` transfers the data at score ``e_n`` from cell
        ``n+1`` to cell ``n``; by the envelope theorem the Lagrangian changes
        by ``(w_n - w_{n+1}) - lam e_n (u_n - u_{n+1})`` plus the change in
        monitoring cost.
        """
        self.evaluations += 1
        masses, firsts, edges = self.moments(q)
        if np.any(masses <= MASS_MARGIN):
            return PENALTY, np.zeros_like(q)
        try:
            w, lam, inc = self._inner(masses, firsts / masses)
        except InfeasibleError:
            return PENALTY, np.zeros_like(q)
        v = self.u.u(w)
        g = (w[:-1] - w[1:]) - lam * edges * (v[:-1] - v[1:])
        val = inc
        if self.mu > 0 and self.cost.depends_on_masses:
            hg = self.cost.mass_gradient(masses)
            g = g + self.mu * (hg[:-1] - hg[1:])
        val += self.mu * self.cost.raw(masses)
        return val, g

    def value_and_grad_x(self, x):
        q, p = self.q_of_x(x)
        val, gq = self.value_and_grad_q(q)
        if val >= PENALTY:
            return val, np.zeros_like(x)
        tail = np.concatenate([np.cumsum(gq[::-1])[::-1], [0.0]])
        gy = p * (tail - gq @ q)
        return val, gy[1:]


# -- local searches -----------------------------------------------------------


def _coordinate_descent(prob: CutoffProblem, q, max_sweeps=200, tol=1e-14):
    """Cyclic bounded line searches over each cumulative mass in turn."""
    q = np.array(q, float)
    f = prob.total(q)
    for _ in range(max_sweeps):
        f_old = f
        for i in range(q.size):
            lo = (q[i - 1] if i > 0 else 0.0) + 10 * MASS_MARGIN
            hi = (q[i + 1] if i + 1 < q.size else 1.0) - 10 * MASS_MARGIN
            if hi <= lo:
                continue

            def line(t, i=i):
                trial = q.copy()
                trial[i] = t
                return prob.total(trial)

            r = minimize_scalar(line, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if r.fun < f:
                q[i], f = r.x, r.fun
        if f_old - f <= tol * max(1.0, abs(f)):
            break
    return q, f


def _simplex_polish(prob: CutoffProblem, q):
    x0 = prob.x_of_q(q)
    f0 = prob.total(q)
    r = minimize(lambda x: prob.total(prob.q_of_x(x)[0]), x0, method="Nelder-Mead",
                 options={"xatol": 1e-9, "fatol": 1e-13 * max(1.0, abs(f0)),
                          "maxiter": 400 * x0.size, "adaptive": x0.size > 3})
    if r.fun < f0:
        return prob.q_of_x(r.x)[0], float(r.fun)
    return q, f0


def _min_mass(q) -> float:
    return float(np.min(np.diff(np.concatenate([[0.0], q, [1.0]]))))


def _gradient_search(prob: CutoffProblem, q):
    def stop_if_collapsing(xk):
        # a vanishing cell means this N-cell problem reduces to a smaller one
        if _min_mass(prob.q_of_x(xk)[0]) < COLLAPSE_MASS:
            raise StopIteration

    x0 = prob.x_of_q(q)
    r = minimize(prob.value_and_grad_x, x0, jac=True, method="BFGS",
                 callback=stop_if_collapsing, options={"gtol": 1e-11, "maxiter": 5000})
    return prob.q_of_x(r.x)[0], float(r.fun)


def _starts(N, n_starts, seed, extra=()):
    rng = np.random.default_rng(seed)
    out = [np.cumsum(np.full(N, 1.0 / N))[:-1]]
    for _ in range(n_starts - 1):
        out.append(np.cumsum(rng.dirichlet(np.ones(N)))[:-1])
    out.extend(np.asarray(e, float) for e in extra)
    return out


def _escape_plateau(prob: CutoffProblem, q, f, local):
    """Move cutoffs stranded among zero-wage cells to where they pay.

    Several zero-wage cells form a flat region of the objective that local
    searches cannot leave; merge them, split the largest paying cell instead
    and search again while this lowers the cost.
    """
    for _ in range(prob.N):
        masses, firsts, _ = prob.moments(q)
        try:
            w, _, _ = prob._inner(masses, firsts / masses)
        except InfeasibleError:
            break
        k = int(np.count_nonzero(w == 0))
        if k <= 1:
            break
        p = np.concatenate([[masses[:k].sum()], masses[k:]])
        while p.size < prob.N:
            j = 1 + int(np.argmax(p[1:])) if p.size > 1 else 0
            p = np.insert(p, j, p[j] / 2)
            p[j + 1] /= 2
        q2, f2 = local(prob, np.cumsum(p)[:-1])
        if not f2 < f - 1e-13 * max(1.0, abs(f)):
            break
        q, f = q2, f2
    return q, f


def _search_continuous(prob: CutoffProblem, n_starts, seed, method, extra_starts=()):
    if method == "auto":
        local, polish = _gradient_search, prob.N <= COORDINATE_MAX_N
    elif method == "gradient":
        local, polish = _gradient_search, False
    elif method == "coordinate":
        local, polish = _coordinate_descent, True
    else:
        raise ValueError(f"unknown search method {method!r}")
    found = []
    for q0 in _starts(prob.N, n_starts, seed, extra_starts):
        q, f = local(prob, q0)
        q, f = _escape_plateau(prob, q, f, local)
        found.append((f, q))
    # collapsed runs approximate a smaller partition, searched separately
    found.sort(key=lambda t: (_min_mass(t[1]) < DEGENERATE_MASS, t[0]))
    collapsed = sum(_min_mass(q) < DEGENERATE_MASS for _, q in found)
    distinct = []
    for f, q in found:
        if all(np.max(np.abs(q - d[1])) > 1e-7 for d in distinct):
            distinct.append((f, q))
        if len(distinct) == 3:
            break
    polished = []
    for f, q in distinct:
        if polish and _min_mass(q) >= DEGENERATE_MASS:
            q, f = _simplex_polish(prob, q)
            q, f = _coordinate_descent(prob, q, max_sweeps=20)
        polished.append((f, q))
    polished.sort(key=lambda t: (_min_mass(t[1]) < DEGENERATE_MASS, t[0]))
    f, q = polished[0]
    return q, f, {"method": method, "starts": len(found), "collapsed_starts": collapsed,
                  "evaluations": prob.evaluations}


def _search_discrete(env, u, c, N, cost: MonitoringCostSpec):
    """Exhaustive search over contiguous (interval) splits of the atoms."""
    m = env.z.size
    if N > m:
        raise InfeasibleError("more cells than atoms")
    n_splits = comb(m - 1, N - 1)
    if n_splits > MAX_INTERVAL_SPLITS:
        raise ValueError("instance too large for exhaustive interval search")
    cp = np.concatenate([[0.0], np.cumsum(env.p)])
    cf = np.concatenate([[0.0], np.cumsum(env.p * env.z)])
    splits = np.array(list(itertools.combinations(range(1, m), N - 1)), dtype=int).reshape(-1, N - 1)
    edges = np.hstack([np.zeros((len(splits), 1), int), splits, np.full((len(splits), 1), m)])
    masses = cp[edges[:, 1:]] - cp[edges[:, :-1]]
    firsts = cf[edges[:, 1:]] - cf[edges[:, :-1]]
    z = firsts / masses
    if u.kind == "sqrt":
        s = np.sum(masses * np.maximum(z, 0.0) ** 2, axis=1)
        with np.errstate(divide="ignore"):
            inc = np.where(s > 0, c * c / s, np.inf)
    else:
        inc = np.full(len(splits), np.inf)
        for k in range(len(splits)):
            try:
                inc[k] = incentive_cost(masses[k], z[k], c, u)
            except InfeasibleError:
                pass
    if cost.mu > 0:
        if cost.kind == "entropy":
            mon = -np.sum(masses * np.log2(masses), axis=1)
        else:
            mon = np.array([cost.raw(mm) for mm in masses])
        tot = inc + cost.mu * mon
    else:
        tot = inc
    if not np.any(np.isfinite(tot)):
        raise _infeasible(env, u, c)
    best = int(np.argmin(tot))
    cut_idx = splits[best]
    cutoffs = 0.5 * (env.z[cut_idx - 1] + env.z[cut_idx])
    return cutoffs, float(tot[best]), {"method": "interval-enumeration", "candidates": int(n_splits)}


# -- public API ---------------------------------------------------------------


def solution_from_cutoffs(env, u, c, cost: MonitoringCostSpec, cutoffs, diagnostics=None,
                          merge=True) -> ContractSolution:
    """Solve wages on the cells cut at ``cutoffs`` and assemble a solution.

    Adjacent zero-wage cells are merged: they carry no incentive and merging
    never raises the monitoring cost.
    """
    cutoffs = np.sort(np.asarray(cutoffs, float))
    cells = cells_from_cutoffs(env, cutoffs)
    sched, dual = solve_ll_single(cells, c, u)
    diagnostics = dict(diagnostics or {})
    zero = np.flatnonzero(sched.wages == 0)
    if merge and zero.size > 1:
        diagnostics["merged_cells"] = int(zero.size - 1)
        log.info("merging %d zero-wage cells", zero.size)
        cutoffs = np.delete(cutoffs, zero[:-1])
        cells = cells_from_cutoffs(env, cutoffs)
        sched, dual = solve_ll_single(cells, c, u)
    masses = np.array([cl.mass for cl in cells])
    return ContractSolution(
        partition=CutoffPartition(tuple(cutoffs)),
        cells=cells,
        schedules=(sched,),
        duals=(dual,),
        incentive_cost=sched.expected_wage,
        monitoring_cost=cost.raw(masses),
        mu=cost.mu,
        diagnostics=diagnostics,
    )


def _infeasible(env, u, c) -> InfeasibleError:
    """Explain why no partition works: either a bounded utility caps the
    reward gap below ``c`` even with full information, or no cell is informative."""
    _, first_pos = env.partial_moments(0.0, np.inf)
    cap = u.bound * float(first_pos)
    if np.isfinite(cap) and cap <= c:
        return InfeasibleError("infeasible: utility bound", certificate={"cap": cap, "c": c})
    return InfeasibleError("infeasible: no informative cell")


def optimize_cutoffs_single(env: ZEnvironment, u: UtilitySpec, c: float, N: int,
                            cost_spec: MonitoringCostSpec, *, n_starts: int = N_STARTS,
                            seed: int = 0, method: str = "auto",
                            extra_starts=()) -> ContractSolution:
    """Best ``N``-cell cutoff partition of the score ``Z``.

    Minimises incentive cost plus ``mu`` times monitoring cost.  Continuous
    environments use a multistart local search (``method`` is
    ``"coordinate"``: bounded line searches per cutoff followed by a simplex
    polish, or ``"gradient"``: quasi-Newton steps on the exact envelope
    gradient; ``"auto"`` picks by ``N``).  Discrete environments enumerate
    every interval split exactly.  ``extra_starts`` are additional starting
    points given as cumulative masses.
    """
    if N < 2:
        raise InfeasibleError("no incentive possible")
    if N > cost_spec.K:
        raise ValueError("cell budget exceeded")
    if env.is_discrete:
        cutoffs, _, diag = _search_discrete(env, u, c, N, cost_spec)
    else:
        prob = CutoffProblem(env, u, c, N, cost_spec)
        q, f, diag = _search_continuous(prob, n_starts, seed, method, extra_starts)
        if f >= PENALTY:
            raise _infeasible(env, u, c)
        cutoffs = env.quantile(q)
        diag["min_mass"] = _min_mass(q)
    diag["requested_cells"] = N
    return solution_from_cutoffs(env, u, c, cost_spec, cutoffs, diag)


def full_information_cost(env: ZEnvironment, u: UtilitySpec, c: float) -> float:
    """Incentive cost when wages may depend on ``Z`` itself.

    A lower bound on the incentive cost of every partition; used to prune
    the rating-scale search.
    """
    if env.is_discrete:
        z, p = env.z, env.p
    else:
        z, p = env.nodes(breaks=(0.0,))
    if c == 0:
        return 0.0
    lam = single_ic_multiplier(p, z, c, u)
    return float(p @ u.wage_at(lam * z))


def _split_largest(q):
    """Cumulative masses with the largest cell halved, as an extra start."""
    p = np.diff(np.concatenate([[0.0], q, [1.0]]))
    k = int(np.argmax(p))
    p = np.insert(p, k, p[k] / 2)
    p[k + 1] /= 2
    return np.cumsum(p)[:-1]


def incentive_curve(env, u, c, Ns, *, n_starts=N_STARTS, seed=0, method="auto", K=None):
    """Incentive-only optimum for each cell count in ``Ns`` (free monitoring)."""
    Ns = sorted(Ns)
    zero = MonitoringCostSpec("rating-scale", 0.0, K or max(max(Ns), 2))
    out = {}
    prev = None
    for N in Ns:
        extra = [_split_largest(prev)] if prev is not None and prev.size == N - 2 else []
        sol = optimize_cutoffs_single(env, u, c, N, zero, n_starts=n_starts, seed=seed,
                                      method=method, extra_starts=extra)
        out[N] = sol
        if not env.is_discrete and sol.n_cells == N:
            prev = np.cumsum(sol.masses)[:-1]
    return out


def optimize_rating_scale(env: ZEnvironment, u: UtilitySpec, c: float,
                          cost_spec: MonitoringCostSpec, *, n_starts: int = N_STARTS,
                          seed: int = 0, method: str = "auto", cache: Optional[dict] = None,
                          patience: Optional[int] = None):
    """Optimal number of categories ``N*`` and the matching contract.

    For rating-scale costs the incentive-only optimum ``W_N`` is computed per
    ``N`` (reusable across ``mu`` through ``cache``) and ``N`` minimising
    ``W_N + mu f(N)`` is chosen.  Other costs optimise cutoffs separately for
    every ``N = 2..K``.  Ties go to the smaller ``N``; solutions with a cell
    of mass below 1e-9 are skipped.  ``patience`` optionally stops the
    enumeration after that many consecutive ``N`` fail to improve.
    """
    K = cost_spec.K
    top = min(K, env.z.size) if env.is_discrete else K
    Ns = range(2, top + 1)
    mu = cost_spec.mu
    best, best_key = None, None
    tried = []

    def consider(sol):
        nonlocal best, best_key
        if float(np.min(sol.masses)) < DEGENERATE_MASS:
            return False
        key = sol.total_cost
        tol = 1e-9 * max(1.0, abs(key))
        if best is None or key < best_key - tol or (abs(key - best_key) <= tol and sol.n_cells < best.n_cells):
            best, best_key = sol, key
            return True
        return False

    if cost_spec.kind == "rating-scale":
        cache = {} if cache is None else cache
        floor = full_information_cost(env, u, c) if mu > 0 else -np.inf
        for N in Ns:
            if best is not None and floor + mu * cost_spec.f(N) >= best_key:
                break
            if N not in cache:
                extra = []
                prevsol = cache.get(N - 1)
                if prevsol is not None and not env.is_discrete and prevsol.n_cells == N - 1:
                    extra = [_split_largest(np.cumsum(prevsol.masses)[:-1])]
                cache[N] = optimize_cutoffs_single(env, u, c, N, cost_spec.with_mu(0.0),
                                                   n_starts=n_starts, seed=seed, method=method,
                                                   extra_starts=extra)
            base = cache[N]
            sol = ContractSolution(base.partition, base.cells, base.schedules, base.duals,
                                   base.incentive_cost, cost_spec.f(base.n_cells), mu,
                                   diagnostics=dict(base.diagnostics))
            consider(sol)
            tried.append((N, sol.total_cost))
    else:
        prev, stale = None, 0
        for N in Ns:
            extra = []
            if prev is not None and not env.is_discrete and prev.n_cells == N - 1:
                extra = [_split_largest(np.cumsum(prev.masses)[:-1])]
            sol = optimize_cutoffs_single(env, u, c, N, cost_spec, n_starts=n_starts,
                                          seed=seed, method=method, extra_starts=extra)
            tried.append((N, sol.total_cost))
            improved = consider(sol)
            prev = sol
            stale = 0 if improved else stale + 1
            if patience is not None and stale >= patience:
                break
    if best is None:
        raise InfeasibleError("no nondegenerate partition found")
    best.diagnostics["totals_by_N"] = [[n, t] for n, t in tried]
    return best.n_cells, best
