"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see lines as they
are produced; they are also repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

from contractq import (
    InfeasibleError,
    MonitoringCostSpec,
    MultiTaskEnvironment,
    ProductEnvironment,
    brute_force_bipartition_2d,
    brute_force_single,
    cara_utility,
    closed_form_cost_sqrt,
    discrete_grid_env,
    group_index_sweep,
    make_cells,
    normal_signal_env,
    optimize_bipartition,
    optimize_cutoffs_single,
    optimize_multitask,
    optimize_rating_scale,
    quantile_atoms,
    solve_channel,
    solve_ir_single,
    solve_ll_single,
    sqrt_utility,
    strict_mlrp_violations,
    uniform_z_env,
)
from contractq.oracle import DiscreteInstance

SQRT = sqrt_utility()
RATING = MonitoringCostSpec("rating-scale")
UNIF = uniform_z_env(-0.5, 0.5)
TASK_COSTS = {"11": 0.5, "01": 0.3, "10": 0.2, "00": 0.0}


def test_criterion_1_uniform_cutoffs(report):
    t0 = time.perf_counter()
    worst = 0.0
    for N in range(2, 7):
        sol = optimize_cutoffs_single(UNIF, SQRT, 1.0, N, RATING)
        expect = np.array([(2 * n - 1) / (4 * N - 2) for n in range(1, N)])
        got = np.asarray(sol.partition.cutoffs)
        worst = max(worst, float(np.abs(got - expect).max()) if got.size == expect.size else np.inf)
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-4 and elapsed < 5.0, f"max cutoff error {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_incentive_costs(report):
    two = make_cells([2 / 3, 1 / 3], [-1 / 6, 1 / 3])
    three = make_cells([3 / 5, 1 / 5, 1 / 5], [-1 / 5, 1 / 5, 2 / 5])
    closed = [closed_form_cost_sqrt(two, 1.0), closed_form_cost_sqrt(three, 1.0)]
    generic = [solve_ll_single(cells, 1.0, SQRT)[0].expected_wage for cells in (two, three)]
    ok = (abs(closed[0] - 27) <= 1e-9 and abs(closed[1] - 25) <= 1e-9
          and abs(generic[0] - 27) <= 1e-6 and abs(generic[1] - 25) <= 1e-6)
    report(2, ok, f"closed form {closed[0]:.12g}, {closed[1]:.12g}; multiplier solver "
                  f"{generic[0]:.10g}, {generic[1]:.10g}")


def test_criterion_3_comparative_statics(report):
    t0 = time.perf_counter()
    mus = np.logspace(-2, 1, 20)
    wages, entropies = [], []
    for mu in mus:
        _, sol = optimize_rating_scale(UNIF, SQRT, 1.0, MonitoringCostSpec("entropy", mu=float(mu), K=10))
        wages.append(sol.incentive_cost)
        entropies.append(sol.monitoring_cost)
    cache, stars = {}, []
    for mu in mus:
        n, _ = optimize_rating_scale(UNIF, SQRT, 1.0, MonitoringCostSpec("rating-scale", mu=float(mu)),
                                     cache=cache)
        stars.append(n)
    elapsed = time.perf_counter() - t0
    tol = 1e-7
    ok = (np.all(np.diff(wages) >= -tol) and np.all(np.diff(entropies) <= tol)
          and np.all(np.diff(stars) <= 0) and elapsed < 120)
    report(3, bool(ok), f"wage {wages[0]:.4f}->{wages[-1]:.4f}, entropy {entropies[0]:.3f}->"
                        f"{entropies[-1]:.3f} bits, N* {stars[0]}->{stars[-1]}, {elapsed:.1f} s")


def test_criterion_4_group_index(report):
    t0 = time.perf_counter()
    env2 = ProductEnvironment((UNIF, UNIF))
    mus = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 75.0, 100.0, 150.0, 200.0, 500.0]
    rows = group_index_sweep(env2, (SQRT, SQRT), (1.0, 1.0), RATING, mus)
    index = np.array([r[1] for r in rows])
    above = index >= 1.0
    crossings = int(np.count_nonzero(above[1:] != above[:-1]))
    large = all(i < 1.0 for mu, i in zip(mus, index) if mu >= 100)
    elapsed = time.perf_counter() - t0
    ok = index[0] >= 1.0 and large and crossings == 1 and elapsed < 300
    report(4, ok, f"I(0)={index[0]:.4f}, I(100)={index[mus.index(100.0)]:.4f}, "
                  f"{crossings} crossing(s), {elapsed:.1f} s")


def test_criterion_5_oracle_equivalence(report):
    t0 = time.perf_counter()
    atoms = quantile_atoms(UNIF, 12)
    gaps, shapes = [], []
    for N in (2, 3):
        inst = DiscreteInstance(atoms.z, atoms.p, N, SQRT, 1.0, RATING)
        oracle = brute_force_single(inst)
        sol = optimize_cutoffs_single(atoms, SQRT, 1.0, N, RATING)
        gaps.append(abs(sol.total_cost - oracle.cost) / oracle.cost)
        shapes.append(oracle.is_interval and oracle.shape_ok)
    grid = quantile_atoms(UNIF, 3)
    env2 = ProductEnvironment((grid, grid))
    oracle2 = brute_force_bipartition_2d(env2, (SQRT, SQRT), (1.0, 1.0), RATING)
    sol2 = optimize_bipartition(env2, (SQRT, SQRT), (1.0, 1.0), RATING)
    gaps.append(abs(sol2.total_cost - oracle2.cost) / oracle2.cost)
    shapes.append(oracle2.shape_ok)
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 1e-3 and all(shapes) and elapsed < 120
    report(5, ok, f"max relative gap {max(gaps):.2e}, winners shaped {all(shapes)}, {elapsed:.1f} s")


def _random_instance(rng, i):
    N = int(rng.integers(2, 6))
    kind = i % 3
    if kind == 0:
        w = rng.uniform(0.3, 2.0)
        env = uniform_z_env(-w / 2, w / 2)
    elif kind == 1:
        env = normal_signal_env(float(rng.uniform(0.2, 3.0)))
    else:
        m = int(rng.integers(N, 12))
        p = rng.dirichlet(np.ones(m))
        z = np.sort(rng.normal(size=m))
        z = z - p @ z
        env = discrete_grid_env(0.9 * z / z.max(), p)
    if rng.random() < 0.5:
        return env, SQRT, float(rng.uniform(0.2, 2.0)), N
    return env, cara_utility(float(rng.uniform(0.1, 1.0))), float(rng.uniform(0.005, 0.05)), N


def test_criterion_6_mlrp_and_distinct_wages(report):
    rng = np.random.default_rng(2024)
    solved, failures, i = 0, [], 0
    while solved < 100:
        env, u, c, N = _random_instance(rng, i)
        i += 1
        try:
            sol = optimize_cutoffs_single(env, u, c, N, RATING, seed=i)
        except InfeasibleError:
            continue
        solved += 1
        problems = strict_mlrp_violations([cell.z for cell in sol.cells], sol.schedules[0].wages)
        if problems:
            failures.append((i, problems))
    report(6, not failures, f"{solved} feasible instances, {len(failures)} with violations")


def test_criterion_7_multitask_direction(report):
    t0 = time.perf_counter()
    u = cara_utility(0.5)
    ratios, notes = [], []
    for s1 in (0.5, 1.0, 2.0):
        try:
            res = optimize_multitask(MultiTaskEnvironment((s1, 1.0), TASK_COSTS), u, RATING, N=2)
            ratios.append(res.R)
            notes.append(f"R({s1})={res.R:.4f} (angle {res.angle:.1e})")
        except InfeasibleError as exc:
            ratios.append(np.nan)
            notes.append(f"R({s1}) undefined ({exc})")
    sym = optimize_multitask(MultiTaskEnvironment((1.0, 1.0), {"11": 0.5, "01": 0.25, "10": 0.25, "00": 0.0}),
                             u, RATING, N=2)
    notes.append(f"symmetric R={sym.R:.4f}")
    elapsed = time.perf_counter() - t0
    increasing = bool(np.all(np.isfinite(ratios)) and np.all(np.diff(ratios) > 0))
    ok = increasing and abs(sym.R - 1.0) <= 0.05 and elapsed < 600
    report(7, ok, ", ".join(notes) + f", {elapsed:.0f} s")


def test_criterion_8_random_monitoring(report):
    t0 = time.perf_counter()
    z = np.linspace(-0.5, 0.5, 101)
    p = np.full(101, 1 / 101)
    sols = [solve_channel(z, p, SQRT, 1.0, mu, K) for mu, K in [(1e-4, 2), (0.1, 2), (1.0, 3), (10.0, 3)]]
    small = sols[0]
    close = abs(small.total_cost - 27.0) / 27.0 <= 0.05
    monotone = all(s.ratio_monotone() for s in sols)
    descent = all(np.all(np.diff(s.history) <= 1e-10 * max(1.0, abs(s.history[0]))) for s in sols)
    elapsed = time.perf_counter() - t0
    ok = close and monotone and descent and elapsed < 120
    report(8, ok, f"small-mu total {small.total_cost:.4f} vs 27, ratio monotone {monotone}, "
                  f"objective descending {descent}, {elapsed:.1f} s")


def test_criterion_9_participation(report):
    cells = make_cells([0.5, 0.5], [-0.3, 0.3])
    flat, _ = solve_ir_single(cells, 0.0, 2.0, SQRT)
    flat_ok = np.all(flat.wages == pytest.approx(4.0, abs=1e-12))
    c, ubar = 1.0, 4.0  # high enough that participation binds and both wages are interior
    sched, cert = solve_ir_single(cells, c, ubar, SQRT)
    lam, gam = cert.lam[0], cert.gamma_ir
    zv = np.array([-0.3, 0.3])
    w = sched.wages
    interior = w > 0
    foc = float(np.abs(1.0 / SQRT.du(w[interior]) - (lam * zv[interior] + gam)).max())
    L, G = np.meshgrid(np.linspace(0, 2 * lam + 1, 401), np.linspace(0, 2 * gam + 1, 401), indexing="ij")
    S = L[..., None] * zv + G[..., None]
    W = SQRT.wage_at(S)
    dual = (0.5 * (W - S * SQRT.u(W))).sum(axis=-1) + L * c + G * (c + ubar)
    i, j = np.unravel_index(np.argmax(dual), dual.shape)
    grid_ok = abs(L[i, j] - lam) <= 2 * (L[1, 0] - L[0, 0]) and abs(G[i, j] - gam) <= 2 * (G[0, 1] - G[0, 0])
    ok = bool(flat_ok) and interior.all() and gam > 0 and foc <= 1e-6 and grid_ok
    report(9, ok, f"flat wage {flat.wages[0]:.12g}, FOC residual {foc:.1e}, "
                  f"grid multipliers ({L[i, j]:.3f}, {G[i, j]:.3f}) vs ({lam:.3f}, {gam:.3f})")
