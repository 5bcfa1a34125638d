"""Randomised invariants of the wage programs, cost functions and solvers."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contractq import (
    Channel,
    InfeasibleError,
    MonitoringCostSpec,
    cara_utility,
    cells_from_cutoffs,
    discrete_grid_env,
    entropy_bits,
    make_cells,
    monitoring_cost,
    mutual_information,
    normal_signal_env,
    optimize_cutoffs_single,
    solve_ll_single,
    sqrt_utility,
    strict_mlrp_violations,
    uniform_z_env,
)

SQRT = sqrt_utility()
RATING = MonitoringCostSpec("rating-scale")


@st.composite
def cell_summaries(draw, min_cells=2, max_cells=6):
    """Masses and distinct z-values satisfying the zero-mean identity."""
    n = draw(st.integers(min_cells, max_cells))
    raw = draw(arrays(float, n, elements=st.floats(0.05, 1.0)))
    p = raw / raw.sum()
    z = draw(arrays(float, n, elements=st.floats(-1.0, 1.0), unique=True))
    z = z - p @ z
    assume(np.ptp(z) > 1e-3 and z.max() < 1.0)
    return p, z


@st.composite
def discrete_instances(draw):
    m = draw(st.integers(3, 10))
    raw = draw(arrays(float, m, elements=st.floats(0.05, 1.0)))
    p = raw / raw.sum()
    z = np.sort(draw(arrays(float, m, elements=st.floats(-2.0, 2.0), unique=True)))
    z = z - p @ z
    assume(np.min(np.diff(z)) > 1e-3)
    z = 0.9 * z / z.max()
    return discrete_grid_env(z, p)


# -- wage program ----------------------------------------------------------


@given(cell_summaries(), st.floats(0.1, 3.0))
def test_sqrt_wages_bind_and_order(cells, c):
    p, z = cells
    sched, cert = solve_ll_single(make_cells(p, z), c, SQRT)
    w = sched.wages
    assert abs(cert.ic_residuals[0]) < 1e-7 * max(1.0, c)
    assert np.all(w >= 0)
    assert np.all(w[z <= 0] == 0)
    order = np.argsort(z)
    assert np.all(np.diff(w[order]) >= -1e-9)


@given(cell_summaries(), st.floats(0.1, 3.0), st.floats(1.5, 4.0))
def test_sqrt_cost_scales_quadratically(cells, c, k):
    p, z = cells
    cl = make_cells(p, z)
    a = solve_ll_single(cl, c, SQRT)[0].expected_wage
    b = solve_ll_single(cl, k * c, SQRT)[0].expected_wage
    assert b == pytest.approx(k * k * a, rel=1e-8)


@given(cell_summaries(), st.floats(0.1, 2.0), st.floats(0.01, 0.3))
def test_cara_wages_bind_when_feasible(cells, gamma, c):
    p, z = cells
    u = cara_utility(gamma)
    try:
        sched, cert = solve_ll_single(make_cells(p, z), c, u)
    except InfeasibleError as exc:
        assert "utility bound" in str(exc)
        assert u.bound * (p @ np.maximum(z, 0)) <= c * (1 + 1e-9)
        return
    assert abs(cert.ic_residuals[0]) < 1e-7
    order = np.argsort(z)
    assert np.all(np.diff(sched.wages[order]) >= -1e-9)


# -- optimised partitions --------------------------------------------------


@settings(max_examples=30)
@given(discrete_instances(), st.integers(2, 4), st.sampled_from(["sqrt", "cara"]))
def test_optimised_discrete_partition_is_mlrp(env, N, ukind):
    assume(N <= env.z.size)
    u = SQRT if ukind == "sqrt" else cara_utility(0.5)
    c = 1.0 if ukind == "sqrt" else 0.05
    try:
        sol = optimize_cutoffs_single(env, u, c, N, RATING)
    except InfeasibleError:
        return
    z = [cell.z for cell in sol.cells]
    assert strict_mlrp_violations(z, sol.schedules[0].wages) == []


# -- environments ----------------------------------------------------------


@given(st.sampled_from(["uniform", "normal"]),
       arrays(float, st.integers(1, 5), elements=st.floats(0.02, 0.98), unique=True))
def test_partition_masses_and_means(kind, qs):
    env = uniform_z_env(-0.5, 0.5) if kind == "uniform" else normal_signal_env(1.0)
    q = np.sort(qs)
    assume(np.min(np.diff(np.concatenate([[0.0], q, [1.0]]))) > 1e-3)
    cells = cells_from_cutoffs(env, env.quantile(q))
    p = np.array([c.mass for c in cells])
    z = np.array([c.z for c in cells])
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert p @ z == pytest.approx(0.0, abs=1e-7)
    assert np.all(np.diff(z) > 0)


# -- monitoring cost -------------------------------------------------------


@given(arrays(float, st.integers(2, 8), elements=st.floats(0.01, 1.0)))
def test_entropy_merging_never_increases_cost(raw):
    p = raw / raw.sum()
    merged = np.concatenate([[p[0] + p[1]], p[2:]])
    assert entropy_bits(merged) <= entropy_bits(p) + 1e-12
    assert 0 <= entropy_bits(p) <= np.log2(p.size) + 1e-12


@given(arrays(float, st.integers(2, 8), elements=st.floats(0.01, 1.0)), st.floats(0, 50))
def test_rating_scale_cost_counts(raw, mu):
    p = raw / raw.sum()
    spec = MonitoringCostSpec("rating-scale", mu=mu)
    assert monitoring_cost(spec, p) == p.size
    assert monitoring_cost(spec, np.concatenate([p, [0.0]])) == p.size


# -- channels --------------------------------------------------------------


@given(st.integers(2, 4), st.integers(2, 7), st.integers(0, 10_000))
def test_mutual_information_bounds_and_relabelling(K, m, seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(K), size=m).T
    p = rng.dirichlet(np.ones(m))
    ch = Channel.from_matrix(np.arange(m), p, q)
    mi = mutual_information(ch)
    out = q @ p
    assert -1e-12 <= mi <= -(out * np.log(out)).sum() + 1e-12
    perm = rng.permutation(K)
    assert mutual_information(Channel.from_matrix(np.arange(m), p, q[perm])) == pytest.approx(mi, abs=1e-12)
