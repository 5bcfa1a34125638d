import numpy as np
import pytest

from contractq import (
    InfeasibleError,
    MonitoringCostSpec,
    ProductEnvironment,
    group_index_sweep,
    group_vs_individual_index,
    optimize_bipartition,
    optimize_individual,
    quantile_atoms,
    uniform_z_env,
)

RATING = MonitoringCostSpec("rating-scale")


@pytest.fixture(scope="module")
def env2():
    u = uniform_z_env(-0.5, 0.5)
    return ProductEnvironment((u, u))


@pytest.fixture(scope="module")
def bip(env2, sqrt_u):
    return optimize_bipartition(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING)


def test_bipartition_uses_both_agents(bip):
    n = np.asarray(bip.partition.normal)
    assert np.all(np.abs(n) > 1e-3)


def test_bipartition_corner_team(bip):
    # the best line cuts a corner of mass 9/32 with z = 1/4 for both agents
    assert bip.incentive_cost == pytest.approx(1024 / 9, rel=1e-6)
    assert bip.partition.tag == "team"
    assert sorted(bip.masses) == pytest.approx([9 / 32, 23 / 32], abs=1e-6)


def test_bipartition_swap_symmetry(env2, sqrt_u, bip):
    swapped = optimize_bipartition(env2.swapped(), (sqrt_u, sqrt_u), (1.0, 1.0), RATING)
    assert swapped.total_cost == pytest.approx(bip.total_cost, abs=1e-6)


def test_fixed_axis_normal_fails_for_other_agent(env2, sqrt_u):
    with pytest.raises(InfeasibleError, match="agent 2") as info:
        optimize_bipartition(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING, normal=(1.0, 0.0))
    assert info.value.agent == 1


def test_individual_two_by_two(env2, sqrt_u):
    sol = optimize_individual(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING)
    assert sol.partition.cutoffs1 == pytest.approx([1 / 6], abs=1e-4)
    assert sol.partition.cutoffs2 == pytest.approx([1 / 6], abs=1e-4)
    assert sol.incentive_cost == pytest.approx(54.0, abs=1e-6)
    assert sol.n_cells == 4


def test_individual_entropy_is_additive(env2, sqrt_u):
    sol = optimize_individual(env2, (sqrt_u, sqrt_u), (1.0, 1.0), MonitoringCostSpec("entropy", 0.0))
    assert sol.monitoring_cost == pytest.approx(2 * 0.9182958, abs=1e-6)


def test_individual_cell_budget(env2, sqrt_u):
    with pytest.raises(ValueError, match="cell budget exceeded"):
        optimize_individual(env2, (sqrt_u, sqrt_u), (1.0, 1.0), MonitoringCostSpec("rating-scale", K=3))


def test_index_endpoints(env2, sqrt_u):
    assert group_vs_individual_index(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING, mu=0.0) >= 1.0
    assert group_vs_individual_index(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING, mu=100.0) < 1.0


def test_index_sweep_closed_form(env2, sqrt_u):
    rows = group_index_sweep(env2, (sqrt_u, sqrt_u), (1.0, 1.0), RATING, [0.0, 50.0])
    for mu, idx, b, i in rows:
        assert idx == pytest.approx((1024 / 9 + 2 * mu) / (54 + 4 * mu), rel=1e-6)


def test_discrete_grid_lines(sqrt_u):
    g = quantile_atoms(uniform_z_env(-0.5, 0.5), 3)
    sol = optimize_bipartition(ProductEnvironment((g, g)), (sqrt_u, sqrt_u), (1.0, 1.0), RATING)
    assert sol.total_cost == pytest.approx(121.5, rel=1e-9)
    assert sol.diagnostics["search"] == "exhaustive-lines"
