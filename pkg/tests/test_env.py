import numpy as np
import pytest

from contractq import (
    EmptyCellError,
    MultiTaskEnvironment,
    ProductEnvironment,
    cell_moments,
    cells_from_cutoffs,
    discrete_grid_env,
    halfplane_moments,
    normal_signal_env,
    quantile_atoms,
    uniform_z_env,
    zlambda_moments,
)
from contractq.env import halfplane_raw, validate_weights


def test_uniform_valid_and_symmetric():
    assert uniform_z_env(-1, 1).support == (-1.0, 1.0)
    env = uniform_z_env(-0.5, 0.5)
    assert env.cdf(0.0) == pytest.approx(0.5)


def test_uniform_rejects_nonzero_mean():
    with pytest.raises(ValueError, match="nonzero mean"):
        uniform_z_env(0, 1)


def test_uniform_rejects_support_above_one():
    with pytest.raises(ValueError):
        uniform_z_env(-1.5, 1.5)


def test_normal_signal_transform():
    env = normal_signal_env(1.0)
    assert env.z_of_omega(0.5) == pytest.approx(0.0, abs=1e-15)
    assert env.z_of_omega(1.5) == pytest.approx(1 - np.exp(-1), abs=1e-12)


@pytest.mark.parametrize("s2", [0.25, 1.0, 2.0])
def test_normal_signal_mean_zero(s2):
    assert normal_signal_env(s2).mean() == pytest.approx(0.0, abs=1e-6)


def test_normal_signal_quantile_inverts_cdf():
    env = normal_signal_env(0.7)
    q = np.array([0.01, 0.3, 0.5, 0.9, 0.999])
    assert env.cdf(env.quantile(q)) == pytest.approx(q, abs=1e-10)


def test_cell_moments_uniform():
    env = uniform_z_env(-0.5, 0.5)
    m, z = cell_moments(env, (-0.5, 1 / 6))
    assert (m, z) == (pytest.approx(2 / 3), pytest.approx(-1 / 6))
    m, z = cell_moments(env, (-0.5, 0.5))
    assert (m, z) == (pytest.approx(1.0), pytest.approx(0.0, abs=1e-15))


def test_cell_moments_empty():
    with pytest.raises(EmptyCellError, match="empty cell"):
        cell_moments(uniform_z_env(-0.5, 0.5), (0.9, 1.0))


@pytest.mark.parametrize("env", [uniform_z_env(-0.5, 0.5), normal_signal_env(1.0), normal_signal_env(0.3)],
                         ids=["uniform", "normal-1", "normal-0.3"])
def test_partition_totals(env):
    lo, hi = env.quantile(np.array([0.1, 0.9]))
    cells = cells_from_cutoffs(env, np.linspace(lo, hi, 5))
    masses = np.array([c.mass for c in cells])
    first = np.array([c.mass * c.z for c in cells])
    assert masses.sum() == pytest.approx(1.0, abs=1e-9)
    assert first.sum() == pytest.approx(0.0, abs=1e-6)


def test_quadrature_refinement_is_stable():
    coarse = normal_signal_env(1.0, resolution=256)
    fine = normal_signal_env(1.0, resolution=512)
    cut = [-0.5, 0.0, 0.3]
    a = [c.z for c in cells_from_cutoffs(coarse, cut)]
    b = [c.z for c in cells_from_cutoffs(fine, cut)]
    assert np.max(np.abs(np.subtract(a, b))) < 1e-4


def test_discrete_grid_validation():
    with pytest.raises(ValueError, match="nonzero mean"):
        discrete_grid_env([0.1, 0.2], [0.5, 0.5])
    g = discrete_grid_env([0.5, -0.5], [0.5, 0.5])
    assert list(g.z) == [-0.5, 0.5]


def test_quantile_atoms_mean_zero():
    g = quantile_atoms(normal_signal_env(1.0), 12)
    assert g.p.sum() == pytest.approx(1.0)
    assert g.p @ g.z == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(g.z) > 0)


@pytest.fixture(scope="module")
def env2():
    u = uniform_z_env(-0.5, 0.5)
    return ProductEnvironment((u, u))


def test_halfplane_symmetric_diagonal(env2):
    cells = halfplane_moments(env2, ((1, 1), 0.0))
    assert [c.mass for c in cells] == [pytest.approx(0.5), pytest.approx(0.5)]
    lo, hi = cells[0].zvec, cells[1].zvec
    assert hi[0] == pytest.approx(hi[1], abs=1e-12) and hi[0] > 0
    assert lo[0] == pytest.approx(-hi[0], abs=1e-12)
    # the mean of Z1 on {Z1 + Z2 >= 0} for two U(-1/2, 1/2): 1/6
    assert hi[0] == pytest.approx(1 / 6, abs=1e-10)


def test_halfplane_axis_line_uninformative_for_other_agent(env2):
    cells = halfplane_moments(env2, ((1, 0), 0.0))
    assert all(abs(c.zvec[1]) < 1e-12 for c in cells)


def test_halfplane_degenerate_line(env2):
    with pytest.raises(ValueError, match="degenerate line"):
        halfplane_moments(env2, ((0, 0), 0.0))


def test_halfplane_balances(env2):
    masses, firsts = halfplane_raw(env2, (0.3, -0.8), 0.05)
    assert masses.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.abs(firsts.sum(axis=0)).max() < 1e-6


@pytest.fixture(scope="module")
def mt():
    return MultiTaskEnvironment((1.0, 1.0), {"11": 0.5, "01": 0.3, "10": 0.2, "00": 0.0})


def test_multitask_delta_costs(mt):
    assert mt.delta_costs == pytest.approx([0.2, 0.3, 0.5])


def test_multitask_requires_most_costly_target():
    with pytest.raises(ValueError):
        MultiTaskEnvironment((1.0, 1.0), {"11": 0.1, "01": 0.3, "10": 0.2, "00": 0.0})


def test_zlambda_single_cell_is_zero(mt):
    (cell,) = zlambda_moments(mt, (1, 1, 0), [])
    assert cell.mass == pytest.approx(1.0)
    assert np.abs(cell.zvec).max() < 1e-6


def test_zlambda_upper_cell_positive(mt):
    lo, hi = zlambda_moments(mt, (1, 1, 0), [0.0])
    assert hi.zvec[0] > 0 and hi.zvec[1] > 0
    assert lo.mass + hi.mass == pytest.approx(1.0, abs=1e-9)


def test_zlambda_weight_precondition(mt):
    with pytest.raises(ValueError, match="weight precondition"):
        zlambda_moments(mt, (0, 0, 0), [0.0])
    with pytest.raises(ValueError, match="weight precondition"):
        validate_weights((1, 0, 0))
