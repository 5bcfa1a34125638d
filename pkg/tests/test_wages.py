import numpy as np
import pytest

from contractq import (
    InfeasibleError,
    MultiTaskEnvironment,
    cara_utility,
    closed_form_cost_sqrt,
    make_cells,
    solve_ir_single,
    solve_ll_multiaction,
    solve_ll_multiagent,
    solve_ll_single,
    zlambda_moments,
)
from contractq.wages import solve_utility_program

TWO = make_cells([2 / 3, 1 / 3], [-1 / 6, 1 / 3])
THREE = make_cells([3 / 5, 1 / 5, 1 / 5], [-1 / 5, 1 / 5, 2 / 5])


def test_two_cell_sqrt_closed_form(sqrt_u):
    sched, cert = solve_ll_single(TWO, 1.0, sqrt_u)
    assert sched.wages == pytest.approx([0.0, 81.0], rel=1e-10)
    assert cert.lam[0] == pytest.approx(54.0, rel=1e-10)
    assert sched.expected_wage == pytest.approx(27.0, rel=1e-10)
    assert abs(cert.ic_residuals[0]) < 1e-8
    assert cert.stationarity < 1e-9


def test_zero_cost_pays_nothing(sqrt_u):
    sched, _ = solve_ll_single(TWO, 0.0, sqrt_u)
    assert np.all(sched.wages == 0)


def test_uninformative_cells(sqrt_u):
    with pytest.raises(InfeasibleError, match="no informative cell"):
        solve_ll_single(make_cells([0.5, 0.5], [0.0, 0.0]), 1.0, sqrt_u)


def test_bounded_utility_cap():
    with pytest.raises(InfeasibleError, match="utility bound"):
        solve_ll_single(TWO, 0.5, cara_utility(1.0))


def test_closed_form_values():
    assert closed_form_cost_sqrt(TWO, 1.0) == pytest.approx(27.0, abs=1e-9)
    assert closed_form_cost_sqrt(THREE, 1.0) == pytest.approx(25.0, abs=1e-9)
    assert closed_form_cost_sqrt(TWO, 2.0) == pytest.approx(108.0, abs=1e-9)


@pytest.mark.parametrize("c", [1.0, 2.0, 3.0])
def test_cost_scales_with_square_of_effort_cost(sqrt_u, c):
    sched, _ = solve_ll_single(THREE, c, sqrt_u)
    assert sched.expected_wage == pytest.approx(25.0 * c * c, rel=1e-6)


def test_unsorted_cells_give_same_wages(sqrt_u):
    shuffled = [THREE[2], THREE[0], THREE[1]]
    a, _ = solve_ll_single(THREE, 1.0, sqrt_u)
    b, _ = solve_ll_single(shuffled, 1.0, sqrt_u)
    assert b.wages == pytest.approx(a.wages[[2, 0, 1]])


def test_cara_single_binding():
    u = cara_utility(0.5)
    sched, cert = solve_ll_single(THREE, 0.05, u)
    assert abs(cert.ic_residuals[0]) < 1e-8
    w = sched.wages
    assert w[0] == 0 and 0 < w[1] < w[2]
    # FOC reproduces the wages
    assert u.wage_at(cert.lam[0] * np.array([c.z for c in THREE])) == pytest.approx(w, rel=1e-6)


def test_mergeable_flag(sqrt_u):
    cells = make_cells([0.5, 0.25, 0.25], [-0.2, 0.2, 0.2])
    sched, cert = solve_ll_single(cells, 1.0, sqrt_u)
    assert cert.mergeable
    assert sched.wages[1] == sched.wages[2]


def test_multiagent_product_partition(sqrt_u):
    m = [2 / 3, 1 / 3]
    z = [-1 / 6, 1 / 3]
    cells = make_cells([a * b for a in m for b in m], [(za, zb) for za in z for zb in z])
    (s1, _), (s2, _) = solve_ll_multiagent(cells, (1.0, 1.0), (sqrt_u, sqrt_u))
    assert s1.expected_wage == pytest.approx(27.0)
    assert s1.expected_wage + s2.expected_wage == pytest.approx(54.0)


def test_multiagent_reports_failing_agent(sqrt_u):
    cells = make_cells([0.5, 0.5], [(-0.25, 0.0), (0.25, 0.0)])
    with pytest.raises(InfeasibleError, match="agent 2") as info:
        solve_ll_multiagent(cells, (1.0, 1.0), (sqrt_u, sqrt_u))
    assert info.value.agent == 1


def test_multiagent_zero_costs(sqrt_u):
    cells = make_cells([0.5, 0.5], [(-0.25, 0.1), (0.25, -0.1)])
    out = solve_ll_multiagent(cells, (0.0, 0.0), (sqrt_u, sqrt_u))
    assert all(np.all(s.wages == 0) for s, _ in out)


def test_multiaction_one_deviation_matches_single(sqrt_u):
    a, ca = solve_ll_multiaction(TWO, [1.0], sqrt_u)
    b, cb = solve_ll_single(TWO, 1.0, sqrt_u)
    assert a.wages == pytest.approx(b.wages)
    assert ca.lam == pytest.approx(cb.lam)


@pytest.fixture(scope="module")
def three_cells():
    env = MultiTaskEnvironment((0.25, 0.25), {"11": 0.5, "01": 0.3, "10": 0.2, "00": 0.0})
    return zlambda_moments(env, (1, 1, 1), [-0.5, 1.0]), env.delta_costs


def test_multiaction_three_cells(three_cells):
    cells, dc = three_cells
    u = cara_utility(0.5)
    sched, cert = solve_ll_multiaction(cells, dc, u)
    assert np.all(np.diff(sched.wages) >= 0)
    assert np.min(cert.ic_residuals) >= -1e-8
    assert cert.slackness <= 1e-6
    assert np.linalg.norm(cert.lam) > 0
    assert cert.stationarity < 1e-6


def test_multiaction_matches_utility_grid_search(three_cells):
    cells, dc = three_cells
    u = cara_utility(0.5)
    sched, _ = solve_ll_multiaction(cells, dc, u)
    pi = np.array([c.mass for c in cells])
    Z = np.array([c.zvec for c in cells])
    cost = _grid_min(pi, Z, dc, u, np.arange(0.0, 1.0, 1e-3), fix_lowest=True)
    assert sched.expected_wage <= cost + 1e-9
    assert cost - sched.expected_wage <= 2e-3
    # a coarse search that also lets the lowest cell be paid finds nothing cheaper
    assert _grid_min(pi, Z, dc, u, np.arange(0.0, 1.0, 0.02)) >= sched.expected_wage - 1e-9


def _grid_min(pi, Z, dc, u, grid, fix_lowest=False):
    """Cheapest feasible utility vector on a product grid."""
    firsts = [np.zeros(1)] if fix_lowest else [grid]
    V = np.stack(np.meshgrid(*firsts, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
    ok = np.all((V * pi) @ Z >= dc - 1e-12, axis=1)
    return float((u.inv(V[ok]) @ pi).min()) if np.any(ok) else np.inf


def test_multiaction_utility_bound():
    cells = make_cells([0.5, 0.5], [(-0.5, -0.5), (0.5, 0.5)])
    with pytest.raises(InfeasibleError, match="utility bound"):
        solve_ll_multiaction(cells, [1.0, 0.1], cara_utility(0.5))


def test_multiaction_joint_infeasibility_detected():
    u = cara_utility(1.0)
    # each deviation alone is deterrable but the two pull the top utility in opposite cells
    cells = make_cells([0.5, 0.5], [(0.4, -0.4), (-0.4, 0.4)])
    with pytest.raises(InfeasibleError):
        solve_ll_multiaction(cells, [0.15, 0.15], u)


def test_ir_flat_wage_when_effort_free(sqrt_u):
    sched, cert = solve_ir_single(TWO, 0.0, 2.0, sqrt_u)
    assert sched.wages == pytest.approx([4.0, 4.0], rel=1e-9)
    assert cert.lam[0] == pytest.approx(0.0, abs=1e-9)


def test_ir_zero_reservation_costs_no_more_than_ll(sqrt_u):
    sched, cert = solve_ir_single(TWO, 1.0, 0.0, sqrt_u)
    assert sched.expected_wage <= 27.0 + 1e-6
    assert cert.ic_residuals[0] >= -1e-8 and cert.ir_residual >= -1e-8
    assert cert.slackness <= 1e-6


def test_ir_infeasible_reservation():
    u = cara_utility(0.5)
    with pytest.raises(InfeasibleError, match="infeasible reservation"):
        solve_ir_single(TWO, 0.0, u.bound, u)


def test_ir_foc_and_grid_check(sqrt_u):
    cells = make_cells([0.5, 0.5], [-0.3, 0.3])
    c, ubar = 1.0, 2.0
    sched, cert = solve_ir_single(cells, c, ubar, sqrt_u)
    lam, gam = cert.lam[0], cert.gamma_ir
    z = np.array([-0.3, 0.3])
    w = sched.wages
    pos = w > 0
    assert np.abs(sqrt_u.du(w[pos]) * (lam * z[pos] + gam) - 1).max() < 1e-6
    # two-multiplier grid: the dual maximiser sits at the reported (lam, gamma)
    L, G = np.meshgrid(np.linspace(0, 2 * lam + 1, 201), np.linspace(0, 2 * gam + 1, 201), indexing="ij")
    S = L[..., None] * z + G[..., None]
    W = sqrt_u.wage_at(S)
    D = (0.5 * (W - S * np.sqrt(W))).sum(axis=-1) + L * c + G * (c + ubar)
    i, j = np.unravel_index(np.argmax(D), D.shape)
    assert abs(L[i, j] - lam) <= 2 * (L[1, 0] - L[0, 0])
    assert abs(G[i, j] - gam) <= 2 * (G[0, 1] - G[0, 0])


def test_utility_program_reproduces_single(sqrt_u):
    pi = np.array([0.6, 0.2, 0.2])
    z = np.array([-0.2, 0.2, 0.4])
    w, mu, info = solve_utility_program(pi, z[None, :], np.array([1.0]), sqrt_u)
    assert pi @ w == pytest.approx(25.0, rel=1e-9)
    assert mu[0] == pytest.approx(50.0, rel=1e-6)
