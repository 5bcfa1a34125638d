import numpy as np
import pytest

from contractq import (
    InfeasibleError,
    MonitoringCostSpec,
    MultiTaskEnvironment,
    cara_utility,
    full_information_multipliers,
    optimize_multitask,
)
from contractq.multitask import (
    MultitaskProblem,
    angles_from_direction,
    direction_from_angles,
    multitask_solution,
    ratio_R,
)

RATING = MonitoringCostSpec("rating-scale")
U = cara_utility(0.5)


def costs(c01, c10):
    return {"11": 0.5, "01": c01, "10": c10, "00": 0.0}


def test_direction_round_trip():
    d = np.array([0.2, 0.5, 0.8])
    d /= np.linalg.norm(d)
    assert direction_from_angles(*angles_from_direction(d)) == pytest.approx(d)


def test_ratio():
    assert ratio_R([1, 1, 0]) == 1.0
    assert ratio_R([0, 1, 1]) == pytest.approx(0.5)


def test_encode_decode_round_trip():
    env = MultiTaskEnvironment((1.0, 1.0), costs(0.3, 0.2))
    prob = MultitaskProblem(env, U, RATING, 3)
    lam = np.array([0.1, 0.3, 0.9])
    lam /= np.linalg.norm(lam)
    cut = np.array([-0.2, 0.4])
    lam2, cut2 = prob.decode(prob.encode(lam, cut))
    assert lam2 == pytest.approx(lam)
    assert cut2 == pytest.approx(cut)


def test_single_category_rejected():
    env = MultiTaskEnvironment((1.0, 1.0), costs(0.3, 0.2))
    with pytest.raises(InfeasibleError, match="no incentive possible"):
        optimize_multitask(env, U, RATING, 1)


def test_noisy_task_beyond_reach():
    env = MultiTaskEnvironment((2.0, 1.0), costs(0.3, 0.2))
    with pytest.raises(InfeasibleError, match="utility bound"):
        full_information_multipliers(env, U)


def test_symmetric_full_information_weights_joint_deviation_only():
    env = MultiTaskEnvironment((0.5, 0.5), costs(0.25, 0.25))
    lam = full_information_multipliers(env, U)
    assert ratio_R(lam) == pytest.approx(1.0, abs=1e-6)


@pytest.fixture(scope="module")
def easy():
    env = MultiTaskEnvironment((0.5, 0.5), costs(0.25, 0.25))
    return env, optimize_multitask(env, U, RATING, 2, n_starts=3)


def test_symmetric_ratio(easy):
    _, res = easy
    assert res.R == pytest.approx(1.0, abs=0.05)
    assert res.solution.n_cells == 2


def test_solution_is_consistent(easy):
    env, res = easy
    sol = res.solution
    d = sol.duals[0]
    assert np.min(d.ic_residuals) >= -1e-8
    assert sol.is_consistent()
    # wages implied by the reported multipliers
    Z = np.array([c.zvec for c in sol.cells])
    paid = sol.wages > 0
    assert np.abs(U.du(sol.wages[paid]) * (Z[paid] @ res.multipliers) - 1).max() < 1e-6


def test_alignment_angle_reported(easy):
    _, res = easy
    assert res.angle < 1e-2
    assert res.solution.diagnostics["aligned"]


def test_multitask_solution_for_given_direction():
    env = MultiTaskEnvironment((0.25, 0.25), costs(0.3, 0.2))
    res = multitask_solution(env, U, RATING, (1.0, 1.0, 1.0), [0.0, 1.2])
    assert res.solution.n_cells == 3
    assert np.all(np.diff(res.solution.wages) >= 0)
