"""One agent, two tasks: cutoffs on the multiplier-weighted score Z_lambda.

The monitoring technology is described by a direction ``lambda_hat`` on the
nonnegative unit sphere and cutoffs on ``Z_lambda_hat``; wages solve the
three-deviation program for the resulting cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .env import DEVIATIONS, MultiTaskEnvironment, zlambda_moments, zlambda_raw
from .errors import InfeasibleError
from .monitoring import MonitoringCostSpec
from .solution import ContractSolution, CutoffPartition
from .utility import UtilitySpec
from .wages import DualCertificate, _feasibility_lp, solve_ll_multiaction, solve_utility_program

log = logging.getLogger(__name__)

N_STARTS = 8
WEIGHT_FLOOR = 1e-6
INFEASIBLE = 1e8
BINDING_TOL = 1e-7
ALIGN_TOL = 1e-2  # radians between inner multipliers and search direction


@dataclass
class MultitaskResult:
    """Optimal (direction, cutoffs) contract and the implied task weighting.

    ``R`` is ``(l01 + l00) / (l10 + l00)`` for the wage program's multipliers
    ``multipliers``; ``angle`` is the angle in radians between those
    multipliers and the search direction ``direction``.
    """

    direction: np.ndarray
    partition: CutoffPartition
    solution: ContractSolution
    R: float
    angle: float
    multipliers: np.ndarray

    @property
    def R_direction(self) -> float:
        d = self.direction
        return float((d[0] + d[2]) / (d[1] + d[2]))


def direction_from_angles(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.abs(np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)]))


def angles_from_direction(d):
    d = np.asarray(d, float)
    d = d / np.linalg.norm(d)
    return float(np.arccos(np.clip(d[2], -1.0, 1.0))), float(np.arctan2(d[1], d[0]))


def ratio_R(lam) -> float:
    lam = np.asarray(lam, float)
    den = lam[1] + lam[2]
    return float((lam[0] + lam[2]) / den) if den > 0 else np.inf


class _TensorGrid:
    """Product quadrature of the two task signals, for starting points and bounds."""

    def __init__(self, env: MultiTaskEnvironment, n=128):
        e1, e2 = env.envs
        z1, w1 = e1.nodes(n=n)
        z2, w2 = e2.nodes(n=n)
        self.z1, self.z2 = np.meshgrid(z1, z2, indexing="ij")
        self.w = np.outer(w1, w2)
        self.env = env

    def score_quantiles(self, weights, probs):
        s = self.env.score(weights, self.z1, self.z2).ravel()
        order = np.argsort(s)
        cw = np.cumsum(self.w.ravel()[order])
        cw /= cw[-1]
        return s[order][np.minimum(np.searchsorted(cw, probs), s.size - 1)]

    def positive_parts(self):
        """``E[max(Z_a, 0)]`` per deviation: the largest achievable IC slope."""
        z1, z2 = self.z1, self.z2
        zs = (z1, z2, z1 + z2 - z1 * z2)
        return np.array([float(np.sum(self.w * np.maximum(z, 0.0))) for z in zs])


class MultitaskProblem:
    """Total cost as a function of (theta, phi, cutoff parameters)."""

    def __init__(self, env: MultiTaskEnvironment, u: UtilitySpec, cost: MonitoringCostSpec, N: int):
        self.env, self.u, self.cost, self.N = env, u, cost, N
        self.dc = env.delta_costs
        self._mu0 = None
        self.evaluations = 0

    def decode(self, params):
        lam = direction_from_angles(params[0], params[1])
        s = params[2] - np.concatenate([[0.0], np.cumsum(np.exp(params[3:]))])
        cutoffs = lam.sum() - np.exp(s)
        return lam, cutoffs

    def encode(self, lam, cutoffs):
        theta, phi = angles_from_direction(lam)
        s = np.log(np.sum(lam) / np.linalg.norm(lam) - np.asarray(cutoffs, float))
        return np.concatenate([[theta, phi, s[0]], np.log(np.maximum(-np.diff(s), 1e-300))])

    def cells(self, lam, cutoffs):
        mass, firsts = zlambda_raw(self.env, lam, cutoffs)
        return mass, firsts

    def total(self, params) -> float:
        self.evaluations += 1
        lam, cutoffs = self.decode(params)
        if lam[0] + lam[2] < WEIGHT_FLOOR or lam[1] + lam[2] < WEIGHT_FLOOR:
            return INFEASIBLE * 2
        mass, firsts = self.cells(lam, cutoffs)
        if np.any(mass <= 1e-12) or not np.all(np.isfinite(firsts)):
            return INFEASIBLE * 2
        Z = firsts / mass[:, None]
        # distance from feasibility when some deviation cannot be deterred
        reach = self.u.bound * (mass @ np.maximum(Z, 0.0)) if np.isfinite(self.u.bound) else np.inf
        short = np.max((self.dc - reach) / self.dc)
        if short >= 0:
            return INFEASIBLE * (1.0 + short)
        try:
            w, mu, _ = solve_utility_program(mass, Z.T, self.dc, self.u, mu0=self._mu0)
        except InfeasibleError:
            return INFEASIBLE
        self._mu0 = mu
        return float(mass @ w) + self.cost.mu * self.cost.raw(mass)


def _aligned_multipliers(cells, sched, cert: DualCertificate, dc, u: UtilitySpec, direction):
    """Multipliers consistent with the wages, chosen closest to ``direction``.

    With few cells the multipliers are not unique; any vector that is zero on
    slack constraints, reproduces paid wages through the first-order
    condition and respects limited liability elsewhere is valid.  Among
    those, pick the one nearest the ray spanned by ``direction``.
    """
    Z = np.array([c.zvec for c in cells])
    w = sched.wages
    paid = w > 0
    slack = cert.ic_residuals > BINDING_TOL * max(1.0, float(np.max(dc)))
    d = np.asarray(direction, float) / np.linalg.norm(direction)
    P = np.eye(3) - np.outer(d, d)
    cons = []
    if np.any(paid):
        target = 1.0 / u.du(w[paid])
        cons.append({"type": "eq", "fun": lambda l: Z[paid] @ l - target})
    if np.any(~paid):
        cap = 1.0 / u.du0 if np.isfinite(u.du0) and u.du0 > 0 else 0.0
        cons.append({"type": "ineq", "fun": lambda l: cap - Z[~paid] @ l})
    bounds = [(0.0, 0.0) if s else (0.0, None) for s in slack]
    x0 = np.where(slack, 0.0, cert.lam)
    r = minimize(lambda l: float(np.sum((P @ l) ** 2)), x0, method="SLSQP", bounds=bounds,
                 constraints=cons, options={"ftol": 1e-14, "maxiter": 500})
    lam = np.maximum(r.x, 0.0) if r.success else cert.lam
    if np.any(paid):
        fit = np.max(np.abs(u.du(w[paid]) * (Z[paid] @ lam) - 1.0))
        if fit > 1e-6:
            lam = cert.lam
    return lam


def multitask_solution(env, u, cost: MonitoringCostSpec, direction, cutoffs, diagnostics=None):
    """Wages, multipliers and ``R`` for a given direction and cutoffs."""
    lam_hat = np.asarray(direction, float) / np.linalg.norm(direction)
    cells = zlambda_moments(env, lam_hat, cutoffs)
    sched, cert = solve_ll_multiaction(cells, env.delta_costs, u)
    masses = np.array([c.mass for c in cells])
    lam = _aligned_multipliers(cells, sched, cert, env.delta_costs, u, lam_hat)
    cos = float(lam @ lam_hat / np.linalg.norm(lam)) if np.linalg.norm(lam) > 0 else -1.0
    angle = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    diag = dict(diagnostics or {})
    diag["alignment_angle"] = angle
    diag["binding"] = [DEVIATIONS[a] for a in range(3)
                       if cert.ic_residuals[a] <= BINDING_TOL * max(1.0, float(np.max(env.delta_costs)))]
    cert.lam = lam
    part = CutoffPartition(tuple(cutoffs), score="z_lambda", direction=tuple(lam_hat))
    sol = ContractSolution(part, cells, (sched,), (cert,), sched.expected_wage,
                           cost.raw(masses), cost.mu, diagnostics=diag)
    return MultitaskResult(lam_hat, part, sol, ratio_R(lam), angle, lam)


def optimize_multitask(env: MultiTaskEnvironment, u: UtilitySpec, cost_spec: MonitoringCostSpec,
                       N: int = 2, *, n_starts: int = N_STARTS, seed: int = 0) -> MultitaskResult:
    """Best ``N``-cell contract with cells ``{Z_lambda in [c_{n-1}, c_n)}``.

    Searches jointly over the direction (two spherical angles) and the
    cutoffs with multistart Nelder-Mead; each evaluation solves the
    three-deviation wage program.  Raises ``InfeasibleError`` when no start
    reaches a feasible contract, including when some deviation cannot be
    deterred even with full information.
    """
    if N < 2:
        raise InfeasibleError("no incentive possible")
    if N > cost_spec.K:
        raise ValueError("cell budget exceeded")
    prob = MultitaskProblem(env, u, cost_spec, N)
    lam_full = full_information_multipliers(env, u)
    rng = np.random.default_rng(seed)
    grid = _TensorGrid(env)
    starts = []
    for k in range(n_starts):
        if k == 0:
            lam = lam_full.copy()
        elif k == 1:
            lam = np.ones(3)
        else:
            lam = np.abs(rng.normal(size=3))
        lam /= np.linalg.norm(lam)
        if lam[0] + lam[2] < WEIGHT_FLOOR or lam[1] + lam[2] < WEIGHT_FLOOR:
            lam = (lam + 0.05) / np.linalg.norm(lam + 0.05)
        starts.append(_start_for_direction(prob, grid, lam, rng, equal=k < 2))
    results = []
    for x0 in starts:
        r = minimize(prob.total, x0, method="Nelder-Mead", options=_nm_options(x0, prob.total(x0)))
        results.append((float(r.fun), r.x))
    results.sort(key=lambda t: t[0])
    f, x = results[0]
    # restart the simplex at the best point to escape early collapse
    r = minimize(prob.total, x, method="Nelder-Mead", options=_nm_options(x, f))
    if r.fun < f:
        f, x = float(r.fun), r.x
    if f >= INFEASIBLE:
        raise InfeasibleError("infeasible at every start",
                              certificate={"best_value": f, "starts": n_starts})
    lam, cutoffs = prob.decode(x)
    diag = {"evaluations": prob.evaluations, "starts": n_starts,
            "start_values": [v for v, _ in results],
            "full_information_R": ratio_R(lam_full)}
    res = multitask_solution(env, u, cost_spec, lam, cutoffs, diag)
    res.solution.diagnostics["aligned"] = res.angle <= ALIGN_TOL
    if res.angle > ALIGN_TOL:
        log.warning("multipliers off the search direction by %.3g rad", res.angle)
    return res


def _nm_options(x0, f0):
    return {"xatol": 1e-8, "fatol": 1e-11 * max(1.0, abs(f0)), "maxiter": 800 * x0.size,
            "adaptive": True}


def _start_for_direction(prob: MultitaskProblem, grid: _TensorGrid, lam, rng, equal=False):
    """Starting parameters for a direction; two-cell cutoffs are scanned."""
    N = prob.N
    if N == 2:
        cands = [grid.score_quantiles(lam, np.array([q])) for q in np.linspace(0.05, 0.95, 19)]
    elif equal:
        cands = [grid.score_quantiles(lam, np.cumsum(np.full(N, 1.0 / N))[:-1])]
    else:
        cands = [grid.score_quantiles(lam, np.cumsum(rng.dirichlet(np.ones(N)))[:-1]) for _ in range(4)]
    best, best_x = np.inf, None
    for cut in cands:
        cut = np.minimum(cut, np.sum(lam) - 1e-6)
        cut = cut + 1e-9 * np.arange(cut.size)
        x = prob.encode(lam, cut)
        v = prob.total(x)
        if v < best:
            best, best_x = v, x
    return best_x


def full_information_multipliers(env: MultiTaskEnvironment, u: UtilitySpec, n: int = 96) -> np.ndarray:
    """Multipliers of the wage program when pay may depend on the raw data.

    Solved on a product quadrature grid.  Raises ``InfeasibleError`` if the
    deviations cannot be deterred by any contract, which also rules out
    every partition.
    """
    grid = _TensorGrid(env, n=n)
    z1, z2, w = grid.z1.ravel(), grid.z2.ravel(), grid.w.ravel()
    keep = w > 1e-300
    z1, z2, w = z1[keep], z2[keep], w[keep] / w[keep].sum()
    A = np.vstack([z1, z2, z1 + z2 - z1 * z2])
    dc = env.delta_costs
    tau = _feasibility_lp(w, A, dc, u.bound)
    if tau <= 0:
        raise InfeasibleError(
            "infeasible: utility bound (no contract deters every deviation)",
            certificate={"slack": tau, "deltas": dc.tolist()},
        )
    _, mu, _ = solve_utility_program(w, A, dc, u)
    return mu
