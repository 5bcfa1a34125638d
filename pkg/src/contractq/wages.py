"""Cost-minimising wages for a fixed monitoring technology.

All solvers work on cell summaries ``(pi_n, z_n)``.  The single-constraint
problem is solved by bracketing the IC multiplier; problems with several
constraints (multiple deviations, or IC plus IR) are solved in utility space
through their concave dual, whose maximiser gives wages by the first-order
condition ``u'(w_n) = 1 / (lambda . z_n)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from .cells import CellSummary, as_arrays
from .errors import InfeasibleError
from .utility import UtilitySpec

log = logging.getLogger(__name__)

LAMBDA_BRACKET = (1e-12, 1e12)
MERGE_TOL = 1e-12


@dataclass
class WageSchedule:
    wages: np.ndarray
    masses: np.ndarray

    @property
    def expected_wage(self) -> float:
        return float(self.masses @ self.wages)


@dataclass
class DualCertificate:
    """Multipliers of the incentive (and optional IR) constraints.

    ``ll_active`` flags cells where limited liability binds (zero wage); the
    corresponding multipliers are not reported.
    """

    lam: np.ndarray
    ic_residuals: np.ndarray
    slackness: float
    ll_active: np.ndarray
    gamma_ir: Optional[float] = None
    ir_residual: Optional[float] = None
    stationarity: float = 0.0
    mergeable: bool = False
    info: dict = field(default_factory=dict)


def _mergeable(Z: np.ndarray) -> bool:
    if len(Z) < 2:
        return False
    Zs = Z[np.lexsort(Z.T[::-1])]
    return bool(np.any(np.all(np.abs(np.diff(Zs, axis=0)) <= MERGE_TOL, axis=1)))


def _stationarity(u: UtilitySpec, w, slopes) -> float:
    pos = w > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(np.abs(u.du(w[pos]) * slopes[pos] - 1.0)))


def single_ic_multiplier(pi, z, c, u: UtilitySpec) -> float:
    """Multiplier ``lambda`` at which the IC constraint binds.

    ``lambda -> sum pi_n u(w_n(lambda)) z_n`` is nondecreasing (strictly once
    some wage is positive), so the root is bracketed on a log scale and
    refined by Brent's method.
    """
    pi = np.asarray(pi, float)
    z = np.asarray(z, float)
    pos = z > 0
    if not np.any(pos):
        raise InfeasibleError("infeasible: no informative cell")
    pp, zp = pi[pos], z[pos]
    if np.isfinite(u.bound) and u.bound * (pp @ zp) <= c:
        raise InfeasibleError("infeasible: utility bound", certificate={"cap": u.bound * (pp @ zp)})

    def gap(loglam):
        return (pp * u.utility_at(np.exp(loglam) * zp)) @ zp - c

    lo, hi = np.log(LAMBDA_BRACKET[0]), np.log(LAMBDA_BRACKET[1])
    while gap(lo) > 0:
        lo -= 10.0
    while gap(hi) < 0:
        hi += 10.0
        if hi > 700:
            raise InfeasibleError("infeasible: utility bound")
    root = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    # step to the feasible side of the root
    for _ in range(64):
        if gap(root) >= 0:
            break
        root = np.nextafter(root, np.inf) + 1e-15 * abs(root)
    return float(np.exp(root))


def _single_arrays(pi, z, c, u: UtilitySpec):
    if c < 0:
        raise ValueError("effort cost must be nonnegative")
    if c == 0:
        return np.zeros_like(z), 0.0
    lam = single_ic_multiplier(pi, z, c, u)
    return u.wage_at(lam * z), lam


def solve_ll_single(cells: Sequence[CellSummary], c: float, u: UtilitySpec):
    """Cheapest nonnegative wages meeting one IC constraint.

    Returns ``(WageSchedule, DualCertificate)``; wages are zero on cells with
    ``z <= 0`` and satisfy ``u'(w) = 1/(lambda z)`` elsewhere.
    """
    pi, Z = as_arrays(cells)
    z = Z[:, 0]
    w, lam = _single_arrays(pi, z, float(c), u)
    res = float((pi * u.u(w)) @ z - c)
    cert = DualCertificate(
        lam=np.array([lam]),
        ic_residuals=np.array([res]),
        slackness=abs(lam * res),
        ll_active=w == 0,
        stationarity=_stationarity(u, w, lam * z),
        mergeable=_mergeable(Z),
    )
    return WageSchedule(w, pi), cert


def closed_form_cost_sqrt(cells: Sequence[CellSummary], c: float) -> float:
    """Minimal expected wage under ``u = sqrt``: ``c^2 / sum pi max(0, z)^2``."""
    pi, Z = as_arrays(cells)
    return sqrt_incentive_cost(pi, Z[:, 0], c)


def sqrt_incentive_cost(pi, z, c) -> float:
    s = float(np.asarray(pi) @ np.maximum(np.asarray(z), 0.0) ** 2)
    if s <= 0:
        raise InfeasibleError("infeasible: no informative cell")
    return c * c / s


def incentive_cost(pi, z, c, u: UtilitySpec) -> float:
    """Expected wage of the single-IC optimum (closed form for sqrt)."""
    if c == 0:
        return 0.0
    if u.kind == "sqrt":
        return sqrt_incentive_cost(pi, z, c)
    w, _ = _single_arrays(np.asarray(pi), np.asarray(z), c, u)
    return float(np.asarray(pi) @ w)


def solve_ll_multiagent(cells: Sequence[CellSummary], costs, utils):
    """Two agents, two IC constraints; the program separates by agent."""
    pi, Z = as_arrays(cells)
    if Z.shape[1] != 2:
        raise ValueError("two-agent cells need 2-vector z-values")
    out = []
    for i in range(2):
        agent_cells = [CellSummary(m, (zz,)) for m, zz in zip(pi, Z[:, i])]
        try:
            out.append(solve_ll_single(agent_cells, costs[i], utils[i]))
        except InfeasibleError as exc:
            raise InfeasibleError(f"agent {i + 1}: {exc}", agent=i, certificate=exc.certificate) from exc
    return out


# --------------------------------------------------------------------------
# several linear constraints in utility space


def _feasibility_lp(pi, A, b, bound):
    """Largest uniform slack ``tau`` (capped at 1) over the box of utilities."""
    k, n = A.shape
    At = A * pi
    scale = np.maximum(np.abs(b), 1e-12)
    ub = bound * (1 - 1e-12) if np.isfinite(bound) else None
    # variables (v_1..v_n, tau); maximise tau
    cobj = np.zeros(n + 1)
    cobj[-1] = -1.0
    A_ub = np.hstack([-At, scale[:, None]])
    res = linprog(cobj, A_ub=A_ub, b_ub=-b,
                  bounds=[(0, ub)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        return -np.inf
    return float(res.x[-1])


def _infeasibility_certificate(pi, A, b, bound):
    for a in range(A.shape[0]):
        if np.isfinite(bound):
            cap = bound * float(pi @ np.maximum(A[a], 0.0))
            if cap <= b[a]:
                return {"deviation": a, "cap": cap, "required": float(b[a])}
        elif b[a] > 0 and not np.any(A[a] > 0):
            return {"deviation": a, "cap": 0.0, "required": float(b[a])}
    return None


def solve_utility_program(pi, A, b, u: UtilitySpec, mu0=None, tol=1e-13, max_iter=500):
    """Minimise ``sum pi_n u^-1(v_n)`` s.t. ``sum_n pi_n A[k,n] v_n >= b_k``.

    Utilities are restricted to ``[0, sup u)``.  Returns ``(wages, mu, info)``
    where ``mu`` are the constraint multipliers.  The dual is concave and
    piecewise smooth; it is maximised by projected Newton steps with an
    Armijo backtracking search.
    """
    pi = np.asarray(pi, float)
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float)
    k = A.shape[0]

    cert = _infeasibility_certificate(pi, A, b, u.bound)
    if cert is not None:
        msg = "infeasible: utility bound" if np.isfinite(u.bound) else "infeasible: no informative cell"
        raise InfeasibleError(msg, certificate=cert)

    def dual(mu):
        s = mu @ A
        w = u.wage_at(s)
        v = u.u(w)
        return float(pi @ (w - s * v) + mu @ b), w, v, s

    if mu0 is None:
        mu0 = np.zeros(k)
        for a in range(k):
            if b[a] > 0 and np.any(A[a] > 0):
                try:
                    mu0[a] = single_ic_multiplier(pi, A[a], b[a], u) / k
                except InfeasibleError:
                    pass
        if not np.any(mu0 > 0):
            mu0 = np.ones(k)
    mu = np.maximum(np.asarray(mu0, float), 0.0)
    ftol = tol * max(1.0, float(np.max(np.abs(b))))
    D, w, v, s = dual(mu)
    converged = False
    it = 0
    for it in range(max_iter):
        g = b - A @ (pi * v)
        free = (mu > 0) | (g > 0)
        pg = np.where(free, g, 0.0)
        if np.max(np.abs(pg)) <= ftol:
            converged = True
            break
        dv = u.dutil_dslope(s)
        H = (A * (pi * dv)) @ A.T
        Hf = H[np.ix_(free, free)]
        gf = g[free]
        reg = 1e-12 * max(1.0, float(np.trace(Hf)))
        try:
            d = np.linalg.solve(Hf + reg * np.eye(len(gf)), gf)
        except np.linalg.LinAlgError:
            d = gf
        if not np.all(np.isfinite(d)) or d @ gf <= 0:
            d = gf / max(reg, 1e-8)
        t = 1.0
        while True:
            trial = mu.copy()
            trial[free] = np.maximum(mu[free] + t * d, 0.0)
            Dt, wt, vt, st = dual(trial)
            if Dt >= D + 1e-4 * (g @ (trial - mu)) - 1e-15 * abs(D):
                break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20 or np.array_equal(trial, mu):
            break
        mu, D, w, v, s = trial, Dt, wt, vt, st
        if np.max(mu) > 1e14:
            break

    res = A @ (pi * v) - b
    if np.min(res) < -1e-8 * max(1.0, float(np.max(np.abs(b)))):
        tau = _feasibility_lp(pi, A, b, u.bound)
        if tau <= 0:
            raise InfeasibleError("infeasible: constraints jointly unsatisfiable",
                                  certificate={"slack": tau})
        log.debug("utility program stopped with IC residual %.3g", float(np.min(res)))
    info = {"iterations": it, "converged": converged, "dual_value": D}
    return w, mu, info


def solve_ll_multiaction(cells: Sequence[CellSummary], delta_costs, u: UtilitySpec):
    """Wages implementing the most costly action against every deviation.

    ``delta_costs[a] = c(a*) - c(a) > 0`` for each deviation, in the order of
    the cells' z-vectors.  With a single deviation this is
    :func:`solve_ll_single`.
    """
    pi, Z = as_arrays(cells)
    dc = np.atleast_1d(np.asarray(delta_costs, float))
    if Z.shape[1] != dc.size:
        raise ValueError("one cost difference per deviation is required")
    if np.any(dc <= 0):
        raise ValueError("cost differences must be positive")
    if dc.size == 1:
        return solve_ll_single(cells, float(dc[0]), u)
    w, lam, info = solve_utility_program(pi, Z.T, dc, u)
    v = u.u(w)
    res = Z.T @ (pi * v) - dc
    cert = DualCertificate(
        lam=lam,
        ic_residuals=res,
        slackness=float(np.max(np.abs(lam * res))),
        ll_active=w == 0,
        stationarity=_stationarity(u, w, Z @ lam),
        mergeable=_mergeable(Z),
        info=info,
    )
    return WageSchedule(w, pi), cert


def solve_ir_single(cells: Sequence[CellSummary], c: float, reservation: float, u: UtilitySpec):
    """Single agent with IC and individual rationality ``E u(w) >= c + ubar``.

    Wages stay in the utility's domain (nonnegative for sqrt and CARA).
    Returns the IC multiplier in ``lam`` and the IR multiplier in ``gamma_ir``.
    """
    pi, Z = as_arrays(cells)
    z = Z[:, 0]
    need = c + reservation
    if need >= u.bound:
        raise InfeasibleError("infeasible reservation", certificate={"required": need, "bound": u.bound})
    A = np.vstack([z, np.ones_like(z)])
    b = np.array([c, need])
    w, mu, info = solve_utility_program(pi, A, b, u)
    v = u.u(w)
    res = A @ (pi * v) - b
    slopes = mu[0] * z + mu[1]
    cert = DualCertificate(
        lam=mu[:1].copy(),
        ic_residuals=res[:1],
        slackness=float(np.max(np.abs(mu * res))),
        ll_active=w == 0,
        gamma_ir=float(mu[1]),
        ir_residual=float(res[1]),
        stationarity=_stationarity(u, w, slopes),
        mergeable=_mergeable(Z),
        info=info,
    )
    return WageSchedule(w, pi), cert
