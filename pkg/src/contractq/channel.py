"""Random monitoring: a noisy channel from scores to categories.

The channel's cost is ``mu`` times the mutual information (in nats) between
the score and the reported category.  For fixed wages and multiplier the
optimal channel has the Gibbs form

    q_n(z) ∝ pi_n exp((lam u(w_n) z - w_n) / mu),

so the solver alternates Gibbs updates of the channel with wage solves,
damping and backtracking so that the objective never increases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .cells import CellSummary
from .errors import ConvergenceError, InfeasibleError
from .utility import UtilitySpec
from .wages import DualCertificate, WageSchedule, incentive_cost, solve_ll_single

log = logging.getLogger(__name__)

PRUNE_MASS = 1e-10
LN2 = np.log(2.0)


@dataclass
class Channel:
    """Score grid ``z`` with weights ``p`` and log-probabilities ``log_q[n, i]``.

    Log-probabilities are kept so that ratios of tiny probabilities stay
    finite when the channel is nearly deterministic.
    """

    z: np.ndarray
    p: np.ndarray
    log_q: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, float)
        self.p = np.asarray(self.p, float)
        self.log_q = np.atleast_2d(np.asarray(self.log_q, float))
        cols = np.exp(logsumexp(self.log_q, axis=0))
        if np.max(np.abs(cols - 1.0)) > 1e-9:
            raise ValueError("channel columns must sum to 1")

    @classmethod
    def from_matrix(cls, z, p, q):
        with np.errstate(divide="ignore"):
            return cls(z, p, np.log(np.asarray(q, float)))

    @property
    def q(self) -> np.ndarray:
        return np.exp(self.log_q)

    @property
    def pi(self) -> np.ndarray:
        return self.q @ self.p

    def zvalues(self) -> np.ndarray:
        return (self.q @ (self.p * self.z)) / self.pi

    def cells(self) -> list[CellSummary]:
        return [CellSummary(m, (zz,)) for m, zz in zip(self.pi, self.zvalues())]


def mutual_information(ch: Channel) -> float:
    """``sum_n sum_i p_i q_ni log(q_ni / pi_n)`` in nats (``0 log 0 = 0``)."""
    q = ch.q
    pi = ch.pi
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = ch.p[None, :] * q * (ch.log_q - np.log(pi)[:, None])
    return float(max(np.nansum(np.where(q > 0, terms, 0.0)), 0.0))


@dataclass
class ChannelSolution:
    channel: Channel
    schedule: WageSchedule
    dual: DualCertificate
    lam: float
    mutual_information: float
    mu: float
    total_cost: float
    iterations: int
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def mutual_information_bits(self) -> float:
        return self.mutual_information / LN2

    @property
    def incentive_cost(self) -> float:
        return self.schedule.expected_wage

    def ratio_monotone(self, tol: float = 1e-9) -> bool:
        """True when, for every pair of wage-adjacent categories, the log
        likelihood ratio ``log q_hi(z) - log q_lo(z)`` is nondecreasing in z."""
        order = np.argsort(self.schedule.wages, kind="stable")
        lq = self.channel.log_q[order]
        zorder = np.argsort(self.channel.z, kind="stable")
        ratios = np.diff(lq, axis=0)[:, zorder]
        finite = np.isfinite(ratios)
        steps = np.diff(np.where(finite, ratios, 0.0), axis=1)
        ok = finite[:, 1:] & finite[:, :-1]
        scale = max(1.0, float(np.abs(ratios[finite]).max(initial=0.0)))
        return bool(np.all(steps[ok] >= -tol * scale))


def _objective(ch: Channel, c, u, mu) -> float:
    pi = ch.pi
    try:
        inc = incentive_cost(pi, ch.zvalues(), c, u)
    except InfeasibleError:
        return np.inf
    return inc + mu * mutual_information(ch)


def _gibbs(ch: Channel, w, lam, u, mu) -> np.ndarray:
    expo = (lam * u.u(w)[:, None] * ch.z[None, :] - w[:, None]) / mu
    with np.errstate(divide="ignore"):
        logits = np.log(ch.pi)[:, None] + expo
    return logits - logsumexp(logits, axis=0, keepdims=True)


def _tidy(ch: Channel, w) -> tuple[Channel, list[str]]:
    """Drop near-empty categories and merge categories that all pay zero."""
    events = []
    keep = ch.pi >= PRUNE_MASS
    if not np.all(keep):
        events.append(f"pruned {int(np.sum(~keep))} categories")
        ch = Channel(ch.z, ch.p, ch.log_q[keep] - logsumexp(ch.log_q[keep], axis=0, keepdims=True))
        w = w[keep]
    zero = np.flatnonzero(w == 0)
    if zero.size > 1:
        events.append(f"merged {zero.size} zero-wage categories")
        merged = logsumexp(ch.log_q[zero], axis=0)
        rest = np.delete(ch.log_q, zero[1:], axis=0)
        rest[zero[0]] = merged
        ch = Channel(ch.z, ch.p, rest)
    return ch, events


def initial_channel(z, p, K, seed=0, scale=0.1) -> Channel:
    """Uniform channel plus a small seeded perturbation (to break symmetry)."""
    rng = np.random.default_rng(seed)
    logits = scale * rng.standard_normal((K, len(z)))
    return Channel(z, p, logits - logsumexp(logits, axis=0, keepdims=True))


def solve_channel(z, p, u: UtilitySpec, c: float, mu: float, K: int, *, seed: int = 0,
                  damping: float = 0.5, tol: float = 1e-8, max_iter: int = 10_000,
                  init: Optional[Channel] = None) -> ChannelSolution:
    """Cost-minimising random monitoring technology with ``K`` categories.

    Each iteration solves wages for the current channel, forms the Gibbs
    channel for those wages and moves a damped step towards it (halving the
    step until the objective does not increase).  Stops when the channel
    changes by less than ``tol`` in sup norm.
    """
    z = np.asarray(z, float)
    p = np.asarray(p, float)
    if not mu > 0:
        raise ValueError("mu must be positive")
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("grid weights must be a probability vector")
    if not np.any((z > 0) & (p > 0)):
        raise InfeasibleError("infeasible: no informative cell")
    ch = init if init is not None else initial_channel(z, p, K, seed)
    J = _objective(ch, c, u, mu)
    if not np.isfinite(J):
        raise InfeasibleError("initial channel is uninformative")
    history = [J]
    events = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sched, cert = solve_ll_single(ch.cells(), c, u)
        w, lam = sched.wages, float(cert.lam[0])
        ch, ev = _tidy(ch, w)
        if ev:
            events.extend(ev)
            log.info("channel iteration %d: %s", it, "; ".join(ev))
            J = _objective(ch, c, u, mu)
            sched, cert = solve_ll_single(ch.cells(), c, u)
            w, lam = sched.wages, float(cert.lam[0])
        target = _gibbs(ch, w, lam, u, mu)
        step = damping
        while True:
            mixed = np.logaddexp(np.log1p(-step) + ch.log_q, np.log(step) + target)
            trial = Channel(z, p, mixed - logsumexp(mixed, axis=0, keepdims=True))
            J_new = _objective(trial, c, u, mu)
            if J_new <= J + 1e-12 * max(1.0, abs(J)) or step < 1e-8:
                break
            step *= 0.5
        if J_new > J + 1e-10 * max(1.0, abs(J)):
            log.warning("objective increased by %.3g at iteration %d", J_new - J, it)
            converged = True
            break
        change = float(np.max(np.abs(trial.q - ch.q)))
        ch, J = trial, min(J_new, J) if J_new <= J else J_new
        history.append(J)
        if change < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError("channel iteration did not converge",
                               diagnostics={"iterations": it, "objective_tail": history[-5:]})
    # report the channel in exact Gibbs form when that does not cost anything
    sched, cert = solve_ll_single(ch.cells(), c, u)
    ch, ev = _tidy(ch, sched.wages)
    events.extend(ev)
    sched, cert = solve_ll_single(ch.cells(), c, u)
    gibbs = Channel(z, p, _gibbs(ch, sched.wages, float(cert.lam[0]), u, mu))
    if np.all(gibbs.pi >= PRUNE_MASS) and _objective(gibbs, c, u, mu) <= J + 1e-10 * max(1.0, abs(J)):
        ch = gibbs
        sched, cert = solve_ll_single(ch.cells(), c, u)
    mi = mutual_information(ch)
    total = sched.expected_wage + mu * mi
    return ChannelSolution(ch, sched, cert, float(cert.lam[0]), mi, mu, total, it, history,
                           {"events": events, "converged": converged})


def channel_to_csv(ch: Channel) -> str:
    """Channel matrix as CSV: a header of grid z-values, then one row per category."""
    lines = ["category," + ",".join(format(float(v), ".12g") for v in ch.z)]
    for n, row in enumerate(ch.q):
        lines.append(f"{n}," + ",".join(format(float(v), ".12g") for v in row))
    return "\n".join(lines) + "\n"
