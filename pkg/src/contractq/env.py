"""Likelihood-ratio environments.

Every environment describes the distribution of ``Z = 1 - p0/p1`` under the
target action.  Raw data spaces are never materialised: all downstream code
consumes cell masses and conditional z-values, which are computed here either
in closed form or by Gauss-Legendre quadrature.

Cells are right-half-open intervals ``[a, b)`` of the score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .cells import CellSummary
from .errors import EmptyCellError

DEFAULT_RESOLUTION = 256
TRUNCATION_RADIUS = 8.0
EMPTY_MASS = 1e-14
DEVIATIONS = ("01", "10", "00")


@lru_cache(maxsize=32)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _segments(lo, hi, breaks):
    pts = sorted({float(b) for b in breaks if lo < b < hi})
    return [lo, *pts, hi]


def _std_normal_interval(lo, hi):
    """P(lo <= X < hi) for standard normal X, accurate in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    upper = lo > 0
    out = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    return np.maximum(out, 0.0)


class ZEnvironment:
    """Base class: distribution of the likelihood-ratio statistic Z."""

    kind: str = ""
    resolution: int = DEFAULT_RESOLUTION

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def cdf(self, z):
        raise NotImplementedError

    def pdf(self, z):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def partial_moments(self, a, b):
        """Return ``(P(Z in [a,b)), E[Z; Z in [a,b)])``, vectorised over a, b."""
        raise NotImplementedError

    def nodes(self, breaks=(), n=None):
        """Quadrature rule ``(z, w)`` with ``sum(w * f(z)) ~ E[f(Z)]``.

        ``breaks`` are z-locations where the integrand has kinks; the rule is
        split there so each piece is integrated smoothly.
        """
        raise NotImplementedError

    def mean(self) -> float:
        z, w = self.nodes()
        return float(w @ z)

    @property
    def is_discrete(self) -> bool:
        return False


@dataclass(frozen=True)
class UniformZ(ZEnvironment):
    lo: float
    hi: float
    resolution: int = DEFAULT_RESOLUTION
    kind: str = field(default="uniform-z", init=False)

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def width(self):
        return self.hi - self.lo

    def cdf(self, z):
        return np.clip((np.asarray(z, float) - self.lo) / self.width, 0.0, 1.0)

    def pdf(self, z):
        z = np.asarray(z, float)
        return np.where((z >= self.lo) & (z <= self.hi), 1.0 / self.width, 0.0)

    def quantile(self, q):
        return self.lo + np.asarray(q, float) * self.width

    def partial_moments(self, a, b):
        a = np.clip(np.asarray(a, float), self.lo, self.hi)
        b = np.clip(np.asarray(b, float), self.lo, self.hi)
        b = np.maximum(a, b)
        mass = (b - a) / self.width
        first = (b - a) * (b + a) / (2.0 * self.width)
        return mass, first

    def nodes(self, breaks=(), n=None):
        n = n or self.resolution
        x, w = _gauss_legendre(n)
        zs, ws = [], []
        pts = _segments(self.lo, self.hi, breaks)
        for a, b in zip(pts[:-1], pts[1:]):
            half = 0.5 * (b - a)
            zs.append(a + half * (x + 1.0))
            ws.append(w * half / self.width)
        return np.concatenate(zs), np.concatenate(ws)


@dataclass(frozen=True)
class NormalSignal(ZEnvironment):
    """Z for a signal ``omega ~ Normal(a, sigma2)`` with effort ``a`` in {0, 1}.

    ``Z(omega) = 1 - exp((1 - 2 omega) / (2 sigma2))`` is increasing in omega,
    so every score interval is an omega interval.  Partial moments use the
    identity ``E1[Z; A] = P1(A) - P0(A)``.
    """

    sigma2: float
    resolution: int = DEFAULT_RESOLUTION
    radius: float = TRUNCATION_RADIUS
    kind: str = field(default="normal-signal", init=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))

    @property
    def support(self):
        return (-np.inf, 1.0)

    def z_of_omega(self, omega):
        omega = np.asarray(omega, float)
        return -np.expm1((1.0 - 2.0 * omega) / (2.0 * self.sigma2))

    def omega_of_z(self, z):
        z = np.asarray(z, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            om = 0.5 - self.sigma2 * np.log1p(-np.minimum(z, 1.0))
        return np.where(z >= 1.0, np.inf, om)

    def cdf(self, z):
        return ndtr((self.omega_of_z(z) - 1.0) / self.sigma)

    def pdf(self, z):
        z = np.asarray(z, float)
        om = self.omega_of_z(z)
        dens = np.exp(-0.5 * ((om - 1.0) / self.sigma) ** 2) / (self.sigma * np.sqrt(2 * np.pi))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = dens * self.sigma2 / (1.0 - z)
        return np.where(z < 1.0, out, 0.0)

    def quantile(self, q):
        return self.z_of_omega(1.0 + self.sigma * ndtri(np.asarray(q, float)))

    def partial_moments(self, a, b):
        lo = self.omega_of_z(a)
        hi = self.omega_of_z(b)
        hi = np.maximum(lo, hi)
        p1 = _std_normal_interval((lo - 1.0) / self.sigma, (hi - 1.0) / self.sigma)
        p0 = _std_normal_interval(lo / self.sigma, hi / self.sigma)
        return p1, p1 - p0

    @property
    def omega_window(self):
        # covers both the high-effort (mean 1) and low-effort (mean 0) laws
        r = self.radius * self.sigma
        return (-r, 1.0 + r)

    def nodes(self, breaks=(), n=None):
        n = n or self.resolution
        x, w = _gauss_legendre(n)
        lo, hi = self.omega_window
        om_breaks = [float(self.omega_of_z(b)) for b in breaks if b < 1.0]
        pts = _segments(lo, hi, om_breaks)
        zs, ws = [], []
        for a, b in zip(pts[:-1], pts[1:]):
            half = 0.5 * (b - a)
            om = a + half * (x + 1.0)
            dens = np.exp(-0.5 * ((om - 1.0) / self.sigma) ** 2) / (self.sigma * np.sqrt(2 * np.pi))
            zs.append(self.z_of_omega(om))
            ws.append(w * half * dens)
        return np.concatenate(zs), np.concatenate(ws)


@dataclass(frozen=True, eq=False)
class DiscreteGrid(ZEnvironment):
    """Finitely many atoms ``(z_i, p_i)``; used by the oracle and channel solver."""

    z: np.ndarray
    p: np.ndarray
    kind: str = field(default="discrete-grid", init=False)

    def __post_init__(self):
        z = np.asarray(self.z, float).ravel()
        p = np.asarray(self.p, float).ravel()
        if z.shape != p.shape or z.size == 0:
            raise ValueError("z and p must be non-empty and the same length")
        if np.any(p <= 0):
            raise ValueError("atom masses must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"atom masses sum to {p.sum():.12g}, expected 1")
        if np.any(z >= 1.0):
            raise ValueError("z-values must lie below 1")
        if abs(p @ z) > 1e-9:
            raise ValueError("nonzero mean: E[Z | high effort] must be 0")
        order = np.argsort(z, kind="stable")
        object.__setattr__(self, "z", z[order])
        object.__setattr__(self, "p", p[order])

    @cached_property
    def _cum(self):
        return np.concatenate([[0.0], np.cumsum(self.p)]), np.concatenate(
            [[0.0], np.cumsum(self.p * self.z)]
        )

    @property
    def is_discrete(self):
        return True

    @property
    def support(self):
        return (float(self.z[0]), float(self.z[-1]))

    def cdf(self, z):
        cp, _ = self._cum
        return cp[np.searchsorted(self.z, np.asarray(z, float), side="right")]

    def pdf(self, z):
        raise TypeError("discrete environments have no density")

    def quantile(self, q):
        cp, _ = self._cum
        idx = np.searchsorted(cp[1:], np.asarray(q, float) - 1e-15, side="left")
        return self.z[np.minimum(idx, self.z.size - 1)]

    def partial_moments(self, a, b):
        cp, cf = self._cum
        ia = np.searchsorted(self.z, np.asarray(a, float), side="left")
        ib = np.searchsorted(self.z, np.asarray(b, float), side="left")
        ib = np.maximum(ia, ib)
        return cp[ib] - cp[ia], cf[ib] - cf[ia]

    def nodes(self, breaks=(), n=None):
        return self.z.copy(), self.p.copy()


def uniform_z_env(lo: float, hi: float, resolution: int = DEFAULT_RESOLUTION) -> UniformZ:
    """Z uniform on ``[lo, hi]``; the interval must be centred at zero."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if hi > 1.0:
        raise ValueError("Z cannot exceed 1")
    if abs(lo + hi) > 1e-12 * max(1.0, hi - lo):
        raise ValueError("nonzero mean: E[Z | high effort] must be 0")
    return UniformZ(float(lo), float(hi), resolution)


def normal_signal_env(sigma2: float, resolution: int = DEFAULT_RESOLUTION) -> NormalSignal:
    """Z induced by a Normal(a, sigma2) signal of effort ``a``."""
    return NormalSignal(float(sigma2), resolution)


def discrete_grid_env(z, p) -> DiscreteGrid:
    return DiscreteGrid(np.asarray(z, float), np.asarray(p, float))


def cell_moments(env: ZEnvironment, interval) -> tuple[float, float]:
    """Mass and conditional mean of Z on ``[a, b)``."""
    a, b = interval
    mass, first = env.partial_moments(a, b)
    mass, first = float(mass), float(first)
    if mass <= EMPTY_MASS:
        raise EmptyCellError()
    return mass, first / mass


def cutoff_moments(env: ZEnvironment, cutoffs) -> tuple[np.ndarray, np.ndarray]:
    """Masses and partial first moments of the cells cut at ``cutoffs``."""
    edges = np.concatenate([[-np.inf], np.asarray(cutoffs, float), [np.inf]])
    return env.partial_moments(edges[:-1], edges[1:])


def cells_from_cutoffs(env: ZEnvironment, cutoffs) -> list[CellSummary]:
    cutoffs = np.asarray(cutoffs, float)
    if np.any(np.diff(cutoffs) <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    mass, first = cutoff_moments(env, cutoffs)
    if np.any(mass <= EMPTY_MASS):
        raise EmptyCellError()
    return [CellSummary(m, (f / m,)) for m, f in zip(mass, first)]


@dataclass(frozen=True, eq=False)
class ProductEnvironment:
    """Two technologically independent agents, ``Z = (Z1, Z2)``."""

    agents: tuple[ZEnvironment, ZEnvironment]

    def __post_init__(self):
        if len(self.agents) != 2:
            raise ValueError("a product environment has exactly two agents")
        object.__setattr__(self, "agents", tuple(self.agents))

    def swapped(self) -> "ProductEnvironment":
        return ProductEnvironment((self.agents[1], self.agents[0]))

    @property
    def is_discrete(self):
        return all(e.is_discrete for e in self.agents)


def halfplane_raw(env2: ProductEnvironment, normal, offset):
    """Masses (2,) and partial first moments (2, 2) of the two half-planes.

    Row 0 is ``{n.z < t}``, row 1 is ``{n.z >= t}``.  The inner integral over
    the axis with the larger coefficient is done in closed form; the outer one
    by the environment's quadrature rule split at the kinks.
    """
    n = np.asarray(normal, float)
    norm = float(np.hypot(n[0], n[1]))
    if not np.all(np.isfinite(n)) or norm == 0.0:
        raise ValueError("degenerate line")
    n = n / norm
    t = float(offset) / norm
    j = 0 if abs(n[0]) >= abs(n[1]) else 1
    i = 1 - j
    inner, outer = env2.agents[j], env2.agents[i]
    ai, aj = n[i], n[j]

    breaks = []
    if ai != 0.0:
        breaks = [(t - aj * e) / ai for e in inner.support if np.isfinite(e)]
    zo, wo = outer.nodes(breaks)
    thr = (t - ai * zo) / aj
    if aj > 0:
        m_hi, s_hi = inner.partial_moments(thr, np.inf)
        m_lo, s_lo = inner.partial_moments(-np.inf, thr)
    else:
        cut = np.nextafter(thr, np.inf)
        m_hi, s_hi = inner.partial_moments(-np.inf, cut)
        m_lo, s_lo = inner.partial_moments(cut, np.inf)

    masses = np.array([wo @ m_lo, wo @ m_hi])
    firsts = np.empty((2, 2))
    firsts[0, i], firsts[1, i] = (wo * zo) @ m_lo, (wo * zo) @ m_hi
    firsts[0, j], firsts[1, j] = wo @ s_lo, wo @ s_hi
    return masses, firsts


def halfplane_moments(env2: ProductEnvironment, line) -> list[CellSummary]:
    """Cells ``[{n.z < t}, {n.z >= t}]`` for ``line = (normal, offset)``."""
    normal, offset = line
    masses, firsts = halfplane_raw(env2, normal, offset)
    if np.any(masses <= EMPTY_MASS):
        raise EmptyCellError()
    return [CellSummary(m, tuple(f / m)) for m, f in zip(masses, firsts)]


@dataclass(frozen=True, eq=False)
class MultiTaskEnvironment:
    """One agent, two tasks with normal signals; deviations 01, 10 and 00.

    ``costs`` maps each action label ("11", "01", "10", "00") to its effort
    cost; "11" must be the most costly.
    """

    sigma2: tuple[float, float]
    costs: dict
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        s1, s2 = (float(s) for s in self.sigma2)
        object.__setattr__(self, "sigma2", (s1, s2))
        costs = {k: float(v) for k, v in dict(self.costs).items()}
        if set(costs) != {"11", *DEVIATIONS}:
            raise ValueError("costs must be given for actions 11, 01, 10 and 00")
        if any(costs["11"] <= costs[a] for a in DEVIATIONS):
            raise ValueError("action 11 must be strictly the most costly")
        object.__setattr__(self, "costs", costs)

    @cached_property
    def envs(self) -> tuple[NormalSignal, NormalSignal]:
        return (NormalSignal(self.sigma2[0], self.resolution),
                NormalSignal(self.sigma2[1], self.resolution))

    @property
    def delta_costs(self) -> np.ndarray:
        """``c(11) - c(a)`` in deviation order (01, 10, 00)."""
        return np.array([self.costs["11"] - self.costs[a] for a in DEVIATIONS])

    def score(self, weights, z1, z2):
        l01, l10, l00 = weights
        return (l01 + l00) * z1 + (l10 + l00) * z2 - l00 * z1 * z2

    def score_sup(self, weights) -> float:
        return float(np.sum(weights))


def zlambda_raw(env: MultiTaskEnvironment, weights, cutoffs):
    """Masses (n,) and partial moments (n, 3) of the Z_lambda level-set slabs."""
    w = np.asarray(weights, float)
    if w.shape != (3,) or np.any(w < 0):
        raise ValueError("weight precondition: need three nonnegative weights")
    l01, l10, l00 = w
    alpha, beta = l01 + l00, l10 + l00
    if not (alpha > 0 and beta > 0):
        raise ValueError("weight precondition: lambda01+lambda00 and lambda10+lambda00 must be positive")
    cutoffs = np.asarray(cutoffs, float)
    if np.any(np.diff(cutoffs) <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    e1, e2 = env.envs
    # outer z1 at which a slab edge meets sup Z2 = 1: the inner integrand kinks there
    breaks = [(c - l10 - l00) / l01 for c in cutoffs] if l01 > 0 else []
    z1, w1 = e1.nodes(breaks)
    slope = l10 + l00 * (1.0 - z1)
    edges = np.concatenate([[-np.inf], cutoffs, [np.inf]])
    with np.errstate(invalid="ignore"):
        thr = (edges[None, :] - alpha * z1[:, None]) / slope[:, None]
    thr[:, 0] = -np.inf
    thr[:, -1] = np.inf
    cm, cs = e2.partial_moments(-np.inf, thr)
    dm, ds = np.diff(cm, axis=1), np.diff(cs, axis=1)
    mass = w1 @ dm
    m1 = (w1 * z1) @ dm
    m2 = w1 @ ds
    m12 = (w1 * z1) @ ds
    firsts = np.column_stack([m1, m2, m1 + m2 - m12])
    return mass, firsts


def zlambda_moments(env: MultiTaskEnvironment, weights, cutoffs) -> list[CellSummary]:
    """Cells ``{Z_lambda in [c_{n-1}, c_n)}`` with (z01, z10, z00) values."""
    mass, firsts = zlambda_raw(env, weights, cutoffs)
    if np.any(mass <= EMPTY_MASS):
        raise EmptyCellError()
    return [CellSummary(m, tuple(f / m)) for m, f in zip(mass, firsts)]


def quantile_atoms(env: ZEnvironment, m: int) -> DiscreteGrid:
    """Discretise ``env`` into ``m`` equal-mass atoms at conditional means."""
    q = np.linspace(0.0, 1.0, m + 1)
    edges = env.quantile(q)
    edges[0], edges[-1] = -np.inf, np.inf
    mass, first = env.partial_moments(edges[:-1], edges[1:])
    z = first / mass
    p = mass / mass.sum()
    z = z - p @ z
    return DiscreteGrid(z, p)


def validate_weights(weights: Sequence[float]):
    w = np.asarray(weights, float)
    if w.shape != (3,) or np.any(w < 0) or not (w[0] + w[2] > 0 and w[1] + w[2] > 0):
        raise ValueError("weight precondition")
    return w
