"""Monitoring costs as functions of the output-signal distribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

PROB_TOL = 1e-9
LOG2E = 1.0 / np.log(2.0)


def _check_probabilities(masses) -> np.ndarray:
    p = np.asarray(masses, float).ravel()
    if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError("malformed probability vector")
    return p


def entropy_bits(masses) -> float:
    """Shannon entropy ``-sum p log2 p`` over positive entries."""
    p = np.asarray(masses, float)
    p = p[p > 0]
    return float(-(p @ np.log2(p)))


@dataclass(frozen=True, eq=False)
class MonitoringCostSpec:
    """How costly a monitoring technology is, as ``h(pi)``.

    ``kind`` is ``"rating-scale"`` (``h = f(#cells)`` for a strictly
    increasing table ``f``), ``"entropy"`` (bits) or ``"custom"`` (any ``h``
    satisfying the symmetry and merging axioms).  ``mu`` scales the cost and
    ``K`` caps the number of categories.
    """

    kind: str = "rating-scale"
    mu: float = 0.0
    K: int = 100
    table: Optional[Union[Sequence[float], Callable[[int], float]]] = None
    h: Optional[Callable] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in ("rating-scale", "entropy", "custom"):
            raise ValueError(f"unknown monitoring cost kind {self.kind!r}")
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError("K must be an integer >= 2")
        object.__setattr__(self, "K", int(self.K))
        if self.kind == "rating-scale":
            vals = np.array([self.f(n) for n in range(1, self.K + 1)])
            if np.any(vals < 0) or np.any(np.diff(vals) <= 0):
                raise ValueError("rating-scale table must be nonnegative and strictly increasing")
        if self.kind == "custom":
            if self.h is None:
                raise ValueError("custom monitoring cost needs h")
            check_cost_axioms(self)

    def f(self, n: int) -> float:
        """Rating-scale table value for ``n`` cells (``f(n) = n`` by default)."""
        if self.table is None:
            return float(n)
        if callable(self.table):
            return float(self.table(n))
        if not 1 <= n <= len(self.table):
            raise ValueError(f"rating-scale table has no entry for {n} cells")
        return float(self.table[n - 1])

    def with_mu(self, mu: float) -> "MonitoringCostSpec":
        return MonitoringCostSpec(self.kind, mu, self.K, self.table, self.h, self.name)

    def with_K(self, K: int) -> "MonitoringCostSpec":
        return MonitoringCostSpec(self.kind, self.mu, K, self.table, self.h, self.name)

    @property
    def depends_on_masses(self) -> bool:
        return self.kind != "rating-scale"

    def raw(self, p: np.ndarray) -> float:
        """``h`` without validation; ``p`` may contain zeros."""
        if self.kind == "entropy":
            return entropy_bits(p)
        if self.kind == "rating-scale":
            return self.f(int(np.count_nonzero(p > 0)))
        return float(self.h(np.asarray(p, float)))

    def mass_gradient(self, p: np.ndarray) -> np.ndarray:
        """Partial derivatives of ``h`` in each mass (constant terms dropped)."""
        p = np.asarray(p, float)
        if self.kind == "entropy":
            return -np.log2(p)
        if self.kind == "rating-scale":
            return np.zeros_like(p)
        eps = 1e-7
        base = self.raw(p)
        g = np.empty_like(p)
        for i in range(p.size):
            q = p.copy()
            q[i] += eps
            g[i] = (self.raw(q) - base) / eps
        return g


def monitoring_cost(spec: MonitoringCostSpec, masses) -> float:
    """``h(pi)``, the unscaled monitoring cost of a signal distribution."""
    return spec.raw(_check_probabilities(masses))


def check_cost_axioms(spec: MonitoringCostSpec, n_samples: int = 32, seed: int = 0, tol: float = 1e-10):
    """Spot-check permutation symmetry and that merging cells never raises ``h``.

    Raises ``ValueError`` on the first violation found.
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        n = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(n))
        base = spec.raw(p)
        if abs(spec.raw(rng.permutation(p)) - base) > tol * max(1.0, abs(base)):
            raise ValueError("monitoring cost is not permutation-symmetric")
        i, j = rng.choice(n, 2, replace=False)
        merged = np.delete(p, j)
        merged[i if i < j else i - 1] += p[j]
        if spec.raw(merged) > base + tol * max(1.0, abs(base)):
            raise ValueError("merging cells increased the monitoring cost")
        padded = np.append(p, 0.0)
        if abs(spec.raw(padded) - base) > tol * max(1.0, abs(base)):
            raise ValueError("a zero-mass cell changed the monitoring cost")


def cost_from_config(block: dict) -> MonitoringCostSpec:
    kind = block.get("kind", "rating-scale")
    mu = block.get("mu", 0.0)
    if isinstance(mu, list):
        mu = mu[0] if mu else 0.0
    return MonitoringCostSpec(kind=kind, mu=float(mu), K=int(block.get("K", 100)),
                              table=block.get("table"))
