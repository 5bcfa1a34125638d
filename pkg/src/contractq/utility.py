"""Agent utility families: sqrt, CARA and user-supplied."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Vectorised accessors for a strictly concave utility with ``u(0) = 0``.

    ``inv`` inverts ``u`` and ``dinv`` inverts ``u'``.  ``bound`` is
    ``sup u`` (``inf`` when unbounded).  ``d2u`` is optional; when missing it
    is replaced by a central difference of ``du``.
    """

    kind: str
    u: Callable
    du: Callable
    inv: Callable
    dinv: Callable
    bound: float = np.inf
    d2u: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.check()

    @property
    def du0(self) -> float:
        return float(self.du(np.array(0.0)))

    def second(self, w):
        if self.d2u is not None:
            return self.d2u(w)
        w = np.asarray(w, float)
        h = 1e-6 * np.maximum(1.0, np.abs(w))
        lo = np.maximum(w - h, 0.0)
        return (self.du(w + h) - self.du(lo)) / (w + h - lo)

    def wage_at(self, slope):
        """Wage solving ``u'(w) = 1/slope``, or 0 where LL binds."""
        s = np.asarray(slope, float)
        out = np.zeros_like(s)
        mask = s > 1.0 / self.du0
        if np.any(mask):
            out[mask] = self.dinv(1.0 / s[mask])
        return out

    def utility_at(self, slope):
        """``u(wage_at(slope))``; closed forms avoid round-trips where known."""
        return self.u(self.wage_at(slope))

    def dutil_dslope(self, slope):
        """Derivative of ``u(wage_at(s))`` with respect to ``s``."""
        s = np.asarray(slope, float)
        w = self.wage_at(s)
        out = np.zeros_like(s)
        mask = w > 0
        if np.any(mask):
            wm = w[mask]
            out[mask] = -self.du(wm) / (s[mask] ** 2 * self.second(wm))
        return out

    def check(self, samples=(0.1, 1.0, 4.0, 25.0)):
        if abs(float(self.u(np.array(0.0)))) > 1e-12:
            raise ValueError("utility must satisfy u(0) = 0")
        w = np.asarray(samples, float)
        if np.any(self.du(w) <= 0):
            raise ValueError("utility must be strictly increasing")
        if np.any(self.second(w) >= 0):
            raise ValueError("utility must be strictly concave")


def sqrt_utility() -> UtilitySpec:
    def du(w):
        w = np.asarray(w, float)
        with np.errstate(divide="ignore"):
            return 0.5 / np.sqrt(w)

    return UtilitySpec(
        kind="sqrt",
        u=lambda w: np.sqrt(np.asarray(w, float)),
        du=du,
        inv=lambda v: np.asarray(v, float) ** 2,
        dinv=lambda y: 0.25 / np.asarray(y, float) ** 2,
        d2u=lambda w: -0.25 * np.asarray(w, float) ** -1.5,
    )


def cara_utility(gamma: float) -> UtilitySpec:
    """``u(w) = 1 - exp(-gamma w)``; bounded above by 1."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    g = float(gamma)
    return UtilitySpec(
        kind="cara",
        u=lambda w: -np.expm1(-g * np.asarray(w, float)),
        du=lambda w: g * np.exp(-g * np.asarray(w, float)),
        inv=lambda v: -np.log1p(-np.asarray(v, float)) / g,
        dinv=lambda y: -np.log(np.asarray(y, float) / g) / g,
        d2u=lambda w: -g * g * np.exp(-g * np.asarray(w, float)),
        bound=1.0,
        params={"gamma": g},
    )


def custom_utility(u, du, inv, dinv, bound=np.inf, d2u=None) -> UtilitySpec:
    return UtilitySpec("custom", u, du, inv, dinv, bound, d2u)


def utility_from_config(block: dict) -> UtilitySpec:
    kind = block["kind"]
    if kind == "sqrt":
        return sqrt_utility()
    if kind == "cara":
        return cara_utility(block["gamma"])
    raise ValueError(f"unknown utility kind {kind!r}")
