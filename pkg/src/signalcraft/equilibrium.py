"""Threshold equilibrium of the remote/in-person game.

Given a posterior mean belief ``theta_bar`` about the risk state, agents with
private value ``v`` below a critical type stay remote. The equilibrium remote
mass is the smallest ``u`` at which the marginal agent's value ``G^{-1}(u)``
covers the expected infection cost ``c1(u) * theta_bar + c2(u)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dist

ABOVE_RANGE = math.inf  # marker for "no posterior mean attains this mass"
BISECT_ITERS = 200
MASS_TOL = 1e-13


def _zero(y):
    return np.zeros_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class CostModel:
    """Infection cost ``theta * c1(y) + c2(y)`` at remote mass ``y``.

    ``c1`` and ``c2`` must accept numpy arrays.
    """

    c1: Callable
    c2: Callable = _zero
    C: float = 1.0
    label: str = "custom"
    params: Optional[dict] = None

    def __post_init__(self):
        grid = np.linspace(0.0, 1.0, 101)
        c1, c2 = np.asarray(self.c1(grid), float), np.asarray(self.c2(grid), float)
        if abs(c1[-1]) > 1e-12 or abs(c2[-1]) > 1e-12:
            raise ValueError("c1(1) and c2(1) must vanish")
        if np.any(c1 < -1e-12) or np.any(c2 < -1e-12):
            raise ValueError("costs must be nonnegative")
        if np.any(np.diff(c2) > 1e-12):
            raise ValueError("c2 must be nonincreasing")
        if np.any(c1 > self.C + 1e-12):
            raise ValueError("c1 exceeds its bound C")
        if not np.all(np.diff(c1) < 0):
            if np.all(np.abs(c1) <= 1e-12):
                warnings.warn("c1 is identically zero; risk has no effect on the equilibrium",
                              stacklevel=3)
            else:
                raise ValueError("c1 must be strictly decreasing")

    def to_dict(self):
        if self.params is None:
            raise ValueError("custom cost models are not serializable")
        return dict(kind=self.label, **self.params)


def linear_cost_model(C=1.0):
    """``c1(y) = C (1 - y)``, ``c2 = 0``."""
    C = float(C)
    return CostModel(lambda y: C * (1.0 - np.asarray(y, dtype=float)), C=C,
                     label="linear", params={"C": C})


def epidemic_cost_model(gamma, p):
    """Cost from a one-step infection model with prevalence ``p`` and rate ``gamma``.

    Expected infection cost for an in-person agent is linear in the risk state
    and in the in-person mass ``1 - y``: ``c1(y) = gamma p (1 - p) (1 - y)``.
    """
    if gamma < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need gamma >= 0 and 0 <= p <= 1")
    C = float(gamma) * p * (1.0 - p)
    return CostModel(lambda y: C * (1.0 - np.asarray(y, dtype=float)), C=C,
                     label="epidemic", params={"gamma": float(gamma), "p": float(p)})


def critical_type(value_dist, y):
    """Value of the marginal agent at remote mass ``y``: ``G^{-1}(y)``."""
    return value_dist.quantile(y)


class EquilibriumMap:
    """The monotone map ``theta_bar -> m(theta_bar)`` and its generalized inverse.

    Build from a value distribution and a cost model, or from an explicit
    function via :meth:`from_function` / :meth:`identity` (tests and worked
    examples that bypass the game).
    """

    def __init__(self, value_dist=None, cost=None, theta_max=1e3):
        self.value_dist = value_dist
        self.cost = cost
        self.theta_max = float(theta_max)
        self._fn = None
        self._inverse = None
        self.label = "game"

    @classmethod
    def from_function(cls, fn, inverse=None, label="override", theta_max=1e3):
        obj = cls(theta_max=theta_max)
        obj._fn, obj._inverse, obj.label = fn, inverse, label
        return obj

    @classmethod
    def identity(cls):
        clip = lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        inv = lambda y: np.asarray(y, dtype=float)
        return cls.from_function(clip, inverse=inv, label="identity", theta_max=1.0)

    @property
    def lipschitz_bound(self):
        """``C * kappa`` when the value distribution has a density bound."""
        if self.value_dist is None or self.value_dist.density_bound is None:
            return None
        return self.cost.C * self.value_dist.density_bound

    def __call__(self, theta_bar):
        return self.remote_mass(theta_bar)

    def remote_mass(self, theta_bar):
        tb = np.asarray(theta_bar, dtype=float)
        if np.any(tb < 0):
            raise ValueError("posterior mean must be nonnegative")
        if self._fn is not None:
            out = np.asarray(self._fn(tb), dtype=float)
        else:
            out = self._bisect_mass(np.atleast_1d(tb)).reshape(tb.shape)
        return float(out) if out.ndim == 0 else out

    def _gap(self, u, tb):
        G = self.value_dist
        return (np.asarray(G.quantile(u), float)
                - np.asarray(self.cost.c1(u), float) * tb
                - np.asarray(self.cost.c2(u), float))

    def _bisect_mass(self, tb):
        lo = np.zeros_like(tb)
        hi = np.ones_like(tb)
        at_zero = self._gap(lo, tb) >= 0.0
        # invariant: gap(lo) < 0 and the crossing (or u = 1) lies in (lo, hi]
        for _ in range(BISECT_ITERS):
            if np.all(hi - lo <= MASS_TOL):
                break
            mid = 0.5 * (lo + hi)
            ok = self._gap(mid, tb) >= 0.0
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        return np.where(at_zero, 0.0, hi)

    def inverse(self, y, theta_max=None):
        """``inf{theta_bar >= 0 : m(theta_bar) >= y}``; ``inf`` when out of range."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any((y_arr < 0) | (y_arr > 1)):
            raise ValueError("remote mass must lie in [0, 1]")
        top = self.theta_max if theta_max is None else float(theta_max)
        if self._inverse is not None:
            out = np.asarray(self._inverse(y_arr), dtype=float)
            out = np.where(out > top + 1e-12, ABOVE_RANGE, out)
        else:
            out = self._bisect_inverse(y_arr, top)
        return float(out[0]) if np.ndim(y) == 0 else out

    def _bisect_inverse(self, y, top):
        lo = np.zeros_like(y)
        hi = np.full_like(y, top)
        m_top = np.atleast_1d(self.remote_mass(hi))
        unreachable = m_top < y
        trivial = np.atleast_1d(self.remote_mass(lo)) >= y
        tol = 1e-12 * max(1.0, top)
        for _ in range(BISECT_ITERS):
            if np.all(hi - lo <= tol):
                break
            mid = 0.5 * (lo + hi)
            ok = np.atleast_1d(self.remote_mass(mid)) >= y
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        out = np.where(trivial, 0.0, hi)
        return np.where(unreachable, ABOVE_RANGE, out)

    def sup_preimage(self, w_hi, theta_max):
        """``sup{theta_bar in [0, theta_max] : m(theta_bar) <= w_hi}`` (``nan`` if empty)."""
        if float(self.remote_mass(theta_max)) <= w_hi:
            return float(theta_max)
        if float(self.remote_mass(0.0)) > w_hi:
            return math.nan
        if self.label == "identity":
            return float(w_hi)
        lo, hi = 0.0, float(theta_max)
        tol = 1e-12 * max(1.0, theta_max)
        for _ in range(BISECT_ITERS):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if float(self.remote_mass(mid)) <= w_hi:
                lo = mid
            else:
                hi = mid
        return lo

    def to_dict(self):
        if self.label == "identity":
            return {"kind": "identity"}
        raise ValueError("only the identity override is serializable")


def remote_mass(eq_map, theta_bar):
    return eq_map.remote_mass(theta_bar)


def remote_mass_inverse(eq_map, y, theta_max=None):
    return eq_map.inverse(y, theta_max)


def cost_from_dict(spec):
    kind = spec.get("kind")
    if kind == "linear":
        return linear_cost_model(spec.get("C", 1.0))
    if kind == "epidemic":
        return epidemic_cost_model(spec["gamma"], spec["p"])
    raise ValueError(f"unknown cost model kind {kind!r}")


def map_from_config(cfg, theta_max=1e3):
    """Equilibrium map from a config with ``value_dist`` + ``cost`` or an ``equilibrium`` override."""
    override = cfg.get("equilibrium")
    if override is not None:
        if override.get("kind") != "identity":
            raise ValueError(f"unknown equilibrium override {override!r}")
        return EquilibriumMap.identity()
    return EquilibriumMap(dist.from_dict(cfg["value_dist"]), cost_from_dict(cfg["cost"]),
                          theta_max=theta_max)
