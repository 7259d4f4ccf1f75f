"""Optimal public signaling when the planner wants the remote mass in a set.

The planner's target is a union of remote-mass intervals. Pulled back through
the equilibrium map these become posterior-mean intervals ``[l_k, h_k]``, and
the design problem is to maximize the probability that the posterior mean
lands in one of them. Where the prior mean sits relative to the intervals
decides the regime:

* ``R1``: the prior mean is already inside; say nothing.
* ``R2``: the prior mean is above every interval; pool the low states.
* ``R3``: the prior mean is below every interval; pool the high states.
* ``R4``: the prior mean sits in a gap between intervals; first try a
  two-signal mixing rule, otherwise solve one small program per placement of
  the leftover posterior.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mechanism as mech_mod
from .mechanism import DirectMechanism, IntervalMechanism, check_mpc, direct_of
from .simplex import LpProblem, solve_lp

MEMBER_TOL = 1e-7
CUT_TOL = 1e-9
MAX_CUTS = 200
R4A_T_POINTS = 200
R4A_THETA_POINTS = 50


class UnreachablePreferenceError(ValueError):
    pass


@dataclass
class PreferredSets:
    """Target remote-mass intervals and their posterior-mean preimages."""

    omegas: list
    thetas: list
    M: float
    dropped: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.thetas)

    @property
    def l(self):
        return np.array([a for a, _ in self.thetas])

    @property
    def h(self):
        return np.array([b for _, b in self.thetas])

    def contains(self, theta, tol=MEMBER_TOL):
        return any(a - tol <= theta <= b + tol for a, b in self.thetas)

    def to_dict(self):
        return {"omegas": [list(w) for w in self.omegas],
                "thetas": [list(t) for t in self.thetas], "M": self.M,
                "dropped": self.dropped}


@dataclass
class DesignResult:
    mechanism: Optional[IntervalMechanism]
    direct: DirectMechanism
    value: float
    regime: str
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict, repr=False)  # in-memory only, not serialized

    def to_dict(self):
        return {
            "regime": self.regime,
            "value": float(self.value),
            "mechanism": None if self.mechanism is None else self.mechanism.to_dict(),
            "direct": self.direct.to_dict(),
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def validate_omegas(omegas):
    out = []
    for w in omegas:
        lo, hi = float(w[0]), float(w[1])
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"target interval {w} must satisfy 0 <= lo <= hi <= 1")
        if out and lo <= out[-1][1]:
            raise ValueError("target intervals must be disjoint and increasing")
        out.append((lo, hi))
    if not out:
        raise ValueError("need at least one target interval")
    return out


def preimage_intervals(omegas, eq_map, M):
    """Posterior-mean intervals mapped by ``eq_map`` into each target interval."""
    omegas = validate_omegas(omegas)
    M = float(M)
    kept, thetas, dropped = [], [], []
    for k, (lo, hi) in enumerate(omegas):
        l = float(eq_map.inverse(lo, theta_max=M))
        h = eq_map.sup_preimage(hi, M)
        if math.isinf(l) or math.isnan(h) or h < l or float(eq_map(l)) > hi + 1e-12:
            dropped.append(k)
            warnings.warn(f"target interval {k} = [{lo}, {hi}] is unreachable; dropped",
                          stacklevel=2)
            continue
        kept.append((lo, hi))
        thetas.append((l, min(h, M)))
    if not thetas:
        raise UnreachablePreferenceError("unreachable preference: no target interval has a "
                                         "nonempty preimage")
    return PreferredSets(kept, thetas, M, dropped)


def sets_from_thetas(thetas, M):
    """PreferredSets given directly in posterior-mean units (no equilibrium map)."""
    thetas = [(float(a), float(b)) for a, b in thetas]
    for (a, b), nxt in zip(thetas, thetas[1:] + [None]):
        if a > b or (nxt is not None and b >= nxt[0]):
            raise ValueError("posterior intervals must be ordered and disjoint")
    return PreferredSets([], thetas, float(M))


def classify_regime(prior, sets):
    mu = prior.mean()
    if sets.K == 0:
        raise ValueError("no preferred sets")
    if sets.contains(mu, tol=1e-12):
        return "R1"
    if mu > sets.h[-1]:
        return "R2"
    if mu < sets.l[0]:
        return "R3"
    return "R4"


def _result(mech, prior, value, regime, **diag):
    direct = direct_of(mech, prior)
    report = check_mpc(direct.sorted(), prior)
    diag.setdefault("mpc_min_slack", report.min_slack)
    diag.setdefault("mean_gap", report.mean_gap)
    return DesignResult(mech, direct, float(value), regime, diag)


def design_no_info(prior, regime="R1"):
    return _result(mech_mod.no_info(prior.M), prior, 1.0, regime, binding="prior mean inside target")


def design_r2(prior, sets):
    """Pool the lowest states into one posterior at the top of the highest interval."""
    mu, M = prior.mean(), prior.M
    h = float(sets.h[-1])
    q_tangent = float(prior.bar_f(h))
    q_mass = (M - mu) / (M - h) if M > h else 0.0
    q = max(0.0, min(q_tangent, q_mass, 1.0))
    binding = "tangency" if q_tangent <= q_mass else "mass"
    if q <= 0.0:
        return _result(mech_mod.no_info(M), prior, 0.0, "R2", binding=binding, q=0.0)
    mech = mech_mod.threshold_mechanism(prior, q)
    direct = direct_of(mech, prior)
    low = direct.theta_bar[np.argmin(direct.theta_bar)]
    if sets.contains(low):
        return _result(mech, prior, q, "R2", binding=binding, q=q,
                       threshold=float(mech.breakpoints[1]))
    # the threshold rule missed the interval; fall back to the certified pair
    pairs = DirectMechanism([q, 1.0 - q], [h, (mu - q * h) / (1.0 - q)])
    report = check_mpc(pairs, prior)
    return DesignResult(None, pairs, q, "R2",
                        {"binding": binding, "q": q, "note": "threshold posterior outside target; "
                         "returning certified direct mechanism", "mpc_min_slack": report.min_slack})


def r3_pool_mass(prior, l, tol=1e-13):
    """Smallest low-pool mass ``q`` that leaves the high posterior at ``l``.

    Roots of the convex ``phi(q) = f(q) - q l + l - mu``; the answer is its
    smallest root in ``[(l - mu)/l, 1]``.
    """
    mu = prior.mean()
    f = prior.partial_quantile_integral
    phi = lambda q: float(f(q)) - q * l + l - mu
    q_min = (l - mu) / l
    if phi(q_min) <= 0.0:
        return q_min, "corner"
    q_hi = float(prior.cdf(l))
    if phi(q_hi) >= 0.0:
        return 1.0, "no-root"
    lo, hi = q_min, q_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi, "tangency"


def design_r3(prior, sets):
    """Pool the highest states into one posterior at the bottom of the lowest interval."""
    l = float(sets.l[0])
    q, binding = r3_pool_mass(prior, l)
    if q >= 1.0:
        return _result(mech_mod.no_info(prior.M), prior, 0.0, "R3", binding=binding, q=1.0)
    mech = mech_mod.threshold_mechanism(prior, q)
    res = _result(mech, prior, 1.0 - q, "R3", binding=binding, q=q,
                  threshold=float(mech.breakpoints[1]) if mech.n_cells > 1 else 0.0)
    high = res.direct.theta_bar[np.argmax(res.direct.theta_bar)]
    if not sets.contains(high):
        res.diagnostics["note"] = "high posterior outside target"
    return res


def mixing_ratio(F_t, s_lo, s_hi, theta):
    """Likelihood ratio that makes a signal's posterior equal ``theta``."""
    return (1.0 - F_t) * (s_hi - theta) / (F_t * (theta - s_lo))


def _theta_grid(sets, mu, side, n):
    pts = []
    for a, b in sets.thetas:
        if side == "below":
            lo, hi = a, min(b, mu)
            if lo >= mu:
                continue
        else:
            lo, hi = max(a, mu), b
            if hi <= mu:
                continue
        g = np.array([lo]) if hi - lo <= 0 else np.linspace(lo, hi, n)
        pts.append(g[np.abs(g - mu) > 1e-12])
    if not pts:
        return np.zeros(0)
    g = np.unique(np.concatenate(pts))
    return g[np.argsort(np.abs(g - mu), kind="stable")]


def _threshold_candidates(prior, n):
    if prior.is_discrete:
        nu = prior.nu
        return 0.5 * (nu[:-1] + nu[1:])
    u = np.arange(1, n) / n
    u = u[np.argsort(np.abs(u - 0.5), kind="stable")]
    return np.asarray(prior.quantile(u), dtype=float)


def design_r4a(prior, sets, n_t=R4A_T_POINTS, n_theta=R4A_THETA_POINTS):
    """Two-signal mixing rule hitting one interval on each side of the prior mean.

    Returns ``None`` when the grid search finds no feasible configuration.
    """
    mu, M = prior.mean(), prior.M
    below = _theta_grid(sets, mu, "below", n_theta)
    above = _theta_grid(sets, mu, "above", n_theta)
    if below.size == 0 or above.size == 0:
        return None
    for t in _threshold_candidates(prior, n_t):
        F_t = float(prior.cdf(t))
        if not 1e-12 < F_t < 1.0 - 1e-12:
            continue
        mb = float(prior.moment_below(t))
        s_lo, s_hi = mb / F_t, (mu - mb) / (1.0 - F_t)
        lo_ok = below[below > s_lo + 1e-12]
        hi_ok = above[above < s_hi - 1e-12]
        if lo_ok.size == 0 or hi_ok.size == 0:
            continue
        th1, th2 = float(lo_ok[0]), float(hi_ok[0])
        p1, p2 = mixing_ratio(F_t, s_lo, s_hi, th1), mixing_ratio(F_t, s_lo, s_hi, th2)
        delta = (1.0 - p2) / (p1 - p2)
        lam = delta * p1
        if not (-1e-12 <= delta <= 1 + 1e-12 and -1e-12 <= lam <= 1 + 1e-12):
            continue
        delta, lam = min(max(delta, 0.0), 1.0), min(max(lam, 0.0), 1.0)
        mech = mech_mod.from_segments([(0.0, t, [lam, 1.0 - lam]),
                                       (t, M, [delta, 1.0 - delta])], M)
        res = _result(mech, prior, 1.0, "R4a", threshold=float(t), lam=lam, delta=delta,
                      theta_low=th1, theta_high=th2, ratio_low=p1, ratio_high=p2)
        if all(sets.contains(x) for x in res.direct.theta_bar):
            return res
    return None


def _placement_program(prior, sets, j, max_cuts=MAX_CUTS, tol=CUT_TOL):
    """Minimize the leftover mass with the leftover posterior in gap ``j``.

    Variable layout: ``q_0..q_K`` then ``z_0..z_K`` where index ``K`` is the
    leftover signal. ``order`` lists signals by increasing posterior mean.
    """
    K, mu, M = sets.K, prior.mean(), prior.M
    l = np.append(sets.l, sets.h[j - 1] if j > 0 else 0.0)
    h = np.append(sets.h, sets.l[j] if j < K else M)
    n = K + 1
    order = list(range(j)) + [K] + list(range(j, K))
    c = np.zeros(2 * n)
    c[K] = -1.0
    A_eq = np.zeros((2, 2 * n))
    A_eq[0, :n] = 1.0
    A_eq[1, n:] = 1.0
    b_eq = np.array([1.0, mu])
    rows = []
    for i in range(n):
        r = np.zeros(2 * n)
        r[i], r[n + i] = l[i], -1.0  # l q <= z
        rows.append(r)
        r = np.zeros(2 * n)
        r[n + i], r[i] = 1.0, -h[i]  # z <= h q
        rows.append(r)
    bounds_A, bounds_b = np.array(rows), np.zeros(len(rows))
    prefixes = [order[:m] for m in range(1, n)]
    cuts_A, cuts_b = [], []

    def add_cut(idx, x0):
        slope = float(prior.quantile(min(max(x0, 0.0), 1.0)))
        r = np.zeros(2 * n)
        r[idx] = slope
        r[[n + i for i in idx]] = -1.0
        cuts_A.append(r)
        cuts_b.append(slope * x0 - float(prior.partial_quantile_integral(x0)))

    for idx in prefixes:
        for x0 in (0.25, 0.5, 0.75):
            add_cut(idx, x0)
    n_cuts, violation = 0, math.inf
    while True:
        lp = LpProblem(c, np.vstack([bounds_A] + cuts_A), np.concatenate([bounds_b, cuts_b]),
                       A_eq, b_eq)
        sol = solve_lp(lp)
        if not sol.ok:
            return None, {"placement": j, "status": sol.status}
        q, z = sol.x[:n], sol.x[n:]
        Q = np.array([q[idx].sum() for idx in prefixes])
        Z = np.array([z[idx].sum() for idx in prefixes])
        gaps = np.asarray(prior.partial_quantile_integral(np.clip(Q, 0, 1))) - Z
        violation = float(gaps.max(initial=0.0))
        if violation < tol or n_cuts >= max_cuts:
            break
        for m in np.flatnonzero(gaps >= tol):
            add_cut(prefixes[m], float(Q[m]))
            n_cuts += 1
    keep = q > mech_mod.PRUNE_Q
    tb = np.where(keep, z / np.where(keep, q, 1.0), 0.0)
    direct = DirectMechanism(q[keep] / q[keep].sum(), tb[keep], np.flatnonzero(keep))
    info = {"placement": j, "status": "optimal", "cuts": n_cuts, "violation": violation,
            "leftover_mass": float(max(q[K], 0.0))}
    return direct, info


def design_r4_general(prior, sets, max_cuts=MAX_CUTS):
    """Best direct mechanism over all placements of the leftover posterior."""
    best, best_info, tried = None, None, []
    for j in range(sets.K + 1):
        direct, info = _placement_program(prior, sets, j, max_cuts=max_cuts)
        tried.append(info)
        if direct is None:
            continue
        if best is None or info["leftover_mass"] < best_info["leftover_mass"] - 1e-12:
            best, best_info = direct, info
    if best is None:
        raise RuntimeError("every placement program was infeasible")
    value = 1.0 - best_info["leftover_mass"]
    report = check_mpc(best.sorted(), prior)
    diag = {"placement": best_info["placement"], "cuts": best_info["cuts"],
            "violation": best_info["violation"], "placements": tried,
            "mpc_min_slack": report.min_slack, "mean_gap": report.mean_gap}
    return DesignResult(None, best.sorted(), min(max(value, 0.0), 1.0), "R4", diag)


def design_sets(prior, sets):
    regime = classify_regime(prior, sets)
    if regime == "R1":
        res = design_no_info(prior)
    elif regime == "R2":
        res = design_r2(prior, sets)
    elif regime == "R3":
        res = design_r3(prior, sets)
    else:
        res = design_r4a(prior, sets)
        if res is None:
            res = design_r4_general(prior, sets)
    res.diagnostics.setdefault("sets", sets.to_dict())
    return res


def design(prior, eq_map, omegas):
    """Preimages, regime, and the optimal mechanism for target intervals ``omegas``."""
    return design_sets(prior, preimage_intervals(omegas, eq_map, prior.M))
