"""Expected planner utility of a mechanism, benchmarks and parameter studies.

A signal ``i`` with posterior mean ``tb_i`` moves the remote mass to
``y_i = m(tb_i)``; the planner then earns ``h(y_i, theta)`` in state
``theta``. The value of a mechanism is

    sum_j sum_i P[j, i] * int_{cell j} h(y_i, theta) dF(theta).

Discrete priors are summed exactly. On continuous priors indicator
preferences reduce each cell integral to a prior mass over the states that
comply (located exactly or by bisection), and smooth preferences are
integrated in quantile space with batched adaptive Simpson.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import mechanism as mech_mod
from .equilibrium import EquilibriumMap
from .quadrature import adaptive_simpson_batch

IND_TOL = 1e-9
QUAD_TOL = 1e-10
FI_PANELS = 256


# --------------------------------------------------------------------------- preferences

class Preference:
    is_indicator = False
    state_free = False  # utility depends on the remote mass only
    kind = "preference"

    def utility(self, y, theta, theta_bar=None):
        raise NotImplementedError

    def cell_integrals(self, prior, a, b, closed, y, tb):
        """``int_{[a, b)} h(y, theta) dF`` elementwise (``[a, b]`` where ``closed``)."""
        raise NotImplementedError

    def full_info(self, prior, eq_map):
        raise NotImplementedError


class _IndicatorPreference(Preference):
    """Compliance indicators whose compliant states, for a fixed signal, form one interval."""

    is_indicator = True

    def compliant_states(self, y, tb, a, b):
        """Arrays ``(lo, hi)``: the compliant part of ``[a, b]`` (empty when ``lo > hi``)."""
        raise NotImplementedError

    def cell_integrals(self, prior, a, b, closed, y, tb):
        lo, hi = self.compliant_states(y, tb, a, b)
        lo, hi = np.maximum(lo, a), np.minimum(hi, b)
        out = np.zeros(np.shape(a))
        ok = lo < hi
        if ok.any():
            # the compliant set reaches the cell's right end only when hi == b
            closed_hi = closed & (hi >= b)
            m_open = prior.mass(lo[ok], hi[ok])
            m_closed = prior.mass(lo[ok], hi[ok], closed_right=True)
            out[ok] = np.where(closed_hi[ok], m_closed, m_open)
        return out


class SetBased(_IndicatorPreference):
    """Planner wants the remote mass inside a union of intervals, whatever the state."""

    kind = "set"
    state_free = True

    def __init__(self, omegas, tol=IND_TOL):
        from .set_designer import validate_omegas
        self.omegas = validate_omegas(omegas)
        self.tol = tol

    def _hit(self, y):
        y = np.asarray(y, float)
        hit = np.zeros(y.shape, dtype=bool)
        for lo, hi in self.omegas:
            hit |= (y >= lo - self.tol) & (y <= hi + self.tol)
        return hit

    def utility(self, y, theta, theta_bar=None):
        return np.broadcast_to(self._hit(y), np.broadcast(np.asarray(y), np.asarray(theta)).shape
                               ).astype(float)

    def compliant_states(self, y, tb, a, b):
        hit = self._hit(y)
        return np.where(hit, a, np.inf), np.where(hit, b, -np.inf)

    def full_info(self, prior, eq_map):
        from .set_designer import UnreachablePreferenceError, preimage_intervals
        import warnings
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sets = preimage_intervals(self.omegas, eq_map, prior.M)
        except UnreachablePreferenceError:
            return 0.0
        return float(sum(prior.mass(l, h, closed_right=True) for l, h in sets.thetas))

    def to_dict(self):
        return {"kind": "set", "omegas": [list(w) for w in self.omegas]}


class ScaledCapacity(_IndicatorPreference):
    """State ``theta`` complies when the signal clears a step threshold ``b(theta)``.

    ``edges`` are the left ends of the steps (first is 0) and ``values`` the
    nondecreasing thresholds. With ``space="mass"`` the threshold applies to the
    remote mass ``y``; with ``space="posterior"`` it applies to the posterior
    mean directly.
    """

    kind = "scaled_capacity"

    def __init__(self, edges, values, space="mass", tol=IND_TOL):
        e, v = np.asarray(edges, float), np.asarray(values, float)
        if e.shape != v.shape or e.size == 0 or e[0] != 0.0 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must start at 0, increase strictly and match values")
        if np.any(np.diff(v) < 0):
            raise ValueError("thresholds must be nondecreasing")
        if space == "mass" and np.any((v < 0) | (v > 1)):
            raise ValueError("remote-mass thresholds must lie in [0, 1]")
        if space not in ("mass", "posterior"):
            raise ValueError("space must be 'mass' or 'posterior'")
        self.edges, self.values, self.space, self.tol = e, v, space, tol

    @classmethod
    def from_thresholds(cls, nu, gammas, space="posterior"):
        """One step per atom: state ``nu_j`` needs at least ``gammas[j]``."""
        nu = np.asarray(nu, float)
        edges = np.concatenate([[0.0], 0.5 * (nu[:-1] + nu[1:])])
        return cls(edges, gammas, space)

    def threshold(self, theta):
        k = np.searchsorted(self.edges, np.asarray(theta, float), side="right") - 1
        return self.values[np.clip(k, 0, self.values.size - 1)]

    def _signal_level(self, y, tb):
        return np.asarray(y if self.space == "mass" else tb, float)

    def utility(self, y, theta, theta_bar=None):
        x = self._signal_level(y, theta_bar)
        return (x >= self.threshold(theta) - self.tol).astype(float)

    def compliant_states(self, y, tb, a, b):
        x = self._signal_level(y, tb)
        k = np.searchsorted(self.values, x + self.tol, side="right")  # steps that comply
        top = np.where(k >= self.values.size, np.inf,
                       self.edges[np.clip(k, 0, self.edges.size - 1)])
        return np.asarray(a, float), top

    def full_info(self, prior, eq_map):
        total = 0.0
        ends = np.append(self.edges[1:], prior.M)
        for k, (lo, hi, v) in enumerate(zip(self.edges, ends, self.values)):
            last = k == self.values.size - 1
            if self.space == "mass":
                start = eq_map.inverse(max(v - self.tol, 0.0), theta_max=prior.M)
            else:
                start = v - self.tol
            lo2 = max(lo, start)
            if lo2 < hi or (last and lo2 <= hi):
                total += float(prior.mass(lo2, hi, closed_right=last))
        return total

    def to_dict(self):
        return {"kind": "scaled_capacity", "edges": self.edges.tolist(),
                "values": self.values.tolist(), "space": self.space}


class StateBand(_IndicatorPreference):
    """Remote mass must lie in ``[lower(theta), upper(theta)]``; both bounds nondecreasing."""

    kind = "band"

    def __init__(self, lower, upper, tol=IND_TOL, spec=None):
        self.lower, self.upper, self.tol, self.spec = lower, upper, tol, spec

    @classmethod
    def linear(cls, slope, intercept=0.0, eps=0.0):
        """Band of half-width ``eps`` around ``slope * theta + intercept``."""
        lower = lambda t: slope * np.asarray(t, float) + intercept - eps
        upper = lambda t: slope * np.asarray(t, float) + intercept + eps
        return cls(lower, upper, spec={"kind": "band", "slope": slope, "intercept": intercept,
                                       "eps": eps})

    def utility(self, y, theta, theta_bar=None):
        y = np.asarray(y, float)
        return ((self.lower(theta) - self.tol <= y) & (y <= self.upper(theta) + self.tol)
                ).astype(float)

    def compliant_states(self, y, tb, a, b):
        y = np.asarray(y, float)
        a, b = np.asarray(a, float), np.asarray(b, float)
        # states with lower(theta) <= y form a prefix; with upper(theta) >= y a suffix
        hi = _bisect_edge(lambda t: self.lower(t) <= y + self.tol, a, b, prefix=True)
        lo = _bisect_edge(lambda t: self.upper(t) >= y - self.tol, a, b, prefix=False)
        return lo, hi

    def full_info(self, prior, eq_map):
        g = lambda t: self.utility(eq_map(t), t) > 0
        return _mass_where(prior, g)

    def to_dict(self):
        if self.spec is None:
            raise ValueError("band preference built from custom functions is not serializable")
        return dict(self.spec)


def _bisect_edge(pred, a, b, prefix, iters=100):
    """Edge of a monotone predicate on ``[a, b]``.

    ``prefix=True``: predicate holds on ``[a, e]``; returns ``e`` (``-inf`` if it
    fails at ``a``). ``prefix=False``: holds on ``[e, b]``; returns ``e``
    (``+inf`` if it fails at ``b``).
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    if prefix:
        at_a, at_b = pred(a), pred(b)
        lo, hi = a.copy(), b.copy()
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = pred(mid)
            lo, hi = np.where(ok, mid, lo), np.where(ok, hi, mid)
        return np.where(at_b, b, np.where(at_a, lo, -np.inf))
    at_a, at_b = pred(a), pred(b)
    lo, hi = a.copy(), b.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = pred(mid)
        lo, hi = np.where(ok, lo, mid), np.where(ok, mid, hi)
    return np.where(at_a, a, np.where(at_b, hi, np.inf))


def _mass_where(prior, pred, n=20001):
    """Prior mass of ``{theta : pred(theta)}`` by scanning and refining switch points."""
    if prior.is_discrete:
        return float(prior.p[pred(prior.nu)].sum())
    lo = prior.lower
    grid = np.linspace(lo, prior.M, n)
    vals = pred(grid)
    edges = [lo]
    for k in np.flatnonzero(vals[1:] != vals[:-1]):
        a, b, va = grid[k], grid[k + 1], vals[k]
        for _ in range(80):
            mid = 0.5 * (a + b)
            if pred(np.array([mid]))[0] == va:
                a = mid
            else:
                b = mid
        edges.append(0.5 * (a + b))
    edges.append(prior.M)
    total, state = 0.0, bool(vals[0])
    for a, b in zip(edges[:-1], edges[1:]):
        if state:
            total += float(prior.mass(a, b, closed_right=True))
        state = not state
    return total


class General(Preference):
    """Arbitrary utility ``h(y, theta)``, vectorized over numpy arrays."""

    kind = "general"

    def __init__(self, h, eta1=None, eta2=None, spec=None):
        self.h, self.eta1, self.eta2, self.spec = h, eta1, eta2, spec

    def utility(self, y, theta, theta_bar=None):
        return np.asarray(self.h(y, theta), float)

    def cell_integrals(self, prior, a, b, closed, y, tb):
        ua = np.asarray(prior.cdf_left(a), float)
        ub = np.where(closed, prior.cdf(b), prior.cdf_left(b)).astype(float)
        width = np.maximum(ub - ua, 0.0)
        out = np.zeros(width.shape)
        ok = width > 0
        if not ok.any():
            return out
        y_ok = np.asarray(y, float)[ok]
        f = lambda u, yy: self.h(yy, prior.quantile(np.clip(u, 0.0, 1.0)))
        out[ok] = adaptive_simpson_batch(f, ua[ok], ua[ok] + width[ok], params=y_ok,
                                         tol=np.maximum(QUAD_TOL * width[ok], 1e-16))
        return out

    def full_info(self, prior, eq_map):
        if prior.is_discrete:
            return float(prior.p @ self.utility(eq_map(prior.nu), prior.nu))
        u = np.linspace(0.0, 1.0, FI_PANELS + 1)
        f = lambda uu, _: self._fi_integrand(prior, eq_map, uu)
        return float(adaptive_simpson_batch(f, u[:-1], u[1:], tol=QUAD_TOL / FI_PANELS).sum())

    def _fi_integrand(self, prior, eq_map, u):
        theta = np.asarray(prior.quantile(np.clip(u, 0.0, 1.0)), float)
        return self.h(np.asarray(eq_map(theta), float), theta)

    def to_dict(self):
        if self.spec is None:
            raise ValueError("custom utility is not serializable")
        return dict(self.spec)


def h_rho(rho, M=10.0):
    """Regularized utility ``(1-rho)/2 (5(1-y^2) - theta (1-y)^2) + rho y (1-y)``."""
    rho = float(rho)

    def h(y, theta):
        y = np.asarray(y, float)
        return (0.5 * (1 - rho) * (5 * (1 - y * y) - np.asarray(theta, float) * (1 - y) ** 2)
                + rho * y * (1 - y))

    return General(h, eta1=0.5 * (1 - rho) * (10 + 2 * M) + rho, eta2=0.5 * (1 - rho),
                   spec={"kind": "h_rho", "rho": rho, "M": M})


def h_ref(lam, value_dist, M=10.0):
    """Gain of in-person agents net of infection disutility.

    ``lam * E_G[v; v >= G^{-1}(y)] - (1 - lam) theta (1 - y)^2``; the expectation
    equals ``mean(G) - int_0^y G^{-1}``.
    """
    lam = float(lam)
    mean_v = value_dist.mean()
    top = float(value_dist.quantile(1.0))

    def h(y, theta):
        y = np.asarray(y, float)
        gain = mean_v - np.asarray(value_dist.partial_quantile_integral(np.clip(y, 0, 1)), float)
        return lam * gain - (1 - lam) * np.asarray(theta, float) * (1 - y) ** 2

    return General(h, eta1=lam * top + (1 - lam) * 2 * M, eta2=1 - lam,
                   spec={"kind": "h_ref", "lambda": lam, "M": M})


def constant(c=1.0):
    return General(lambda y, theta: np.full(np.broadcast(np.asarray(y), np.asarray(theta)).shape,
                                            float(c)),
                   eta1=0.0, eta2=0.0, spec={"kind": "constant", "c": float(c)})


def preference_from_dict(spec, value_dist=None, M=None):
    kind = spec.get("kind")
    if kind == "set":
        return SetBased(spec["omegas"])
    if kind == "scaled_capacity":
        if "gammas" in spec:
            return ScaledCapacity.from_thresholds(spec["nu"], spec["gammas"],
                                                  spec.get("space", "posterior"))
        return ScaledCapacity(spec["edges"], spec["values"], spec.get("space", "mass"))
    if kind == "band":
        return StateBand.linear(spec["slope"], spec.get("intercept", 0.0), spec.get("eps", 0.0))
    if kind == "h_rho":
        return h_rho(spec["rho"], spec.get("M", M if M is not None else 10.0))
    if kind == "h_ref":
        if value_dist is None:
            raise ValueError("h_ref needs a value distribution")
        return h_ref(spec["lambda"], value_dist, spec.get("M", M if M is not None else 10.0))
    if kind == "constant":
        return constant(spec.get("c", 1.0))
    raise ValueError(f"unknown preference kind {kind!r}")


# --------------------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    value: float
    conditional: Optional[list] = None
    no_info: Optional[float] = None
    full_info: Optional[float] = None
    method: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "conditional": self.conditional, "no_info": self.no_info,
                "full_info": self.full_info, "method": self.method}


def signal_outcomes(prior, mech, eq_map):
    """Signal probabilities, posterior means and remote masses (nan for unused signals)."""
    mass, mom = mech.cell_masses(prior)
    q = mech.rows.T @ mass
    z = mech.rows.T @ mom
    used = q > 0
    tb = np.full(q.shape, np.nan)
    tb[used] = z[used] / q[used]
    y = np.full(q.shape, np.nan)
    if used.any():
        y[used] = np.atleast_1d(eq_map(np.maximum(tb[used], 0.0)))
    return q, tb, y


def _atom_cells(mech, nu):
    k = np.searchsorted(mech.breakpoints, nu, side="right") - 1
    return np.clip(k, 0, mech.n_cells - 1)


def conditional_values(dprior, pref, mech, eq_map):
    """Expected utility given each atom of a discrete prior."""
    if not dprior.is_discrete:
        raise ValueError("conditional values need a discrete prior")
    q, tb, y = signal_outcomes(dprior, mech, eq_map)
    used = np.flatnonzero(q > 0)
    P = mech.rows[_atom_cells(mech, dprior.nu)][:, used]
    H = pref.utility(y[used][None, :], dprior.nu[:, None], tb[used][None, :])
    return np.sum(P * H, axis=1)


def value(prior, pref, mech, eq_map):
    """Expected planner utility of ``mech``."""
    if prior.is_discrete:
        return float(prior.p @ conditional_values(prior, pref, mech, eq_map))
    q, tb, y = signal_outcomes(prior, mech, eq_map)
    mass, _ = mech.cell_masses(prior)
    P = mech.rows
    jj, ii = np.nonzero((P > 0) & (mass[:, None] > 0) & (q[None, :] > 0))
    if jj.size == 0:
        return 0.0
    t = mech.breakpoints
    closed = jj == mech.n_cells - 1
    I = pref.cell_integrals(prior, t[jj], t[jj + 1], closed, y[ii], tb[ii])
    return float(np.sum(P[jj, ii] * I))


def value_direct(direct, pref, eq_map):
    """Value of a direct mechanism; only for preferences that ignore the state."""
    if not pref.state_free:
        raise ValueError("a direct mechanism fixes the value only for state-free preferences")
    y = np.atleast_1d(eq_map(np.asarray(direct.theta_bar, float)))
    return float(direct.q @ pref.utility(y, 0.0))


def value_no_info(prior, pref, eq_map):
    return value(prior, pref, mech_mod.no_info(prior.M), eq_map)


def value_full_info(prior, pref, eq_map):
    if prior.is_discrete:
        return float(prior.p @ pref.utility(eq_map(prior.nu), prior.nu, prior.nu))
    return float(pref.full_info(prior, eq_map))


def evaluate(prior, pref, mech, eq_map, benchmarks=True):
    v = value(prior, pref, mech, eq_map)
    cond = (conditional_values(prior, pref, mech, eq_map).tolist() if prior.is_discrete else None)
    report = EvalReport(v, cond, method={"path": "exact" if prior.is_discrete else
                                         ("interval masses" if pref.is_indicator
                                          else "adaptive simpson"),
                                         "tol": QUAD_TOL})
    if benchmarks:
        report.no_info = value_no_info(prior, pref, eq_map)
        report.full_info = value_full_info(prior, pref, eq_map)
    return report


def value_mc(prior, pref, mech, eq_map, n=1_000_000, seed=0, batch=200_000):
    """Monte Carlo estimate and its standard error (numpy PCG64 stream from ``seed``)."""
    rng = np.random.default_rng(seed)
    q, tb, y = signal_outcomes(prior, mech, eq_map)
    cum = np.cumsum(mech.rows, axis=1)
    cum[:, -1] = 1.0
    total, total_sq, done = 0.0, 0.0, 0
    while done < n:
        m = min(batch, n - done)
        theta = np.asarray(prior.sample(m, rng), float)
        cells = _atom_cells(mech, theta)
        u = rng.random(m)
        sig = np.array([np.searchsorted(cum[c], uu, side="right") for c, uu in zip(cells, u)]) \
            if mech.n_signals > 64 else (cum[cells] <= u[:, None]).sum(axis=1)
        sig = np.minimum(sig, mech.n_signals - 1)
        h = pref.utility(y[sig], theta, tb[sig])
        total += float(h.sum())
        total_sq += float((h * h).sum())
        done += m
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


# --------------------------------------------------------------------------- studies

def _map_for(prior, valdist, cost):
    return EquilibriumMap(valdist, cost, theta_max=prior.M)


def _sweep_row(prior, eq_map, b):
    import warnings
    from .set_designer import UnreachablePreferenceError, design
    pref = SetBased([(b, 1.0)])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = design(prior, eq_map, [(b, 1.0)])
        if res.mechanism is not None:
            v_opt = value(prior, pref, res.mechanism, eq_map)
        else:
            v_opt = value_direct(res.direct, pref, eq_map)
        regime = res.regime
    except UnreachablePreferenceError:
        v_opt, regime = 0.0, "unreachable"
    return {"b": float(b), "V_opt": v_opt, "V_ni": value_no_info(prior, pref, eq_map),
            "V_fi": value_full_info(prior, pref, eq_map), "regime": regime}


def sweep_capacity(prior, valdist, cost, b_grid, jobs=1):
    """Capacity targets ``y >= b``: designed, no-information and full-information values."""
    eq_map = _map_for(prior, valdist, cost)
    b_grid = [float(b) for b in b_grid]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        return list(ex.map(lambda b: _sweep_row(prior, eq_map, b), b_grid))


def convergence_study(prior, valdist, cost, pref, levels, jobs=1, method="auto"):
    """Design on each ``(delta, tau)`` level; gaps are to the finest level's value.

    Levels are solved coarse to fine, each seeding the next one's column
    generation; the resulting mechanisms are then evaluated concurrently.
    """
    from .lp import design_lipschitz
    eq_map = _map_for(prior, valdist, cost)
    levels = [(int(d), int(t)) for d, t in levels]
    order = sorted(range(len(levels)), key=lambda i: (levels[i][0] * levels[i][1], levels[i]))
    designs = [None] * len(levels)
    prev = None
    for i in order:
        d, t = levels[i]
        prev = design_lipschitz(prior, pref.h, pref.eta1, pref.eta2, eq_map=eq_map, delta=d,
                                tau=t, method=method, evaluate_value=False, warm_start=prev)
        designs[i] = prev

    def run(res):
        return value(prior, pref, res.mechanism, eq_map)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        vals = list(ex.map(run, designs))
    ref = vals[order[-1]]
    return [{"delta": d, "tau": t, "value": v, "gap": abs(ref - v),
             "lp_value": res.diagnostics["lp_value"], "eps_bound": res.diagnostics.get("eps_bound")}
            for (d, t), v, res in zip(levels, vals, designs)]
