"""Prior and value distributions on a bounded interval ``[0, M]``.

Every distribution exposes the same small set of primitives: CDF (and its
left limit), generalized quantile, truncated first moments, sampling. The
designers only ever talk to these, plus the two derived quantities used by
the implementability constraints: ``partial_quantile_integral`` (the convex
function ``x -> int_0^x F^{-1}(s) ds``) and ``bar_f``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import special

from .quadrature import adaptive_simpson

CDF_TOL = 1e-12
BISECT_TOL = 1e-14


class EmptyConditionError(ValueError):
    """Raised when conditioning on an event of (numerically) zero mass."""


def _check_prob(u, name="u"):
    u_arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u_arr)) or np.any(u_arr < 0.0) or np.any(u_arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {u!r}")
    return u_arr


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


class Prior:
    """Base class for distributions supported on ``[0, M]``.

    Subclasses implement ``cdf``, ``quantile`` and ``moment_below``; the
    remaining operations are derived from those.
    """

    kind = "abstract"
    is_discrete = False

    def __init__(self, M, density_bound=None):
        if not M > 0:
            raise ValueError("upper bound M must be positive")
        self.M = float(M)
        self._density_bound = density_bound

    # -- primitives -------------------------------------------------------
    def cdf(self, t):
        raise NotImplementedError

    def cdf_left(self, t):
        """``P(theta < t)``; equal to ``cdf`` for atomless kinds."""
        return self.cdf(t)

    def quantile(self, u):
        raise NotImplementedError

    def moment_below(self, t, inclusive=True):
        """``E[theta; theta <= t]`` (``theta < t`` when not inclusive)."""
        raise NotImplementedError

    def pdf(self, t):
        raise NotImplementedError(f"{self.kind} prior has no density")

    @property
    def lower(self):
        """Smallest point of the support."""
        return float(self.quantile(0.0))

    @property
    def density_bound(self):
        return self._density_bound

    # -- derived ----------------------------------------------------------
    def mass(self, a, b, closed_right=False):
        """Probability of ``[a, b)`` (or ``[a, b]``)."""
        hi = self.cdf(b) if closed_right else self.cdf_left(b)
        return np.maximum(hi - self.cdf_left(a), 0.0)

    def first_moment(self, a, b, closed_right=False):
        """``E[theta; a <= theta < b]`` (or ``<= b``)."""
        hi = self.moment_below(b, inclusive=closed_right)
        return np.maximum(hi - self.moment_below(a, inclusive=False), 0.0)

    def mean(self):
        return float(self.moment_below(self.M, inclusive=True))

    def partial_quantile_integral(self, x):
        """``int_0^x F^{-1}(s) ds``; convex, nondecreasing, equals the mean at 1."""
        x = _check_prob(x, "x")
        t = self.quantile(x)
        below = self.moment_below(t, inclusive=False)
        frac = np.maximum(x - self.cdf_left(t), 0.0)
        return _scalar_or_array(below + frac * t, x)

    def bar_f(self, theta, tol=BISECT_TOL):
        """Largest prefix probability ``x`` with ``int_0^x F^{-1} <= x * theta``.

        ``g(x) = int_0^x F^{-1} - x theta`` is convex with ``g(0) = 0``, so
        ``{g <= 0}`` is an interval ``[0, x*]``; each round brackets ``x*`` on a
        64-panel grid.
        """
        theta = float(theta)
        g = lambda x: np.asarray(self.partial_quantile_integral(x), float) - x * theta
        if g(1.0) <= 0.0:
            return 1.0
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            x = np.linspace(lo, hi, 65)
            ok = g(x) <= 0.0
            ok[0] = True
            k = int(np.flatnonzero(ok)[-1]) if ok.all() else int(np.argmin(ok)) - 1
            if k >= 64:
                break
            lo, hi = float(x[k]), float(x[k + 1])
            if not lo < hi:
                break
        return lo

    def conditional_mean_below(self, t):
        """``E[theta | theta <= t]``."""
        w = float(self.cdf(t))
        if w < CDF_TOL:
            raise EmptyConditionError("empty condition")
        return float(self.moment_below(t, inclusive=True)) / w

    def conditional_mean_above(self, t):
        """``E[theta | theta >= t]``."""
        w = 1.0 - float(self.cdf_left(t))
        if w < CDF_TOL:
            raise EmptyConditionError("empty condition")
        return (self.mean() - float(self.moment_below(t, inclusive=False))) / w

    def sample(self, n, rng):
        return np.asarray(self.quantile(rng.random(n)), dtype=float)

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class Uniform(Prior):
    kind = "uniform"

    def __init__(self, a, b, M=None):
        if not 0.0 <= a < b:
            raise ValueError("uniform needs 0 <= a < b")
        super().__init__(b if M is None else M)
        if self.M < b:
            raise ValueError("support exceeds M")
        self.a, self.b = float(a), float(b)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return _scalar_or_array(np.clip((t - self.a) / (self.b - self.a), 0.0, 1.0), t)

    def quantile(self, u):
        u = _check_prob(u)
        return _scalar_or_array(self.a + u * (self.b - self.a), u)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.a) & (t <= self.b)
        return _scalar_or_array(np.where(inside, 1.0 / (self.b - self.a), 0.0), t)

    def moment_below(self, t, inclusive=True):
        t = np.clip(np.asarray(t, dtype=float), self.a, self.b)
        return _scalar_or_array((t * t - self.a ** 2) / (2.0 * (self.b - self.a)), t)

    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def density_bound(self):
        return 1.0 / (self.b - self.a)

    def to_dict(self):
        d = {"kind": "uniform", "a": self.a, "b": self.b}
        if self.M != self.b:
            d["M"] = self.M
        return d


class TruncatedExponential(Prior):
    """Exponential with the given rate, renormalized on ``[0, M]``."""

    kind = "exponential"

    def __init__(self, rate, M):
        if not rate > 0:
            raise ValueError("rate must be positive")
        super().__init__(M)
        self.rate = float(rate)
        self._z = -math.expm1(-self.rate * self.M)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.M)
        return _scalar_or_array(-np.expm1(-self.rate * t) / self._z, t)

    def quantile(self, u):
        u = _check_prob(u)
        return _scalar_or_array(np.clip(-np.log1p(-u * self._z) / self.rate, 0.0, self.M), u)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= self.M)
        return _scalar_or_array(np.where(inside, self.rate * np.exp(-self.rate * t) / self._z, 0.0), t)

    def moment_below(self, t, inclusive=True):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.M)
        r = self.rate
        val = (1.0 / r - np.exp(-r * t) * (t + 1.0 / r)) / self._z
        return _scalar_or_array(val, t)

    @property
    def density_bound(self):
        return self.rate / self._z

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate, "M": self.M}


class TruncatedNormal(Prior):
    """Normal(mean, sd) conditioned on ``[0, M]``."""

    kind = "normal"

    def __init__(self, mean, sd, M):
        if not sd > 0:
            raise ValueError("sd must be positive")
        super().__init__(M)
        self.mu, self.sd = float(mean), float(sd)
        self._alpha = (0.0 - self.mu) / self.sd
        self._beta = (self.M - self.mu) / self.sd
        self._phi_a = special.ndtr(self._alpha)
        self._z = special.ndtr(self._beta) - self._phi_a
        if self._z <= 0:
            raise ValueError("normal has no mass on [0, M]")

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.M)
        val = (special.ndtr((t - self.mu) / self.sd) - self._phi_a) / self._z
        return _scalar_or_array(np.clip(val, 0.0, 1.0), t)

    def quantile(self, u):
        u = _check_prob(u)
        val = self.mu + self.sd * special.ndtri(self._phi_a + u * self._z)
        return _scalar_or_array(np.clip(val, 0.0, self.M), u)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        z = (t - self.mu) / self.sd
        dens = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.sd * self._z)
        return _scalar_or_array(np.where((t >= 0) & (t <= self.M), dens, 0.0), t)

    def moment_below(self, t, inclusive=True):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.M)
        zt = (t - self.mu) / self.sd
        dens = lambda z: np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        val = (self.mu * (special.ndtr(zt) - self._phi_a)
               - self.sd * (dens(zt) - dens(self._alpha))) / self._z
        return _scalar_or_array(val, t)

    @property
    def density_bound(self):
        peak = min(max(self.mu, 0.0), self.M)
        return float(self.pdf(peak))

    def to_dict(self):
        return {"kind": "normal", "mean": self.mu, "sd": self.sd, "M": self.M}


class Discrete(Prior):
    """Finite support ``nu`` with masses ``p``."""

    kind = "discrete"
    is_discrete = True

    def __init__(self, nu, p, M=None, delta=None):
        nu = np.asarray(nu, dtype=float).ravel()
        p = np.asarray(p, dtype=float).ravel()
        if nu.size == 0 or nu.shape != p.shape:
            raise ValueError("nu and p must be nonempty and of equal length")
        if np.any(np.diff(nu) <= 0):
            raise ValueError("support points must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > CDF_TOL * max(1, nu.size):
            raise ValueError("masses must be nonnegative and sum to 1")
        if nu[0] < 0:
            raise ValueError("support must be nonnegative")
        super().__init__(nu[-1] if M is None else M)
        if nu[-1] > self.M:
            raise ValueError("support exceeds M")
        self.nu, self.p = nu, p
        self.delta = delta
        self._cum = np.cumsum(p)
        self._cum[-1] = 1.0
        self._cum_moment = np.cumsum(p * nu)

    def cdf(self, t):
        k = np.searchsorted(self.nu, np.asarray(t, dtype=float), side="right")
        val = np.concatenate([[0.0], self._cum])[k]
        return _scalar_or_array(val, t)

    def cdf_left(self, t):
        k = np.searchsorted(self.nu, np.asarray(t, dtype=float), side="left")
        val = np.concatenate([[0.0], self._cum])[k]
        return _scalar_or_array(val, t)

    def quantile(self, u):
        u = _check_prob(u)
        # inf{t : F(t) >= u}; positive-mass atoms only, so u = 0 maps to the
        # lowest charged point
        k = np.searchsorted(self._cum, u, side="left")
        k = np.clip(k, 0, self.nu.size - 1)
        if np.ndim(u) == 0:
            k = int(k)
            if u == 0.0:
                k = int(np.argmax(self.p > 0))
            return float(self.nu[k])
        k = np.where(u == 0.0, int(np.argmax(self.p > 0)), k)
        return self.nu[k]

    def moment_below(self, t, inclusive=True):
        side = "right" if inclusive else "left"
        k = np.searchsorted(self.nu, np.asarray(t, dtype=float), side=side)
        val = np.concatenate([[0.0], self._cum_moment])[k]
        return _scalar_or_array(val, t)

    def mean(self):
        return float(self.p @ self.nu)

    @property
    def lower(self):
        return float(self.nu[np.argmax(self.p > 0)])

    @property
    def density_bound(self):
        return None

    def sample(self, n, rng):
        return rng.choice(self.nu, size=n, p=self.p)

    def to_dict(self):
        d = {"kind": "discrete", "nu": self.nu.tolist(), "p": self.p.tolist()}
        if self.M != self.nu[-1]:
            d["M"] = self.M
        return d


DiscretePrior = Discrete


def empirical(samples, M=None):
    """Empirical distribution of ``samples`` as a ``Discrete`` prior."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("need at least one sample")
    nu, counts = np.unique(samples, return_counts=True)
    prior = Discrete(nu, counts / samples.size, M=M)
    prior.kind = "empirical"
    return prior


class Mixture(Prior):
    """Finite mixture of continuous priors (discrete mixtures collapse to ``Discrete``)."""

    kind = "mixture"

    def __init__(self, components, weights):
        weights = np.asarray(weights, dtype=float)
        if len(components) != weights.size or weights.size == 0:
            raise ValueError("one weight per component required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if any(c.is_discrete for c in components):
            raise ValueError("use mixture() to combine discrete components")
        super().__init__(max(c.M for c in components))
        self.components = list(components)
        self.weights = weights

    def cdf(self, t):
        return sum(w * np.asarray(c.cdf(t)) for c, w in zip(self.components, self.weights))

    def pdf(self, t):
        return sum(w * np.asarray(c.pdf(t)) for c, w in zip(self.components, self.weights))

    def moment_below(self, t, inclusive=True):
        return sum(w * np.asarray(c.moment_below(t, inclusive))
                   for c, w in zip(self.components, self.weights))

    def quantile(self, u):
        u_arr = np.atleast_1d(_check_prob(u)).astype(float)
        lo = np.full(u_arr.shape, min(c.lower for c in self.components))
        hi = np.full(u_arr.shape, self.M)
        # bisection on the CDF; 60 halvings of [0, M] reach float resolution
        for _ in range(80):
            if np.all(hi - lo <= 4e-16 * self.M):
                break
            mid = 0.5 * (lo + hi)
            ok = np.asarray(self.cdf(mid)) >= u_arr
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        out = np.where(u_arr <= 0.0, lo, hi)
        return float(out[0]) if np.ndim(u) == 0 else out

    def mean(self):
        return float(sum(w * c.mean() for c, w in zip(self.components, self.weights)))

    @property
    def lower(self):
        return min(c.lower for c, w in zip(self.components, self.weights) if w > 0)

    @property
    def density_bound(self):
        bounds = [c.density_bound for c in self.components]
        if any(b is None for b in bounds):
            return None
        return float(np.dot(self.weights, bounds))

    def sample(self, n, rng):
        which = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for k, c in enumerate(self.components):
            sel = which == k
            out[sel] = c.sample(int(sel.sum()), rng)
        return out

    def to_dict(self):
        return {"kind": "mixture", "weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}


def mixture(components, weights):
    """Mix priors; all-discrete inputs give a ``Discrete`` prior."""
    if all(c.is_discrete for c in components):
        weights = np.asarray(weights, dtype=float)
        nu = np.unique(np.concatenate([c.nu for c in components]))
        p = np.zeros(nu.size)
        for c, w in zip(components, weights):
            p[np.searchsorted(nu, c.nu)] += w * c.p
        return Discrete(nu, p / p.sum(), M=max(c.M for c in components))
    return Mixture(components, weights)


def delta_discretize(prior, delta):
    """Move the mass of each cell ``[(j-1)/delta, j/delta)`` to its left end.

    When ``M * delta`` is not an integer the grid is extended to
    ``ceil(M * delta)`` cells; the last one is only partially covered by the
    support.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    exact = prior.M * delta
    n = int(math.ceil(exact - 1e-9))
    n = max(n, 1)
    if abs(n - exact) > 1e-9:
        warnings.warn(f"M*delta={exact:g} is not an integer; using {n} cells "
                      f"(effective M={n / delta:g})", stacklevel=2)
    edges = np.arange(n + 1) / delta
    cum = np.asarray(prior.cdf_left(edges), dtype=float)
    cum[-1] = 1.0
    cum[0] = 0.0
    p = np.maximum(np.diff(cum), 0.0)
    p /= p.sum()
    return Discrete(edges[:-1], p, M=max(prior.M, edges[-2]), delta=delta)


def discretization_cells(dprior):
    """Breakpoints of the cells backing a delta-discretized prior, clipped to ``M``."""
    if dprior.delta is None:
        raise ValueError("prior was not built by delta_discretize")
    edges = np.arange(dprior.nu.size + 1) / dprior.delta
    edges[-1] = min(edges[-1], dprior.M)
    return edges


def quantile_integral_by_quadrature(prior, x):
    """Independent oracle for ``partial_quantile_integral``."""
    if x == 0:
        return 0.0
    return adaptive_simpson(lambda s: float(prior.quantile(s)), 0.0, float(x), tol=1e-12)


def from_dict(spec):
    """Build a prior from its JSON form, e.g. ``{"kind": "uniform", "a": 5, "b": 20}``."""
    kind = spec.get("kind")
    if kind == "uniform":
        return Uniform(spec["a"], spec["b"], M=spec.get("M"))
    if kind == "exponential":
        return TruncatedExponential(spec["rate"], spec["M"])
    if kind == "normal":
        return TruncatedNormal(spec["mean"], spec["sd"], spec["M"])
    if kind == "discrete":
        return Discrete(spec["nu"], spec["p"], M=spec.get("M"))
    if kind == "empirical":
        return empirical(spec["samples"], M=spec.get("M"))
    if kind == "mixture":
        return mixture([from_dict(c) for c in spec["components"]], spec["weights"])
    raise ValueError(f"unknown distribution kind {kind!r}")
