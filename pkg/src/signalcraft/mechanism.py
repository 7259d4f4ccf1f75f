"""Signaling mechanisms with interval-constant signal rules.

An :class:`IntervalMechanism` splits ``[0, M]`` into cells
``[t_0, t_1), [t_1, t_2), ..., [t_{n-1}, t_n]`` and draws the public signal
from a fixed row of probabilities inside each cell. Its reduced form is a
:class:`DirectMechanism`: one ``(q_i, theta_bar_i)`` pair per signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-10
PRUNE_Q = 1e-14
MAX_INTERVALS = 100_000


class UncoveredMassError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IntervalMechanism:
    breakpoints: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=float).ravel()
        P = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if t.size < 2 or t[0] != 0.0:
            raise ValueError("breakpoints must start at 0 and define at least one cell")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if P.shape[0] != t.size - 1:
            raise ValueError(f"{t.size - 1} cells but {P.shape[0]} rows")
        if P.shape[0] > MAX_INTERVALS:
            raise ValueError(f"at most {MAX_INTERVALS} intervals are supported")
        if np.any(P < -ROW_TOL) or np.any(P > 1 + ROW_TOL):
            raise ValueError("row entries must lie in [0, 1]")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("every row must sum to 1")
        object.__setattr__(self, "breakpoints", t)
        object.__setattr__(self, "rows", np.clip(P, 0.0, 1.0))

    @property
    def n_cells(self):
        return self.rows.shape[0]

    @property
    def n_signals(self):
        return self.rows.shape[1]

    @property
    def M(self):
        return float(self.breakpoints[-1])

    def cell_masses(self, prior):
        t = self.breakpoints
        _check_covered(prior, t[-1])
        lo, hi = t[:-1], t[1:]
        mass = np.asarray(prior.mass(lo, hi), dtype=float)
        mom = np.asarray(prior.first_moment(lo, hi), dtype=float)
        # last cell is closed on the right
        mass[-1] = float(prior.mass(lo[-1], hi[-1], closed_right=True))
        mom[-1] = float(prior.first_moment(lo[-1], hi[-1], closed_right=True))
        return mass, mom

    def split_signal(self, i):
        """Duplicate column ``i`` into two identical half-weight columns."""
        P = self.rows
        half = P[:, [i]] * 0.5
        rows = np.hstack([P[:, :i], half, half, P[:, i + 1:]])
        return IntervalMechanism(self.breakpoints, rows)

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["breakpoints"], float), np.asarray(d["rows"], float))


@dataclass(frozen=True, eq=False)
class DirectMechanism:
    q: np.ndarray
    theta_bar: np.ndarray
    signals: np.ndarray = field(default=None)  # originating signal index per pair

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        tb = np.asarray(self.theta_bar, dtype=float).ravel()
        if q.shape != tb.shape:
            raise ValueError("q and theta_bar must have equal length")
        if np.any(q < -ROW_TOL) or abs(q.sum() - 1.0) > ROW_TOL:
            raise ValueError("signal probabilities must be nonnegative and sum to 1")
        sig = np.arange(q.size) if self.signals is None else np.asarray(self.signals)
        object.__setattr__(self, "q", np.clip(q, 0.0, None))
        object.__setattr__(self, "theta_bar", tb)
        object.__setattr__(self, "signals", sig)

    @classmethod
    def from_pairs(cls, pairs):
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def pairs(self):
        return list(zip(self.q.tolist(), self.theta_bar.tolist()))

    def mean(self):
        return float(self.q @ self.theta_bar)

    def is_sorted(self):
        return bool(np.all(np.diff(self.theta_bar) >= 0))

    def sorted(self):
        order = np.argsort(self.theta_bar, kind="stable")
        return DirectMechanism(self.q[order], self.theta_bar[order], self.signals[order])

    def merged(self, atol=1e-12):
        """Pool pairs with equal posterior means (up to ``atol``)."""
        d = self.sorted()
        q, tb = [], []
        for qi, ti in zip(d.q, d.theta_bar):
            if tb and abs(ti - tb[-1]) <= atol:
                tot = q[-1] + qi
                tb[-1] = (q[-1] * tb[-1] + qi * ti) / tot if tot > 0 else ti
                q[-1] = tot
            else:
                q.append(qi)
                tb.append(ti)
        return DirectMechanism(q, tb)

    def to_dict(self):
        return {"pairs": [[a, b] for a, b in self.pairs]}

    @classmethod
    def from_dict(cls, d):
        return cls.from_pairs(d["pairs"])


def _check_covered(prior, top):
    if prior.M > top and 1.0 - float(prior.cdf(top)) > PRUNE_Q:
        raise UncoveredMassError("uncovered mass: prior support exceeds the last breakpoint")


def direct_of(mech, prior, prune=PRUNE_Q):
    """Signal probabilities and posterior means induced by ``mech`` under ``prior``."""
    mass, mom = mech.cell_masses(prior)
    q = mech.rows.T @ mass
    z = mech.rows.T @ mom
    keep = q >= prune
    if not keep.any():
        raise ValueError("mechanism sends no signal with positive probability")
    qk = q[keep]
    return DirectMechanism(qk / qk.sum(), z[keep] / qk, np.flatnonzero(keep))


@dataclass
class MpcReport:
    feasible: bool
    prefix_slacks: np.ndarray
    mean_gap: float
    tol: float

    @property
    def min_slack(self):
        return float(self.prefix_slacks.min()) if self.prefix_slacks.size else 0.0

    def to_dict(self):
        return {"feasible": self.feasible, "status": "feasible" if self.feasible else "infeasible",
                "prefix_slacks": self.prefix_slacks.tolist(), "mean_gap": self.mean_gap,
                "tol": self.tol}


def check_mpc(direct, prior, tol=1e-8):
    """Check that the posterior-mean distribution is a mean-preserving contraction.

    For pairs sorted by posterior mean, every prefix must satisfy
    ``sum_{j<=n} q_j theta_bar_j >= int_0^{Q_n} F^{-1}(s) ds`` and the
    posterior means must average to the prior mean.
    """
    if not direct.is_sorted():
        raise ValueError("pairs must be sorted by posterior mean")
    Q = np.clip(np.cumsum(direct.q), 0.0, 1.0)
    Z = np.cumsum(direct.q * direct.theta_bar)
    f = np.asarray(prior.partial_quantile_integral(Q), dtype=float)
    slacks = Z - f
    gap = float(Z[-1] - prior.mean())
    feasible = bool(np.all(slacks >= -tol) and abs(gap) <= tol)
    return MpcReport(feasible, slacks, gap, tol)


def no_info(M=1.0):
    return IntervalMechanism(np.array([0.0, float(M)]), np.ones((1, 1)))


def full_info_grid(n, M=1.0):
    """``n`` equal cells, each revealed by its own signal."""
    if n < 1:
        raise ValueError("need at least one cell")
    return IntervalMechanism(np.linspace(0.0, float(M), n + 1), np.eye(n))


def is_mps(mech):
    """Monotone partitional structure: deterministic rows, signals in increasing blocks."""
    P = mech.rows
    unit = np.all((np.abs(P) < ROW_TOL) | (np.abs(P - 1.0) < ROW_TOL), axis=1)
    if not np.all(unit & (np.abs(P.sum(axis=1) - 1.0) < ROW_TOL)):
        return False
    assigned = np.argmax(P, axis=1)
    blocks = assigned[np.concatenate([[True], assigned[1:] != assigned[:-1]])]
    return bool(np.all(np.diff(blocks) > 0))


def from_segments(segments, M):
    """Build a mechanism from ``(left, right, row)`` triples, dropping empty cells."""
    segs = [(a, b, r) for a, b, r in segments if b > a]
    t = [0.0] + [b for _, b, _ in segs]
    t[-1] = float(M)
    return IntervalMechanism(np.array(t), np.array([r for _, _, r in segs], dtype=float))


def threshold_mechanism(prior, q):
    """Two-signal MPS sending the lowest ``q`` of prior mass to signal 0.

    On a discrete prior an atom straddling the threshold is split with a mixed
    row, so the low signal gets exactly mass ``q``.
    """
    M = prior.M
    low, high = [1.0, 0.0], [0.0, 1.0]
    if q <= 0.0:
        return IntervalMechanism(np.array([0.0, M]), np.array([high]))
    if q >= 1.0:
        return IntervalMechanism(np.array([0.0, M]), np.array([low]))
    if not prior.is_discrete:
        t = float(prior.quantile(q))
        return from_segments([(0.0, t, low), (t, M, high)], M)
    nu = prior.nu
    k = int(np.searchsorted(np.cumsum(prior.p), q - 1e-15, side="left"))
    k = min(k, nu.size - 1)
    below = float(prior.cdf_left(nu[k]))
    w = (q - below) / prior.p[k] if prior.p[k] > 0 else 0.0
    w = min(max(w, 0.0), 1.0)
    right = 0.5 * (nu[k] + nu[k + 1]) if k + 1 < nu.size else M
    segments = [(0.0, nu[k], low), (nu[k], right, [w, 1.0 - w]), (right, M, high)]
    return from_segments(segments, M)


def cells_around_atoms(nu, M=None):
    """Breakpoints putting each atom in its own cell, splitting at midpoints."""
    nu = np.asarray(nu, dtype=float)
    top = float(nu[-1] if M is None else M)
    mids = 0.5 * (nu[:-1] + nu[1:])
    return np.concatenate([[0.0], mids, [top]])
