"""Brute-force reference solvers used by the tests."""

import itertools

import numpy as np

from signalcraft.mechanism import from_segments


def two_signal_grid_value(prior, thetas, step=1e-3):
    """Best value over two-signal direct mechanisms on a ``(q, theta_low)`` grid.

    The high posterior follows from mean preservation; a pair is implementable
    when the low signal's prefix constraint holds. Value counts the signal
    mass whose posterior falls in one of ``thetas``.
    """
    mu, M = prior.mean(), prior.M
    q = np.arange(step, 1.0, step)[:, None]
    t_lo = np.arange(0.0, mu + step / 2, step)[None, :]
    t_hi = (mu - q * t_lo) / (1.0 - q)
    f = np.asarray(prior.partial_quantile_integral(q.ravel()), float)[:, None]
    ok = (q * t_lo >= f - 1e-12) & (t_hi <= M + 1e-12)

    def inside(x):
        hit = np.zeros(x.shape, dtype=bool)
        for a, b in thetas:
            hit |= (x >= a - 1e-9) & (x <= b + 1e-9)
        return hit

    v = q * inside(t_lo) + (1.0 - q) * inside(t_hi)
    best = float(np.max(np.where(ok, v, 0.0)))
    return max(best, float(inside(np.array([mu]))[0]))


def _best_vertex(c, A_ub, b_ub, A_eq, b_eq):
    """Best objective over basic feasible points, or ``None`` when there are none."""
    n = c.size
    A = np.vstack([A_ub, -np.eye(n)])
    b = np.concatenate([b_ub, np.zeros(n)])
    need = n - A_eq.shape[0]
    if need < 0:
        return None
    combos = np.array(list(itertools.combinations(range(A.shape[0]), need)), dtype=int)
    if combos.size == 0:
        combos = np.zeros((1, 0), dtype=int)
    Ms = np.concatenate([np.broadcast_to(A_eq, (len(combos),) + A_eq.shape), A[combos]], axis=1)
    rhs = np.concatenate([np.broadcast_to(b_eq, (len(combos), b_eq.size)), b[combos]], axis=1)
    ok = np.abs(np.linalg.det(Ms)) > 1e-10
    if not ok.any():
        return None
    X = np.linalg.solve(Ms[ok], rhs[ok][..., None])[..., 0]
    feas = (np.all(X @ A_ub.T <= b_ub + 1e-9, axis=1) & np.all(X >= -1e-9, axis=1)
            & np.all(np.abs(X @ A_eq.T - b_eq) <= 1e-9, axis=1))
    if not feas.any():
        return None
    return float(np.max(X[feas] @ c))


def vertex_enumeration(c, A_ub, b_ub, A_eq, b_eq):
    """Maximize ``c.x`` over ``{A_ub x <= b_ub, A_eq x = b_eq, x >= 0}`` by vertices.

    Returns ``(status, value)``. Unboundedness is decided on the recession cone
    normalized by ``sum(d) = 1``: the program is unbounded when some ray has
    ``c.d > 0``.
    """
    best = _best_vertex(c, A_ub, b_ub, A_eq, b_eq)
    if best is None:
        return "infeasible", None
    n = c.size
    ray = _best_vertex(c, A_ub, np.zeros(A_ub.shape[0]), np.vstack([A_eq, np.ones((1, n))]),
                       np.concatenate([np.zeros(A_eq.shape[0]), [1.0]]))
    if ray is not None and ray > 1e-9:
        return "unbounded", None
    return "optimal", best


def pooling_band_mechanism():
    """Each signal mixes a low band with a far higher one; posteriors 0.18, 0.27, rest."""
    s1, s2, s3 = [1, 0, 0], [0, 1, 0], [0, 0, 1]
    segs = [(0.0, 0.12, s1), (0.12, 0.30, s2), (0.30, 0.52, s3), (0.52, 0.56, s1),
            (0.56, 0.80, s3), (0.80, 0.82, s2), (0.82, 1.0, s3)]
    return from_segments(segs, 1.0)


def pooling_abs_mechanism():
    s1, s2, s3 = [1, 0, 0], [0, 1, 0], [0, 0, 1]
    segs = [(0.0, 0.25, s1), (0.25, 0.35, s2), (0.35, 0.95, s3), (0.95, 1.0, s2)]
    return from_segments(segs, 1.0)


def best_monotone_partition_band(n, slope, eps):
    """Best value over partitions of Uniform[0, 1] into intervals with ends on a grid of n.

    Each interval is one signal with posterior its midpoint; with the identity
    map a state complies when ``|midpoint - slope * theta| <= eps``. Solved by
    dynamic programming over the right end.
    """
    t = np.arange(n + 1) / n
    best = np.zeros(n + 1)
    for i in range(1, n + 1):
        a, b = t[:i], t[i]
        m = 0.5 * (a + b)
        lo = np.maximum(a, (m - eps) / slope)
        hi = np.minimum(b, (m + eps) / slope)
        best[i] = np.max(best[:i] + np.maximum(hi - lo, 0.0))
    return float(best[n])
