"""Adaptive Simpson quadrature, scalar and batched.

The batched form integrates many independent intervals at once, each with its
own parameter row, and only subdivides the intervals whose local error
estimate is too large.
"""

import numpy as np

DEFAULT_TOL = 1e-10
MAX_DEPTH = 40


def adaptive_simpson(f, a, b, tol=DEFAULT_TOL, max_depth=MAX_DEPTH):
    """Integrate a scalar function over ``[a, b]`` by recursive Simpson.

    Uses the classical Richardson-corrected stopping rule
    ``|S_left + S_right - S_whole| <= 15 * tol``.
    """
    if b == a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def adaptive_simpson_batch(f, a, b, params=None, tol=DEFAULT_TOL,
                           max_depth=MAX_DEPTH):
    """Integrate ``f(x, params)`` over many intervals ``[a_k, b_k]``.

    Parameters
    ----------
    f : callable
        Vectorized integrand ``f(x, p)`` where ``x`` has shape ``(n,)`` and
        ``p`` is ``params`` restricted to the same ``n`` rows (or ``None``).
    a, b : array_like
        Interval endpoints, shape ``(n,)``.
    params : ndarray, optional
        Per-interval parameters, first axis aligned with ``a``.
    tol : float or array_like
        Absolute tolerance, scalar or one per interval.

    Returns
    -------
    ndarray of shape ``(n,)`` with the integrals.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n = a.size
    out = np.zeros(n)
    if n == 0:
        return out
    if params is not None:
        params = np.asarray(params)

    def call(x, idx):
        return np.asarray(f(x, None if params is None else params[idx]),
                          dtype=float)

    idx = np.arange(n)
    m = 0.5 * (a + b)
    fa, fm, fb = call(a, idx), call(m, idx), call(b, idx)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tols = np.broadcast_to(np.asarray(tol, dtype=float), (n,)).copy()
    depth = 0
    # active panels: owner index, endpoints, cached values, whole estimate
    while idx.size:
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = call(lm, idx), call(rm, idx)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = (np.abs(delta) <= 15.0 * tols) | (depth >= max_depth)
        np.add.at(out, idx[done], (left + right + delta / 15.0)[done])
        keep = ~done
        if not keep.any():
            break
        # split each unfinished panel into its two halves
        idx = np.concatenate([idx[keep], idx[keep]])
        a, m, b = (np.concatenate([a[keep], m[keep]]),
                   np.concatenate([lm[keep], rm[keep]]),
                   np.concatenate([m[keep], b[keep]]))
        fa, fm, fb = (np.concatenate([fa[keep], fm[keep]]),
                      np.concatenate([flm[keep], frm[keep]]),
                      np.concatenate([fm[keep], fb[keep]]))
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) * 0.5
        depth += 1
    return out


def composite_simpson(f, a, b, n=2000, vectorized=False):
    """Fixed-step composite Simpson rule, used as an independent cross-check."""
    if n % 2:
        n += 1
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), float) if vectorized else np.array([f(t) for t in x], dtype=float)
    h = (b - a) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
