"""Dense two-phase tableau simplex.

Solves ``max c.x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, x >= 0``.

Pricing is Dantzig's largest-coefficient rule; after a run of degenerate
pivots the solver switches permanently to Bland's smallest-index rule, which
cannot cycle. The final basic solution is re-solved against the original
columns to strip accumulated round-off from the tableau.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
DEGENERATE_RUN = 50

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"
STALLED = "stalled"  # feasible, objective stopped improving before optimality was certified


@dataclass
class LpProblem:
    """A linear program in inequality/equality form with nonnegative variables.

    ``shape`` is ``(N, K)`` for design programs whose variables are the
    state-by-bucket masses ``z[j, i]`` laid out row-major.
    """

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    shape: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")
        if self.shape is not None and int(np.prod(self.shape)) != n:
            raise ValueError("shape does not match the number of variables")

    @property
    def n_vars(self):
        return self.c.size

    def residual(self, x):
        """Largest primal infeasibility of ``x``."""
        r = [0.0, float(max(0.0, -x.min(initial=0.0)))]
        if self.A_ub.shape[0]:
            r.append(float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.A_eq.shape[0]:
            r.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return max(r)


def _block(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{what} block has dimension mismatch: {A.shape} vs {b.size} rows")
    return A, b


@dataclass
class LpSolution:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    iterations: int = 0
    method: str = "simplex"
    residual: float = float("nan")

    @property
    def ok(self):
        """A feasible solution is available."""
        return self.status in (OPTIMAL, STALLED)


class _Tableau:
    def __init__(self, T, basis):
        self.T = T            # rows: B^-1 [A | b]
        self.basis = basis
        self.iterations = 0
        self.bland = False
        self.degenerate = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.abs(col) > 0
        if nz.any():
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, cost, allowed, max_iter):
        """Maximize ``cost . x`` over the current basis; returns a status."""
        T = self.T
        while self.iterations < max_iter:
            d = cost - cost[self.basis] @ T[:, :-1]
            d[~allowed] = 0.0
            d[self.basis] = 0.0
            cand = np.flatnonzero(d > PIVOT_TOL * max(1.0, np.abs(cost).max()))
            if cand.size == 0:
                return OPTIMAL
            j = cand[0] if self.bland else cand[np.argmax(d[cand])]
            col = T[:, j]
            pos = col > PIVOT_TOL
            if not pos.any():
                return UNBOUNDED
            ratios = np.full(col.shape, np.inf)
            ratios[pos] = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
            r = ties[np.argmin(self.basis[ties])] if self.bland else ties[np.argmax(col[ties])]
            if best <= 1e-12:
                self.degenerate += 1
                if self.degenerate >= DEGENERATE_RUN:
                    self.bland = True
            else:
                self.degenerate = 0
            self.pivot(r, j)
        return ITERATION_LIMIT


def simplex(lp: LpProblem, max_iter=None) -> LpSolution:
    n = lp.n_vars
    m_ub, m_eq = lp.A_ub.shape[0], lp.A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        if np.any(lp.c > 0):
            return LpSolution(UNBOUNDED)
        return LpSolution(OPTIMAL, 0.0, np.zeros(n), residual=0.0)

    # rows with nonnegative right-hand sides; slack columns for <= rows
    A = np.zeros((m, n + m_ub))
    b = np.concatenate([lp.b_ub, lp.b_eq])
    A[:m_ub, :n] = lp.A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = lp.A_eq
    flip = b < 0
    A[flip] *= -1.0
    b = np.abs(b)
    # a row can start with its slack in the basis when the slack has +1
    slack_ok = np.zeros(m, dtype=bool)
    slack_ok[:m_ub] = ~flip[:m_ub]
    need_art = np.flatnonzero(~slack_ok)
    n_art = need_art.size
    width = n + m_ub + n_art
    T = np.zeros((m, width + 1))
    T[:, :n + m_ub] = A
    T[need_art, n + m_ub + np.arange(n_art)] = 1.0
    T[:, -1] = b
    basis = np.empty(m, dtype=int)
    basis[slack_ok] = n + np.flatnonzero(slack_ok)
    basis[need_art] = n + m_ub + np.arange(n_art)
    tab = _Tableau(T, basis)
    max_iter = max_iter or 200 * (m + width)

    if n_art:
        cost1 = np.zeros(width)
        cost1[n + m_ub:] = -1.0
        status = tab.run(cost1, np.ones(width, dtype=bool), max_iter)
        if status == ITERATION_LIMIT:
            return LpSolution(status, iterations=tab.iterations)
        infeas = float(tab.T[tab.basis >= n + m_ub, -1].sum())
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        _drive_out_artificials(tab, n + m_ub)

    keep_rows = tab.basis < n + m_ub
    tab.T = np.hstack([tab.T[keep_rows, :n + m_ub], tab.T[keep_rows, -1:]])
    tab.basis = tab.basis[keep_rows]
    cost = np.concatenate([lp.c, np.zeros(m_ub)])
    status = tab.run(cost, np.ones(n + m_ub, dtype=bool), max_iter)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab.iterations)

    full = np.zeros(n + m_ub)
    full[tab.basis] = np.maximum(tab.T[:, -1], 0.0)
    x = _polish(lp, full[:n])
    return LpSolution(OPTIMAL, float(lp.c @ x), x, tab.iterations, "simplex", lp.residual(x))


def _drive_out_artificials(tab, first_art):
    for r in np.flatnonzero(tab.basis >= first_art):
        row = tab.T[r, :first_art]
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            tab.pivot(r, cand[np.argmax(np.abs(row[cand]))])
    # rows still holding an artificial are redundant and get dropped by caller


def _polish(lp, x):
    """Re-solve the active set exactly: fix zero variables, solve the rest."""
    support = np.flatnonzero(x > 1e-13)
    if support.size == 0:
        return x
    rows_eq = lp.A_eq[:, support]
    act_ub = np.flatnonzero(np.abs(lp.A_ub @ x - lp.b_ub) <= 1e-9) if lp.A_ub.shape[0] else []
    M = np.vstack([rows_eq, lp.A_ub[act_ub][:, support]]) if len(act_ub) else rows_eq
    rhs = np.concatenate([lp.b_eq, lp.b_ub[act_ub]]) if len(act_ub) else lp.b_eq
    if M.shape[0] == 0:
        return x
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    y = x.copy()
    y[support] = sol
    if np.all(y >= -1e-12) and lp.residual(np.maximum(y, 0.0)) <= lp.residual(x) + 1e-15:
        return np.maximum(y, 0.0)
    return x


def solve_lp(lp: LpProblem, method="simplex", max_iter=None) -> LpSolution:
    """Solve ``lp``; ``method`` is ``"simplex"`` (built in) or ``"highs"`` (scipy)."""
    if method == "simplex":
        return simplex(lp, max_iter=max_iter)
    if method == "highs":
        return _highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def _highs(lp):
    from scipy.optimize import linprog
    from scipy import sparse

    res = linprog(-lp.c,
                  A_ub=sparse.csr_matrix(lp.A_ub) if lp.A_ub.shape[0] else None,
                  b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
                  A_eq=sparse.csr_matrix(lp.A_eq) if lp.A_eq.shape[0] else None,
                  b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return LpSolution(INFEASIBLE, method="highs")
    if res.status == 3:
        return LpSolution(UNBOUNDED, method="highs")
    if res.status != 0:
        return LpSolution(ITERATION_LIMIT, method="highs")
    x = np.maximum(res.x, 0.0)
    return LpSolution(OPTIMAL, float(lp.c @ x), x, int(res.nit), "highs", lp.residual(x))
