"""Discretized design linear program over (state, bucket) masses.

States are the atoms ``nu_j`` (mass ``p_j``) of a discrete prior. Buckets are
posterior-mean intervals ``[g_lo_k, g_hi_k]``; every signal that lands in
bucket ``k`` earns utility ``c[j, k]`` at state ``j``. The variable
``z[j, k]`` is the mass of state ``j`` sent to bucket ``k``. A bucket is
consistent when the posterior mean of its mass lies inside its bounds:

    g_lo_k * sum_j z[j, k] <= sum_j nu_j z[j, k] <= g_hi_k * sum_j z[j, k]

Small programs go to the built-in dense simplex. Large ones (the fine grids of
convergence studies) are solved by column generation over a HiGHS master,
pricing all ``N x K`` columns in vectorized chunks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dist
from .mechanism import IntervalMechanism, cells_around_atoms, direct_of
from .set_designer import DesignResult
from .simplex import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, STALLED, LpProblem, LpSolution,
                      solve_lp)

SIMPLEX_MAX_VARS = 3000
DEFAULT_CAP = 2000
PRICE_TOL = 1e-10
PRICE_CHUNK = 512
MAX_CG_ROUNDS = 1000
STALL_ROUNDS = 5
STALL_TOL = 1e-12
GAP_TOL = 1e-10


class CapExceededError(ValueError):
    pass


@dataclass
class DesignLp:
    """Structured form of the design program; ``to_problem`` expands it."""

    p: np.ndarray
    nu: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray
    c: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, float)
        self.nu = np.asarray(self.nu, float)
        self.g_lo = np.asarray(self.g_lo, float)
        self.g_hi = np.asarray(self.g_hi, float)
        self.c = np.atleast_2d(np.asarray(self.c, float))
        N, K = self.p.size, self.g_lo.size
        if self.nu.size != N or self.g_hi.size != K or self.c.shape != (N, K):
            raise ValueError(f"dimension mismatch: N={N}, K={K}, c has shape {self.c.shape}")
        if np.any(self.p < 0):
            raise ValueError("state probabilities must be nonnegative")

    @property
    def shape(self):
        return self.c.shape

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_eq(self):
        return self.p.size

    @property
    def bounded(self):
        return np.isfinite(self.g_hi)

    @property
    def n_ub(self):
        return self.g_lo.size + int(self.bounded.sum())

    def column_rows(self, j, k):
        """Constraint coefficients of column ``(j, k)``: (lower row, upper row)."""
        return self.g_lo[k] - self.nu[j], self.nu[j] - self.g_hi[k]

    def to_problem(self, sparse=False):
        N, K = self.shape
        jj, kk = np.divmod(np.arange(N * K), K)
        up = np.flatnonzero(self.bounded)
        up_row = np.full(K, -1)
        up_row[up] = K + np.arange(up.size)
        lo_val, hi_val = self.column_rows(jj, kk)
        rows = np.concatenate([kk, up_row[kk][up_row[kk] >= 0]])
        cols = np.concatenate([np.arange(N * K), np.flatnonzero(up_row[kk] >= 0)])
        vals = np.concatenate([lo_val, hi_val[up_row[kk] >= 0]])
        from scipy import sparse as sp
        A_ub = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_ub, N * K))
        A_eq = sp.csr_matrix((np.ones(N * K), (jj, np.arange(N * K))), shape=(N, N * K))
        if not sparse:
            A_ub, A_eq = A_ub.toarray(), A_eq.toarray()
            return LpProblem(self.c.ravel(), A_ub, np.zeros(self.n_ub), A_eq, self.p.copy(),
                             shape=self.shape, meta=self.meta)
        return self.c.ravel(), A_ub, A_eq

    def assignment_value(self, z):
        return float(np.sum(self.c * z))

    def bucket_of(self, x):
        """First bucket whose bounds contain posterior mean ``x`` (or ``None``)."""
        hit = np.flatnonzero((self.g_lo <= x + 1e-12) & (x <= self.g_hi + 1e-12))
        return int(hit[0]) if hit.size else None

    def no_info_assignment(self):
        k = self.bucket_of(float(self.p @ self.nu / self.p.sum()))
        if k is None:
            return None
        z = np.zeros(self.shape)
        z[:, k] = self.p
        return z

    def full_info_assignment(self):
        z = np.zeros(self.shape)
        for j, x in enumerate(self.nu):
            k = self.bucket_of(x)
            if k is None:
                return None
            z[j, k] = self.p[j]
        return z


def build_design_lp(dprior, bucket_bounds, c):
    """Design program for ``K + 1`` increasing bucket edges and an ``N x K`` utility."""
    g = np.asarray(bucket_bounds, float)
    if g.ndim != 1 or g.size < 2:
        raise ValueError("need at least two bucket bounds")
    if np.any(np.diff(g) <= 0):
        raise ValueError("bucket bounds must be strictly increasing")
    if not np.all(np.isfinite(g[:-1])):
        raise ValueError("only the last bucket bound may be unbounded")
    return DesignLp(dprior.p, dprior.nu, g[:-1], g[1:], c)


def solve_design_lp(lp: DesignLp, method="auto", seed=()):
    """Solve a design program. ``method``: auto, simplex, highs or colgen.

    ``seed`` lists extra ``(j, k)`` starting columns for column generation.
    """
    if method == "auto":
        method = "simplex" if lp.n_vars <= SIMPLEX_MAX_VARS else "colgen"
    if method in ("simplex", "highs"):
        sol = solve_lp(lp.to_problem(), method=method)
        if sol.ok:
            sol.x = sol.x.reshape(lp.shape)
        return sol
    if method == "colgen":
        return _column_generation(lp, seed)
    raise ValueError(f"unknown LP method {method!r}")


def _column_generation(lp: DesignLp, seed=(), max_rounds=MAX_CG_ROUNDS, max_time=None):
    """Column generation over a warm-started HiGHS master.

    Each round prices every ``(j, k)`` pair and adds the best improving bucket
    per state. The Lagrangian bound ``obj + sum_j p_j max(0, max_k rc_jk)`` is
    an upper bound on the full program. Dual degeneracy can leave that bound
    loose for many rounds, so the loop stops once the bound is within
    ``GAP_TOL`` of the objective, or after ``STALL_ROUNDS`` rounds in which
    neither the objective nor the best bound moved (status ``stalled``).
    """
    import highspy

    N, K = lp.shape
    active = lp.p > 0
    up = np.flatnonzero(lp.bounded)
    up_row = np.full(K, -1)
    up_row[up] = K + np.arange(up.size)
    inf = highspy.kHighsInf

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("presolve", "off")
    h.setOptionValue("simplex_strategy", 4)  # primal simplex keeps the basis primal feasible
    h.setOptionValue("primal_feasibility_tolerance", 1e-10)
    h.setOptionValue("dual_feasibility_tolerance", 1e-10)
    empty_i = np.array([], dtype=np.int32)
    h.addRows(N + lp.n_ub, np.concatenate([lp.p, np.full(lp.n_ub, -inf)]),
              np.concatenate([lp.p, np.zeros(lp.n_ub)]), 0, empty_i, empty_i, np.array([]))
    h.changeObjectiveSense(highspy.ObjSense.kMaximize)

    seen = np.zeros((N, K), dtype=bool)
    cols_j, cols_k = [], []

    def add(jj, kk):
        jj, kk = np.asarray(jj, dtype=np.int64), np.asarray(kk, dtype=np.int64)
        fresh = ~seen[jj, kk]
        jj, kk = jj[fresh], kk[fresh]
        key = np.unique(jj * K + kk)
        jj, kk = np.divmod(key, K)
        if jj.size == 0:
            return 0
        seen[jj, kk] = True
        lo_val, hi_val = lp.column_rows(jj, kk)
        has_up = up_row[kk] >= 0
        width = 2 + has_up.astype(np.int64)
        starts = np.concatenate([[0], np.cumsum(width)[:-1]])
        idx = np.empty(int(width.sum()), dtype=np.int32)
        val = np.empty(idx.size)
        idx[starts], val[starts] = jj, 1.0
        idx[starts + 1], val[starts + 1] = N + kk, lo_val
        idx[starts[has_up] + 2] = N + up_row[kk[has_up]]
        val[starts[has_up] + 2] = hi_val[has_up]
        n = jj.size
        h.addCols(n, lp.c[jj, kk], np.zeros(n), np.full(n, inf), idx.size,
                  starts.astype(np.int32), idx, val)
        cols_j.append(jj)
        cols_k.append(kk)
        return n

    # full- and no-information columns make the first master feasible
    act = np.flatnonzero(active)
    k_fi = np.array([lp.bucket_of(x) for x in lp.nu[act]], dtype=object)
    k_mu = lp.bucket_of(float(lp.p @ lp.nu / lp.p.sum()))
    ok = np.array([k is not None for k in k_fi], dtype=bool)
    add(act[ok], k_fi[ok].astype(np.int64))
    if k_mu is not None:
        add(act, np.full(act.size, k_mu))
    seed = np.asarray(list(seed), dtype=np.int64).reshape(-1, 2)
    if seed.size:
        add(seed[:, 0], seed[:, 1])

    t0 = time.perf_counter()
    rounds, stall, best, bound, status = 0, 0, -math.inf, math.inf, OPTIMAL
    while True:
        h.run()
        if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            return LpSolution(INFEASIBLE if h.getModelStatus() == highspy.HighsModelStatus.kInfeasible
                              else ITERATION_LIMIT, method="colgen", iterations=rounds)
        rounds += 1
        obj = h.getInfo().objective_function_value
        y = np.asarray(h.getSolution().row_dual)
        w_hi = np.zeros(K)
        w_hi[up] = y[N + K:]
        jj, kk, gap = _price(lp, y[:N], y[N:N + K], w_hi, active)
        scale = max(1.0, abs(obj))
        moved = obj > best + STALL_TOL * scale or obj + gap < bound - 1e-3 * (bound - obj)
        stall = 0 if moved else stall + 1
        best, bound = max(best, obj), min(bound, obj + gap)
        if jj.size == 0 or bound - obj <= GAP_TOL * scale:
            break
        if stall >= STALL_ROUNDS or rounds >= max_rounds or (
                max_time is not None and time.perf_counter() - t0 > max_time):
            status = STALLED if stall >= STALL_ROUNDS else ITERATION_LIMIT
            break
        add(jj, kk)
    x = np.asarray(h.getSolution().col_value)
    z = np.zeros(lp.shape)
    z[np.concatenate(cols_j), np.concatenate(cols_k)] = np.maximum(x, 0.0)
    sol = LpSolution(status, lp.assignment_value(z), z, rounds, "colgen")
    sol.residual = _design_residual(lp, z)
    sol.n_columns = int(seen.sum())
    sol.bound = float(bound)
    return sol


def _price(lp, y_eq, w_lo, w_hi, active):
    """Best improving bucket per state and the Lagrangian gap.

    A column's reduced cost (maximization) is
    ``c - y_eq[j] - w_lo (g_lo - nu) - w_hi (nu - g_hi)``.
    """
    N, K = lp.shape
    g_hi = np.where(lp.bounded, lp.g_hi, 0.0)
    out_j, out_k, gap = [], [], 0.0
    for s in range(0, N, PRICE_CHUNK):
        sl = slice(s, min(N, s + PRICE_CHUNK))
        nu = lp.nu[sl, None]
        rc = (lp.c[sl] - y_eq[sl, None] - w_lo[None, :] * (lp.g_lo[None, :] - nu)
              - w_hi[None, :] * (nu - g_hi[None, :]))
        best = np.argmax(rc, axis=1)
        val = np.where(active[sl], rc[np.arange(rc.shape[0]), best], 0.0)
        gap += float(lp.p[sl] @ np.maximum(val, 0.0))
        hit = np.flatnonzero(val > PRICE_TOL)
        out_j.append(s + hit)
        out_k.append(best[hit])
    return np.concatenate(out_j), np.concatenate(out_k), gap


def refine_seed(z, dprior, lp: DesignLp):
    """Columns for ``lp`` suggested by a solution ``z`` on a coarser grid.

    Every coarse bucket in use is mapped to the fine bucket holding its
    posterior mean (plus both neighbours); a fine state inherits the buckets
    used by the two coarse states around it.
    """
    z = np.asarray(z, float)
    mass = z.sum(axis=0)
    used = np.flatnonzero(mass > 1e-14)
    if used.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    post = (dprior.nu @ z[:, used]) / mass[used]
    fine = np.array([-1 if k is None else k for k in map(lp.bucket_of, post)])
    to_fine = np.full(z.shape[1], -1)
    to_fine[used] = fine
    K = lp.shape[1]
    hi = np.clip(np.searchsorted(dprior.nu, lp.nu), 0, dprior.nu.size - 1)
    lo = np.clip(hi - 1, 0, dprior.nu.size - 1)
    pairs = []
    for coarse in (lo, hi):
        jj, uu = np.nonzero(z[coarse] > 1e-14)
        kk = to_fine[uu]
        keep = kk >= 0
        for d in (-1, 0, 1):
            k = kk[keep] + d
            ok = (k >= 0) & (k < K)
            pairs.append(np.stack([jj[keep][ok], k[ok]], axis=1))
    return np.unique(np.concatenate(pairs), axis=0)


def _design_residual(lp, z):
    mass = z.sum(axis=0)
    mom = lp.nu @ z
    r = [np.max(np.abs(z.sum(axis=1) - lp.p)), np.max(lp.g_lo * mass - mom, initial=0.0)]
    b = lp.bounded
    if b.any():
        r.append(np.max(mom[b] - lp.g_hi[b] * mass[b], initial=0.0))
    return float(max(r))


def mechanism_from_lp(z, dprior, cells=None, prune_columns=False):
    """Interval mechanism whose row on cell ``j`` is ``z[j, :] / p_j``.

    ``cells`` are the ``N + 1`` breakpoints (defaults to the prior's
    discretization grid, or midpoints between atoms). Zero-probability states
    get the row that sends everything to the first signal.
    """
    z = np.asarray(z.x if isinstance(z, LpSolution) else z, float)
    p = np.asarray(dprior.p, float)
    if cells is None:
        cells = (dist.discretization_cells(dprior) if dprior.delta is not None
                 else cells_around_atoms(dprior.nu, dprior.M))
    if prune_columns:
        z = z[:, z.sum(axis=0) > 0]
    rows = np.zeros_like(z)
    pos = p > 0
    rows[pos] = z[pos] / p[pos, None]
    rows[~pos, 0] = 1.0
    rows = np.clip(rows, 0.0, None)
    rows /= rows.sum(axis=1, keepdims=True)
    return IntervalMechanism(np.asarray(cells, float), rows)


def conditional_from_z(z, p, compliant):
    p = np.asarray(p, float)
    num = np.sum(z * compliant, axis=1)
    return np.where(p > 0, num / np.where(p > 0, p, 1.0), 0.0)


def design_scaled_capacity(dprior, gammas, weights=None, method="auto"):
    """Maximize compliance when state ``j`` needs a posterior mean of at least ``gammas[j]``.

    Buckets are ``[g_{i-1}, g_i]`` with ``g_0 = 0`` and a last bucket unbounded
    above; state ``j`` complies in every bucket from ``j + 1`` on.
    """
    g = np.asarray(gammas, float)
    N = dprior.p.size
    if g.size != N:
        raise ValueError(f"need one threshold per state ({N}), got {g.size}")
    if np.any(np.diff(g) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    if g[0] <= 0:
        raise ValueError("thresholds must be positive")
    p = dprior.p
    alpha = p.copy() if weights is None else np.asarray(weights, float)
    scale = np.where(p > 0, alpha / np.where(p > 0, p, 1.0), 0.0)
    compliant = (np.arange(N + 1)[None, :] >= np.arange(1, N + 1)[:, None]).astype(float)
    c = scale[:, None] * compliant
    lp = build_design_lp(dprior, np.concatenate([[0.0], g, [math.inf]]), c)
    sol = solve_design_lp(lp, method)
    if not sol.ok:
        raise SolverError(f"design LP {sol.status}")
    z = sol.x
    mech = mechanism_from_lp(z, dprior)
    cond = conditional_from_z(z, p, compliant)
    diag = {"lp_value": sol.objective, "conditional": cond.tolist(),
            "no_info": _benchmark(lp, lp.no_info_assignment()),
            "full_info": _benchmark(lp, lp.full_info_assignment()),
            "lp_iterations": sol.iterations, "lp_method": sol.method}
    return DesignResult(mech, direct_of(mech, dprior), sol.objective, "lp", diag,
                        extras={"lp": lp, "z": z})


def _benchmark(lp, z):
    return None if z is None else lp.assignment_value(z)


class SolverError(RuntimeError):
    pass


def lipschitz_grid_sizes(eps, eta1, eta2, lipschitz, cap=DEFAULT_CAP, allow_cap=False):
    """Grid sizes that guarantee ``eps``-optimality, capped at ``cap``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    delta = math.ceil((8 * eta2 + 8 * lipschitz * eta1) / eps)
    tau = math.ceil(4 * eta1 / eps)
    delta, tau = max(delta, 1), max(tau, 1)
    capped = []
    if delta > cap:
        capped.append(("delta", delta))
    if tau > cap:
        capped.append(("tau", tau))
    if capped and not allow_cap:
        raise CapExceededError(f"grid size exceeds cap {cap}: {capped}; pass allow_cap to clip")
    return min(delta, cap), min(tau, cap), capped


def epsilon_bound(delta, tau, eta1, eta2, lipschitz):
    return max((8 * eta2 + 8 * lipschitz * eta1) / delta, 4 * eta1 / tau)


def remote_mass_buckets(eq_map, tau, M):
    """Posterior-mean buckets whose remote masses fall in ``[(k-1)/tau, k/tau]``.

    Buckets whose mass range the map never reaches on ``[0, M]`` are dropped.
    Returns the kept bucket indices (1-based ``k``) and their ``K + 1`` edges.
    """
    y = np.arange(tau + 1) / tau
    g = np.asarray(eq_map.inverse(y, theta_max=M), float)
    m0, mM = float(eq_map(0.0)), float(eq_map(M))
    k = np.arange(1, tau + 1)
    keep = (y[1:] >= m0) & (y[:-1] <= mM) & np.isfinite(g[:-1])
    keep &= ~((y[1:] == m0) & (m0 > 0) & (k < tau))  # bucket ending exactly at m(0) is empty
    k = k[keep]
    edges = np.concatenate([[g[k[0] - 1]], g[k]])
    edges[0] = 0.0
    return k, edges


def design_lipschitz(prior, h, eta1, eta2, eps=None, eq_map=None, delta=None, tau=None,
                     cap=DEFAULT_CAP, allow_cap=False, method="auto", evaluate_value=True,
                     warm_start=None):
    """Approximately optimal mechanism for a jointly Lipschitz utility ``h(y, theta)``.

    Either give ``eps`` (grid sizes follow from the Lipschitz constants) or
    explicit ``delta`` and ``tau``. The returned value is the utility of the
    extended mechanism under the original prior; the discretized program's
    optimum is kept in the diagnostics. ``warm_start`` is a result on a
    coarser grid whose support seeds column generation.
    """
    if eq_map is None:
        raise ValueError("an equilibrium map is required")
    L = eq_map.lipschitz_bound
    capped = []
    if delta is None or tau is None:
        if eps is None:
            raise ValueError("give eps or both delta and tau")
        if L is None:
            raise ValueError("the equilibrium map has no Lipschitz bound; give delta and tau")
        d0, t0, capped = lipschitz_grid_sizes(eps, eta1, eta2, L, cap, allow_cap)
        delta = d0 if delta is None else delta
        tau = t0 if tau is None else tau
    delta, tau = int(delta), int(tau)
    if prior.is_discrete:
        dprior = prior
        cells = cells_around_atoms(prior.nu, prior.M)
    else:
        dprior = dist.delta_discretize(prior, delta)
        cells = dist.discretization_cells(dprior)
    ks, edges = remote_mass_buckets(eq_map, tau, prior.M)
    mid = (2 * ks - 1) / (2 * tau)
    c = np.asarray(h(mid[None, :], dprior.nu[:, None]), float)
    c = np.broadcast_to(c, (dprior.p.size, ks.size)).copy()
    lp = build_design_lp(dprior, edges, c)
    seed = ()
    if warm_start is not None and "z" in warm_start.extras:
        seed = refine_seed(warm_start.extras["z"], warm_start.extras["dprior"], lp)
    sol = solve_design_lp(lp, method, seed)
    if not sol.ok:
        raise SolverError(f"design LP {sol.status}")
    mech = mechanism_from_lp(sol.x, dprior, cells, prune_columns=True)
    diag = {"delta": delta, "tau": tau, "n_states": int(dprior.p.size), "n_buckets": int(ks.size),
            "lp_value": sol.objective, "lp_method": sol.method, "lp_iterations": sol.iterations,
            "lp_residual": sol.residual, "lp_status": sol.status, "capped": capped}
    if hasattr(sol, "bound"):
        diag["lp_bound"] = sol.bound
    if L is not None:
        diag["eps_bound"] = epsilon_bound(delta, tau, eta1, eta2, L)
    value = sol.objective
    if evaluate_value:
        from .evaluate import General, value as evaluate
        value = evaluate(prior, General(h, eta1, eta2), mech, eq_map)
    direct = direct_of(mech, prior)
    return DesignResult(mech, direct, float(value), "lp", diag,
                        extras={"lp": lp, "z": sol.x, "dprior": dprior})


def dump_lp(lp, path):
    """Write the program as plain text: objective row, then one line per constraint.

    Coefficients are sparse ``index:value`` terms with 17 significant digits.
    """
    if isinstance(lp, DesignLp):
        c, A_ub, A_eq = lp.to_problem(sparse=True)
        b_ub, b_eq = np.zeros(A_ub.shape[0]), lp.p
        shape = lp.shape
    else:
        from scipy import sparse as sp
        c, A_ub, A_eq = lp.c, sp.csr_matrix(lp.A_ub), sp.csr_matrix(lp.A_eq)
        b_ub, b_eq, shape = lp.b_ub, lp.b_eq, lp.shape
    fmt = lambda v: format(float(v), ".17g")

    def terms(row):
        return " ".join(f"{i}:{fmt(v)}" for i, v in zip(row.indices, row.data) if v != 0)

    with open(path, "w") as fh:
        fh.write("# maximize OBJ.x subject to EQ and LE rows, x >= 0\n")
        fh.write(f"VARS {len(c)} EQ {A_eq.shape[0]} LE {A_ub.shape[0]}")
        fh.write(f" SHAPE {shape[0]} {shape[1]}\n" if shape else "\n")
        nz = np.flatnonzero(c)
        fh.write("OBJ " + " ".join(f"{i}:{fmt(c[i])}" for i in nz) + "\n")
        A_eq, A_ub = A_eq.tocsr(), A_ub.tocsr()
        for r in range(A_eq.shape[0]):
            fh.write(f"EQ {terms(A_eq.getrow(r))} = {fmt(b_eq[r])}\n")
        for r in range(A_ub.shape[0]):
            fh.write(f"LE {terms(A_ub.getrow(r))} <= {fmt(b_ub[r])}\n")
