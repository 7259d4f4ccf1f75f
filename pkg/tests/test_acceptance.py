"""End-to-end checks, one test per acceptance criterion.

Each test attaches a one-line summary of the measured numbers; the terminal
summary prints a PASS/FAIL line per criterion.
"""

import time
import warnings

import numpy as np
import pytest

from signalcraft import dist
from signalcraft.equilibrium import EquilibriumMap, epidemic_cost_model, linear_cost_model
from signalcraft.evaluate import (SetBased, StateBand, convergence_study, h_ref, h_rho,
                                  sweep_capacity, value, value_full_info, value_no_info)
from signalcraft.lp import design_lipschitz, design_scaled_capacity, solve_design_lp
from signalcraft.mechanism import IntervalMechanism, check_mpc, threshold_mechanism
from signalcraft.set_designer import (design, design_r2, design_r3, design_r4a, design_sets,
                                      sets_from_thetas)
from signalcraft.simplex import OPTIMAL, LpProblem, simplex

from oracles import (best_monotone_partition_band, pooling_band_mechanism,
                     two_signal_grid_value, vertex_enumeration)
from test_lp import _posteriors, _random_instance
from test_simplex import random_lp


def covid_map(M=10.0):
    return EquilibriumMap(dist.Uniform(0, 6), linear_cost_model(1.0), theta_max=M)


def test_criterion_01_scaled_capacity(record_property):
    dp = dist.Discrete([0.4, 0.6, 1.0], [0.3, 0.3, 0.4])
    t0 = time.perf_counter()
    res = design_scaled_capacity(dp, [0.5, 0.9, 1.2])
    elapsed = time.perf_counter() - t0
    d = res.diagnostics
    record_property("detail", f"V={res.value:.6f} V_j={np.round(d['conditional'], 6).tolist()} "
                              f"NI={d['no_info']:.3f} FI={d['full_info']:.3f} t={elapsed:.3f}s")
    assert res.value == pytest.approx(0.425, abs=1e-6)
    np.testing.assert_allclose(d["conditional"], [1.0, 0.416667, 0.0], atol=1e-5)
    assert d["no_info"] == pytest.approx(0.3, abs=1e-9)
    assert d["full_info"] == pytest.approx(0.0, abs=1e-9)
    assert elapsed < 0.1


def test_criterion_02_equilibrium(record_property):
    m5 = float(covid_map()(5.0))
    record_property("detail", f"m(5)={m5:.12f} (5/11={5 / 11:.12f})")
    assert m5 == pytest.approx(5 / 11, abs=1e-9)


def test_criterion_03_two_target_threshold(record_property):
    unit = dist.Uniform(0, 1)
    res = design_r4a(unit, sets_from_thetas([(0.4, 0.4), (0.6, 0.6)], 1.0))
    tb = sorted(res.direct.theta_bar)
    record_property("detail", f"t={res.diagnostics['threshold']:.6f} "
                              f"lambda={res.diagnostics['lam']:.9f} "
                              f"posteriors={np.round(tb, 12).tolist()} V={res.value}")
    assert res.diagnostics["threshold"] == pytest.approx(0.5, abs=1e-9)
    assert res.diagnostics["lam"] == pytest.approx(0.7, abs=1e-6)
    np.testing.assert_allclose(res.mechanism.rows, [[0.7, 0.3], [0.3, 0.7]], atol=1e-6)
    np.testing.assert_allclose(tb, [0.4, 0.6], atol=1e-9)
    assert res.value == pytest.approx(1.0)


def test_criterion_04_single_target_designs(record_property):
    unit = dist.Uniform(0, 1)
    r2 = design_r2(unit, sets_from_thetas([(0.0, 0.3)], 1.0))
    r3 = design_r3(unit, sets_from_thetas([(0.7, 1.0)], 1.0))
    q1 = r2.mechanism.breakpoints[1]
    q2 = r3.diagnostics["q"]
    o2 = two_signal_grid_value(unit, [(0.0, 0.3)])
    o3 = two_signal_grid_value(unit, [(0.7, 1.0)])
    record_property("detail", f"q1={q1:.7f} V2={r2.value:.7f} oracle2={o2:.4f}; "
                              f"q2={q2:.7f} V3={r3.value:.7f} oracle3={o3:.4f}")
    assert q1 == pytest.approx(0.6, abs=1e-6)
    np.testing.assert_allclose(sorted(r2.direct.pairs, key=lambda p: p[1]),
                               [(0.6, 0.3), (0.4, 0.8)], atol=1e-6)
    assert q2 == pytest.approx(0.4, abs=1e-6)
    assert r3.value == pytest.approx(0.6, abs=1e-6)
    assert o2 <= r2.value + 2e-3 and o3 <= r3.value + 2e-3


def test_criterion_05_pooling_beats_monotone(record_property):
    eps = 0.005
    unit, ident = dist.Uniform(0, 1), EquilibriumMap.identity()
    pref = StateBand.linear(1 / 3, 0.0, eps)
    v_pool = value(unit, pref, pooling_band_mechanism(), ident)
    # single thresholds on a 1000-point grid, through the evaluator
    v_thr = max(value(unit, pref, IntervalMechanism([0.0, t, 1.0], [[1, 0], [0, 1]]), ident)
                for t in np.arange(1, 1000) / 1000)
    # every monotone partition with ends on the same grid
    v_dp = best_monotone_partition_band(1000, 1 / 3, eps)
    record_property("detail", f"V(pool)={v_pool:.6f} (target 0.0600) "
                              f"max threshold={v_thr:.6f} best monotone partition={v_dp:.6f}")
    assert v_thr <= 0.03 + 1e-4 and v_dp <= 0.03 + 1e-4
    assert v_pool == pytest.approx(0.06, abs=1e-4)


def _binary_full_info(lam):
    # G uniform on [0, 6]: E[v; v >= G^-1(y)] = 3 - 3 y^2, m(0) = 0, m(10) = 10/16
    y = 10 / 16
    return 0.5 * lam * 3 + 0.5 * (lam * (3 - 3 * y * y) - (1 - lam) * 10 * (1 - y) ** 2)


def test_criterion_06_binary_state(record_property):
    prior = dist.Discrete([0.0, 10.0], [0.5, 0.5], M=10.0)
    eq_map = covid_map()
    parts, ok = [], True
    for lam in (0.0, 0.25, 0.5, 0.75):
        pref = h_ref(lam, dist.Uniform(0, 6))
        res = design_lipschitz(prior, pref.h, pref.eta1, pref.eta2, eq_map=eq_map,
                               delta=200, tau=200)
        fi = _binary_full_info(lam)
        assert value_full_info(prior, pref, eq_map) == pytest.approx(fi, abs=1e-12)
        # res.value is the designed mechanism's utility under the true map; the
        # raw program objective uses bucket-midpoint utilities and is kept apart
        ok &= abs(res.value - fi) <= 1e-3
        ok &= np.allclose(sorted(res.direct.theta_bar), [0.0, 10.0], atol=1e-9)
        parts.append(f"lam={lam}: V={res.value:.6f} FI={fi:.6f} "
                     f"(midpoint objective {res.diagnostics['lp_value']:.6f})")
    record_property("detail", "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_07_convergence(record_property):
    prior = dist.Uniform(0, 10)
    levels = [(n, n) for n in (10, 32, 100, 316, 1000)]
    t0 = time.perf_counter()
    parts, ok = [], True
    for rho in (0.0, 0.5, 1.0):
        pref = h_rho(rho)
        rows = convergence_study(prior, dist.Uniform(0, 6), linear_cost_model(1.0), pref, levels,
                                 jobs=4)
        gaps = [r["gap"] for r in rows[:-1]]
        ok &= all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
        final = rows[-1]["value"]
        if rho == 0.5:
            fi = value_full_info(prior, pref, covid_map())
            ok &= abs(final - fi) <= 1e-3
        parts.append(f"rho={rho}: gaps={np.array2string(np.array(gaps), precision=2)} "
                     f"V={final:.6f}")
        if rho == 1.0:
            parts[-1] += f" NI={value_no_info(prior, pref, covid_map()):.6f}"
    elapsed = time.perf_counter() - t0
    record_property("detail", "; ".join(parts) + f"; t={elapsed:.0f}s")
    assert ok
    assert elapsed < 180


def test_criterion_08_capacity_sweep(record_property):
    rows = sweep_capacity(dist.Uniform(5, 20), dist.Uniform(0, 10), linear_cost_model(1.0),
                          np.linspace(0, 1, 21), jobs=4)
    margin = min(r["V_opt"] - max(r["V_ni"], r["V_fi"]) for r in rows)
    first = rows[0]
    record_property("detail", f"min V*-max(NI,FI)={margin:.2e}; at b=0: "
                              f"{first['V_opt']}, {first['V_ni']}, {first['V_fi']}")
    assert margin >= -1e-6
    assert first["V_opt"] == first["V_ni"] == first["V_fi"] == pytest.approx(1.0)


def _designed_direct_mechanisms():
    unit = dist.Uniform(0, 1)
    for thetas in ([(0.0, 0.3)], [(0.7, 1.0)], [(0.4, 0.6)], [(0.4, 0.4), (0.6, 0.6)],
                   [(0.05, 0.1), (0.9, 0.95)], [(0.2, 0.25), (0.5, 0.55), (0.8, 0.85)]):
        yield unit, design_sets(unit, sets_from_thetas(thetas, 1.0)).direct
    prior, eq_map = dist.Uniform(0, 10), covid_map()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for omegas in ([(0.0, 0.3)], [(0.5, 0.55)], [(0.2, 0.3), (0.45, 0.5)]):
            yield prior, design(prior, eq_map, omegas).direct
    dp = dist.Discrete([0.4, 0.6, 1.0], [0.3, 0.3, 0.4])
    yield dp, design_scaled_capacity(dp, [0.5, 0.9, 1.2]).direct
    for rho in (0.0, 1.0):
        pref = h_rho(rho)
        yield prior, design_lipschitz(prior, pref.h, pref.eta1, pref.eta2, eq_map=eq_map,
                                      delta=20, tau=20, evaluate_value=False).direct


def test_criterion_09_property_suites(record_property):
    rng = np.random.default_rng(9)
    # (a) designed mechanisms are implementable
    n_mpc = 0
    for prior, direct in _designed_direct_mechanisms():
        assert check_mpc(direct.sorted(), prior, tol=1e-8).feasible
        n_mpc += 1
    # (b) Lipschitz bound of the remote-mass map
    maps = [covid_map(20.0),
            EquilibriumMap(dist.Uniform(0, 10), linear_cost_model(3.0), theta_max=20),
            EquilibriumMap(dist.TruncatedNormal(3, 1, 8), epidemic_cost_model(4.0, 0.3),
                           theta_max=20)]
    worst = 0.0
    for m in maps:
        a, b = rng.random(500) * 20, rng.random(500) * 20
        ratio = np.abs(m(a) - m(b)) / np.maximum(np.abs(a - b), 1e-300)
        worst = max(worst, float(np.max(ratio / m.lipschitz_bound)))
        assert np.all(np.abs(m(a) - m(b)) <= m.lipschitz_bound * np.abs(a - b) + 1e-9)
    # (c) posterior closeness between a prior and its discretization
    priors = [dist.Uniform(0, 10), dist.TruncatedExponential(0.3, 10.0),
              dist.TruncatedNormal(4.0, 2.0, 10.0)]
    for _ in range(50):
        delta = int(rng.choice([1, 2, 4, 5, 10, 20]))
        prior = priors[int(rng.integers(3))]
        rows = rng.dirichlet(np.ones(int(rng.integers(2, 5))), size=10 * delta)
        mech = IntervalMechanism(np.arange(10 * delta + 1) / delta, rows)
        q_c, tb_c = _posteriors(mech, prior)
        q_d, tb_d = _posteriors(mech, dist.delta_discretize(prior, delta))
        np.testing.assert_allclose(q_d, q_c, atol=1e-12)
        assert np.all(tb_c - tb_d >= -1e-12) and np.all(tb_c - tb_d <= 1 / delta + 1e-12)
    # (d) dense simplex against vertex enumeration
    lp_rng = np.random.default_rng(12345)
    n_opt = 0
    for _ in range(1000):
        c, A_ub, b_ub, A_eq, b_eq = random_lp(lp_rng)
        status, ref = vertex_enumeration(c, A_ub, b_ub, A_eq, b_eq)
        sol = simplex(LpProblem(c, A_ub if A_ub.size else None, b_ub if A_ub.size else None,
                                A_eq if A_eq.size else None, b_eq if A_eq.size else None))
        assert sol.status == status
        if status == OPTIMAL:
            n_opt += 1
            assert abs(sol.objective - ref) <= 1e-8 * max(1.0, abs(ref))
    record_property("detail", f"(a) {n_mpc} designs feasible; (b) max |dm|/(L|dθ|)={worst:.3f}; "
                              f"(c) 50 cases ok; (d) 1000 LPs agree ({n_opt} optimal)")


def test_criterion_10_lp_benchmarks(record_property):
    rng = np.random.default_rng(10)
    worst = np.inf
    for _ in range(100):
        _, lp = _random_instance(rng)
        sol = solve_design_lp(lp)
        assert sol.ok
        for z in (lp.no_info_assignment(), lp.full_info_assignment()):
            worst = min(worst, sol.objective - lp.assignment_value(z))
    record_property("detail", f"min LP - benchmark over 100 instances = {worst:.2e}")
    assert worst >= -1e-9
