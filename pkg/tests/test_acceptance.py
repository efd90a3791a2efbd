"""Acceptance criteria 1-7, one PASS/FAIL line each.

Run directly with ``python tests/test_acceptance.py`` or through pytest; the
lines are printed as each criterion finishes and again in the summary.
"""
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, solved
from twospeed.diagnostics import variation_sandwich
from twospeed.dissipation import (asymmetric_scalar, gauge_of_ball, gauge_of_ellipsoid,
                                  gauge_of_polytope, regularize, weighted_l1)
from twospeed.grid import l1_norm
from twospeed.oracles import ex24_u_jump, oracle_ex26, scenario
from twospeed.two_speed import resolve_jump, verify_energy_equality
from twospeed.viscous_solver import ViscousParams, run_viscous, strong_solution_residual

SCENARIOS = ("ex24", "ex25", "ex26", "ex27", "convex", "smoke1d")


def report(n, title, checks, seconds, limit):
    """Record one line; ``checks`` maps a label to (value, ok)."""
    checks = dict(checks)
    checks["time"] = (f"{seconds:.2f}s<={limit:g}s", seconds <= limit)
    ok = all(v[1] for v in checks.values())
    body = "; ".join(f"{k}={v[0]:.6g}" if isinstance(v[0], float) else f"{k}={v[0]}"
                     + ("" if v[1] else " [x]") for k, v in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {body}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok, {k: v for k, v in checks.items() if not v[1]}


def check(value, target, tol):
    return float(value), abs(value - target) <= tol


def test_criterion_1_double_well_end_to_end():
    sol, secs = solved("ex24")
    fine = sol.runs[-1]
    assert fine.lam == 0.01 and fine.params.tau == pytest.approx(0.01 / 200)
    j = max(sol.jumps, key=lambda x: x.energy_gap)
    windows = sol.windows[fine.lam]
    viscous_t = max(windows, key=lambda w: w.drop).t_peak if windows else np.nan
    ok, bad = report(1, "double well end to end", {
        "n_jumps": (len(sol.jumps), len(sol.jumps) == 1),
        "jump_time": check(j.t_k, 3.0, 0.05),
        "viscous_jump_time": check(viscous_t, 3.0, 0.05),
        "mu_ri": check(j.mu_ri, 2.0, 0.02),
        "mu_rd": check(j.mu_rd, 4.0, 0.04),
        "atom_sum": check(j.mu_ri + j.mu_rd, 6.0, 1e-3),
        "gap": check(j.energy_gap, 6.0, 1e-3),
        "ac_ri_1_3": check(sol.measures.ac_ri_mass(1.0, j.t_k), 1.0, 0.02),
    }, secs, 10)
    assert ok, bad


def test_criterion_2_transient_matches_oracle():
    sc = scenario("ex24")
    assert sc.config.tau_fast == 1e-3
    t0 = time.perf_counter()
    res = resolve_jump(sc.problem(), 3.0, np.zeros((1, 1)), sc.config)
    tr = res.transients[0]
    theta = np.linspace(0.0, 10.0, 2001)
    err = float(np.abs(tr.state_at(theta)[:, 0, 0] - ex24_u_jump(theta)).max())
    ok, bad = report(2, "transient vs closed form", {
        "n_transients": (len(res.transients), len(res.transients) == 1),
        "sup_error": (err, err <= 1e-4),
    }, time.perf_counter() - t0, 5)
    assert ok, bad


def test_criterion_3_path_length_exceeds_jump():
    sol, secs = solved("ex25")
    j = sol.jumps[0] if sol.jumps else None
    mu = j.mu_ri if j is not None else np.nan
    l1 = j.l1_jump(sol.problem.grid) if j is not None else np.nan
    ok, bad = report(3, "initial jump path length", {
        "jump_at_0": (j.t_k if j is not None else np.nan, j is not None and j.t_k == 0.0),
        "mu_ri": check(mu, 5.0 / 3.0, 0.05),
        "l1_jump": check(l1, 1.0, 1e-3),
        "mu_ri_exceeds_jump": (float(mu - l1), mu > l1),
    }, secs, 5)
    assert ok, bad


def test_criterion_4_guided_path():
    sol, secs = solved("ex26")
    arc = oracle_ex26()["arclength"]
    j = sol.jumps[0]
    rel = abs(j.mu_ri - arc) / arc
    g = sol.problem.grid
    var = float(g.h * np.sum(sol.problem.dissipation.value(j.exit_state - j.entry_state)))
    ok, bad = report(4, "guided path", {
        "mu_ri": (float(j.mu_ri), True),
        "arclength": (float(arc), True),
        "rel_error": (float(rel), rel <= 0.05),
        "jump_var": check(var, 1.0, 1e-3),
    }, secs, 30)
    assert ok, bad


def test_criterion_5_bump():
    sol, secs = solved("ex27")
    j = sol.jumps[0]
    tr = j.transients
    ok, bad = report(5, "bump transient then slide", {
        "n_transients": (len(tr), len(tr) == 1),
        "transient_end": check(tr[0].right_state[0, 0], 0.25, 0.01),
        "d_ri": check(tr[0].ri_diss, 0.25, 0.01),
        "d_rd": check(tr[0].rd_diss, 0.25, 0.01),
        "n_slides": (len(j.slides), len(j.slides) == 1),
        "slide_var": check(j.slide_var, 0.75, 0.01),
        "final_state": check(sol.states[-1][0, 0], 1.0, 1e-3),
        "energy_residual": (float(verify_energy_equality(sol)), verify_energy_equality(sol) <= 1e-4),
    }, secs, 10)
    assert ok, bad


def _dissipation_library():
    hexagon = [[np.cos(a), np.sin(a)] for a in np.arange(6) * np.pi / 3]
    lib = {name: solved(name)[0].problem.dissipation for name in SCENARIOS}
    lib.update({"l1": weighted_l1([1.0, 2.0]), "asym": asymmetric_scalar(2.0, 1.0),
                "ball": gauge_of_ball(1.5, 2),
                "ellipsoid": gauge_of_ellipsoid([[2.0, 0.5], [0.5, 1.0]]),
                "hexagon": gauge_of_polytope(hexagon),
                "triangle": gauge_of_polytope([[2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]])})
    return lib


def _random_sandwiches(rng, n):
    """Left sandwich on n random intervals of the finest runs that avoid parabolic windows."""
    worst, done, tries = -np.inf, 0, 0
    names = ("ex24", "convex", "smoke1d", "ex27")
    while done < n and tries < 50 * n:
        tries += 1
        sol = solved(names[tries % len(names)])[0]
        r = sol.runs[-1]
        T0, T1 = float(r.times[0]), float(r.times[-1])
        a = rng.uniform(T0, T1)
        b = min(T1, a + rng.uniform(0.01, 0.5) * (T1 - T0))
        if any(w.t0 <= b and a <= w.t1 for w in sol.windows[r.lam]):
            continue
        e = variation_sandwich(r, (a, b), 0.05, jump_times=sol.jump_times)["variation_sandwich"]
        if e.status != "evaluated":
            continue
        worst = max(worst, e.lhs - e.rhs - e.tol)
        done += 1
    return done, worst


def test_criterion_6_property_suite():
    sols = {name: solved(name)[0] for name in SCENARIOS}
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bal = mono = slope = lip = stab = -np.inf
    order = 0.0
    for sol in sols.values():
        eps_stab = sol.config.eps_stab
        for r in sol.runs:
            bal = max(bal, float(np.max(r.balance_residuals - r.balance_allowance())))
            mono = max(mono, float(-np.min(np.diff(r.omega), initial=0.0)))
            st = sol.stretchings[r.lam]
            off = ~st.in_window()
            slope = max(slope, float(np.max(1.0 - st.slopes()[off], initial=-np.inf)))
            s = np.linspace(0.0, st.S0, 4001)
            lip = max(lip, float(np.max(np.diff(st.phi(s)) - np.diff(s))))
        stab = max(stab, float(np.max(sol.cert_slack, initial=-np.inf)) - eps_stab)
        for j in sol.jumps:
            ivals = sorted(((t.energies[-1], t.energies[0]) for t in j.transients), reverse=True)
            for (lo_a, _), (_, hi_b) in zip(ivals, ivals[1:]):
                order = max(order, hi_b - lo_a)
    n_sw, sandwich = _random_sandwiches(rng, 100)

    homog = subadd = bounds = 0.0
    reg = -np.inf
    for p in _dissipation_library().values():
        z = rng.normal(size=(1000, p.m)) * rng.uniform(0, 10, size=(1000, 1))
        w = rng.normal(size=(1000, p.m)) * rng.uniform(0, 10, size=(1000, 1))
        a = rng.uniform(0, 10, size=1000)
        Rz, nz = p.value(z), np.linalg.norm(z, axis=1)
        homog = max(homog, float(np.max(np.abs(p.value(a[:, None] * z) - a * Rz) / (1 + a * Rz))))
        subadd = max(subadd, float(np.max(p.value(z + w) - Rz - p.value(w))))
        bounds = max(bounds, float(np.max(p.c1 * nz - Rz)), float(np.max(Rz - p.c2 * nz)))
        for delta in (0.1, 0.01):
            R = regularize(p, delta)
            v = R.value(z)
            reg = max(reg, float(np.max(np.maximum(p.c1 * nz - 2 * delta, 0) - v)),
                      float(np.max(v - p.c2 * nz)),
                      float(np.max(np.abs(np.sum(R.gradient(z) * z, axis=1) - v))) - 2 * delta)
    ok, bad = report(6, "property suite", {
        "balance_excess": (bal, bal <= 0),
        "omega_decrease": (mono, mono <= 0),
        "slope_deficit": (slope, slope <= 1e-12),
        "phi_lipschitz_excess": (lip, lip <= 1e-12),
        "stability_excess": (stab, stab <= 0),
        "sandwich_intervals": (n_sw, n_sw == 100),
        "sandwich_excess": (sandwich, sandwich <= 0),
        "V_overlap": (order, order <= 1e-8),
        "homogeneity": (homog, homog <= 1e-12),
        "subadditivity": (subadd, subadd <= 1e-12),
        "gauge_bounds": (bounds, bounds <= 1e-12),
        "regularized_displays": (reg, reg <= 1e-12),
    }, time.perf_counter() - t0, 60)
    assert ok, bad


def _orders(diffs):
    return [float(np.log2(a / b)) for a, b in zip(diffs, diffs[1:])]


def test_criterion_7_smoke_1d():
    t0 = time.perf_counter()
    sc = scenario("smoke1d")
    sol = solved("smoke1d")[0]
    P, g = sol.problem, sol.problem.grid
    r = sol.runs[-1]
    rng = np.random.default_rng(7)
    steps = rng.choice(np.arange(1, len(r.times) - 1), 50, replace=False)
    fields = [rng.normal(size=g.shape) for _ in range(50)]
    ssr = max(strong_solution_residual(r, int(k), fields) for k in steps)

    def final(params):
        return run_viscous(P.u0, P.horizon, params, P).states[-1]

    lam = sc.config.lambdas[0]
    fin = [final(ViscousParams(lam=lam, tau=tau)) for tau in (4e-3, 2e-3, 1e-3, 5e-4)]
    tau_orders = _orders([l1_norm(g, a - b) for a, b in zip(fin, fin[1:])])
    fin = [final(ViscousParams(lam=lam, tau=2e-3, delta=2.0**-k)) for k in range(6, 11)]
    delta_orders = _orders([l1_norm(g, a - b) for a, b in zip(fin, fin[1:])])
    ok, bad = report(7, "1-D smoke", {
        "certified": (str(sol.passed), sol.passed),
        "strong_residual": (float(ssr), ssr <= 1e-5),
        "tau_order": (min(tau_orders), min(tau_orders) >= 0.9),
        "delta_order": (min(delta_orders), min(delta_orders) >= 0.9),
    }, solved("smoke1d")[1] + time.perf_counter() - t0, 120)
    assert ok, bad


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
