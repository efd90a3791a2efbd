import numpy as np
import pytest

from twospeed.dissipation import weighted_l1
from twospeed.oracles import ex27_transient, scenario
from twospeed.two_speed import (TwoSpeedConfig, build_stretching, compute_var_R1,
                                detect_parabolic_points, energy_loss_process, measure_consistency,
                                resolve_jump, verify_energy_equality)
from twospeed.viscous_solver import ViscousParams, run_viscous

ALL = ["ex24", "ex25", "ex26", "ex27", "convex", "smoke1d"]


def test_config_validation():
    from twospeed.potentials import ConfigurationError
    with pytest.raises(ConfigurationError, match="solver.lambdas"):
        TwoSpeedConfig(lambdas=())
    with pytest.raises(ConfigurationError):
        TwoSpeedConfig(lambdas=(0.1, -1.0))
    assert TwoSpeedConfig(lambdas=(0.01, 0.1, 0.05)).lambdas == (0.1, 0.05, 0.01)
    assert TwoSpeedConfig(m_max=16).m_schedule == (1, 2, 4, 8, 16)


def test_energy_loss_process(solve):
    sol, _ = solve("ex24")
    r = sol.runs[-1]
    assert r.lam == 0.01
    om = energy_loss_process(r)
    # jump drop 6 plus sliding at speed 1/2 over the remaining 0.3
    assert om.increment(2.9, 3.2) == pytest.approx(6.15, abs=0.05)
    assert om.total == pytest.approx(np.sum(r.ri + r.rd), rel=1e-10)
    assert om.balance_defect <= 1e-8 * len(r.times)
    P = scenario("convex").problem(loading={"slope": 0.0})
    flat = run_viscous(P.u0, 1.0, ViscousParams(lam=0.1, tau=0.01), P)
    assert not np.any(energy_loss_process(flat).values)


def test_detect_parabolic_points(solve):
    sol, _ = solve("ex24")
    w = detect_parabolic_points(sol.runs[-1], 1)
    assert len(w) == 1 and w[0].t0 <= 3.0 + 0.05 and w[0].t1 >= 3.0
    assert w[0].drop == pytest.approx(6.0, abs=0.1)
    conv, _ = solve("convex")
    # smooth sliding can fill a wide window at coarse lam and large m, never at the finest lam
    assert all(detect_parabolic_points(r, m) == [] for r in conv.runs for m in (1, 2))
    assert all(detect_parabolic_points(conv.runs[-1], m) == [] for m in (1, 2, 4, 8, 16))
    ex27, _ = solve("ex27")
    w = detect_parabolic_points(ex27.runs[-1], 3)
    assert len(w) == 1 and w[0].t0 == 0.0
    assert w[0].drop == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        detect_parabolic_points(ex27.runs[-1], 0)


def test_resolve_jump_ex24():
    sc = scenario("ex24")
    res = resolve_jump(sc.problem(), 3.0, [[0.0]], sc.config)
    assert len(res.transients) == 1 and not res.slides
    assert res.d_ri == pytest.approx(2.0, abs=1e-3)
    assert res.d_rd == pytest.approx(4.0, abs=1e-3)
    tr = res.transients[0]
    assert np.all(np.diff(tr.energies) <= 1e-12)
    assert tr.balance_residual() <= 1e-6
    assert tr.end_slack <= sc.config.eps_stab and tr.end_speed <= sc.config.eps_tail


def test_resolve_jump_stable_entry_is_empty():
    sc = scenario("ex24")
    res = resolve_jump(sc.problem(), 2.0, [[-0.5]], sc.config)
    assert res.segments == [] and len(res) == 0


def test_resolve_jump_ex27_transient_then_slide():
    sc = scenario("ex27")
    P = sc.problem()
    res = resolve_jump(P, 0.0, P.u0, sc.config)
    assert [g.kind for g in res.segments] == ["transient", "slide"]
    tr = res.transients[0]
    assert tr.theta_grid[0] == 0.0 and np.array_equal(tr.states[0], P.u0)
    th = np.linspace(0, 2, 201)
    assert np.abs(tr.state_at(th)[:, 0, 0] - ex27_transient(th)).max() <= 1e-4
    assert tr.ri_diss == pytest.approx(0.25, abs=1e-3)
    assert tr.rd_diss == pytest.approx(0.25, abs=1e-3)
    sl = res.slides[0]
    assert sl.var == pytest.approx(0.75, abs=1e-3)
    assert sl.right_state[0, 0] == pytest.approx(1.0, abs=1e-3)
    assert sl.b(np.array([0.0]))[0, 0, 0] == pytest.approx(0.25, abs=1e-3)


def test_frozen_load_consistency():
    sc = scenario("ex24")
    P = sc.problem()
    base = resolve_jump(P, 3.0, [[0.0]], sc.config)
    for lam in (0.02, 0.01):
        for sign in (-1, 1):
            other = resolve_jump(P, 3.0 + sign * lam, [[0.0]], sc.config)
            assert abs(other.d_ri - base.d_ri) <= lam
            assert abs(other.d_rd - base.d_rd) <= 4 * lam


def test_build_stretching_examples():
    st = build_stretching([0.0, 0.1, 0.2, 0.3], omega=[0.0, 0.0, 0.0, 0.0])
    assert np.allclose(st.s, st.t) and st.S0 == pytest.approx(0.3)
    st = build_stretching([0.0, 0.1, 0.2, 0.3], omega=[0.0, 0.0, 0.5, 0.5])
    assert np.allclose(np.diff(st.s), [0.1, 0.6, 0.1])
    assert np.all(st.slopes() >= 1)
    with pytest.raises(RuntimeError):
        build_stretching([0.0, 0.1, 0.2], omega=[0.0, 0.5, 0.4])


def test_stretching_slopes_and_inverse(solve):
    sol, _ = solve("ex24")
    for lam, st in sol.stretchings.items():
        sl = st.slopes()
        assert np.all(sl >= 1 - 1e-12)
        assert np.all(np.diff(st.phi(st.s)) <= np.diff(st.s) + 1e-12)
        inside = st.in_window()
        assert np.allclose(sl[inside], 1.0)


def test_compute_var_examples():
    pot = weighted_l1([1.0])
    assert compute_var_R1(np.array([[0.0], [1.0], [0.5]]), pot) == pytest.approx(1.5)
    t = np.linspace(1, 3, 41)
    path = ((t - 3) / 2)[:, None]
    assert compute_var_R1(path, pot) == pytest.approx(1.0)
    coarse = compute_var_R1(np.sin(np.linspace(0, 6, 7))[:, None], pot)
    fine = compute_var_R1(np.sin(np.linspace(0, 6, 61))[:, None], pot)
    assert coarse <= fine
    assert compute_var_R1(np.array([[0.0], [1.0], [0.5]]), pot, exclude=[(0, 1)]) == pytest.approx(0.5)


def test_assembled_ex24(solve):
    sol, _ = solve("ex24")
    assert len(sol.jumps) == 1 and len(sol.jump_set) == 1
    j = sol.jumps[0]
    assert j.t_k == pytest.approx(3.0, abs=0.05)
    assert j.mu_ri == pytest.approx(2.0, abs=0.02) and j.mu_rd == pytest.approx(4.0, abs=0.04)
    assert sol.measures.ac_ri_mass(1.0, 3.0) == pytest.approx(1.0, abs=0.02)
    assert verify_energy_equality(sol) <= 1e-4
    s = np.linspace(0, sol.S0, 50)
    assert np.all(np.diff(np.interp(s, sol.s, sol.t)) >= 0)


def test_assembled_ex25(solve):
    sol, _ = solve("ex25")
    j = sol.jumps[0]
    assert j.t_k == 0.0
    assert j.mu_ri == pytest.approx(5.0 / 3.0, abs=0.05)
    assert j.l1_jump(sol.problem.grid) == pytest.approx(1.0, abs=1e-3)


def test_assembled_ex27(solve):
    sol, _ = solve("ex27")
    assert verify_energy_equality(sol) <= 1e-4
    j = sol.jumps[0]
    assert j.d_ri + j.d_rd == pytest.approx(0.5, abs=0.01)
    assert j.slide_var == pytest.approx(0.75, abs=0.01)


def test_convex_has_no_jumps(solve):
    sol, _ = solve("convex")
    assert sol.jumps == [] and sol.measures.atoms == []
    assert sol.measures.total_rd == pytest.approx(0.0, abs=1e-9)
    st = sol.stretchings[min(sol.stretchings)]
    assert np.max(np.abs(st.phi(st.s) - st.t)) <= 1e-12
    assert np.max(np.abs(st.s - st.t)) <= st.S0


def test_constant_solution_energy_equality():
    sc = scenario("convex")
    P = sc.problem(loading={"slope": 0.0})
    from twospeed.two_speed import solve_two_speed
    sol = solve_two_speed(P, sc.config)
    assert verify_energy_equality(sol) == 0.0
    assert np.all(sol.states == 0)


@pytest.mark.parametrize("name", ALL)
def test_certificates_pass(solve, name):
    sol, _ = solve(name)
    failures = [(e.name, e.lhs, e.rhs, e.tol) for e in sol.certificates.failures]
    assert sol.passed, failures


@pytest.mark.parametrize("name", ["ex24", "ex27"])
def test_measure_consistency_decreasing(solve, name):
    sol, _ = solve(name)
    rep = measure_consistency(sol)
    assert len(rep) >= 1 and rep.passed


@pytest.mark.parametrize("name", ALL)
def test_jump_ordering_and_continuity(solve, name):
    sol, _ = solve(name)
    g = sol.problem.grid
    c1 = sol.problem.dissipation.c1
    for j in sol.jumps:
        ivals = sorted(((t.energies[-1], t.energies[0]) for t in j.transients), reverse=True)
        for (lo_a, hi_a), (lo_b, hi_b) in zip(ivals, ivals[1:]):
            assert hi_b <= lo_a + 1e-8
        for t in j.transients:
            assert j.exit_energy - 1e-8 <= t.energies[-1] <= t.energies[0] <= j.entry_energy + 1e-8
        for a, b in zip(j.segments, j.segments[1:]):
            gap = b.energies[0] - a.energies[-1]
            assert g.h * np.abs(b.left_state - a.right_state).sum() <= abs(gap) / c1 + 1e-9


def test_summary_keys(solve):
    sol, _ = solve("ex24")
    sm = sol.summary()
    for key in ("jump_time", "mu_ri", "mu_rd", "energy_gap", "S0", "certificates_passed"):
        assert key in sm
