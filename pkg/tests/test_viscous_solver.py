import numpy as np
import pytest

from twospeed.dissipation import weighted_l1
from twospeed.grid import SpatialGrid
from twospeed.oracles import ex24_u_jump, scenario
from twospeed.potentials import ConfigurationError, Loading, TotalEnergy, quadratic
from twospeed.viscous_solver import (Problem, StepFailure, ViscousParams, build_problem,
                                     incremental_step, read_trajectory_csv, run_viscous,
                                     strong_solution_residual, write_trajectory_csv)

LAM = 0.05


def _quadratic_point(force, u0=0.0, alpha=1.0):
    g = SpatialGrid.point()
    E = TotalEnergy(quadratic(), Loading.constant_force(g, force), g)
    return Problem(E, weighted_l1([alpha]), [[u0]], 1.0)


def _ex24_near_jump():
    """Ex. 2.4 started on the viscous sliding branch u = (t-3)/2 - lam/4 at t = 2.9."""
    P = scenario("ex24").problem()
    t0 = 2.9
    return P, t0, np.array([[(t0 - 3) / 2 - LAM / 4]])


def _ex24_relaxation(t, lam=LAM):
    """lam u' = 4 - 2u + (t - 3) from u = 0 at the kink crossing t* = 3 + lam/2."""
    ts = 3.0 + lam / 2
    a = 2 + (ts - 3) / 2 - lam / 4
    return 2 + (t - 3) / 2 - lam / 4 - a * np.exp(-2 * (t - ts) / lam)


def test_incremental_step_closed_form():
    P = _quadratic_point(3.0)
    res = incremental_step(P.u0, 0.0, 0.5, ViscousParams(lam=1.0, tau=0.5, scheme="euler"), P)
    assert res.state[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_incremental_step_stable_state_does_not_move():
    P = _quadratic_point(0.6, u0=0.2)
    res = incremental_step(P.u0, 0.0, 0.1, ViscousParams(lam=1.0, tau=0.1), P)
    assert np.array_equal(res.state, P.u0)
    assert res.ri == 0 and res.rd == 0


def test_incremental_step_ex24_relaxation_direction():
    P = scenario("ex24").problem().frozen(3.0)
    tau = 1e-4
    res = incremental_step([[1e-12]], 3.0, 3.0 + tau, ViscousParams(lam=0.01, tau=tau), P)
    assert 0 < res.state[0, 0] < 2
    assert res.state[0, 0] == pytest.approx(float(ex24_u_jump(tau, 0.01)), rel=1e-3)


def test_convexity_guard():
    P = scenario("ex24").problem()
    with pytest.raises(ConfigurationError):
        incremental_step(P.u0, 0.0, 0.1, ViscousParams(lam=0.1, tau=0.1), P)
    with pytest.raises(ConfigurationError):
        ViscousParams(lam=0.0, tau=0.1)


def test_step_failure_reports_residual():
    P = scenario("ex24").problem().frozen(3.0)
    params = ViscousParams(lam=0.01, tau=1e-3, newton_max_iter=1, newton_tol=1e-300, delta=1e-3)
    with pytest.raises(StepFailure) as err:
        incremental_step([[0.5]], 3.0, 3.001, params, P)
    assert np.isfinite(err.value.residual)


def test_run_viscous_ex24_shape():
    P = scenario("ex24").problem()
    r = run_viscous(P.u0, 5.0, ViscousParams(lam=0.01, tau=0.01 / 200), P)
    assert r.state_at(0.5)[0, 0] == pytest.approx(-1.0, abs=1e-9)
    assert r.state_at(2.0)[0, 0] == pytest.approx(-0.5, abs=0.01)
    assert r.state_at(4.0)[0, 0] == pytest.approx(2.5, abs=0.01)
    assert np.all(r.balance_residuals <= r.balance_tol)
    assert np.all(np.diff(r.omega) >= 0)


def test_constant_trajectory_has_zero_ledger():
    P = _quadratic_point(0.0)
    r = run_viscous(P.u0, 1.0, ViscousParams(lam=0.1, tau=0.05), P)
    assert np.all(r.states == 0)
    assert not np.any(r.ri) and not np.any(r.rd) and not np.any(r.force_work)


def test_frozen_transient_matches_oracle():
    lam = 0.01
    P = scenario("ex24").problem().frozen(3.0)
    r = run_viscous([[0.0]], 3.0 + 10 * lam, ViscousParams(lam=lam, tau=lam / 100), P, t0=3.0)
    err = np.abs(r.states[:, 0, 0] - ex24_u_jump(r.times - 3.0, lam)).max()
    assert err <= 1e-4


def test_drifting_load_transition_matches_closed_form():
    P, t0, u0 = _ex24_near_jump()
    r = run_viscous(u0, 3.0 + 4 * LAM, ViscousParams(lam=LAM, tau=LAM / 200), P, t0=t0)
    late = r.times >= 3.0 + LAM / 2
    assert np.abs(r.states[late, 0, 0] - _ex24_relaxation(r.times[late])).max() <= 1e-4


def test_tau_refinement_order():
    P, t0, u0 = _ex24_near_jump()
    T = 3.0 + LAM
    fin = [run_viscous(u0, T, ViscousParams(lam=LAM, tau=LAM / k), P, t0=t0).states[-1, 0, 0]
           for k in (25, 50, 100, 200)]
    d = np.abs(np.diff(fin))
    orders = np.log2(d[:-1] / d[1:])
    assert np.all(orders >= 0.9), orders
    assert fin[-1] == pytest.approx(_ex24_relaxation(T), abs=1e-5)


def test_delta_refinement_bounded_by_delta():
    P, t0, u0 = _ex24_near_jump()
    T = 3.0 + LAM
    ref = run_viscous(u0, T, ViscousParams(lam=LAM, tau=LAM / 100), P, t0=t0).states[-1, 0, 0]
    for delta in (2**-4, 2**-5, 2**-6):
        u = run_viscous(u0, T, ViscousParams(lam=LAM, tau=LAM / 100, delta=delta), P,
                        t0=t0).states[-1, 0, 0]
        assert abs(u - ref) <= delta


def test_strong_solution_residual_examples():
    P = scenario("smoke1d").problem()
    r = run_viscous(P.u0, 0.1, ViscousParams(lam=LAM, tau=2e-3), P)
    g = P.grid
    k = len(r.times) // 2
    z = (r.states[k + 1] - r.states[k]) / (r.times[k + 1] - r.times[k])
    assert abs(strong_solution_residual(r, k, [z])) <= 1e-12
    rng = np.random.default_rng(0)
    xis = [rng.normal(size=g.shape) for _ in range(50)]
    assert strong_solution_residual(r, k, xis) <= 10 * r.params.newton_tol
    r.states[k + 1] = r.states[k + 1] + 0.1
    assert strong_solution_residual(r, k, xis + [np.zeros(g.shape)]) > 0


def test_adaptive_controller_bisects_large_drops():
    P = scenario("ex24").problem()
    params = ViscousParams(lam=0.05, tau=0.05 / 50, controller="adaptive", drop_cap=0.05)
    r = run_viscous(P.u0, 4.0, params, P)
    assert np.all(r.ri + r.rd <= 0.05 + 1e-12)
    assert np.all(np.abs(r.balance_residuals) <= r.balance_tol)


def test_trajectory_csv_round_trip(tmp_path):
    P = build_problem({"density": "quartic_doublewell",
                       "dissipation": {"kind": "weighted_l1", "alpha": [0.2]},
                       "loading": {"slope": 2.0}, "horizon": 0.05,
                       "grid": {"dim": 1, "n_nodes": 8}})
    r = run_viscous(P.u0, 0.05, ViscousParams(lam=LAM, tau=1e-2), P)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(r, path)
    assert path.read_bytes().count(b"\r\n") == len(r.times) + 1
    cols = read_trajectory_csv(path, P.grid.shape)
    assert np.array_equal(cols["times"], r.times)
    assert np.array_equal(cols["states"], r.states)
    assert np.array_equal(cols["energy"], r.energies)
