"""Closed-form reference solutions for the zero-dimensional examples.

Each ``oracle_*`` function returns plain numbers or arrays; each scenario
in ``SCENARIOS`` pairs problem data with its oracle and solver settings.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .potentials import bump_ex27, doublewell_ex24, guide_ex26, pathlength_ex25
from .two_speed import TwoSpeedConfig
from .viscous_solver import Problem, build_problem

# ---------------------------------------------------------------- double well

EX24_MU_RI = 2.0
EX24_MU_RD = 4.0
EX24_GAP = 6.0


def ex24_u_weak(t):
    t = np.asarray(t, dtype=float)
    return np.where(t < 1.0, -1.0, 0.5 * (t + 1.0))


def ex24_u_ext(t):
    t = np.asarray(t, dtype=float)
    return np.select([t < 1.0, t < 3.0], [-1.0, 0.5 * (t - 3.0)], 0.5 * (t + 1.0))


def ex24_u_jump(theta, lam: float = 1.0):
    return 2.0 - 2.0 * np.exp(-2.0 * np.asarray(theta, dtype=float) / lam)


def ex24_finsler_cost(lam: float = 1.0) -> float:
    """Path integral of -D E(u_jump) . u_jump' over the transient (f frozen at 3)."""
    dW = doublewell_ex24().scalar[1]

    def integrand(th):
        u = 2.0 - 2.0 * np.exp(-2.0 * th / lam)
        du = 4.0 * np.exp(-2.0 * th / lam) / lam
        return -(dW(u) - 3.0) * du

    return quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13)[0]


def oracle_ex24(t=None, theta=None, lam: float = 1.0) -> dict:
    out = {"mu_ri": EX24_MU_RI, "mu_rd": EX24_MU_RD, "jump_gap": EX24_GAP,
           "jump_time": 3.0, "energetic_jump_time": 1.0, "bv_cost": EX24_GAP}
    if t is not None:
        out["u_weak"] = ex24_u_weak(t)
        out["u_ext"] = ex24_u_ext(t)
    if theta is not None:
        out["u_jump"] = ex24_u_jump(theta, lam)
    return out


# ---------------------------------------------------------------- path length

EX25_PATH_LENGTH = 5.0 / 3.0
EX25_JUMP_R1 = 1.0


def ex25_path(t):
    """Rate-independent path from (0,0) to (0,1) on t in [0, 1], constant afterwards."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    third, two3 = 1.0 / 3.0, 2.0 / 3.0
    u = np.select([t <= third, t < two3], [t, np.full_like(t, third)], 1.0 - t)
    return np.stack([u, t], axis=-1)


def ex25_velocity(t):
    t = np.asarray(t, dtype=float)
    third, two3 = 1.0 / 3.0, 2.0 / 3.0
    du = np.select([t < third, t < two3, t < 1.0], [1.0, 0.0, -1.0], 0.0)
    dv = np.where(t < 1.0, 1.0, 0.0)
    return np.stack([du, dv], axis=-1)


def oracle_ex25() -> dict:
    W = pathlength_ex25(confinement=0.0).value
    length = quad(lambda t: float(np.abs(ex25_velocity(t)).sum()), 0.0, 1.0,
                  points=[1 / 3, 2 / 3], epsabs=1e-13)[0]
    return {"path_length": length, "mu_ri": EX25_PATH_LENGTH, "jump_r1": EX25_JUMP_R1,
            "W_start": float(W(np.array([0.0, 0.0]))), "W_end": float(W(np.array([0.0, 1.0]))),
            "start": (0.0, 0.0), "end": (0.0, 1.0)}


# ---------------------------------------------------------------- guided path

def oracle_ex26(K: float = 100.0, xi_knots=None, amplitude: float = 2.0) -> dict:
    """Predicted jump RI mass (arclength of the guide) and the energy identity constant."""
    d = guide_ex26(K=K, xi_knots=xi_knots, amplitude=amplitude)
    dxi = d.params["dxi"]
    arclength = quad(lambda v: float(np.sqrt(1.0 + dxi(v) ** 2)), 0.0, 1.0,
                     epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    l1_length = quad(lambda v: 1.0 + abs(float(dxi(v))), 0.0, 1.0,
                     epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return {"arclength": arclength, "l1_length": l1_length, "energy_identity": float(K),
            "limit_var": 1.0, "start": (0.0, 0.0), "end": (0.0, 1.0)}


# ---------------------------------------------------------------- bump

def ex27_transient(theta):
    return 0.25 * (1.0 - np.exp(-8.0 * np.asarray(theta, dtype=float)))


def oracle_ex27(theta=None) -> dict:
    out = {"d_ri": 0.25, "d_rd": 0.25, "transient_end": 0.25, "slide_start": 0.25,
           "slide_end": 1.0, "slide_var": 0.75, "rest_state": 1.0}
    if theta is not None:
        out["v1"] = ex27_transient(theta)
    return out


# ---------------------------------------------------------------- residuals

def oracle_residuals(name: str, n: int = 1000, seed: int = 0) -> float:
    """Worst violation of the defining equation by the closed form at n samples."""
    rng = np.random.default_rng(seed)
    if name == "ex24":
        dW = np.vectorize(doublewell_ex24().scalar[1])
        t = rng.uniform(0.0, 6.0, n)
        t = t[(np.abs(t - 1.0) > 1e-9) & (np.abs(t - 3.0) > 1e-9)]
        u = ex24_u_ext(t)
        sigma = t - dW(u)
        du = np.where(t < 1.0, 0.0, 0.5)
        slow = np.where(du > 0, np.abs(sigma - 1.0), np.maximum(np.abs(sigma) - 1.0, 0.0))
        th = rng.uniform(0.0, 20.0, n)
        v = ex24_u_jump(th)
        fast = np.abs(4.0 * np.exp(-2.0 * th) + 1.0 + dW(v) - 3.0)
        return float(max(slow.max(), fast.max()))
    if name == "ex25":
        dens = pathlength_ex25(confinement=0.0)
        t = rng.uniform(0.0, 1.0, n)
        t = t[np.min(np.abs(t[:, None] - np.array([1 / 3, 2 / 3])), axis=1) > 1e-9]
        sigma = -dens.gradient(ex25_path(t))
        vel = ex25_velocity(t)
        res = np.where(vel != 0, np.abs(sigma - np.sign(vel)), np.maximum(np.abs(sigma) - 1.0, 0.0))
        return float(res.max())
    if name == "ex26":
        flat = oracle_ex26(xi_knots=[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
        return abs(flat["arclength"] - 1.0)
    if name == "ex27":
        dW = np.vectorize(bump_ex27().scalar[1])
        th = rng.uniform(0.0, 20.0, n)
        v = ex27_transient(th)
        dv = 2.0 * np.exp(-8.0 * th)
        fast = np.abs(dv + 1.0 + dW(v) - 1.0)
        z = rng.uniform(0.25, 1.0, n)
        slide = np.abs(1.0 - dW(z) - 1.0)
        return float(max(fast.max(), slide.max()))
    raise KeyError(name)


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class OracleScenario:
    name: str
    description: str
    spec: dict
    config: TwoSpeedConfig
    oracle: Callable | None = None
    expected: dict = field(default_factory=dict)

    def problem(self, **overrides) -> Problem:
        return build_problem({**self.spec, **overrides})

    def with_config(self, **changes) -> "OracleScenario":
        return replace(self, config=replace(self.config, **changes))


def _scenarios() -> dict:
    out = {}

    def add(sc):
        out[sc.name] = sc

    add(OracleScenario(
        "ex24", "double well min{z(z+2), z(z-2)}, f(t)=t, u0=-1: sliding then a jump at t=3",
        {"name": "ex24", "density": "doublewell_ex24",
         "dissipation": {"kind": "weighted_l1", "alpha": [1.0]},
         "loading": {"offset": 0.0, "slope": 1.0}, "u0": -1.0, "horizon": 5.0},
        TwoSpeedConfig(lambdas=(0.1, 0.05, 0.01)), oracle_ex24,
        {"jump_time": 3.0, "mu_ri": 2.0, "mu_rd": 4.0, "gap": 6.0, "ac_ri_1_3": 1.0}))
    add(OracleScenario(
        "ex25", "piecewise (u,v) potential, f=0, stable start: initial-time slide of length 5/3",
        {"name": "ex25", "density": "pathlength_ex25", "density_params": {"confinement": 1.0e3},
         "dissipation": {"kind": "weighted_l1", "alpha": [1.0, 1.0]},
         "loading": {}, "u0": [0.0, 0.0], "horizon": 0.1},
        TwoSpeedConfig(lambdas=(0.1, 0.05), tau_slow=1e-2), oracle_ex25,
        {"mu_ri": 5.0 / 3.0, "l1_jump": 1.0}))
    add(OracleScenario(
        "ex26", "guided quadratic K^2(u-xi(v))^2 + K(v-1)^2, Euclidean friction, f=0",
        {"name": "ex26", "density": "guide_ex26", "density_params": {"K": 100.0},
         "dissipation": {"kind": "gauge", "set": "ball", "radius": 1.0, "m": 2},
         "loading": {}, "u0": [0.0, 0.0], "horizon": 0.01},
        TwoSpeedConfig(lambdas=(0.02, 0.01), tau_fast=1e-4, tau_slow=1e-3), oracle_ex26,
        {"var": 1.0}))
    add(OracleScenario(
        "ex27", "bump potential, f=1, u0=0: transient 0->1/4 then slide 1/4->1",
        {"name": "ex27", "density": "bump_ex27",
         "dissipation": {"kind": "weighted_l1", "alpha": [1.0]},
         "loading": {"offset": 1.0}, "u0": 0.0, "horizon": 1.0},
        TwoSpeedConfig(lambdas=(0.1, 0.05, 0.01)), oracle_ex27,
        {"d_ri": 0.25, "d_rd": 0.25, "slide_var": 0.75, "final": 1.0}))
    add(OracleScenario(
        "convex", "quadratic energy, slow ramp: no jumps",
        {"name": "convex", "density": "quadratic",
         "dissipation": {"kind": "weighted_l1", "alpha": [1.0]},
         "loading": {"slope": 0.5}, "u0": 0.0, "horizon": 4.0},
        TwoSpeedConfig(lambdas=(0.1, 0.05, 0.01)), None, {"n_jumps": 0}))
    add(OracleScenario(
        "smoke1d", "quartic double well on a 64-node interval, ramping load",
        {"name": "smoke1d", "density": "quartic_doublewell",
         "dissipation": {"kind": "weighted_l1", "alpha": [0.2]},
         "loading": {"offset": 0.0, "slope": 2.0}, "u0": 0.0, "horizon": 0.5,
         "grid": {"dim": 1, "n_nodes": 64, "length": 1.0}},
        TwoSpeedConfig(lambdas=(0.05, 0.02), tau_slow=1e-2, tau_fast=1e-2, lam_slow=1e-6),
        None, {}))
    return out


SCENARIOS: dict[str, OracleScenario] = _scenarios()


def scenario(name: str) -> OracleScenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None


def oracle_table(name: str, lam: float = 1.0, n: int = 101) -> tuple[list, list]:
    """Closed-form series as (header, rows) for CSV output."""
    if name == "ex24":
        theta = np.linspace(0.0, 5.0, n)
        t = np.linspace(0.0, 5.0, n)
        o = oracle_ex24(t=t, theta=theta, lam=lam)
        return (["t", "u_weak", "u_ext", "theta", "u_jump"],
                [list(r) for r in zip(t, o["u_weak"], o["u_ext"], theta, o["u_jump"])])
    if name == "ex25":
        t = np.linspace(0.0, 1.0, n)
        p = ex25_path(t)
        o = oracle_ex25()
        return (["t", "u", "v", "path_length"],
                [[a, b, c, o["path_length"]] for a, (b, c) in zip(t, p)])
    if name == "ex26":
        o = oracle_ex26()
        d = guide_ex26()
        v = np.linspace(0.0, 1.0, n)
        return (["v", "xi", "arclength"], [[x, float(d.params["xi"](x)), o["arclength"]] for x in v])
    if name == "ex27":
        theta = np.linspace(0.0, 2.0, n)
        return (["theta", "v1"], [list(r) for r in zip(theta, ex27_transient(theta))])
    raise KeyError(f"no closed form for scenario {name!r}")
