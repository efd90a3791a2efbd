"""Quartic double well on a 64-node interval with a ramping load.

Runs one viscous trajectory, checks the discrete variational inequality on
random test fields, and measures convergence in the time step.
"""
import numpy as np

from twospeed import ViscousParams, run_viscous, scenario, strong_solution_residual
from twospeed.grid import l1_norm, norms

P = scenario("smoke1d").problem()
g = P.grid
r = run_viscous(P.u0, P.horizon, ViscousParams(lam=0.05, tau=1e-3), P)
print(f"{len(r.times)} steps, final energy {r.energies[-1]:.6f}")
print("final state norms:", {k: round(v, 6) for k, v in norms(g, r.states[-1]).items()})

rng = np.random.default_rng(0)
fields = [rng.normal(size=g.shape) for _ in range(20)]
worst = max(strong_solution_residual(r, k, fields) for k in range(1, len(r.times) - 1, 50))
print(f"worst variational-inequality residual {worst:.3e} (<= 0 means satisfied)")

finals = [run_viscous(P.u0, P.horizon, ViscousParams(lam=0.05, tau=tau), P).states[-1]
          for tau in (4e-3, 2e-3, 1e-3)]
d = [l1_norm(g, a - b) for a, b in zip(finals, finals[1:])]
print(f"successive differences {d[0]:.3e}, {d[1]:.3e}; observed order {np.log2(d[0] / d[1]):.2f}")
