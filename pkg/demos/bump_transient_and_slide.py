"""A jump made of a viscous transient followed by a rate-independent slide.

Starting at rest on top of a bump with constant force, the state first
relaxes on the fast scale from 0 to 1/4, then slides to 1 at zero viscous cost.
"""
import numpy as np

from twospeed import resolve_jump, scenario
from twospeed.oracles import ex27_transient

sc = scenario("ex27")
P = sc.problem()
res = resolve_jump(P, 0.0, P.u0, sc.config)

tr = res.transients[0]
theta = np.linspace(0.0, 1.0, 6)
for th, v, ref in zip(theta, tr.state_at(theta)[:, 0, 0], ex27_transient(theta)):
    print(f"theta={th:.1f}  v={v:.6f}  closed form={ref:.6f}")
print(f"transient: rate-independent {tr.ri_diss:.6f}, viscous {tr.rd_diss:.6f}")

sl = res.slides[0]
print(f"slide from {sl.left_state[0, 0]:.4f} to {sl.right_state[0, 0]:.4f}, Var {sl.var:.6f}")
print(f"jump totals: mu_ri {res.mu_ri:.6f}, mu_rd {res.mu_rd:.6f}")
