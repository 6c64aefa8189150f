# %% [markdown]
# # Discounted reward: a free-boundary problem
#
# With discount rate `rho` the value below the threshold solves a linear ODE
# with one free constant `w1 = W(1)`.  The threshold is the positive root of a
# function `H`; smooth pasting then fixes `w1`.

# %%
import numpy as np

from impulse_aqm import PAPER_PARAMS as p
from impulse_aqm import NetworkSpec, NoImpulse, SimConfig, Threshold, W_star, simulate, solve_threshold_disc
from impulse_aqm.discounted import H, ValueFunctionW, limit_threshold
from impulse_aqm.verify import curve_crossings, monotone_parts, pasting_check

sol = solve_threshold_disc(p)
print(p)
print(f"x_bar = {sol.x_bar:.6f}   w1 = {sol.w1:.6f}")
print("H near the root:", [f"{H(x, p):+.3e}" for x in (0.7, sol.x_bar, 0.9)])
print("pasting residuals", pasting_check(sol))

# %% [markdown]
# The value function agrees with the simulator started at several rates, and
# dominates never signalling at all.

# %%
vf = ValueFunctionW(sol)
net = NetworkSpec.single(p.flow, p.alpha, p.lam)
for x0 in (0.2, 0.5, sol.x_bar, 2 * sol.x_bar):
    rep = simulate(SimConfig(net, Threshold(sol.x_bar), x0, 40.0, "discounted", p.rho))
    print(f"x0={x0:.3f}  W={vf.W(x0):+.10f}  simulated={rep.disc_reward:+.10f}  "
          f"tail bound {rep.truncation_bound:.1e}  no-impulse {W_star(x0, p):+.4f}")
none = simulate(SimConfig(net, NoImpulse(), 1.0, 200.0, "discounted", p.rho))
print(f"never signalling from 1: {none.disc_reward:.10f} vs W*(1) = {W_star(1.0, p):.10f}")

# %% [markdown]
# Below the threshold `W` increases, decreases, then increases again.  Its
# slope vanishes where it meets `z`, and it has an inflection where it meets
# `v_infl`.

# %%
xs = np.linspace(0.05, sol.x_bar, 400)
print("slope sign pattern:", monotone_parts(vf.W(xs)))
cr = curve_crossings(sol)
print("W meets z at", np.round(cr.slope_points, 6), "with |W'| =", cr.slope_residuals)
print("W meets v_infl at", np.round(cr.inflection_points, 6), "with |W''| =", cr.curvature_residuals)

# %% [markdown]
# As `rho -> 0` the threshold tends to the average-reward one.

# %%
from impulse_aqm.discounted import DiscountedParams

for rho in (1.0, 0.1, 0.01, 1e-4):
    x = solve_threshold_disc(DiscountedParams(p.a, p.b, p.alpha, p.lam, rho)).x_bar
    print(f"rho={rho:<7g} x_bar={x:.8f}")
print(f"limit        {limit_threshold(p.b, p.alpha, p.lam):.8f}")
