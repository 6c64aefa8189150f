# %% [markdown]
# # Long-run average reward: where should the router signal?
#
# A flow grows its rate additively (`gamma = 0`) or multiplicatively
# (`gamma = 1`) and is cut to `b x` at each congestion signal.  Under the
# alpha-fair reward `x**(1-alpha)/(1-alpha) - lam x` the best policy signals
# whenever the rate reaches a fixed level `x_bar`.

# %%
import numpy as np

from impulse_aqm import CriterionParams, FlowParams, NetworkSpec, SimConfig, Threshold, simulate, threshold_avg
from impulse_aqm.model import time_to_reach
from impulse_aqm.verify import bellman_scan, grid_search_threshold, profile_for

fp = FlowParams(a=0.2, b=0.5, gamma=0.0)
cp = CriterionParams(alpha=0.5, lam=2.0)
sol = threshold_avg(fp, cp)
print(f"x_bar = {sol.x_bar:.7f}   gain g = {sol.g:.7f}")

# %% [markdown]
# The gain is the reward per unit time of one saw-tooth cycle from `b x_bar`
# up to `x_bar`.  Simulating a hundred exact cycles reproduces it.

# %%
net = NetworkSpec.single(fp, cp.alpha, cp.lam)
cycle = time_to_reach(fp.b * sol.x_bar, sol.x_bar, fp)
rep = simulate(SimConfig(net, Threshold(sol.x_bar), fp.b * sol.x_bar, 100 * cycle))
print(f"simulated average reward {rep.avg_reward:.15f}  ({rep.N_T[0]} signals)")

# %% [markdown]
# A brute-force search over 200 thresholds, using only the simulator, lands
# on the same level.

# %%
gs = grid_search_threshold(fp, cp, "average", center=sol.x_bar)
print(f"grid argmax {gs.best:.6f}, within one step: {gs.within_one_step(sol.x_bar)}, unimodal: {gs.unimodal}")
for y in (0.8, 0.9, 1.0, 1.1, 1.2):
    i = int(np.argmin(abs(gs.thresholds - y * sol.x_bar)))
    print(f"  threshold {gs.thresholds[i]:.4f}  reward {gs.rewards[i]:.8f}")

# %% [markdown]
# The relative value function satisfies the Bellman equation on a 10^4-point
# grid, and moving `x_bar` by one percent breaks smooth fit at the threshold.

# %%
print(bellman_scan(profile_for(sol)))
from impulse_aqm.verify import perturb

bad = bellman_scan(profile_for(perturb(sol, "x_bar", 1.01)))
print(f"x_bar * 1.01: passed={bad.passed}, slope jump {bad.smoothness:.2e}")

# %% [markdown]
# Multiplicative increase (`gamma = 1`) has its own closed form.

# %%
mimd = threshold_avg(FlowParams(1.0, 0.5, 1.0), cp)
print(f"gamma = 1: x_bar = {mimd.x_bar:.7f}, g = {mimd.g:.7f}")
