# %% [markdown]
# # Networks decouple; RED pays for its randomness
#
# Link prices add up along each route, so every flow faces a single price and
# can use its own optimal threshold.

# %%
from impulse_aqm import (
    CriterionParams,
    FlowParams,
    NetworkSpec,
    Red,
    SimConfig,
    Threshold,
    compare_policies,
    decouple_prices,
    simulate,
    threshold_avg,
)

flows = [FlowParams(1.0, 0.5, 0.0), FlowParams(0.7, 0.3, 0.5), FlowParams(1.3, 0.8, 1.0)]
net = NetworkSpec([[1, 0, 1], [1, 1, 0]], [1.0, 2.0], flows, alpha=0.5)
prices = decouple_prices(net)
print("per-flow prices", prices)

policies = tuple(Threshold(threshold_avg(f, CriterionParams(0.5, lam)).x_bar) for f, lam in zip(flows, prices))
x0 = (0.1, 0.2, 0.3)
total = simulate(SimConfig(net, policies, x0, 25.0)).avg_reward
parts = [simulate(SimConfig(NetworkSpec.single(f, 0.5, lam), pol, x, 25.0)).avg_reward
         for f, lam, pol, x in zip(flows, prices, policies, x0)]
print(f"network objective {total:.12f}; sum of single flows {sum(parts):.12f}")

# %% [markdown]
# A RED-style queue signals with a probability ramping between two levels
# around the optimal threshold.  Averaged over ten seeds it earns less.

# %%
fp, cp = FlowParams(1.0, 0.5, 0.0), CriterionParams(0.5, 2.0)
x_bar = threshold_avg(fp, cp).x_bar
single = NetworkSpec.single(fp, cp.alpha, cp.lam)
rows = compare_policies(
    {
        "threshold": SimConfig(single, Threshold(x_bar), fp.b * x_bar, 200.0),
        "red": SimConfig(single, Red(0.8 * x_bar, 1.2 * x_bar, 0.5, 0.01), fp.b * x_bar, 200.0),
        "threshold x2": SimConfig(single, Threshold(2 * x_bar), fp.b * x_bar, 200.0),
    },
    seeds=range(10),
)
for r in rows:
    print(f"{r.name:<13} reward {r.reward:.6f} +- {r.reward_std:.1e}  signals {r.impulses[0]:.0f}  runs {r.runs}")
