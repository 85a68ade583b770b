# %% [markdown]
# # Toy space: rejection reward versus the Abs reward
#
# Two hidden layers, each 2, 3 or 4 units wide, with 2 inputs and one
# output.  The budget is 25 parameters, so 6 of the 9 architectures are
# feasible and (4, 2) has the lowest loss among them.

# %%
import numpy as np

from tabnas import RewardSpec, SearchConfig, WarmupSchedule, run_search, toy_example
from tabnas.policy import probabilities
from tabnas.space import enumerate_feasible, param_count

table, constraint = toy_example()
space = table.space
for arch in enumerate_feasible(space, constraint):
    print(arch, param_count(arch, space), table.loss(arch))

# %% [markdown]
# One run per reward, 500 controller steps each, oracle evaluation.

# %%
def run(reward, seed=0):
    cfg = SearchConfig(space, constraint, reward, 0.1, epochs=5, steps_per_epoch=100,
                       warmup=WarmupSchedule(0.0), table=table, seed=seed)
    return run_search(cfg)

runs = {"rejection": RewardSpec("rejection"),
        "abs, beta=-1": RewardSpec("abs", beta=-1.0),
        "abs, beta=-2": RewardSpec("abs", beta=-2.0)}
for name, reward in runs.items():
    policy, log = run(reward)
    print(name, [np.round(p, 3).tolist() for p in probabilities(policy)], log.footer["selected"])

# %% [markdown]
# Trajectory of the valid probability under the rejection reward, every 50 steps.

# %%
_, log = run(RewardSpec("rejection"))
print([round(r["pv_exact"], 3) for r in log.records[::50]])
