# %% [markdown]
# # Planted-optimum benchmark
#
# A synthetic table over 8,000 three-layer architectures.  Loss falls with
# width except inside a small cone around the planted architecture, which
# is the unique feasible optimum.  We compare the controller with random and
# evolutionary search at the same number of table lookups.

# %%
import numpy as np

from tabnas import RewardSpec, SearchConfig, WarmupSchedule, run_search
from tabnas.baselines import evolutionary_search, random_search
from tabnas.oracle import evaluate, planted_benchmark
from tabnas.space import feasible_mask

table, constraint, spec = planted_benchmark()
opt, opt_loss = table.feasible_optimum(constraint)
print(opt, opt_loss, feasible_mask(table.space, constraint).mean())

# %%
cfg = SearchConfig(table.space, constraint, RewardSpec("rejection"), 0.1, epochs=100, steps_per_epoch=100,
                   warmup=WarmupSchedule(0.0), table=table, seed=0, log_probabilities=False)
policy, log = run_search(cfg)
print("selected", log.footer["selected"], [table.loss(a) for a in log.footer["selected"]])
print("skipped steps", log.footer["skips"])

# %% [markdown]
# Baselines with a budget of 2,000 evaluations.

# %%
rng = np.random.default_rng(0)
noisy = lambda a: evaluate(table, a, rng)
rs = random_search(table.space, constraint, noisy, 2000, rng)
es = evolutionary_search(table.space, constraint, noisy, population=50, top_k=10, generations=39, rng=rng)
for name, res in (("random", rs), ("evolution", es)):
    print(name, res.best_arch, table.loss(res.best_arch) - opt_loss)
