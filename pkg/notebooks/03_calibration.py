# %% [markdown]
# # Do one-shot losses rank architectures like stand-alone training?
#
# Train one SuperNet with uniformly sampled children, read off every
# child's validation loss with the shared weights, then train each child
# from scratch.  A high rank correlation means the shared weights are a
# usable proxy for the search.

# %%
import itertools

import numpy as np
from scipy.stats import spearmanr

from tabnas.data import teacher_classification
from tabnas.space import SearchSpace
from tabnas.supernet import (TrainHyper, WarmupSchedule, one_shot_validation_loss, standalone_train,
                             train_supernet)

ds = teacher_classification(5000, 10, seed=0)
space = SearchSpace(((2, 8, 32),) * 3, 10, 1)
hyper = TrainHyper(learning_rate=0.01, epochs=20, lr_schedule="cosine_decay")
net = train_supernet(space, ds, hyper, WarmupSchedule(0.25), seed=0)

# %%
archs = list(itertools.product(*space.layer_choices))
one_shot = np.array([one_shot_validation_loss(net, a, ds.validation) for a in archs])
# stand-alone losses vary with the initialization, so average three seeds
stand_alone = np.array([np.mean([standalone_train(a, ds, hyper, seed=r)[0] for r in range(3)]) for a in archs])
print(spearmanr(one_shot, stand_alone).statistic)

# %%
for a, o, s in sorted(zip(archs, one_shot, stand_alone), key=lambda t: t[2]):
    print(a, round(o, 3), round(s, 3))
