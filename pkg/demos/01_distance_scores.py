"""
Selecting with distance scores
==============================

Simulate one problem, select with the regular and the clipped distance
score, then check the picks against the held-back test labels.
"""

# %%
import numpy as np

from mcselect import DistanceScore, fdp_and_power, fit_ridge, mcs_select
from mcselect.simulate import SimConfig, gen_dataset

config = SimConfig(setting=1, task=1, d=10, seed=7)
train, cal, test = gen_dataset(config)
region = config.region()
print(region)
print("share of test rows in the region:", region.contains(test.y).mean())

# %%
# The predictor only ever sees the training block.
predictor = fit_ridge(train.x, train.y, 1e-3)

# %%
truth = region.contains(test.y)  # used for scoring only, never by the selector
for kind in ("regular", "clipped"):
    score = DistanceScore(region, predictor, kind)
    res = mcs_select(cal, test.unlabeled(), region, score, 0.3, np.random.default_rng(0))
    fdp, power = fdp_and_power(res.selected, truth)
    print(f"{kind:8s} selected={res.n_selected:3d}  fdp={fdp:.3f}  power={power:.3f}")

# %%
# Calibration rows inside the region score about M under the clipped rule,
# so they never sit below a test score; only out-of-region rows compete.
score = DistanceScore(region, predictor, "clipped")
cal_scores = score(cal.x, cal.y)
print("clipped calibration scores above 1e5:", np.mean(cal_scores > 1e5))
