"""
Learning a score for a nonconvex region
=======================================

Outside a ball is a region a distance score handles badly.  Here a small
network learns the score instead, trained on part of the calibration data.
"""

# %%
import numpy as np

from mcselect import LearnedScore, TrainConfig, fdp_and_power, fit_ridge, mcs_select, train_score
from mcselect.bench import split_for_learning
from mcselect.scores import DistanceScore
from mcselect.simulate import SimConfig, gen_dataset

config = SimConfig(setting=5, task=4, d=10, n_cal=1000, seed=3)
train, cal, test = gen_dataset(config)
region = config.region()
predictor = fit_ridge(train.x, train.y, 1e-3)

# %%
# 8:1:1 split: fit the score, pick the epoch, calibrate.
i_fit, i_val, i_cal = split_for_learning(len(cal), np.random.default_rng(0))
settings = TrainConfig(epochs=60, K=30, seed=0)
model = train_score(cal.subset(i_fit), cal.subset(i_val), region, predictor, settings)
print("best epoch:", model.log.best_epoch)
print("validation power, every 10th epoch:", np.round(model.log.val_power[::10], 3))

# %%
truth = region.contains(test.y)
scores = {
    "learned": LearnedScore(model, region, predictor),
    "clipped distance": DistanceScore(region, predictor, "clipped"),
}
for name, score in scores.items():
    res = mcs_select(cal.subset(i_cal), test.unlabeled(), region, score, 0.3,
                     np.random.default_rng(1))
    fdp, power = fdp_and_power(res.selected, truth)
    print(f"{name:17s} selected={res.n_selected:3d} fdp={fdp:.3f} power={power:.3f}")
