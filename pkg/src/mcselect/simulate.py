"""Synthetic data-generating processes and selection tasks.

Covariates are ``Unif(-1, 1)^p``, responses ``y = mu(x) + eps``.  Settings
1-3 use Gaussian noise and settings 4-6 multivariate t noise (3 degrees of
freedom) with the same scale matrix; settings ``s`` and ``s + 3`` share the
regression function.  Tasks 1-4 are the shifted orthant, the ball, the
orthant complement and the ball complement, with coefficients tabulated for
``d in {2, 5, 10, 30}``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .conformal import LabeledDataset
from .regions import Ball, BallComplement, Orthant, OrthantComplement, TargetRegion

__all__ = [
    "SimConfig",
    "gen_covariates",
    "regression_mu",
    "gen_noise",
    "gen_dataset",
    "task_region",
    "noise_scale_matrix",
    "T_DOF",
    "TASK_COEFFICIENTS",
]

T_DOF = 3
SETTINGS = (1, 2, 3, 4, 5, 6)

# task -> d -> (cutoff or center value, radius or None)
TASK_COEFFICIENTS: dict[int, dict[int, tuple[float, float | None]]] = {
    1: {2: (1.0, None), 5: (0.2, None), 10: (-0.2, None), 30: (-0.6, None)},
    2: {2: (2.0, 1.5), 5: (2.0, 2.6), 10: (2.0, 4.1), 30: (2.0, 7.5)},
    3: {2: (-0.5, None), 5: (-0.8, None), 10: (1.1, None), 30: (1.6, None)},
    4: {2: (2.0, 3.0), 5: (2.0, 4.0), 10: (2.0, 5.5), 30: (2.0, 9.5)},
}


@dataclass(frozen=True)
class SimConfig:
    """One simulated selection problem.

    Sizes default to the desk-scale protocol (500 / 500 / 100).
    """

    setting: int = 1
    task: int = 1
    d: int = 10
    p: int = 10
    n_train: int = 500
    n_cal: int = 500
    m: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")
        if self.task not in TASK_COEFFICIENTS:
            raise ValueError("task must be 1, 2, 3 or 4")
        if self.d < 2 or self.p < 1:
            raise ValueError("need d >= 2 and p >= 1")
        if min(self.n_train, self.n_cal, self.m) < 1:
            raise ValueError("sample sizes must be positive")

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)

    def region(self) -> TargetRegion:
        return task_region(self.task, self.d)


def gen_covariates(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, p))


def regression_mu(setting: int, x, d: int) -> np.ndarray:
    """True regression function; accepts one covariate vector or a batch.

    Component ``k`` reads ``x_k, x_{k+1}, x_{k+2}`` with indices wrapped
    modulo ``p``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    p = X.shape[1]
    k = np.arange(d)
    a, b, c = X[:, k % p], X[:, (k + 1) % p], X[:, (k + 2) % p]
    family = (setting - 1) % 3
    if family == 0:
        out = a - 0.5 * b + c + 1.5
    elif family == 1:
        out = a + c**2 + 0.5
    else:
        same_sign = a * b > 0
        out = (
            (same_sign & (c > 0.5)) * (0.25 + c)
            + (~same_sign & (c <= 0.5)) * (c - 0.25)
            + 0.75
        )
    return out[0] if single else out


@lru_cache(maxsize=None)
def _scale_cholesky(d: int) -> np.ndarray:
    return np.linalg.cholesky(noise_scale_matrix(d))


def noise_scale_matrix(d: int) -> np.ndarray:
    """Diagonal 0.5, off-diagonal 0.05."""
    return 0.45 * np.eye(d) + 0.05 * np.ones((d, d))


def gen_noise(setting: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, d)) @ _scale_cholesky(d).T
    if setting >= 4:
        # Gaussian scale mixture: z * sqrt(nu / chi2_nu) is multivariate t.
        w = rng.chisquare(T_DOF, size=n)
        z = z * np.sqrt(T_DOF / w)[:, None]
    return z


def _block(config: SimConfig, n: int, rng) -> LabeledDataset:
    x = gen_covariates(n, config.p, rng)
    y = regression_mu(config.setting, x, config.d) + gen_noise(config.setting, n, config.d, rng)
    return LabeledDataset(x, y)


def gen_dataset(config: SimConfig, rng: np.random.Generator | None = None):
    """Independent (train, cal, test) blocks; test labels are for scoring only."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    train = _block(config, config.n_train, rng)
    cal = _block(config, config.n_cal, rng)
    test = _block(config, config.m, rng)
    return train, cal, test


def task_region(task: int, d: int) -> TargetRegion:
    try:
        value, radius = TASK_COEFFICIENTS[task][d]
    except KeyError:
        raise ValueError(
            f"no tabulated coefficients for task {task} at d={d}; "
            "build the region explicitly"
        ) from None
    vec = np.full(d, value)
    if task == 1:
        return Orthant(vec)
    if task == 2:
        return Ball(vec, radius)
    if task == 3:
        return OrthantComplement(vec)
    return BallComplement(vec, radius)
