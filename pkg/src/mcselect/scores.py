"""Distance-based nonconformity scores (``mCS-dist``).

All three scores have the form ``D1(y) - D2(prediction)``:

* regular: ``D1 = D2 = distance to the region's complement``;
* clipped: ``D1 = big_m * 1{y in interior(R)}``;
* prob_clipped: clipped ``D1`` with ``D2`` replaced by a predicted
  probability of landing in ``R``.

Each is regionally monotone, so plugging it into :func:`mcs_select` controls
the FDR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regions import TargetRegion

__all__ = [
    "score_regular",
    "score_clipped",
    "score_prob_clipped",
    "DistanceScore",
    "ProbabilityScore",
    "SCORE_KINDS",
]

SCORE_KINDS = ("regular", "clipped", "prob_clipped")
DEFAULT_BIG_M = 1e6


def score_regular(region: TargetRegion, prediction, y, norm_p=2):
    return region.dist_to_complement(y, norm_p) - region.dist_to_complement(
        prediction, norm_p
    )


def score_clipped(region: TargetRegion, prediction, y, big_m=DEFAULT_BIG_M, norm_p=2):
    indicator = np.asarray(region.interior_contains(y), dtype=float)
    return big_m * indicator - region.dist_to_complement(prediction, norm_p)


def score_prob_clipped(region: TargetRegion, prob_in_region, y, big_m=DEFAULT_BIG_M):
    prob = np.asarray(prob_in_region, dtype=float)
    if np.any((prob < 0) | (prob > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    indicator = np.asarray(region.interior_contains(y), dtype=float)
    out = big_m * indicator - prob
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DistanceScore:
    """``V(x, y)`` built from a fitted multi-output predictor.

    Parameters
    ----------
    region : TargetRegion
    predictor : object
        Anything with ``predict(X) -> (n, d)``.
    kind : {"regular", "clipped"}
    big_m : float
        Relaxation of infinity for the clipped indicator.
    norm_p : {1, 2, inf}
    """

    region: TargetRegion
    predictor: object
    kind: str = "clipped"
    big_m: float = DEFAULT_BIG_M
    norm_p: float = 2

    def __post_init__(self):
        if self.kind not in ("regular", "clipped"):
            raise ValueError(f"unknown distance score kind {self.kind!r}")
        if not self.big_m > 0:
            raise ValueError("big_m must be positive")

    def __call__(self, X, Y) -> np.ndarray:
        pred = self.predictor.predict(X)
        Y = np.asarray(Y, dtype=float)
        if self.kind == "regular":
            return score_regular(self.region, pred, Y, self.norm_p)
        return score_clipped(self.region, pred, Y, self.big_m, self.norm_p)


@dataclass(frozen=True, eq=False)
class ProbabilityScore:
    """Clipped score whose second term is ``model.predict_prob(X)``."""

    region: TargetRegion
    model: object
    big_m: float = DEFAULT_BIG_M

    def __post_init__(self):
        # The probability term lives in [0, 1].
        if not self.big_m > 2:
            raise ValueError("big_m must exceed 2")

    def __call__(self, X, Y) -> np.ndarray:
        return score_prob_clipped(self.region, self.model.predict_prob(X), Y, self.big_m)
