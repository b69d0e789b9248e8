"""Univariate conformal selection adapted to multivariate targets.

Each baseline reduces the problem to one or more univariate selections
run through the same conformal machinery:

``cs_int``
    one half-line selection per response coordinate, intersected;
``cs_ib``
    ``cs_int`` with every coordinate at level ``q / d``;
``cs_is``
    ``cs_int`` at a common level tuned on a labeled holdout;
``bi``
    collapse ``y`` to the label ``1{y in R}`` and select with a classifier.

Only ``cs_ib`` and ``bi`` control the FDR.  ``cs_int`` does not: an
intersection of sets that are each valid at level ``q`` can have a much
larger false discovery proportion, and the gap widens with ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import (
    LabeledDataset,
    SelectionResult,
    UnlabeledDataset,
    fdp_and_power,
    mcs_select,
    select_from_scores,
)
from .predictors import fit_logistic
from .regions import HalfLine, Orthant, TargetRegion
from .scores import DEFAULT_BIG_M, DistanceScore

__all__ = ["BaselineSpec", "BASELINES", "cs_int", "cs_ib", "cs_is", "bi_select"]

BASELINES = ("cs_int", "cs_ib", "cs_is", "bi")


@dataclass(frozen=True)
class BaselineSpec:
    """Knobs for the baselines that have any.

    ``n_levels`` evenly spaced candidate levels in ``[q/d, q]`` are tried by
    ``cs_is``; ``levels`` overrides the grid when given.
    """

    kind: str = "cs_int"
    holdout_fraction: float = 0.5
    n_levels: int = 20
    levels: tuple[float, ...] | None = None
    logistic_steps: int = 500
    logistic_lr: float = 0.1
    big_m: float = DEFAULT_BIG_M

    def __post_init__(self):
        if self.kind not in BASELINES:
            raise ValueError(f"kind must be one of {BASELINES}")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.n_levels < 1 or (self.levels is not None and len(self.levels) == 0):
            raise ValueError("the cs_is level grid is empty")

    def grid(self, q: float, d: int) -> np.ndarray:
        if self.levels is not None:
            return np.asarray(self.levels, dtype=float)
        return np.linspace(q / d, q, self.n_levels)


class _Coordinate:
    """Column ``k`` of a multi-output predictor, as a one-output predictor."""

    def __init__(self, predictor, k: int):
        self.predictor, self.k = predictor, k

    def predict(self, X):
        return self.predictor.predict(X)[:, self.k : self.k + 1]


def _check_orthant(region: TargetRegion) -> Orthant:
    if not isinstance(region, Orthant):
        raise ValueError(
            f"coordinate-wise baselines need an Orthant region, got {type(region).__name__}"
        )
    return region


def _intersect(cal, test, region, predictor, levels, rng, big_m) -> SelectionResult:
    d = region.dim
    streams = rng.spawn(d)
    keep = np.ones(len(test), dtype=bool)
    worst_p = np.zeros(len(test))
    for k in range(d):
        sub = LabeledDataset(cal.x, cal.y[:, k])
        half_line = HalfLine(region.cutoffs[k])
        score = DistanceScore(half_line, _Coordinate(predictor, k), "clipped", big_m)
        res = mcs_select(sub, test, half_line, score, levels[k], streams[k])
        hit = np.zeros(len(test), dtype=bool)
        hit[res.selected] = True
        keep &= hit
        worst_p = np.maximum(worst_p, res.p_values)
    selected = np.nonzero(keep)[0]
    # No single BH threshold describes an intersection.
    return SelectionResult(selected, int(selected.size), float("nan"), worst_p)


def cs_int(
    cal: LabeledDataset,
    test: UnlabeledDataset,
    region: Orthant,
    predictor,
    q: float,
    rng: np.random.Generator,
    big_m: float = DEFAULT_BIG_M,
) -> SelectionResult:
    """Intersection of per-coordinate half-line selections, each at level ``q``.

    ``p_values`` in the result holds, per test row, the largest of its
    coordinate p-values.
    """
    region = _check_orthant(region)
    return _intersect(cal, test, region, predictor, [q] * region.dim, rng, big_m)


def cs_ib(cal, test, region, predictor, q, rng, big_m=DEFAULT_BIG_M) -> SelectionResult:
    """``cs_int`` with a Bonferroni split of the level, ``q / d`` per coordinate."""
    region = _check_orthant(region)
    return cs_int(cal, test, region, predictor, q / region.dim, rng, big_m)


def cs_is(
    cal: LabeledDataset,
    test: UnlabeledDataset,
    region: Orthant,
    predictor,
    q: float,
    spec: BaselineSpec = BaselineSpec("cs_is"),
    rng: np.random.Generator | None = None,
) -> SelectionResult:
    """``cs_int`` at the largest common level whose holdout FDP is at most ``q``.

    Calibration is split into ``cal'`` and a labeled holdout.  Every level
    in the grid runs ``cs_int(cal', holdout)``; the largest level with
    holdout FDP ``<= q`` is then used on the real test set with ``cal'``.
    Falls back to ``q / d`` when no level passes.
    """
    region = _check_orthant(region)
    rng = np.random.default_rng() if rng is None else rng
    perm = rng.permutation(len(cal))
    n_hold = int(round(spec.holdout_fraction * len(cal)))
    hold, cal_prime = cal.subset(perm[:n_hold]), cal.subset(perm[n_hold:])
    chosen = q / region.dim
    if n_hold:
        truth = region.contains(hold.y)
        for level in np.sort(spec.grid(q, region.dim))[::-1]:
            res = cs_int(cal_prime, hold.unlabeled(), region, predictor, level, rng, spec.big_m)
            if fdp_and_power(res.selected, truth)[0] <= q:
                chosen = float(level)
                break
    return cs_int(cal_prime, test, region, predictor, chosen, rng, spec.big_m)


def bi_select(
    cal: LabeledDataset,
    test: UnlabeledDataset,
    region: TargetRegion,
    q: float,
    rng: np.random.Generator,
    classifier_config: BaselineSpec = BaselineSpec("bi"),
) -> SelectionResult:
    """Select through the binary label ``1{y in R}``.

    Half of the calibration rows fit a logistic classifier on ``x``; the other
    half supply scores ``big_m * label - prob``.  Test rows sit at the label
    boundary 0.5, so their scores are ``-prob``.  A one-class fitting half
    still gives a valid (if weak) selection.
    """
    perm = rng.permutation(len(cal))
    half = len(cal) // 2
    fit_part, cal_part = cal.subset(perm[:half]), cal.subset(perm[half:])
    cfg = classifier_config
    labels_fit = region.contains(fit_part.y).astype(float)
    if half:
        clf = fit_logistic(fit_part.x, labels_fit, cfg.logistic_steps, cfg.logistic_lr)
        prob_cal = clf.predict_prob(cal_part.x)
        prob_test = clf.predict_prob(test.x)
    else:
        prob_cal = np.full(len(cal_part), 0.5)
        prob_test = np.full(len(test), 0.5)
    labels = region.contains(cal_part.y).astype(float)
    cal_scores = cfg.big_m * labels - prob_cal
    return select_from_scores(cal_scores, -prob_test, q, rng)
