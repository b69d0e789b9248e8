"""Conformal selection of candidates whose multivariate response lands in a target region.

The usual entry point is :func:`mcs_select` with a region from
:mod:`mcselect.regions` and a score from :mod:`mcselect.scores` or
:mod:`mcselect.learn`.
"""

from .baselines import BaselineSpec, bi_select, cs_ib, cs_int, cs_is
from .conformal import (
    LabeledDataset,
    SelectionResult,
    UnlabeledDataset,
    bh_select,
    conformal_p_values,
    fdp_and_power,
    mcs_select,
    select_from_scores,
)
from .learn import LearnedScore, ScoreModel, TrainConfig, train_score
from .predictors import fit_knn, fit_logistic, fit_ridge
from .regions import (
    Ball,
    BallComplement,
    HalfLine,
    Orthant,
    OrthantComplement,
    TargetRegion,
    parse_region_spec,
)
from .scores import DistanceScore, ProbabilityScore
from .simulate import SimConfig, gen_dataset, task_region
from .softsort import soft_rank, soft_rank_vjp

__version__ = "0.1.0"

__all__ = [
    "Ball", "BallComplement", "BaselineSpec", "DistanceScore", "HalfLine", "LabeledDataset",
    "LearnedScore", "Orthant", "OrthantComplement", "ProbabilityScore", "ScoreModel",
    "SelectionResult", "SimConfig", "TargetRegion", "TrainConfig", "UnlabeledDataset",
    "bh_select", "bi_select", "conformal_p_values", "cs_ib", "cs_int", "cs_is", "fdp_and_power",
    "fit_knn", "fit_logistic", "fit_ridge", "gen_dataset", "mcs_select", "parse_region_spec",
    "select_from_scores", "soft_rank", "soft_rank_vjp", "task_region", "train_score",
]
