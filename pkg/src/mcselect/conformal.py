"""Conformal p-values, Benjamini-Hochberg selection and the mCS pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .regions import TargetRegion

__all__ = [
    "LabeledDataset",
    "UnlabeledDataset",
    "SelectionResult",
    "conformal_p_values",
    "bh_select",
    "select_from_scores",
    "mcs_select",
    "fdp_and_power",
]

# V(X, Y) -> scores, vectorized over rows.
ScoreFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class UnlabeledDataset:
    """Covariates only; what a selection method is allowed to see of test data."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _matrix(self.x, "x"))

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Covariates ``x`` of shape ``(n, p)`` and responses ``y`` of shape ``(n, d)``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _matrix(self.x, "x")
        y = _matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.x[idx], self.y[idx])

    def unlabeled(self) -> UnlabeledDataset:
        return UnlabeledDataset(self.x)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Output of BH on a vector of conformal p-values.

    ``selected`` holds sorted 0-based test indices.
    """

    selected: np.ndarray
    k_star: int
    threshold: float
    p_values: np.ndarray

    @property
    def n_selected(self) -> int:
        return int(self.selected.size)


def conformal_p_values(cal_scores, test_scores, rng: np.random.Generator) -> np.ndarray:
    """Randomized conformal p-values.

    ``p_j = (#{V_i < T_j} + U_j (1 + #{V_i == T_j})) / (n + 1)`` with one
    ``U_j ~ Unif(0, 1)`` drawn from ``rng`` per test score, in index order.
    Passing true test scores instead of boundary-point scores gives the
    oracle p-values.
    """
    cal = np.asarray(cal_scores, dtype=float).ravel()
    test = np.asarray(test_scores, dtype=float).ravel()
    if test.size == 0:
        raise ValueError("need at least one test score")
    if not (np.all(np.isfinite(cal)) and np.all(np.isfinite(test))):
        raise ValueError("scores must be finite")
    u = rng.uniform(size=test.size)
    ordered = np.sort(cal)
    below = np.searchsorted(ordered, test, side="left")
    ties = np.searchsorted(ordered, test, side="right") - below
    return (below + u * (1.0 + ties)) / (cal.size + 1.0)


def bh_select(p_values, q: float) -> SelectionResult:
    """Benjamini-Hochberg step-up rule at level ``q``.

    ``k* = max{k >= 0 : #{j : p_j <= q k / m} >= k}`` and the selection is
    ``{j : p_j <= q k* / m}``.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    p = np.asarray(p_values, dtype=float).ravel()
    m = p.size
    ordered = np.sort(p, kind="stable")
    # q * (k / m) rounds monotonically in k / m and is exactly q at k = m.
    passing = np.nonzero(ordered <= q * (np.arange(1, m + 1) / m))[0]
    k_star = int(passing[-1] + 1) if passing.size else 0
    threshold = q * (k_star / m) if m else 0.0
    if k_star:
        selected = np.nonzero(p <= threshold)[0]
    else:
        selected = np.empty(0, dtype=np.intp)
    return SelectionResult(selected, k_star, threshold, p)


def select_from_scores(cal_scores, test_scores, q: float, rng) -> SelectionResult:
    """Conformal p-values followed by BH."""
    return bh_select(conformal_p_values(cal_scores, test_scores, rng), q)


def mcs_select(
    cal: LabeledDataset,
    test: UnlabeledDataset,
    region: TargetRegion,
    score: ScoreFn,
    q: float,
    rng: np.random.Generator,
) -> SelectionResult:
    """Multivariate conformal selection.

    Calibration scores are ``score(x_i, y_i)``; test scores substitute the
    region's boundary point for the unobserved response.  ``score`` must be
    regionally monotone for the FDR guarantee to hold.
    """
    if cal.y.shape[1] != region.dim:
        raise ValueError(
            f"calibration responses have d={cal.y.shape[1]}, region has d={region.dim}"
        )
    if len(cal):
        cal_scores = score(cal.x, cal.y)
    else:
        cal_scores = np.empty(0)
    r = np.broadcast_to(region.boundary_point(), (len(test), region.dim))
    test_scores = score(test.x, r)
    return select_from_scores(cal_scores, test_scores, q, rng)


def fdp_and_power(selected, truth_in_region) -> tuple[float, float]:
    """False discovery proportion and power of one selection.

    ``0/0`` is taken as 0 in both ratios.
    """
    truth = np.asarray(truth_in_region, dtype=bool).ravel()
    sel = np.zeros(truth.size, dtype=bool)
    sel[np.asarray(selected, dtype=np.intp)] = True
    n_sel = int(sel.sum())
    false = int(np.sum(sel & ~truth))
    hits = int(np.sum(sel & truth))
    n_pos = int(truth.sum())
    fdp = false / n_sel if n_sel else 0.0
    power = hits / n_pos if n_pos else 0.0
    return fdp, power
