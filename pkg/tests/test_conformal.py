import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcselect.conformal import (
    LabeledDataset,
    UnlabeledDataset,
    bh_select,
    conformal_p_values,
    fdp_and_power,
    mcs_select,
)
from mcselect.regions import Orthant
from mcselect.scores import DistanceScore


class FixedUniform:
    """Stands in for a Generator whose uniforms are known in advance."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def uniform(self, size=None):
        return self.values[:size] if size is not None else self.values[0]


def test_p_value_examples():
    assert conformal_p_values([1, 2, 3], [0], FixedUniform([0.5]))[0] == 0.125
    assert conformal_p_values([1, 2, 3], [2], FixedUniform([0.5]))[0] == 0.5
    assert conformal_p_values([], [7], FixedUniform([1.0]))[0] == 1.0


def test_p_value_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        conformal_p_values([1.0], [], rng)
    with pytest.raises(ValueError):
        conformal_p_values([1.0, np.inf], [0.0], rng)


def test_p_values_in_unit_interval_and_seeded():
    rng = np.random.default_rng(2)
    cal, test = rng.normal(size=30), rng.normal(size=12)
    a = conformal_p_values(cal, test, np.random.default_rng(9))
    b = conformal_p_values(cal, test, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    assert np.all((a > 0) & (a <= 1))


def test_p_values_match_counting_oracle():
    rng = np.random.default_rng(4)
    cal = rng.integers(0, 5, size=40).astype(float)
    test = rng.integers(0, 5, size=15).astype(float)
    u = rng.uniform(size=15)
    got = conformal_p_values(cal, test, FixedUniform(u))
    for j, t in enumerate(test):
        expect = (np.sum(cal < t) + u[j] * (1 + np.sum(cal == t))) / 41
        assert got[j] == pytest.approx(expect, abs=1e-15)


def test_bh_examples():
    res = bh_select([0.01, 0.04, 0.2], 0.3)
    assert res.k_star == 3 and res.selected.tolist() == [0, 1, 2]
    res = bh_select([0.9, 0.8, 0.7], 0.1)
    assert res.k_star == 0 and res.selected.size == 0
    res = bh_select([0.05, 0.5, 0.9, 0.95], 0.4)
    assert res.k_star == 1 and res.selected.tolist() == [0]
    assert res.threshold == pytest.approx(0.1)


def test_bh_rejects_bad_level():
    for q in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            bh_select([0.1], q)


def storey_oracle(p, q):
    """Selection {p <= tau*} with tau* the largest candidate q k/m whose
    estimated FDP t m / max(1, #{p <= t}) is at most q."""
    m = len(p)
    best = 0.0
    for k in range(1, m + 1):
        t = q * (k / m)
        # t m / max(1, #) <= q, with t = q k / m, is exactly k <= max(1, #).
        if k <= max(1, np.sum(p <= t)):
            best = t
    return set(np.nonzero(p <= best)[0]) if best > 0 else set()


@settings(max_examples=400, deadline=None)
@given(
    st.lists(st.floats(0, 1, exclude_min=True), min_size=1, max_size=50),
    st.floats(0.01, 0.99),
)
def test_bh_equals_storey_threshold(p, q):
    p = np.array(p)
    assert set(bh_select(p, q).selected.tolist()) == storey_oracle(p, q)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_min=True), min_size=1, max_size=30), st.floats(0.01, 0.99))
def test_bh_adding_zero_keeps_selection(p, q):
    before = set(bh_select(np.array(p), q).selected.tolist())
    after = set(bh_select(np.array(p + [0.0]), q).selected.tolist())
    assert before <= after


def test_fdp_and_power_examples():
    assert fdp_and_power([], [True, False]) == (0.0, 0.0)
    assert fdp_and_power([0, 1], [True, False, True]) == (0.5, 0.5)
    assert fdp_and_power([0, 1, 2], [True, True, True]) == (0.0, 1.0)
    assert fdp_and_power([1], [False, False]) == (1.0, 0.0)


class _Constant:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def predict(self, X):
        return np.tile(self.value, (np.shape(X)[0], 1))


def test_mcs_select_tiny_level_selects_nothing():
    rng = np.random.default_rng(0)
    region = Orthant([0.0, 0.0])
    cal = LabeledDataset(rng.normal(size=(50, 3)), rng.normal(size=(50, 2)))
    test = UnlabeledDataset(rng.normal(size=(20, 3)))
    score = DistanceScore(region, _Constant([1.0, 1.0]))
    assert mcs_select(cal, test, region, score, 1e-6, rng).n_selected == 0


def test_mcs_select_all_interior_calibration():
    # Every calibration score is ~M, above every test score, so p_j = U_j / (n + 1).
    region = Orthant([0.0, 0.0])
    rng = np.random.default_rng(3)
    n, m = 30, 10
    cal = LabeledDataset(rng.normal(size=(n, 2)), rng.uniform(1, 2, size=(n, 2)))
    test = UnlabeledDataset(rng.normal(size=(m, 2)))
    score = DistanceScore(region, _Constant([0.5, 0.8]))
    u = np.random.default_rng(77).uniform(size=m)
    res = mcs_select(cal, test, region, score, 0.3, np.random.default_rng(77))
    np.testing.assert_allclose(res.p_values, u / (n + 1))
    assert res.n_selected == m


def test_mcs_select_single_test_point_above_all_calibration():
    region = Orthant([0.0])
    n = 25
    cal = LabeledDataset(np.zeros((n, 1)), -np.ones((n, 1)))
    test = UnlabeledDataset(np.zeros((1, 1)))
    # Calibration scores -dist(pred) = -1 sit below the test score 0.
    score = lambda X, Y: np.where(np.asarray(Y)[:, 0] < 0, -1.0, 0.0)  # noqa: E731
    res = mcs_select(cal, test, region, score, 0.4, np.random.default_rng(1))
    assert res.p_values[0] >= n / (n + 1)
    assert res.n_selected == 0


def test_mcs_select_empty_calibration():
    region = Orthant([0.0])
    cal = LabeledDataset(np.empty((0, 1)), np.empty((0, 1)))
    test = UnlabeledDataset(np.zeros((4, 1)))
    score = DistanceScore(region, _Constant([1.0]))
    res = mcs_select(cal, test, region, score, 0.5, np.random.default_rng(5))
    np.testing.assert_array_equal(res.p_values, np.random.default_rng(5).uniform(size=4))


def test_mcs_select_dimension_mismatch():
    region = Orthant([0.0, 0.0, 0.0])
    cal = LabeledDataset(np.zeros((3, 1)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        mcs_select(cal, UnlabeledDataset(np.zeros((1, 1))), region, None, 0.3,
                   np.random.default_rng(0))


def test_super_uniformity_oracle_p_values():
    rng = np.random.default_rng(2024)
    reps, n = 10_000, 100
    scores = rng.standard_normal((reps, n + 1))
    u = rng.uniform(size=reps)
    below = np.sum(scores[:, :n] < scores[:, n : n + 1], axis=1)
    ties = np.sum(scores[:, :n] == scores[:, n : n + 1], axis=1)
    p = (below + u * (1 + ties)) / (n + 1)
    grid = np.linspace(0.01, 0.99, 99)
    excess = np.array([np.mean(p <= a) - a for a in grid])
    assert excess.max() < 0.02
