import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from mcselect.softsort import isotonic_decreasing, soft_rank, soft_rank_vjp, soft_rank_with_vjp


def test_examples():
    np.testing.assert_allclose(soft_rank([3.0, 1.0, 2.0], 1e-6), [3, 1, 2], atol=1e-3)
    np.testing.assert_array_equal(soft_rank([42.0], 0.1), [1.0])
    np.testing.assert_array_equal(soft_rank([0.0, 0.0], 0.1), [1.5, 1.5])
    np.testing.assert_array_equal(soft_rank([0.0, 0.0], 10.0), [1.5, 1.5])


def test_large_epsilon_flattens_to_mean_rank():
    # Far from the hard limit every value pools into one block.
    out = soft_rank([0.3, -1.0, 2.0, 0.1], 1e6)
    np.testing.assert_allclose(out, np.full(4, 2.5), atol=1e-5)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        soft_rank([1.0, np.nan], 0.1)
    with pytest.raises(ValueError):
        soft_rank([1.0, 2.0], 0.0)


def _pav_oracle(y):
    """Decreasing isotonic fit by repeated pooling of adjacent violators."""
    blocks = [[v] for v in y]
    merged = True
    while merged:
        merged = False
        for i in range(len(blocks) - 1):
            if np.mean(blocks[i]) < np.mean(blocks[i + 1]):
                blocks[i : i + 2] = [blocks[i] + blocks[i + 1]]
                merged = True
                break
    return np.concatenate([[np.mean(b)] * len(b) for b in blocks])


def test_isotonic_matches_naive_pooling():
    rng = np.random.default_rng(5)
    for _ in range(200):
        y = rng.normal(size=int(rng.integers(1, 15)))
        fit, _ = isotonic_decreasing(y)
        np.testing.assert_allclose(fit, _pav_oracle(y), atol=1e-12)


def _projection_oracle(v, eps):
    """Soft rank as a generic constrained least-squares problem.

    Projection onto the permutahedron: minimise ||r - v/eps||^2 subject to
    sum(r) = n(n+1)/2 and, for every subset S, sum_S r >= |S|(|S|+1)/2.
    Only nested subsets along the sorted order matter, so enumerating the
    n-1 suffix constraints of the sort is exact.
    """
    from scipy.optimize import minimize

    n = len(v)
    target = np.asarray(v) / eps
    order = np.argsort(target)
    cons = [{"type": "eq", "fun": lambda r: r.sum() - n * (n + 1) / 2}]
    for k in range(1, n):
        idx = order[:k]
        cons.append({"type": "ineq", "fun": lambda r, idx=idx, k=k: r[idx].sum() - k * (k + 1) / 2})
    res = minimize(lambda r: np.sum((r - target) ** 2), rankdata(target), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x


def test_matches_projection_oracle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        v = rng.normal(size=int(rng.integers(2, 7))) * 0.3
        np.testing.assert_allclose(soft_rank(v, 0.1), _projection_oracle(v, 0.1), atol=1e-5)


def test_hard_rank_limit():
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.permutation(20).astype(float)
        np.testing.assert_allclose(soft_rank(v, 1e-6), rankdata(v), atol=1e-6)


def test_vjp_examples():
    v = np.array([0.4, -1.2, 2.5, 0.9])
    np.testing.assert_allclose(soft_rank_vjp(v, 1e-6, np.ones(4) * 0.7 + np.arange(4)), 0.0, atol=1e-9)
    np.testing.assert_array_equal(soft_rank_vjp(v, 0.1, np.zeros(4)), np.zeros(4))


def _fd_vjp(v, eps, u, h=1e-6):
    out = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        out[i] = (soft_rank(v + e, eps) - soft_rank(v - e, eps)) @ u / (2 * h)
    return out


def test_vjp_matches_finite_differences_n7():
    rng = np.random.default_rng(7)
    v = rng.normal(size=7) * 0.2
    u = rng.normal(size=7)
    fd = _fd_vjp(v, 0.1, u)
    assert np.linalg.norm(soft_rank_vjp(v, 0.1, u) - fd) <= 1e-4 * np.linalg.norm(fd)


def test_batched_rows_equal_single_rows():
    rng = np.random.default_rng(3)
    V = rng.normal(size=(6, 9))
    U = rng.normal(size=(6, 9))
    ranks, vjp = soft_rank_with_vjp(V, 0.1)
    grads = vjp(U)
    for i in range(6):
        np.testing.assert_allclose(ranks[i], soft_rank(V[i], 0.1), atol=1e-12)
        np.testing.assert_allclose(grads[i], soft_rank_vjp(V[i], 0.1, U[i]), atol=1e-12)


vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=25).map(np.array)
epsilons = st.sampled_from([1e-3, 0.1, 1.0, 10.0])


@settings(max_examples=300, deadline=None)
@given(vectors, epsilons)
def test_sum_invariant(v, eps):
    n = v.size
    assert abs(soft_rank(v, eps).sum() - n * (n + 1) / 2) <= 1e-9 * max(1.0, n * n)


@settings(max_examples=300, deadline=None)
@given(vectors, epsilons)
def test_order_preserving(v, eps):
    r = soft_rank(v, eps)
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(r[order]) >= -1e-9)


@settings(max_examples=200, deadline=None)
@given(vectors, epsilons, st.randoms(use_true_random=False))
def test_permutation_equivariant(v, eps, rnd):
    perm = np.array(rnd.sample(range(v.size), v.size))
    np.testing.assert_allclose(soft_rank(v[perm], eps), soft_rank(v, eps)[perm], atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(-20, 20), epsilons)
def test_shift_invariant(v, c, eps):
    # Shifts are representable only up to rounding of v + c.
    np.testing.assert_allclose(soft_rank(v + c, eps), soft_rank(v, eps), atol=1e-6 / eps + 1e-9)
