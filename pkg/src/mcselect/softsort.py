"""Differentiable soft ranks via l2-regularized projection onto the permutahedron.

``soft_rank(v, eps)`` is the Euclidean projection of ``v / eps`` onto the
convex hull of all permutations of ``(1, ..., n)``.  Ranks are ascending: the
largest value gets the largest rank, and as ``eps -> 0`` on distinct inputs
the output converges to the hard ranks.  The projection reduces to one sort
plus an isotonic regression solved by pool-adjacent-violators (PAV), so a
forward pass is ``O(n log n)``.

The Jacobian is piecewise constant: within each PAV block it averages the
upstream vector, so the vector-Jacobian product costs one more sort-free pass
over the block structure.

All functions accept a single vector of shape ``(n,)`` or a batch of
independent vectors of shape ``(b, n)``.
"""

from __future__ import annotations

import numba
import numpy as np

__all__ = ["soft_rank", "soft_rank_vjp", "soft_rank_with_vjp", "isotonic_decreasing"]


@numba.njit(cache=True)
def _pav_rows(y, sol, block):
    """Row-wise ``argmin_{v_1 >= ... >= v_n} ||v - y||^2`` by pool-adjacent-violators.

    Writes the fitted values to ``sol`` and the block index of each position
    to ``block``.
    """
    rows, n = y.shape
    start = np.empty(n, dtype=np.int64)
    total = np.empty(n, dtype=np.float64)
    count = np.empty(n, dtype=np.float64)
    for r in range(rows):
        top = -1
        for i in range(n):
            top += 1
            start[top] = i
            total[top] = y[r, i]
            count[top] = 1.0
            while top > 0 and total[top - 1] * count[top] < total[top] * count[top - 1]:
                total[top - 1] += total[top]
                count[top - 1] += count[top]
                top -= 1
        for b in range(top + 1):
            end = start[b + 1] if b < top else n
            mean = total[b] / count[b]
            for i in range(start[b], end):
                sol[r, i] = mean
                block[r, i] = b


def isotonic_decreasing(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decreasing isotonic regression of each row of ``y``.

    Returns the fit and the integer block labels (0, 1, ... from the left).
    """
    y2 = np.ascontiguousarray(np.atleast_2d(y), dtype=np.float64)
    sol = np.empty_like(y2)
    block = np.empty(y2.shape, dtype=np.int64)
    _pav_rows(y2, sol, block)
    if np.ndim(y) == 1:
        return sol[0], block[0]
    return sol, block


def _as_batch(values) -> tuple[np.ndarray, bool]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] == 0:
        raise ValueError(f"expected a non-empty vector or batch, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("soft_rank input must be finite")
    return np.atleast_2d(arr), arr.ndim == 1


def _check_eps(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return epsilon


class _SoftRankTape:
    """Forward result of a batched soft rank, kept for the backward pass."""

    def __init__(self, values: np.ndarray, epsilon: float):
        b, n = values.shape
        self.epsilon = epsilon
        z = values / epsilon
        # Descending sort; stable so ties keep index order.
        self.order = np.argsort(-z, axis=1, kind="stable")
        s = np.take_along_axis(z, self.order, axis=1)
        w = np.arange(n, 0, -1, dtype=np.float64)
        fit, block = isotonic_decreasing(s - w)
        ranks_sorted = s - fit
        self.ranks = np.empty_like(ranks_sorted)
        np.put_along_axis(self.ranks, self.order, ranks_sorted, axis=1)
        # Flat block ids, unique across rows, for bincount-based averaging.
        self.flat_block = (block + n * np.arange(b)[:, None]).ravel()
        self.shape = (b, n)

    def vjp(self, upstream: np.ndarray) -> np.ndarray:
        b, n = self.shape
        u = np.take_along_axis(upstream, self.order, axis=1).ravel()
        sums = np.bincount(self.flat_block, weights=u, minlength=b * n)
        counts = np.bincount(self.flat_block, minlength=b * n)
        avg_sorted = (sums[self.flat_block] / counts[self.flat_block]).reshape(b, n)
        avg = np.empty_like(avg_sorted)
        np.put_along_axis(avg, self.order, avg_sorted, axis=1)
        return (upstream - avg) / self.epsilon


def soft_rank_with_vjp(values, epsilon: float = 0.1):
    """Soft ranks plus a closure computing vector-Jacobian products.

    Examples
    --------
    >>> ranks, vjp = soft_rank_with_vjp([3.0, 1.0, 2.0], 1e-6)
    >>> ranks.round(6).tolist()
    [3.0, 1.0, 2.0]
    >>> vjp([1.0, 0.0, 0.0]).tolist()
    [0.0, 0.0, 0.0]
    """
    batch, single = _as_batch(values)
    tape = _SoftRankTape(batch, _check_eps(epsilon))

    def vjp(upstream):
        u = np.asarray(upstream, dtype=np.float64)
        u2 = u.reshape(tape.shape)
        grad = tape.vjp(u2)
        return grad[0] if single else grad

    return (tape.ranks[0] if single else tape.ranks), vjp


def soft_rank(values, epsilon: float = 0.1) -> np.ndarray:
    """l2-regularized ascending soft ranks of ``values`` (row-wise for a batch).

    The output lies in ``[1, n]``, sums to ``n (n + 1) / 2``, preserves the
    order of the input and gives tied inputs identical (averaged) ranks.
    """
    return soft_rank_with_vjp(values, epsilon)[0]


def soft_rank_vjp(values, epsilon: float, upstream) -> np.ndarray:
    """Gradient of ``<upstream, soft_rank(values, epsilon)>`` with respect to ``values``."""
    return soft_rank_with_vjp(values, epsilon)[1](upstream)
