"""Small built-in predictive models.

The selection machinery only needs a fitted ``predict(X)``; these models are
the defaults used by the benchmark harness and the CLI.

Text format (``save_model`` / ``load_model``): one header line of
``key=value`` tokens starting with ``mcselect-model v1``, then the
parameter matrices row by row, whitespace separated, floats written in
shortest round-trip form.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

__all__ = [
    "RidgeModel",
    "KnnModel",
    "LogisticModel",
    "fit_ridge",
    "fit_knn",
    "fit_logistic",
    "logistic_loss_and_grad",
    "save_model",
    "load_model",
]

FORMAT_TAG = "mcselect-model v1"


def _design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _check_features(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected {p} features, got shape {X.shape}")
    return X


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Multi-output ridge regression; ``weights[0]`` is the intercept row."""

    weights: np.ndarray
    ridge_lambda: float

    @property
    def n_features(self) -> int:
        return self.weights.shape[0] - 1

    def predict(self, X) -> np.ndarray:
        X = _check_features(X, self.n_features)
        return self.weights[0] + X @ self.weights[1:]


@dataclass(frozen=True, eq=False)
class KnnModel:
    """Average response of the ``k`` nearest stored points (Euclidean)."""

    X: np.ndarray
    Y: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "_tree", cKDTree(self.X))

    def predict(self, X) -> np.ndarray:
        X = _check_features(X, self.X.shape[1])
        _, idx = self._tree.query(X, k=self.k)
        idx = np.asarray(idx).reshape(X.shape[0], self.k)
        return self.Y[idx].mean(axis=1)


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Binary logistic regression; ``weights[0]`` is the intercept."""

    weights: np.ndarray

    def predict_prob(self, X) -> np.ndarray:
        X = _check_features(X, self.weights.size - 1)
        return expit(_design(X) @ self.weights)


def fit_ridge(X, Y, ridge_lambda: float = 0.0) -> RidgeModel:
    """Closed-form ridge with an unpenalized intercept.

    Minimizes ``||Y - [1, X] W||_F^2 + ridge_lambda * ||W[1:]||_F^2``.
    """
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    A = _design(X)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if A.shape[0] != Y.shape[0] or A.shape[0] < 1:
        raise ValueError("X and Y need the same, positive number of rows")
    gram = A.T @ A
    penalty = np.full(A.shape[1], float(ridge_lambda))
    penalty[0] = 0.0
    gram[np.diag_indices_from(gram)] += penalty
    if ridge_lambda == 0 and np.linalg.matrix_rank(A) < A.shape[1]:
        raise np.linalg.LinAlgError(
            "design is rank-deficient; use ridge_lambda > 0"
        )
    W = np.linalg.solve(gram, A.T @ Y)
    return RidgeModel(W, float(ridge_lambda))


def fit_knn(X, Y, k: int = 10) -> KnnModel:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k must be in [1, {X.shape[0]}], got {k}")
    return KnnModel(X.copy(), Y.copy(), int(k))


def logistic_loss_and_grad(weights, X, labels) -> tuple[float, np.ndarray]:
    """Mean log-loss of a logistic model and its gradient in ``weights``."""
    A = _design(X)
    y = np.asarray(labels, dtype=float)
    z = A @ weights
    # log(1 + e^z) - y z, written stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    grad = A.T @ (expit(z) - y) / A.shape[0]
    return float(loss), grad


def fit_logistic(X, labels, steps: int = 500, lr: float = 0.1) -> LogisticModel:
    """Full-batch gradient descent on the mean log-loss, starting from zero."""
    A = _design(X)
    w = np.zeros(A.shape[1])
    for _ in range(steps):
        _, grad = logistic_loss_and_grad(w, X, labels)
        w -= lr * grad
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("logistic regression diverged")
    return LogisticModel(w)


def _write_matrix(lines: list[str], M: np.ndarray) -> None:
    for row in np.atleast_2d(M):
        lines.append(" ".join(repr(float(v)) for v in row))


def _read_matrix(lines: list[str], start: int, rows: int, cols: int) -> np.ndarray:
    block = lines[start : start + rows]
    if len(block) != rows:
        raise ValueError("model file is truncated")
    M = np.array([[float(v) for v in line.split()] for line in block])
    if M.shape != (rows, cols):
        raise ValueError(f"expected a {rows}x{cols} block, got {M.shape}")
    return M


def save_model(model, path) -> None:
    """Write a fitted ridge, k-NN or logistic model in the text format."""
    lines: list[str] = []
    if isinstance(model, RidgeModel):
        r, c = model.weights.shape
        lines.append(f"{FORMAT_TAG} kind=ridge rows={r} cols={c} ridge_lambda={model.ridge_lambda!r}")
        _write_matrix(lines, model.weights)
    elif isinstance(model, KnnModel):
        n, p = model.X.shape
        d = model.Y.shape[1]
        lines.append(f"{FORMAT_TAG} kind=knn n={n} p={p} d={d} k={model.k}")
        _write_matrix(lines, model.X)
        _write_matrix(lines, model.Y)
    elif isinstance(model, LogisticModel):
        lines.append(f"{FORMAT_TAG} kind=logistic rows={model.weights.size} cols=1")
        _write_matrix(lines, model.weights[:, None])
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_header(line: str, tag: str = FORMAT_TAG) -> dict[str, str]:
    if not line.startswith(tag):
        raise ValueError(f"not a {tag!r} file")
    return dict(tok.split("=", 1) for tok in line[len(tag) :].split())


def load_model(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError("empty model file")
    head = parse_header(lines[0])
    kind = head.get("kind")
    if kind == "ridge":
        W = _read_matrix(lines, 1, int(head["rows"]), int(head["cols"]))
        return RidgeModel(W, float(head["ridge_lambda"]))
    if kind == "knn":
        n, p, d = int(head["n"]), int(head["p"]), int(head["d"])
        X = _read_matrix(lines, 1, n, p)
        Y = _read_matrix(lines, 1 + n, n, d)
        return KnnModel(X, Y, int(head["k"]))
    if kind == "logistic":
        w = _read_matrix(lines, 1, int(head["rows"]), 1)[:, 0]
        return LogisticModel(w)
    raise ValueError(f"unknown model kind {kind!r}")
