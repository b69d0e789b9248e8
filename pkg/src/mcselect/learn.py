"""Learned nonconformity scores (``mCS-learn``).

The score family is ``V(x, y) = big_m * 1{y in interior(R)} - f(inputs)``
where ``f`` is a two-layer perceptron with batch normalization::

    affine -> batchnorm -> relu -> affine -> scalar

and ``inputs`` concatenates some of ``x``, the prediction ``mu(x)`` and ``y``
according to the input family.  Families that leave ``y`` out are regionally
monotone for every parameter value; the two that include ``y`` need
``big_m > 2 max |f|``, which is checked after training.

Training follows a split/validate loop: each epoch splits the f-train block
in two, computes smooth conformal p-values of the second half against the
first (soft ranks in place of hard ranks), takes a gradient step on either
the smoothed selection size or the p-value penalty, and then scores the
model by the average power of the exact selection procedure over ``K``
random splits of the f-val block.  The epoch with the best validation power
wins.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .conformal import LabeledDataset
from .predictors import parse_header
from .regions import TargetRegion
from .softsort import soft_rank_with_vjp

__all__ = [
    "FAMILIES",
    "ScoreModel",
    "TrainConfig",
    "TrainingLog",
    "LearnedScore",
    "init_score_model",
    "build_inputs",
    "model_forward",
    "model_backward",
    "score_eval",
    "smooth_p_values",
    "smooth_p_values_from_scores",
    "loss_smooth_selection",
    "loss_p_penalty",
    "loss_and_grad",
    "select_best_epoch",
    "train_score",
    "check_big_m",
    "save_score_model",
    "load_score_model",
]

log = logging.getLogger(__name__)

FAMILIES = (
    "covariate_only",
    "prediction_only",
    "covariate_and_prediction",
    "full_with_y",
    "all_inputs",
)
_PARTS = {
    "covariate_only": ("x",),
    "prediction_only": ("mu",),
    "covariate_and_prediction": ("x", "mu"),
    "full_with_y": ("x", "y"),
    "all_inputs": ("x", "mu", "y"),
}
PARAM_NAMES = ("W1", "b1", "gamma", "beta", "w2", "b2")
FORMAT_TAG = "mcselect-score-model v1"


def uses_y(family: str) -> bool:
    return "y" in _PARTS[family]


def uses_prediction(family: str) -> bool:
    return "mu" in _PARTS[family]


@dataclass
class TrainingLog:
    loss: list[float] = field(default_factory=list)
    val_power: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based


@dataclass
class ScoreModel:
    """Parameters of ``f`` plus batch-norm running statistics.

    ``params`` maps ``W1 (in_dim, h)``, ``b1 (h,)``, ``gamma (h,)``,
    ``beta (h,)``, ``w2 (h,)`` and ``b2 (1,)`` to arrays.
    """

    params: dict[str, np.ndarray]
    running_mean: np.ndarray
    running_var: np.ndarray
    family: str = "covariate_and_prediction"
    big_m: float = 1e6
    bn_eps: float = 1e-5
    log: TrainingLog | None = None

    @property
    def in_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W1"].shape[1]

    def copy(self) -> "ScoreModel":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`train_score`.

    ``loss`` is ``"L2"`` (p-value penalty) or ``"L1"`` (smoothed selection
    size).  ``K`` is the number of random validation splits per epoch.
    """

    epochs: int = 200
    lr: float = 1e-2
    momentum: float = 0.9
    tau: float = 0.01
    gamma: float = 0.5
    loss: str = "L2"
    K: int = 100
    q: float = 0.3
    epsilon: float = 0.1
    hidden: int = 64
    family: str = "covariate_and_prediction"
    big_m: float = 1e6
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0 or self.gamma < 0 or self.K < 1 or self.epochs < 1:
            raise ValueError("need tau > 0, gamma >= 0, K >= 1 and epochs >= 1")
        if self.loss not in ("L1", "L2"):
            raise ValueError("loss must be 'L1' or 'L2'")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")


def init_score_model(
    in_dim: int,
    hidden: int = 64,
    family: str = "covariate_and_prediction",
    big_m: float = 1e6,
    rng: np.random.Generator | None = None,
    bn_eps: float = 1e-5,
) -> ScoreModel:
    """Uniform fan-in initialization for both affine layers."""
    rng = np.random.default_rng(0) if rng is None else rng
    b_in, b_h = 1.0 / np.sqrt(in_dim), 1.0 / np.sqrt(hidden)
    params = {
        "W1": rng.uniform(-b_in, b_in, (in_dim, hidden)),
        "b1": rng.uniform(-b_in, b_in, hidden),
        "gamma": np.ones(hidden),
        "beta": np.zeros(hidden),
        "w2": rng.uniform(-b_h, b_h, hidden),
        "b2": rng.uniform(-b_h, b_h, 1),
    }
    return ScoreModel(params, np.zeros(hidden), np.ones(hidden), family, big_m, bn_eps)


def build_inputs(family: str, x, mu=None, y=None) -> np.ndarray:
    """Concatenate the pieces of ``(x, mu(x), y)`` that ``family`` uses."""
    pieces = {"x": x, "mu": mu, "y": y}
    cols = []
    for name in _PARTS[family]:
        block = pieces[name]
        if block is None:
            raise ValueError(f"family {family!r} needs {name!r}")
        cols.append(np.atleast_2d(np.asarray(block, dtype=float)))
    return np.hstack(cols)


def model_forward(model: ScoreModel, inputs, training: bool = False):
    """Evaluate ``f`` on a batch of input rows.

    In training mode batch statistics normalize the hidden layer; otherwise
    the running statistics do.  Returns ``(f, cache)``; ``cache`` holds what
    :func:`model_backward` needs plus the batch mean/variance.
    """
    P = model.params
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.shape[1] != model.in_dim:
        raise ValueError(f"expected {model.in_dim} input columns, got {X.shape[1]}")
    h1 = X @ P["W1"] + P["b1"]
    if training:
        mean = h1.mean(axis=0)
        var = h1.var(axis=0)
    else:
        mean, var = model.running_mean, model.running_var
    inv_std = 1.0 / np.sqrt(var + model.bn_eps)
    xhat = (h1 - mean) * inv_std
    bn = P["gamma"] * xhat + P["beta"]
    act = np.maximum(bn, 0.0)
    f = act @ P["w2"] + P["b2"][0]
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("score network produced non-finite output")
    cache = dict(X=X, xhat=xhat, inv_std=inv_std, bn=bn, act=act,
                 training=training, mean=mean, var=var)
    return f, cache


def model_backward(model: ScoreModel, cache, df) -> dict[str, np.ndarray]:
    """Gradients of ``sum(df * f)`` with respect to every parameter."""
    P = model.params
    df = np.asarray(df, dtype=float)
    act, xhat, inv_std = cache["act"], cache["xhat"], cache["inv_std"]
    grads = {"w2": act.T @ df, "b2": np.array([df.sum()])}
    dbn = np.outer(df, P["w2"]) * (cache["bn"] > 0)
    grads["gamma"] = np.sum(dbn * xhat, axis=0)
    grads["beta"] = dbn.sum(axis=0)
    dxhat = dbn * P["gamma"]
    if cache["training"]:
        n = dxhat.shape[0]
        dh1 = inv_std / n * (
            n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
        )
    else:
        dh1 = dxhat * inv_std
    grads["W1"] = cache["X"].T @ dh1
    grads["b1"] = dh1.sum(axis=0)
    return grads


def score_eval(model: ScoreModel, region: TargetRegion, x, mu_pred, y_or_r, big_m=None):
    """``big_m * 1{y in interior(R)} - f`` in evaluation mode, row-wise."""
    big_m = model.big_m if big_m is None else big_m
    y = np.atleast_2d(np.asarray(y_or_r, dtype=float))
    inputs = build_inputs(model.family, x, mu_pred, y if uses_y(model.family) else None)
    f, _ = model_forward(model, inputs, training=False)
    return big_m * region.interior_contains(y).astype(float) - f


@dataclass(frozen=True, eq=False)
class LearnedScore:
    """A trained :class:`ScoreModel` packaged as a score callable ``V(X, Y)``."""

    model: ScoreModel
    region: TargetRegion
    predictor: object = None

    def __call__(self, X, Y) -> np.ndarray:
        mu = self.predictor.predict(X) if uses_prediction(self.model.family) else None
        Y = np.broadcast_to(np.asarray(Y, dtype=float), (np.shape(X)[0], self.region.dim))
        return score_eval(self.model, self.region, X, mu, Y)


def smooth_p_values_from_scores(cal_scores, test_scores, epsilon: float = 0.1):
    """Smooth conformal p-values and their backward pass.

    For each test score, soft-rank it together with all calibration scores
    and divide its rank by ``n + 1``.  Returns ``(p_bar, vjp)`` where
    ``vjp(g)`` maps ``dL/dp_bar`` to ``(dL/dcal_scores, dL/dtest_scores)``.
    """
    cal = np.asarray(cal_scores, dtype=float).ravel()
    test = np.asarray(test_scores, dtype=float).ravel()
    n, m = cal.size, test.size
    batch = np.empty((m, n + 1))
    batch[:, :n] = cal
    batch[:, n] = test
    ranks, rank_vjp = soft_rank_with_vjp(batch, epsilon)
    p_bar = ranks[:, n] / (n + 1)

    def vjp(g):
        upstream = np.zeros((m, n + 1))
        upstream[:, n] = np.asarray(g, dtype=float) / (n + 1)
        grad = rank_vjp(upstream)
        return grad[:, :n].sum(axis=0), grad[:, n]

    return p_bar, vjp


def loss_smooth_selection(p_bar, q: float, tau: float = 0.01, epsilon: float = 0.1):
    """Negative smoothed BH selection size and its gradient in ``p_bar``.

    ``a = soft_rank(p_bar)``, ``s_j = sigmoid((q a_j / m - p_bar_j) / tau)``,
    loss ``= -log sum_j exp(a_j s_j)``.
    """
    p = np.asarray(p_bar, dtype=float).ravel()
    m = p.size
    a, a_vjp = soft_rank_with_vjp(p, epsilon)
    s = expit((q * a / m - p) / tau)
    prod = a * s
    loss = -logsumexp(prod)
    d_prod = -softmax(prod)
    ds_dt = s * (1 - s) / tau
    d_a = d_prod * (s + a * ds_dt * q / m)
    d_p = d_prod * a * ds_dt * (-1.0) + a_vjp(d_a)
    return float(loss), d_p


def loss_p_penalty(p_bar, in_region, gamma: float = 0.5):
    """``sum_j p_bar_j (1{in R} - gamma 1{not in R})`` and its gradient."""
    p = np.asarray(p_bar, dtype=float).ravel()
    inside = np.asarray(in_region, dtype=bool).ravel()
    weight = np.where(inside, 1.0, -gamma)
    return float(p @ weight), weight


def _split_inputs(model, region, train1, train2, predictor):
    r = np.broadcast_to(region.boundary_point(), (len(train2), region.dim))
    fam = model.family
    mu1 = predictor.predict(train1.x) if uses_prediction(fam) else None
    mu2 = predictor.predict(train2.x) if uses_prediction(fam) else None
    in1 = build_inputs(fam, train1.x, mu1, train1.y if uses_y(fam) else None)
    in2 = build_inputs(fam, train2.x, mu2, r if uses_y(fam) else None)
    return np.vstack([in1, in2])


def loss_and_grad(
    model: ScoreModel,
    train1: LabeledDataset,
    train2: LabeledDataset,
    region: TargetRegion,
    predictor,
    config: TrainConfig,
    inputs=None,
):
    """Training loss on one split and its gradient in every parameter.

    ``train1`` plays the calibration role (true responses), ``train2`` the
    test role (boundary point).  Batch-norm runs in training mode over both
    halves together.  Returns ``(loss, grads, cache)``.
    """
    if inputs is None:
        inputs = _split_inputs(model, region, train1, train2, predictor)
    n1 = len(train1)
    f, cache = model_forward(model, inputs, training=True)
    indicator = region.interior_contains(train1.y).astype(float)
    cal_scores = model.big_m * indicator - f[:n1]
    test_scores = -f[n1:]
    p_bar, p_vjp = smooth_p_values_from_scores(cal_scores, test_scores, config.epsilon)
    if config.loss == "L2":
        loss, d_p = loss_p_penalty(p_bar, region.contains(train2.y), config.gamma)
    else:
        loss, d_p = loss_smooth_selection(p_bar, config.q, config.tau, config.epsilon)
    d_cal, d_test = p_vjp(d_p)
    df = np.concatenate([-d_cal, -d_test])
    return loss, model_backward(model, cache, df), cache


def smooth_p_values(
    model: ScoreModel,
    train1: LabeledDataset,
    train2: LabeledDataset,
    region: TargetRegion,
    epsilon: float = 0.1,
    predictor=None,
    training: bool = True,
) -> np.ndarray:
    """Smooth p-values of ``train2`` (at the boundary point) against ``train1``."""
    inputs = _split_inputs(model, region, train1, train2, predictor)
    f, _ = model_forward(model, inputs, training=training)
    n1 = len(train1)
    cal = model.big_m * region.interior_contains(train1.y).astype(float) - f[:n1]
    return smooth_p_values_from_scores(cal, -f[n1:], epsilon)[0]


def select_best_epoch(val_powers) -> int:
    """1-based index of the best validation power; ties go to the earliest."""
    return int(np.argmax(np.asarray(val_powers, dtype=float))) + 1


def _validation_power(model, region, val, mu_val, q, K, rng) -> float:
    fam = model.family
    r = np.broadcast_to(region.boundary_point(), (len(val), region.dim))
    in_y = build_inputs(fam, val.x, mu_val, val.y if uses_y(fam) else None)
    f_y, _ = model_forward(model, in_y, training=False)
    if uses_y(fam):
        f_r, _ = model_forward(model, build_inputs(fam, val.x, mu_val, r), training=False)
    else:
        f_r = f_y
    cal_all = model.big_m * region.interior_contains(val.y).astype(float) - f_y
    test_all = -f_r
    truth = region.contains(val.y)
    return split_selection_power(cal_all, test_all, truth, q, K, rng)


def split_selection_power(cal_all, test_all, truth, q: float, K: int, rng) -> float:
    """Mean power of conformal selection over ``K`` random half splits.

    Row ``i`` contributes ``cal_all[i]`` when it lands in the calibration
    half and ``test_all[i]`` when it lands in the test half.  All splits are
    processed as one batch; the result equals running
    :func:`conformal_p_values` and :func:`bh_select` split by split.
    """
    n = len(truth)
    n1 = n // 2
    perms = rng.permuted(np.tile(np.arange(n), (K, 1)), axis=1)
    cal, test = cal_all[perms[:, :n1]], test_all[perms[:, n1:]]
    hits = truth[perms[:, n1:]]
    m = n - n1
    below = np.sum(cal[:, :, None] < test[:, None, :], axis=1)
    ties = np.sum(cal[:, :, None] == test[:, None, :], axis=1)
    p = (below + rng.uniform(size=(K, m)) * (1.0 + ties)) / (n1 + 1.0)
    steps = q * (np.arange(1, m + 1) / m)
    passing = np.sort(p, axis=1) <= steps
    k_star = np.where(passing.any(axis=1), m - np.argmax(passing[:, ::-1], axis=1), 0)
    selected = (p <= (q * (k_star / m))[:, None]) & (k_star > 0)[:, None]
    n_pos = hits.sum(axis=1)
    power = np.where(n_pos > 0, (selected & hits).sum(axis=1) / np.maximum(n_pos, 1), 0.0)
    return float(power.mean())


def check_big_m(model: ScoreModel, datasets, region: TargetRegion, predictor=None) -> float:
    """Raise unless ``big_m > 2 max |f|`` over the given labeled data.

    Only meaningful for families that feed ``y`` to ``f``.  Returns the
    observed ``max |f|``.
    """
    fam = model.family
    worst = 0.0
    for data in datasets:
        if len(data) == 0:
            continue
        mu = predictor.predict(data.x) if uses_prediction(fam) else None
        rows = [data.y]
        if uses_y(fam):
            rows.append(np.broadcast_to(region.boundary_point(), data.y.shape))
        for y in rows:
            f, _ = model_forward(model, build_inputs(fam, data.x, mu, y if uses_y(fam) else None))
            worst = max(worst, float(np.max(np.abs(f))))
    if uses_y(fam) and not model.big_m > 2 * worst:
        raise ValueError(
            f"big_m={model.big_m:g} does not exceed 2 * max|f| = {2 * worst:g}; "
            "the score is not guaranteed to be regionally monotone"
        )
    return worst


def train_score(
    f_train: LabeledDataset,
    f_val: LabeledDataset,
    region: TargetRegion,
    predictor,
    config: TrainConfig = TrainConfig(),
) -> ScoreModel:
    """Fit ``f`` by momentum gradient descent and pick the best epoch on validation.

    Returns a copy of the model at the epoch with the highest average
    validation power; the per-epoch history is attached as ``model.log``.
    """
    if len(f_train) < 2 or len(f_val) < 2:
        raise ValueError("f-train and f-val need at least two rows each")
    init_rng, split_rng, val_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    fam = config.family
    p = f_train.x.shape[1]
    d = f_train.y.shape[1]
    in_dim = {"x": p, "mu": d, "y": d}
    width = sum(in_dim[name] for name in _PARTS[fam])
    model = init_score_model(width, config.hidden, fam, config.big_m, init_rng, config.bn_eps)
    mu_train = predictor.predict(f_train.x) if uses_prediction(fam) else None
    mu_val = predictor.predict(f_val.x) if uses_prediction(fam) else None
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history = TrainingLog()
    best, best_power = None, -np.inf
    n1 = len(f_train) // 2
    for epoch in range(1, config.epochs + 1):
        perm = split_rng.permutation(len(f_train))
        i1, i2 = perm[:n1], perm[n1:]
        t1, t2 = f_train.subset(i1), f_train.subset(i2)
        inputs = None
        if mu_train is not None or uses_y(fam):
            inputs = _split_inputs_cached(model, region, t1, t2, mu_train, i1, i2)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads, cache = loss_and_grad(model, t1, t2, region, predictor, config, inputs)
        except FloatingPointError:
            loss, grads = float("nan"), {}
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise FloatingPointError(
                f"training diverged at epoch {epoch} (loss={loss!r}); lower lr"
            )
        for name, g in grads.items():
            velocity[name] = config.momentum * velocity[name] + g
            model.params[name] -= config.lr * velocity[name]
        mom = config.bn_momentum
        n_batch = cache["X"].shape[0]
        unbiased = cache["var"] * n_batch / max(n_batch - 1, 1)
        model.running_mean = (1 - mom) * model.running_mean + mom * cache["mean"]
        model.running_var = (1 - mom) * model.running_var + mom * unbiased
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                power = _validation_power(model, region, f_val, mu_val, config.q, config.K, val_rng)
        except FloatingPointError:
            raise FloatingPointError(
                f"training diverged at epoch {epoch} (parameters overflowed); lower lr"
            ) from None
        history.loss.append(loss)
        history.val_power.append(power)
        if power > best_power:
            best, best_power = model.copy(), power
            history.best_epoch = epoch
        log.debug("epoch %d loss %.5g val power %.4f", epoch, loss, power)
    best.log = history
    if uses_y(fam):
        check_big_m(best, [f_train, f_val], region, predictor)
    return best


def _split_inputs_cached(model, region, t1, t2, mu_all, i1, i2):
    fam = model.family
    mu1 = mu_all[i1] if mu_all is not None else None
    mu2 = mu_all[i2] if mu_all is not None else None
    r = np.broadcast_to(region.boundary_point(), (len(t2), region.dim))
    in1 = build_inputs(fam, t1.x, mu1, t1.y if uses_y(fam) else None)
    in2 = build_inputs(fam, t2.x, mu2, r if uses_y(fam) else None)
    return np.vstack([in1, in2])


def save_score_model(model: ScoreModel, path) -> None:
    """Versioned text format: header, then one named block per array."""
    head = (
        f"{FORMAT_TAG} in_dim={model.in_dim} hidden={model.hidden} "
        f"family={model.family} big_m={model.big_m!r} bn_eps={model.bn_eps!r}"
    )
    lines = [head]
    arrays = dict(model.params, running_mean=model.running_mean, running_var=model.running_var)
    for name, arr in arrays.items():
        mat = np.atleast_2d(arr) if arr.ndim == 2 else arr[None, :]
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n")


def load_score_model(path) -> ScoreModel:
    lines = Path(path).read_text().splitlines()
    head = parse_header(lines[0], FORMAT_TAG)
    arrays = {}
    i = 1
    while i < len(lines):
        name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        block = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1 : i + 1 + rows]])
        if block.shape != (rows, cols):
            raise ValueError(f"block {name!r} is malformed")
        arrays[name] = block if name == "W1" else block[0]
        i += 1 + rows
    params = {k: arrays[k] for k in PARAM_NAMES}
    if params["W1"].shape != (int(head["in_dim"]), int(head["hidden"])):
        raise ValueError("W1 shape disagrees with header")
    return ScoreModel(
        params,
        arrays["running_mean"],
        arrays["running_var"],
        head["family"],
        float(head["big_m"]),
        float(head["bn_eps"]),
    )
