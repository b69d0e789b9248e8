"""Monte Carlo harness: repeated simulated trials, FDR/power tables, level sweeps.

Seeding is paired.  Trial ``t`` of a config with master seed ``s`` uses
seed ``s + t``; that seed spawns one stream for the data and one for the
methods.  Every method sees the same dataset and starts from the same
method-stream state, so method differences within a trial are not sampling
noise in the data.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .baselines import BaselineSpec, bi_select, cs_ib, cs_int, cs_is
from .conformal import LabeledDataset, UnlabeledDataset, fdp_and_power, mcs_select
from .learn import LearnedScore, TrainConfig, train_score
from .predictors import fit_knn, fit_ridge
from .regions import TargetRegion
from .scores import DEFAULT_BIG_M, DistanceScore
from .simulate import SimConfig, gen_dataset

__all__ = [
    "MethodOptions",
    "TrialResult",
    "MethodSummary",
    "BenchmarkSummary",
    "METHODS",
    "fit_predictor",
    "run_method",
    "run_trial",
    "run_trials",
    "run_benchmark",
    "sweep_nominal_levels",
    "split_for_learning",
    "summarize",
    "SUMMARY_COLUMNS",
]

SUMMARY_COLUMNS = ("method", "q", "mean_fdr", "se_fdr", "mean_power", "se_power", "reps")


@dataclass(frozen=True)
class MethodOptions:
    """Predictor and method settings shared by every method in a run."""

    predictor: str = "ridge"
    ridge_lambda: float = 1e-3
    knn_k: int = 10
    big_m: float = DEFAULT_BIG_M
    learn: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)

    def __post_init__(self):
        if self.predictor not in ("ridge", "knn"):
            raise ValueError("predictor must be 'ridge' or 'knn'")


@dataclass(frozen=True)
class TrialResult:
    method: str
    fdp: float
    power: float
    n_selected: int
    seed: int


@dataclass(frozen=True)
class MethodSummary:
    method: str
    q: float
    mean_fdr: float
    se_fdr: float
    mean_power: float
    se_power: float
    reps: int
    config: SimConfig | None = None


@dataclass
class BenchmarkSummary:
    """One row per (config, method), in input order."""

    rows: list[MethodSummary]
    trials: list[TrialResult] = field(default_factory=list)

    def __getitem__(self, method: str) -> MethodSummary:
        for row in self.rows:
            if row.method == method:
                return row
        raise KeyError(method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.method, repr(r.q), repr(r.mean_fdr), repr(r.se_fdr),
                 repr(r.mean_power), repr(r.se_power), r.reps]
            )
        return buf.getvalue()


def fit_predictor(train: LabeledDataset, options: MethodOptions = MethodOptions()):
    if options.predictor == "knn":
        return fit_knn(train.x, train.y, options.knn_k)
    return fit_ridge(train.x, train.y, options.ridge_lambda)


def split_for_learning(n: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Random 8:1:1 index split into f-train, f-val and the final calibration block."""
    perm = rng.permutation(n)
    n_train = (8 * n) // 10
    n_val = (n - n_train) // 2
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def _mcs_dist(kind):
    def run(cal, test, region, predictor, q, rng, options):
        score = DistanceScore(region, predictor, kind, options.big_m)
        return mcs_select(cal, test, region, score, q, rng).selected

    return run


def _mcs_learn(loss):
    def run(cal, test, region, predictor, q, rng, options):
        i_train, i_val, i_cal = split_for_learning(len(cal), rng)
        config = replace(options.learn, loss=loss, q=q, seed=int(rng.integers(2**63)))
        model = train_score(cal.subset(i_train), cal.subset(i_val), region, predictor, config)
        score = LearnedScore(model, region, predictor)
        return mcs_select(cal.subset(i_cal), test, region, score, q, rng).selected

    return run


def _baseline(fn):
    def run(cal, test, region, predictor, q, rng, options):
        return fn(cal, test, region, predictor, q, rng, options.big_m).selected

    return run


def _cs_is(cal, test, region, predictor, q, rng, options):
    spec = replace(options.baseline, kind="cs_is", big_m=options.big_m)
    return cs_is(cal, test, region, predictor, q, spec, rng).selected


def _bi(cal, test, region, predictor, q, rng, options):
    spec = replace(options.baseline, kind="bi", big_m=options.big_m)
    return bi_select(cal, test, region, q, rng, spec).selected


MethodFn = Callable[..., np.ndarray]
METHODS: dict[str, MethodFn] = {
    "mcs_dist": _mcs_dist("clipped"),
    "mcs_dist_regular": _mcs_dist("regular"),
    "mcs_learn": _mcs_learn("L2"),
    "mcs_learn_l1": _mcs_learn("L1"),
    "cs_int": _baseline(cs_int),
    "cs_ib": _baseline(cs_ib),
    "cs_is": _cs_is,
    "bi": _bi,
}
ORACLE = "oracle"


def run_method(
    method: str,
    cal: LabeledDataset,
    test: UnlabeledDataset,
    region: TargetRegion,
    predictor,
    q: float,
    rng: np.random.Generator,
    options: MethodOptions = MethodOptions(),
) -> np.ndarray:
    """Selected test indices for a registered method (not the oracle)."""
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(cal, test, region, predictor, q, rng, options)


def _trial_streams(seed: int):
    data_seq, method_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(data_seq), method_seq


def run_trials(
    config: SimConfig,
    methods: Sequence[str],
    q: float,
    options: MethodOptions = MethodOptions(),
) -> list[TrialResult]:
    """All methods on one simulated dataset drawn from ``config.seed``."""
    data_rng, method_seq = _trial_streams(config.seed)
    train, cal, test = gen_dataset(config, data_rng)
    region = config.region()
    truth = region.contains(test.y)
    predictor = fit_predictor(train, options)
    out = []
    for method in methods:
        if method == ORACLE:
            selected = np.nonzero(truth)[0]
        else:
            rng = np.random.default_rng(method_seq)
            selected = run_method(method, cal, test.unlabeled(), region, predictor, q, rng, options)
        fdp, power = fdp_and_power(selected, truth)
        out.append(TrialResult(method, fdp, power, int(len(selected)), config.seed))
    return out


def run_trial(
    config: SimConfig,
    method: str,
    q: float,
    rng: np.random.Generator | None = None,
    options: MethodOptions = MethodOptions(),
) -> TrialResult:
    """One method on one dataset.

    Without ``rng`` the method stream comes from ``config.seed`` exactly as in
    :func:`run_trials`, so the two agree.
    """
    if rng is None:
        return run_trials(config, [method], q, options)[0]
    data_rng, _ = _trial_streams(config.seed)
    train, cal, test = gen_dataset(config, data_rng)
    region = config.region()
    truth = region.contains(test.y)
    if method == ORACLE:
        selected = np.nonzero(truth)[0]
    else:
        predictor = fit_predictor(train, options)
        selected = run_method(method, cal, test.unlabeled(), region, predictor, q, rng, options)
    fdp, power = fdp_and_power(selected, truth)
    return TrialResult(method, fdp, power, int(len(selected)), config.seed)


def summarize(trials: Sequence[TrialResult], q: float, config=None) -> MethodSummary:
    """Means and standard errors (sample SD over sqrt(reps)); one method's trials."""
    fdp = np.array([t.fdp for t in trials])
    power = np.array([t.power for t in trials])
    n = fdp.size
    if n == 0:
        raise ValueError("no trials to summarize")

    def se(v):
        return float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    return MethodSummary(
        trials[0].method, q, float(fdp.mean()), se(fdp), float(power.mean()), se(power), n, config
    )


def _job(args):
    config, methods, q, options = args
    return run_trials(config, methods, q, options)


def run_benchmark(
    configs: SimConfig | Sequence[SimConfig],
    methods: Sequence[str],
    q: float,
    reps: int = 200,
    parallelism: int = 1,
    options: MethodOptions = MethodOptions(),
) -> BenchmarkSummary:
    """``reps`` paired trials per config; trial ``t`` uses seed ``config.seed + t``.

    ``parallelism > 1`` farms trials out to worker processes.  Results are
    collected in trial order, so the summary does not depend on scheduling.
    """
    if isinstance(configs, SimConfig):
        configs = [configs]
    if reps < 1:
        raise ValueError("reps must be at least 1")
    methods = list(methods)
    jobs = [(cfg.with_seed(cfg.seed + t), methods, q, options) for cfg in configs for t in range(reps)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * parallelism))))
    else:
        results = [_job(j) for j in jobs]
    rows, flat = [], []
    for c, cfg in enumerate(configs):
        block = results[c * reps : (c + 1) * reps]
        for i, method in enumerate(methods):
            trials = [trial_set[i] for trial_set in block]
            rows.append(summarize(trials, q, cfg))
            flat.extend(trials)
    return BenchmarkSummary(rows, flat)


def sweep_nominal_levels(
    config: SimConfig,
    methods: Sequence[str],
    q_grid: Sequence[float] = tuple(np.round(np.arange(0.05, 0.501, 0.05), 2)),
    reps: int = 200,
    parallelism: int = 1,
    options: MethodOptions = MethodOptions(),
) -> list[BenchmarkSummary]:
    """:func:`run_benchmark` at each level of ``q_grid``, same seeds at every level."""
    return [run_benchmark(config, methods, float(q), reps, parallelism, options) for q in q_grid]
