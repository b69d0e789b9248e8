import math

import numpy as np
import pytest

import mcselect.bench as bench
from mcselect.bench import (
    ORACLE,
    SUMMARY_COLUMNS,
    TrialResult,
    run_benchmark,
    run_trial,
    run_trials,
    split_for_learning,
    summarize,
    sweep_nominal_levels,
)
from mcselect.simulate import SimConfig

SMALL = SimConfig(1, 1, d=5, n_train=150, n_cal=150, m=50, seed=3)


def test_tiny_level_selects_nothing():
    r = run_trial(SMALL, "mcs_dist", 1e-9)
    assert r.n_selected == 0 and r.fdp == 0.0 and r.power == 0.0


def test_oracle_is_perfect():
    r = run_trial(SMALL, ORACLE, 0.3)
    assert r.fdp == 0.0 and r.power == 1.0


def test_trial_deterministic():
    for method in ("mcs_dist", "cs_is", "bi"):
        assert run_trial(SMALL, method, 0.3) == run_trial(SMALL, method, 0.3)


def test_run_trial_matches_run_trials():
    many = run_trials(SMALL, ["mcs_dist", "cs_ib", ORACLE], 0.3)
    for r in many:
        assert run_trial(SMALL, r.method, 0.3) == r


def test_explicit_rng():
    a = run_trial(SMALL, "mcs_dist", 0.3, np.random.default_rng(1))
    b = run_trial(SMALL, "mcs_dist", 0.3, np.random.default_rng(1))
    assert a == b


def test_unknown_method():
    with pytest.raises(ValueError, match="unknown method"):
        run_trial(SMALL, "nope", 0.3)


def test_methods_share_the_dataset(monkeypatch):
    seen = {}

    def spy(name):
        def run(cal, test, region, predictor, q, rng, options):
            seen.setdefault(name, []).append((cal.x.tobytes(), cal.y.tobytes(), test.x.tobytes()))
            return np.array([], dtype=int)

        return run

    monkeypatch.setitem(bench.METHODS, "spy_a", spy("a"))
    monkeypatch.setitem(bench.METHODS, "spy_b", spy("b"))
    run_benchmark(SMALL, ["spy_a", "spy_b"], 0.3, reps=4)
    assert seen["a"] == seen["b"]
    assert len(set(seen["a"])) == 4  # trials differ from one another


def test_single_rep_summary_equals_trial():
    s = run_benchmark(SMALL, ["mcs_dist"], 0.3, reps=1)
    r = run_trial(SMALL, "mcs_dist", 0.3)
    row = s["mcs_dist"]
    assert (row.mean_fdr, row.mean_power, row.reps) == (r.fdp, r.power, 1)
    assert row.se_fdr == 0.0 and row.se_power == 0.0


def test_trial_seeds_follow_offsets():
    s = run_benchmark(SMALL, ["mcs_dist"], 0.3, reps=3)
    assert [t.seed for t in s.trials] == [3, 4, 5]
    for t in s.trials:
        assert t == run_trial(SMALL.with_seed(t.seed), "mcs_dist", 0.3)


def _welford(values):
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        delta = v - mean
        mean += delta / n
        m2 += delta * (v - mean)
    return mean, math.sqrt(m2 / (n - 1)) / math.sqrt(n)


def test_aggregation_matches_streaming_reference():
    rng = np.random.default_rng(0)
    trials = [TrialResult("x", float(f), float(p), 1, i)
              for i, (f, p) in enumerate(rng.uniform(size=(57, 2)))]
    s = summarize(trials, 0.3)
    mean_f, se_f = _welford([t.fdp for t in trials])
    mean_p, se_p = _welford([t.power for t in trials])
    assert abs(s.mean_fdr - mean_f) < 1e-12 and abs(s.se_fdr - se_f) < 1e-12
    assert abs(s.mean_power - mean_p) < 1e-12 and abs(s.se_power - se_p) < 1e-12


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([], 0.3)


def test_single_level_sweep_is_run_benchmark():
    (swept,) = sweep_nominal_levels(SMALL, ["mcs_dist", "bi"], [0.3], reps=3)
    direct = run_benchmark(SMALL, ["mcs_dist", "bi"], 0.3, reps=3)
    assert swept.to_csv() == direct.to_csv()


def test_parallel_equals_serial():
    methods = ["mcs_dist", "cs_int"]
    serial = run_benchmark(SMALL, methods, 0.3, reps=4)
    parallel = run_benchmark(SMALL, methods, 0.3, reps=4, parallelism=2)
    assert serial.to_csv() == parallel.to_csv()
    assert serial.trials == parallel.trials


def test_csv_schema():
    out = run_benchmark([SMALL, SMALL.with_seed(100)], ["mcs_dist", ORACLE], 0.3, reps=2).to_csv()
    lines = out.strip().split("\n")
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert len(lines) == 1 + 4
    assert all(line.split(",")[-1] == "2" for line in lines[1:])


def test_split_for_learning_ratio():
    parts = split_for_learning(1000, np.random.default_rng(0))
    assert [len(p) for p in parts] == [800, 100, 100]
    np.testing.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(1000))


def test_sweep_curves_for_valid_method():
    config = SimConfig(1, 1, d=5, n_train=200, n_cal=200, m=50, seed=0)
    grid = [0.1, 0.2, 0.3, 0.4, 0.5]
    rows = [s["mcs_dist"] for s in sweep_nominal_levels(config, ["mcs_dist"], grid, reps=60)]
    for q, row in zip(grid, rows):
        assert row.mean_fdr <= q + 2 * row.se_fdr
    for lo, hi in zip(rows, rows[1:]):
        assert hi.mean_power >= lo.mean_power - 2 * max(lo.se_power, hi.se_power)


def test_rejects_zero_reps():
    with pytest.raises(ValueError):
        run_benchmark(SMALL, ["mcs_dist"], 0.3, reps=0)
