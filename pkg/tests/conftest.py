"""Shared fixtures: expensive end-to-end runs computed once per session.

Several module suites and the acceptance suite examine the same simulated
experiments; running each experiment once and sharing the artifacts keeps
the whole test run within a few minutes.
"""

import csv
import time

import numpy as np
import pytest

from regflex import harness

UNBIASED_SEEDS = list(range(1, 21))
BIAS_SEED = 1


def read_report(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return {r[0]: float(r[1]) for r in rows[1:]}


def read_scores(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    out = []
    for r in rows[1:]:
        out.append({k: (v if k == "hour" else float(v))
                    for k, v in zip(header, r)})
    return out


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Full default experiment (seed 0, regulation-ready benchmark)."""
    out = tmp_path_factory.mktemp("default_run")
    cfg = harness.ExperimentConfig(seed=0, out_dir=str(out))
    art = harness.run_experiment(cfg)
    return cfg, art


@pytest.fixture(scope="session")
def fixed_reserve_run(tmp_path_factory):
    """One day with fixed 30% reserves; used for tracking-quality checks."""
    out = tmp_path_factory.mktemp("fixed_run")
    cfg = harness.ExperimentConfig(seed=7, reserve_mode="fixed",
                                   benchmark_mode="off", out_dir=str(out))
    t0 = time.perf_counter()
    art = harness.run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    return cfg, art, elapsed


@pytest.fixture(scope="session")
def paired_symmetric_run(tmp_path_factory):
    """Regulation vs regulation-ready twin, symmetric scheduled reserves.

    No setback: with a constant comfort band the two cells' MPC plans stay
    aligned, which isolates the signal-tracking effect the efficiency and
    chiller-neutrality checks are after.
    """
    out = tmp_path_factory.mktemp("paired_sym")
    cfg = harness.ExperimentConfig(seed=11, symmetric=True, setback=False,
                                   out_dir=str(out))
    art = harness.run_experiment(cfg)
    return cfg, art


@pytest.fixture(scope="session")
def cool_day_run(tmp_path_factory):
    """Cool day where both planning levels ride their flow floors."""
    out = tmp_path_factory.mktemp("cool_day")
    cfg = harness.ExperimentConfig(seed=5, amb_mean_c=21.0, amb_swing_c=2.5,
                                   q_int_work_w=3200.0, ub_tight_c=24.9,
                                   benchmark_mode="off", out_dir=str(out))
    art = harness.run_experiment(cfg)
    return cfg, art


@pytest.fixture(scope="session")
def unbiased_violations(tmp_path_factory):
    """25 degC violation tick counts over 20 seeded unbiased days."""
    root = tmp_path_factory.mktemp("unbiased")
    counts = {}
    for seed in UNBIASED_SEEDS:
        cfg = harness.ExperimentConfig(seed=seed, benchmark_mode="off",
                                       out_dir=str(root / f"s{seed}"))
        art = harness.run_experiment(cfg)
        counts[seed] = int(read_report(art.report_csv)["violations_25c_ticks_a"])
    return counts


@pytest.fixture(scope="session")
def bias_pair(tmp_path_factory):
    """Violation ticks under +2 degC forecast bias: asymmetric vs symmetric."""
    root = tmp_path_factory.mktemp("bias")
    out = {}
    for name, sym in (("asym", False), ("sym", True)):
        cfg = harness.ExperimentConfig(seed=BIAS_SEED, forecast_bias_c=2.0,
                                       symmetric=sym, benchmark_mode="off",
                                       out_dir=str(root / name))
        art = harness.run_experiment(cfg)
        out[name] = int(read_report(art.report_csv)["violations_25c_ticks_a"])
    return out


@pytest.fixture(scope="session")
def scheduler_day():
    """A representative forecast day for direct scheduler solves."""
    ss = np.random.SeedSequence(0)
    _, _, seed_weather = ss.spawn(3)
    weather = harness.synthetic_weather(1, seed_weather)
    q_int = harness.internal_gain_series(harness.SLOTS_PER_DAY, 4500.0, 2400.0)
    return weather, q_int
