"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

The scaling sweeps are session fixtures shared between criteria. Set
RINGAGE_JOBS to spread replicas over several processes.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

from ringage.checks import InvariantChecker
from ringage.engine import simulate
from ringage.experiments import (
    KRule,
    SweepPlan,
    TSampler,
    age_scaling,
    baseline_config,
    count_inversions,
    lemma1_check,
    preemption_study,
    regime_study,
    run_sweep,
)
from ringage.network import Cycle, Homogeneous, RingConfig, build_ring
from ringage.renewal import DistributionSpec

sys.path.insert(0, str(Path(__file__).parent))
from oracles import single_node_average_age  # noqa: E402

NS = (16, 64, 256, 1024)
TRIALS = 8
SLOPE_TOL = 0.1
SQRT = KRule(0.5)
QUARTER = KRule(0.25)
TWICE_SQRT = KRule(0.5, mult=2)
RULES = (QUARTER, SQRT, TWICE_SQRT)

pytestmark = pytest.mark.acceptance


def sweep(variant, direction="uni", ns=NS, trials=TRIALS, horizon_multiple=1200.0, seed=2024):
    plan = SweepPlan(
        baseline_config(variant, direction), ns, trials=trials, horizon_multiple=horizon_multiple,
        master_seed=seed, rules=RULES,
    )
    return run_sweep(plan)


@pytest.fixture(scope="session")
def uni_exp():
    return sweep("exponential")


@pytest.fixture(scope="session")
def bi_exp():
    return sweep("exponential", "bi")


def describe_fit(fit):
    means = ", ".join(f"{m:.3g}" for m in fit.means)
    return f"slope {fit.slope:.4f}, R^2 {fit.r2:.4f}, means [{means}]"


def test_criterion_1_uni_scaling(uni_exp, acceptance_log):
    fit = age_scaling(uni_exp)
    min_acc = int(uni_exp.values(NS[-1], "acceptances").min())
    ok = abs(fit.slope - 0.5) <= SLOPE_TOL and fit.r2 >= 0.98 and min_acc >= 1000
    acceptance_log.record(1, "uni-directional sqrt(n) scaling", ok,
                          f"{describe_fit(fit)}, min acceptances at n={NS[-1]}: {min_acc}")
    assert ok


@pytest.mark.parametrize("variant", ["gamma", "uniform", "hetero"])
def test_criterion_2_non_poisson_edges(variant, acceptance_log):
    result = sweep(variant)
    fit = age_scaling(result)
    ok = abs(fit.slope - 0.5) <= SLOPE_TOL
    acceptance_log.record(2, f"non-Poisson edges ({variant})", ok, describe_fit(fit))
    assert ok


def test_criterion_3_bi_scaling(bi_exp, acceptance_log):
    fit = age_scaling(bi_exp)
    ok = abs(fit.slope - 0.5) <= SLOPE_TOL
    acceptance_log.record(3, "bi-directional sqrt(n) scaling", ok, describe_fit(fit))
    assert ok


@pytest.mark.parametrize("direction", ["uni", "bi"])
def test_criterion_4_window_wait_mean(direction, acceptance_log):
    # 32 trials so that the across-trial standard error is itself well estimated
    result = sweep("exponential", direction, ns=(64, 256), trials=32, horizon_multiple=300.0, seed=77)
    rows = regime_study(result, (SQRT, TWICE_SQRT))
    parts, ok = [], True
    for row in rows:
        z = (row["mean_wait"] - row["analytic_wait"]) / row["mean_wait_se"]
        ok &= abs(z) <= 3.0
        parts.append(f"n={row['n']} k={row['k']}: {row['mean_wait']:.4f} vs {row['analytic_wait']:.4f} (z={z:+.2f})")
    acceptance_log.record(4, f"window wait mean ({direction})", ok, "; ".join(parts))
    assert ok


def test_criterion_5_regime_separation(uni_exp, acceptance_log):
    ns = (64, 256, 1024)
    rows = {(r["rule"], r["n"]): r["window_fraction"] for r in regime_study(uni_exp, (QUARTER, SQRT))}
    quarter = [rows[(QUARTER.label, n)] for n in ns]
    sqrt = [rows[(SQRT.label, n)] for n in ns]
    separated = all(s > q for s, q in zip(sqrt, quarter))
    decreasing = all(b < a for a, b in zip(quarter, quarter[1:]))
    ok = separated and decreasing
    acceptance_log.record(5, "spatial regime separation", ok,
                          f"k=ceil(n^0.25): {[round(v, 4) for v in quarter]}, "
                          f"k=ceil(n^0.5): {[round(v, 4) for v in sqrt]} for n={list(ns)}")
    assert ok


def test_criterion_6_preemption(bi_exp, acceptance_log):
    study = preemption_study(bi_exp)
    fractions = [r["long_path_fraction"] for r in study["rows"] if r["n"] >= 64]
    inversions, largest = count_inversions(fractions)
    slope = study["hops_fit"]["slope"]
    ok = (inversions == 0 or (inversions == 1 and largest <= 0.02)) and abs(slope - 0.5) <= 0.15
    acceptance_log.record(6, "long-path preemption", ok,
                          f"long-path fractions n=64,256,1024: {[round(f, 5) for f in fractions]}, "
                          f"hops exponent {slope:.4f}")
    assert ok


def test_criterion_7_renewal_sandwich(acceptance_log):
    laws = [DistributionSpec.exponential(1.0), DistributionSpec.gamma(2.0, 0.5), DistributionSpec.uniform(0.5, 1.5)]
    samplers = [TSampler("const", 10.0), TSampler("exponential", 10.0),
                TSampler("sum", k=100, spec=DistributionSpec.exponential(1.0))]
    parts, ok = [], True
    for i, law in enumerate(laws):
        for j, sampler in enumerate(samplers):
            rep = lemma1_check(law, sampler, trials=100_000, seed=10 * i + j)
            ok &= rep.inside
            parts.append(f"{law}/{sampler}: {rep.mean_count:.3f} in ({rep.lower:.3f}, {rep.upper:.3f})")
    acceptance_log.record(7, "renewal count sandwich at random horizons", ok, "; ".join(parts))
    assert ok


def test_criterion_8_calibration(acceptance_log):
    cfg = RingConfig(n=1, lambda_s=1.0, source_gen=DistributionSpec.exponential(1.0), horizon=1e5, seed=1)
    engine_age = simulate(cfg).ages.time_average_age(0)
    brute = float(np.mean([single_node_average_age(1.0, 1.0, 1e5, seed) for seed in range(3)]))
    ok = abs(engine_age - 1.0) <= 0.05 and abs(brute - 1.0) <= 0.05
    acceptance_log.record(8, "single-node calibration", ok,
                          f"engine {engine_age:.4f}, independent brute force {brute:.4f}, analytic 1.0")
    assert ok


LAWS = [
    DistributionSpec.exponential(1.0),
    DistributionSpec.exponential(2.5),
    DistributionSpec.gamma(2.0, 0.5),
    DistributionSpec.uniform(0.5, 1.5),
    DistributionSpec.lognormal(-0.125, 0.5),
    DistributionSpec.deterministic(1.0),
    DistributionSpec.deterministic(0.5),
]


def random_config(rng, index):
    n = int(rng.integers(1, 9))
    law = lambda: LAWS[int(rng.integers(len(LAWS)))]  # noqa: E731
    if rng.random() < 0.3:
        edge_law = Cycle(tuple(law() for _ in range(int(rng.integers(2, 4)))))
    else:
        edge_law = Homogeneous(law())
    return RingConfig(
        n=n,
        direction="bi" if rng.random() < 0.5 else "uni",
        lambda_s=float(rng.choice([0.5, 1.0, 3.0])),
        source_gen=law(),
        edge_law=edge_law,
        horizon=float(rng.uniform(50, 300)),
        seed=index,
        tracked=tuple(range(n)),
    )


def test_criterion_9_engine_invariants(acceptance_log):
    rng = np.random.default_rng(99)
    failures, acceptances, tied = [], 0, 0
    for index in range(100):
        cfg = random_config(rng, index)
        topo = build_ring(cfg)
        checker = InvariantChecker(topo)
        try:
            ref = simulate(cfg, engine="python", sinks=[checker])
            again = simulate(cfg, engine="python")
            fast = simulate(cfg)
        except AssertionError as exc:
            failures.append(f"config {index}: {exc}")
            continue
        acceptances += checker.acceptances
        tied += any(s.kind == "deterministic" for s in [cfg.source_gen, *(e.spec for e in topo.edges)])
        for other, label in ((again, "rerun"), (fast, "compiled kernel")):
            same = other.summary == ref.summary and all(
                other.ages.records(v) == ref.ages.records(v) and other.ages.integral(v) == ref.ages.integral(v)
                for v in cfg.tracked
            )
            if not same:
                failures.append(f"config {index}: {label} differs")
    ok = not failures
    detail = f"100 configs, {acceptances} checked acceptances, {tied} with a deterministic law"
    acceptance_log.record(9, "engine invariants and determinism", ok, detail + ("" if ok else f"; {failures[:3]}"))
    assert ok, failures
