"""Replica sweeps and the analyses built on them.

A sweep runs independent replicas for every (n, trial) pair; replica streams
are keyed by (master seed, n, trial, process id), so results do not depend on
scheduling or worker count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import seeding
from .engine import simulate
from .errors import ConfigError, DomainError, RingAgeError, UndefinedStatistic
from .instrument import long_path_fraction, mean_hops, peak_valley_stats, window_fraction
from .network import Homogeneous, Jitter, RingConfig, upstream_window
from .renewal import DistributionSpec, empirical_counts, expected_count_bounds, moments, sample_block

log = logging.getLogger(__name__)


# --- window-size rules ------------------------------------------------------


@dataclass(frozen=True)
class KRule:
    """k(n) = mult * ceil(coef * n**exponent)."""

    exponent: float
    coef: float = 1.0
    mult: int = 1

    def k(self, n: int) -> int:
        # round before ceil so exact powers (sqrt(64) = 8) are not bumped up
        return self.mult * math.ceil(round(self.coef * n**self.exponent, 9))

    @property
    def label(self) -> str:
        inner = f"n^{self.exponent:g}" if self.coef == 1 else f"{self.coef:g}*n^{self.exponent:g}"
        return f"ceil({inner})" if self.mult == 1 else f"{self.mult}*ceil({inner})"

    @classmethod
    def parse(cls, text: str) -> KRule:
        """Parse ``[m*]ceil([c*]n^p)`` or a bare exponent ``p``."""
        s = text.replace(" ", "")
        try:
            if "ceil(" not in s:
                return cls(float(s))
            mult = 1
            if not s.startswith("ceil("):
                head, s = s.split("*", 1)
                mult = int(head)
            inner = s[len("ceil(") : -1]
            coef = 1.0
            if "*" in inner:
                head, inner = inner.split("*", 1)
                coef = float(head)
            if not inner.startswith("n^"):
                raise ValueError
            return cls(float(inner[2:]), coef, mult)
        except ValueError:
            raise ConfigError(f"cannot parse window rule {text!r}") from None


def default_rules(c: float = 2.0) -> tuple[KRule, ...]:
    return (KRule(0.25), KRule(0.5), KRule(0.5, coef=c), KRule(0.75))


def analytic_window_wait(n: int, k: int, lambda_s: float, direction: str) -> float:
    """Mean wait for the next source delivery into a window of k (uni) or 2k (bi) nodes."""
    return n / ((2 if direction == "bi" else 1) * k * lambda_s)


# --- baseline model variants ------------------------------------------------

VARIANTS = ("exponential", "gamma", "uniform", "hetero", "deterministic")


def baseline_config(variant: str = "exponential", direction: str = "uni", n: int = 16, seed: int = 0) -> RingConfig:
    """Exponential(1) source, lambda_s = 1, and one of the standard edge laws."""
    edges = {
        "exponential": Homogeneous(DistributionSpec.exponential(1.0)),
        "gamma": Homogeneous(DistributionSpec.gamma(2.0, 0.5)),
        "uniform": Homogeneous(DistributionSpec.uniform(0.5, 1.5)),
        "hetero": Jitter(DistributionSpec.exponential(1.0), "rate", 0.5, 2.0),
        "deterministic": Homogeneous(DistributionSpec.deterministic(1.0)),
    }
    if variant not in edges:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return RingConfig(n=n, direction=direction, edge_law=edges[variant], seed=seed)


# --- sweeps -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    """``horizon_multiple`` set: horizon = multiple * sqrt(n) / base.rate_scale();
    unset: every replica uses ``base.horizon``."""

    base: RingConfig
    ns: tuple[int, ...]
    trials: int = 8
    horizon_multiple: float | None = 1200.0
    master_seed: int | None = None
    tracked: tuple[int, ...] | None = None
    rules: tuple[KRule, ...] = field(default_factory=default_rules)
    engine: str = "fast"

    def __post_init__(self) -> None:
        ns = tuple(int(n) for n in self.ns)
        if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError(f"n values must be positive and strictly increasing, got {self.ns}")
        object.__setattr__(self, "ns", ns)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.horizon_multiple is not None and not self.horizon_multiple > 0:
            raise ConfigError("horizon_multiple must be positive")
        seeding.check_seed(self.seed)

    @property
    def seed(self) -> int:
        return self.base.seed if self.master_seed is None else self.master_seed

    def horizon(self, n: int) -> float:
        if self.horizon_multiple is None:
            return self.base.horizon
        return self.horizon_multiple * math.sqrt(n) / self.base.rate_scale()

    def replica_config(self, n: int, trial: int) -> RingConfig:
        tracked = None if self.tracked is None else tuple(t % n for t in self.tracked)
        return self.base.with_(
            n=n, horizon=self.horizon(n), seed=self.seed, stream_key=(n, trial), tracked=tracked
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "base": self.base.to_dict(),
            "ns": list(self.ns),
            "trials": self.trials,
            "horizon_multiple": self.horizon_multiple,
            "master_seed": self.seed,
            "tracked": None if self.tracked is None else list(self.tracked),
            "rules": [r.label for r in self.rules],
            "engine": self.engine,
        }


class ReplicaError(RingAgeError):
    pass


def _nan_if_undefined(fn, *args, **kwargs) -> float:
    try:
        return fn(*args, **kwargs)
    except UndefinedStatistic:
        return math.nan


def summarize_replica(result, rules: Sequence[KRule]) -> dict[int, dict[str, Any]]:
    """Per tracked node: ages, peak/valley/transit means, window statistics."""
    cfg, topo = result.config, result.topology
    out: dict[int, dict[str, Any]] = {}
    for node in cfg.tracked:
        acc = result.ages
        records = acc.records(node)
        row: dict[str, Any] = {
            "time_average_age": _nan_if_undefined(acc.time_average_age, node),
            "acceptances": acc.acceptances(node),
        }
        try:
            row.update(asdict(peak_valley_stats(records)))
        except UndefinedStatistic:
            row.update(mean_peak=math.nan, mean_valley=math.nan, mean_transit=math.nan, mean_inter_arrival=math.nan)
        gossip = [r for r in records if not r.from_source]
        row["mean_hops"] = _nan_if_undefined(mean_hops, records)
        row["long_path_fraction"] = (
            _nan_if_undefined(long_path_fraction, records, cfg.n, cfg.direction) if cfg.direction == "bi" else None
        )
        accept_times = [r.accept_time for r in records]
        windows = {}
        for rule in rules:
            k = rule.k(cfg.n)
            if not 1 <= k <= topo.max_window():
                windows[rule.label] = None
                continue
            waits = result.deliveries.window_waits(accept_times, upstream_window(topo, node, k)) if accept_times else []
            inside = [r.inter_arrival for r in gossip if abs(r.entry_offset) <= k and r.inter_arrival is not None]
            windows[rule.label] = {
                "k": k,
                "fraction": _nan_if_undefined(window_fraction, records, k, include_source=False),
                "mean_wait": float(np.mean(waits)) if len(waits) else math.nan,
                "n_waits": len(waits),
                "analytic_wait": analytic_window_wait(cfg.n, k, cfg.lambda_s, cfg.direction),
                "mean_inter_arrival_inside": float(np.mean(inside)) if inside else math.nan,
            }
        row["windows"] = windows
        out[node] = row
    return out


def run_replica(config: RingConfig, rules: Sequence[KRule] = (), engine: str = "fast") -> dict[str, Any]:
    result = simulate(config, engine=engine)
    return {
        "n": config.n,
        "trial": config.stream_key[-1] if config.stream_key else 0,
        "seed": config.seed,
        "horizon": config.horizon,
        "events": result.summary.events,
        "nodes": summarize_replica(result, rules),
    }


def _replica_task(args):
    config, rules, engine = args
    try:
        return run_replica(config, rules, engine)
    except Exception as exc:  # re-raised with the replica identity attached
        raise ReplicaError(
            f"replica n={config.n} trial={config.stream_key[-1] if config.stream_key else 0} "
            f"seed={config.seed} failed: {exc!r}"
        ) from exc


def default_jobs() -> int:
    env = os.environ.get("RINGAGE_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"RINGAGE_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise ConfigError("RINGAGE_JOBS must be >= 1")
        return jobs
    return os.cpu_count() or 1


@dataclass
class SweepResult:
    plan: SweepPlan
    replicas: dict[tuple[int, int], dict[str, Any]]

    def node(self) -> int:
        first = next(iter(self.replicas.values()))
        return next(iter(first["nodes"]))

    def values(self, n: int, key: str, node: int | None = None) -> np.ndarray:
        node = self.node() if node is None else node
        return np.array(
            [self.replicas[(n, t)]["nodes"][node][key] for t in range(self.plan.trials)], dtype=float
        )

    def window_values(self, n: int, label: str, key: str, node: int | None = None) -> np.ndarray:
        node = self.node() if node is None else node
        vals = []
        for t in range(self.plan.trials):
            w = self.replicas[(n, t)]["nodes"][node]["windows"].get(label)
            vals.append(math.nan if w is None else w[key])
        return np.array(vals, dtype=float)

    def summary(self, node: int | None = None) -> list[dict[str, Any]]:
        keys = ("time_average_age", "acceptances", "mean_peak", "mean_valley", "mean_transit",
                "mean_inter_arrival", "mean_hops")
        rows = []
        for n in self.plan.ns:
            row: dict[str, Any] = {"n": n}
            for key in keys:
                row[key], row[key + "_se"] = mean_se(self.values(n, key, node))
            if self.plan.base.direction == "bi":
                row["long_path_fraction"], row["long_path_fraction_se"] = mean_se(
                    self.values(n, "long_path_fraction", node)
                )
            rows.append(row)
        return rows


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    """Mean and across-trial standard error (nan when undefined)."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return math.nan, math.nan
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return float(arr.mean()), se


def run_sweep(plan: SweepPlan, jobs: int | None = None) -> SweepResult:
    """Run every (n, trial) replica, in parallel when ``jobs > 1``."""
    jobs = default_jobs() if jobs is None else jobs
    tasks = [
        (plan.replica_config(n, trial), plan.rules, plan.engine)
        for n in plan.ns
        for trial in range(plan.trials)
    ]
    replicas: dict[tuple[int, int], dict[str, Any]] = {}
    if jobs <= 1 or len(tasks) == 1:
        results = map(_replica_task, tasks)
        for rep in results:
            replicas[(rep["n"], rep["trial"])] = rep
            log.info("replica n=%d trial=%d done", rep["n"], rep["trial"])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rep in pool.map(_replica_task, tasks):
                replicas[(rep["n"], rep["trial"])] = rep
                log.info("replica n=%d trial=%d done", rep["n"], rep["trial"])
    ordered = {key: replicas[key] for key in sorted(replicas)}
    return SweepResult(plan, ordered)


# --- scaling fits -----------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    ns: tuple[float, ...]
    means: tuple[float, ...]
    stderrs: tuple[float, ...] | None
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def fit_loglog(ns: Sequence[float], means: Sequence[float], stderrs: Sequence[float] | None = None) -> ScalingFit:
    """Least-squares line through (log n, log mean)."""
    x = np.asarray(ns, dtype=float)
    y = np.asarray(means, dtype=float)
    if x.size != y.size:
        raise DomainError("ns and means must have equal length")
    if x.size < 3:
        raise DomainError(f"need at least 3 points, got {x.size}")
    if np.any(x <= 0) or np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise DomainError("ns and means must be positive")
    lx, ly = np.log(x), np.log(y)
    xc = lx - lx.mean()
    slope = float(np.dot(xc, ly - ly.mean()) / np.dot(xc, xc))
    intercept = float(ly.mean() - slope * lx.mean())
    ss_res = float(np.sum((ly - (intercept + slope * lx)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return ScalingFit(
        tuple(x.tolist()), tuple(y.tolist()), None if stderrs is None else tuple(float(s) for s in stderrs),
        slope, intercept, r2,
    )


def age_scaling(result: SweepResult, node: int | None = None) -> ScalingFit:
    rows = result.summary(node)
    return fit_loglog(
        [r["n"] for r in rows], [r["time_average_age"] for r in rows], [r["time_average_age_se"] for r in rows]
    )


# --- spatial regimes --------------------------------------------------------


def regime_study(result: SweepResult, rules: Sequence[KRule] | None = None, node: int | None = None) -> list[dict[str, Any]]:
    """One row per (rule, n): window fraction, measured and analytic window wait,
    and the mean inter-arrival of updates that entered inside the window."""
    rules = result.plan.rules if rules is None else rules
    plan = result.plan
    rows = []
    for rule in rules:
        for n in plan.ns:
            k = rule.k(n)
            max_k = n - 1 if plan.base.direction == "uni" else (n - 1) // 2
            if not 1 <= k <= max_k:
                raise DomainError(f"rule {rule.label} gives k={k} outside [1, {max_k}] at n={n}")
            if rule not in plan.rules:
                raise DomainError(f"rule {rule.label} was not collected by this sweep")
            frac, frac_se = mean_se(result.window_values(n, rule.label, "fraction", node))
            wait, wait_se = mean_se(result.window_values(n, rule.label, "mean_wait", node))
            inside, inside_se = mean_se(result.window_values(n, rule.label, "mean_inter_arrival_inside", node))
            rows.append({
                "rule": rule.label,
                "n": n,
                "k": k,
                "window_fraction": frac,
                "window_fraction_se": frac_se,
                "mean_wait": wait,
                "mean_wait_se": wait_se,
                "analytic_wait": analytic_window_wait(n, k, plan.base.lambda_s, plan.base.direction),
                "mean_inter_arrival_inside": inside,
                "mean_inter_arrival_inside_se": inside_se,
            })
    return rows


# --- preemption -------------------------------------------------------------


def preemption_study(result: SweepResult, node: int | None = None) -> dict[str, Any]:
    """Long-path fractions and mean accepted hop counts across a bi-ring sweep."""
    if result.plan.base.direction != "bi":
        raise ConfigError("preemption study needs a bi-directional plan")
    rows = []
    for n in result.plan.ns:
        frac, frac_se = mean_se(result.values(n, "long_path_fraction", node))
        hops, hops_se = mean_se(result.values(n, "mean_hops", node))
        rows.append({"n": n, "long_path_fraction": frac, "long_path_fraction_se": frac_se,
                     "mean_hops": hops, "mean_hops_se": hops_se})
    fit = None
    if len(rows) >= 3 and all(r["mean_hops"] > 0 for r in rows):
        fit = fit_loglog([r["n"] for r in rows], [r["mean_hops"] for r in rows]).to_dict()
    return {"rows": rows, "hops_fit": fit}


def count_inversions(values: Sequence[float], tol: float = 0.0) -> tuple[int, float]:
    """Number of increases between consecutive values, and the largest one."""
    rises = [b - a for a, b in zip(values, values[1:]) if b - a > tol]
    return len(rises), max(rises, default=0.0)


# --- renewal bound verification ---------------------------------------------


@dataclass(frozen=True)
class TSampler:
    """Random horizon T: ``const`` (T = value), ``exponential`` (mean value),
    or ``sum`` of k i.i.d. draws from ``spec``."""

    kind: str
    value: float = 0.0
    k: int = 0
    spec: DistributionSpec | None = None

    def __post_init__(self) -> None:
        if self.kind == "const":
            if not self.value >= 0:
                raise ConfigError("constant T must be nonnegative")
        elif self.kind == "exponential":
            if not self.value > 0:
                raise ConfigError("exponential T needs a positive mean")
        elif self.kind == "sum":
            if self.k < 1 or self.spec is None:
                raise ConfigError("sum sampler needs k >= 1 and a distribution")
        else:
            raise ConfigError(f"unknown T sampler {self.kind!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "const":
            return np.full(size, float(self.value))
        if self.kind == "exponential":
            return rng.exponential(self.value, size)
        total = np.zeros(size)
        for _ in range(self.k):
            total += sample_block(self.spec, rng, size)
        return total

    def __str__(self) -> str:
        if self.kind == "const":
            return f"const:{self.value:g}"
        if self.kind == "exponential":
            return f"exp:{self.value:g}"
        return f"sum:{self.k}:{self.spec}"

    @classmethod
    def parse(cls, text: str) -> TSampler:
        """``const:10``, ``exp:10`` or ``sum:100:exponential:1``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "const":
                return cls("const", float(rest))
            if kind in ("exp", "exponential"):
                return cls("exponential", float(rest))
            if kind == "sum":
                k, _, spec = rest.partition(":")
                return cls("sum", k=int(k), spec=DistributionSpec.parse(spec))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"cannot parse T sampler {text!r}") from None
        raise ConfigError(f"unknown T sampler {text!r}")


@dataclass(frozen=True)
class Lemma1Report:
    spec: str
    sampler: str
    trials: int
    mean_t: float
    var_t: float
    mean_count: float
    se_count: float
    var_count: float
    lower: float
    upper: float
    inside: bool
    cond_var_term: float
    mean_var_term: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def lemma1_check(spec: DistributionSpec, sampler: TSampler, trials: int = 100_000, seed: int = 0) -> Lemma1Report:
    """Monte Carlo E[N(T)] against the renewal sandwich averaged over T.

    ``inside`` is true when the estimate lies within (lower - 3 se, upper + 3 se).
    The two variance terms approximate E[Var(N | T)] ~ var/mu^3 E[T] and
    Var(E[N | T]) ~ Var(T)/mu^2.
    """
    if trials < 2:
        raise ConfigError("need at least 2 trials")
    rng = seeding.derive_rng(seed, seeding.MONTE_CARLO)
    t = sampler.sample(rng, trials)
    counts = empirical_counts(spec, t, rng)
    mu, var = moments(spec)
    mean_t = float(t.mean())
    lower, upper = expected_count_bounds(spec, mean_t)
    mean_count = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(trials))
    return Lemma1Report(
        spec=str(spec),
        sampler=str(sampler),
        trials=trials,
        mean_t=mean_t,
        var_t=float(t.var(ddof=1)),
        mean_count=mean_count,
        se_count=se,
        var_count=float(counts.var(ddof=1)),
        lower=lower,
        upper=upper,
        inside=bool(lower - 3 * se < mean_count < upper + 3 * se),
        cond_var_term=var / mu**3 * mean_t,
        mean_var_term=float(t.var(ddof=1)) / mu**2,
    )
