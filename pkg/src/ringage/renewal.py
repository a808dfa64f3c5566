"""Inter-arrival laws, renewal streams and renewal-count bounds.

Every process in the ring model (source generation, source-to-node delivery,
edge gossip) is a renewal process whose inter-arrival law is described by a
:class:`DistributionSpec`. Samples are always drawn in fixed-size blocks so
that the pure-Python engine and the compiled kernel consume identical
per-stream sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DomainError

BLOCK_SIZE = 256

# Parameter names per kind, in canonical order.
KINDS: dict[str, tuple[str, ...]] = {
    "exponential": ("rate",),
    "gamma": ("shape", "scale"),
    "uniform": ("lo", "hi"),
    "deterministic": ("period",),
    "lognormal": ("mu_log", "sigma_log"),
}


@dataclass(frozen=True)
class DistributionSpec:
    """A finite-mean, finite-variance inter-arrival law.

    ``params`` holds the values in the canonical order given by ``KINDS``.
    Use the named constructors (``DistributionSpec.gamma(2, 0.5)``) or
    :meth:`from_dict` rather than building the tuple by hand.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        names = KINDS[self.kind]
        if len(self.params) != len(names):
            raise ConfigError(f"{self.kind} expects parameters {names}, got {self.params}")
        values = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", values)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError(f"{self.kind} parameters must be finite: {values}")
        p = dict(zip(names, values))
        if self.kind == "exponential" and p["rate"] <= 0:
            raise ConfigError("exponential requires rate > 0")
        if self.kind == "gamma" and (p["shape"] <= 0 or p["scale"] <= 0):
            raise ConfigError("gamma requires shape > 0 and scale > 0")
        if self.kind == "uniform" and not (0 <= p["lo"] < p["hi"]):
            raise ConfigError("uniform requires 0 <= lo < hi")
        if self.kind == "deterministic" and p["period"] <= 0:
            raise ConfigError("deterministic requires period > 0")
        if self.kind == "lognormal" and p["sigma_log"] <= 0:
            raise ConfigError("lognormal requires sigma_log > 0")

    @classmethod
    def exponential(cls, rate: float) -> DistributionSpec:
        return cls("exponential", (rate,))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> DistributionSpec:
        return cls("gamma", (shape, scale))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> DistributionSpec:
        return cls("uniform", (lo, hi))

    @classmethod
    def deterministic(cls, period: float) -> DistributionSpec:
        return cls("deterministic", (period,))

    @classmethod
    def lognormal(cls, mu_log: float, sigma_log: float) -> DistributionSpec:
        return cls("lognormal", (mu_log, sigma_log))

    def param(self, name: str) -> float:
        return self.params[KINDS[self.kind].index(name)]

    def with_param(self, name: str, value: float) -> DistributionSpec:
        names = KINDS[self.kind]
        if name not in names:
            raise ConfigError(f"{self.kind} has no parameter {name!r}")
        values = list(self.params)
        values[names.index(name)] = value
        return DistributionSpec(self.kind, tuple(values))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(zip(KINDS[self.kind], self.params))}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DistributionSpec:
        if not isinstance(data, Mapping) or "kind" not in data:
            raise ConfigError(f"distribution must be a mapping with a 'kind' field, got {data!r}")
        kind = data["kind"]
        if kind not in KINDS:
            raise ConfigError(f"unknown distribution kind {kind!r}")
        names = KINDS[kind]
        extra = set(data) - set(names) - {"kind"}
        if extra:
            raise ConfigError(f"unexpected fields for {kind}: {sorted(extra)}")
        try:
            return cls(kind, tuple(float(data[name]) for name in names))
        except KeyError as exc:
            raise ConfigError(f"{kind} is missing parameter {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"non-numeric parameter in {dict(data)!r}") from None

    @classmethod
    def parse(cls, text: str) -> DistributionSpec:
        """Parse the compact CLI form ``kind:p1,p2`` (e.g. ``gamma:2,0.5``)."""
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind not in KINDS:
            raise ConfigError(f"unknown distribution kind {kind!r} in {text!r}")
        try:
            values = tuple(float(v) for v in rest.split(",")) if rest else ()
        except ValueError:
            raise ConfigError(f"non-numeric parameter in {text!r}") from None
        return cls(kind, values)

    def __str__(self) -> str:
        return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.params)


def moments(spec: DistributionSpec) -> tuple[float, float]:
    """Closed-form (mean, variance) of the inter-arrival law."""
    k, p = spec.kind, spec.params
    if k == "exponential":
        return 1.0 / p[0], 1.0 / p[0] ** 2
    if k == "gamma":
        return p[0] * p[1], p[0] * p[1] ** 2
    if k == "uniform":
        return (p[0] + p[1]) / 2.0, (p[1] - p[0]) ** 2 / 12.0
    if k == "deterministic":
        return p[0], 0.0
    mu, s2 = p[0], p[1] ** 2
    return math.exp(mu + s2 / 2.0), math.expm1(s2) * math.exp(2.0 * mu + s2)


def _raw_draws(spec: DistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    k, p = spec.kind, spec.params
    if k == "exponential":
        return rng.exponential(1.0 / p[0], size)
    if k == "gamma":
        return rng.gamma(p[0], p[1], size)
    if k == "uniform":
        return rng.uniform(p[0], p[1], size)
    if k == "deterministic":
        return np.full(size, p[0])
    return rng.lognormal(p[0], p[1], size)


def sample_block(spec: DistributionSpec, rng: np.random.Generator, size: int = BLOCK_SIZE) -> np.ndarray:
    """Draw ``size`` strictly positive inter-arrival times.

    Zero draws are replaced in place by fresh draws, so event times along a
    stream are strictly increasing.
    """
    out = _raw_draws(spec, rng, size)
    bad = np.flatnonzero(out <= 0.0)
    while bad.size:
        out[bad] = _raw_draws(spec, rng, bad.size)
        bad = bad[out[bad] <= 0.0]
    return out


def sample_interarrival(spec: DistributionSpec, rng: np.random.Generator) -> float:
    return float(sample_block(spec, rng, 1)[0])


def expected_count_bounds(spec: DistributionSpec, x: float) -> tuple[float, float]:
    """Sandwich on E[N(x)] for an ordinary renewal process.

    The lower bound ``x/mu - 1`` comes from Wald's identity applied to the
    first passage past ``x``; the upper bound ``x/mu + (var + mu^2)/mu^2`` is
    Lorden's bound on the expected overshoot.
    """
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    mu, var = moments(spec)
    return x / mu - 1.0, x / mu + (var + mu * mu) / (mu * mu)


def empirical_count(spec: DistributionSpec, t: float, rng: np.random.Generator) -> int:
    """Number of renewals in [0, t] along one freshly started sample path."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    count = 0
    elapsed = 0.0
    while True:
        arrivals = elapsed + np.cumsum(sample_block(spec, rng))
        k = int(np.searchsorted(arrivals, t, side="right"))
        count += k
        if k < arrivals.size:
            return count
        elapsed = float(arrivals[-1])


def empirical_counts(spec: DistributionSpec, horizons: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`empirical_count`: one independent path per horizon."""
    horizons = np.asarray(horizons, dtype=float)
    if np.any(horizons < 0):
        raise DomainError("horizons must be nonnegative")
    counts = np.zeros(horizons.shape, dtype=np.int64)
    elapsed = np.zeros(horizons.shape)
    active = np.flatnonzero(horizons >= 0)
    while active.size:
        elapsed[active] += sample_block(spec, rng, active.size)
        hit = elapsed[active] <= horizons[active]
        counts[active[hit]] += 1
        active = active[hit]
    return counts


@dataclass
class RenewalStream:
    """One renewal process with its own generator.

    ``next_arrival`` is the time of the pending arrival; :meth:`advance`
    moves it forward by one inter-arrival draw. The stream starts as an
    ordinary renewal process at time 0.
    """

    spec: DistributionSpec
    rng: np.random.Generator
    stream_id: int = 0
    next_arrival: float = field(init=False)
    _block: np.ndarray = field(init=False, repr=False)
    _pos: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._block = sample_block(self.spec, self.rng)
        self._pos = 0
        self.next_arrival = self.draw()

    def draw(self) -> float:
        if self._pos == self._block.size:
            self._block = sample_block(self.spec, self.rng)
            self._pos = 0
        value = float(self._block[self._pos])
        self._pos += 1
        return value

    def advance(self) -> float:
        self.next_arrival += self.draw()
        return self.next_arrival
