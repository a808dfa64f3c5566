"""Ring topologies, per-edge law assignment and spatial windows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from . import seeding
from .errors import ConfigError, DomainError
from .renewal import KINDS, DistributionSpec, moments

DIRECTIONS = ("uni", "bi")
BURN_IN_POLICIES = ("first_acceptance",)


# --- edge law assignment rules ---------------------------------------------


@dataclass(frozen=True)
class Homogeneous:
    spec: DistributionSpec

    def spec_for(self, index: int, src: int, dst: int, seed: int) -> DistributionSpec:
        return self.spec

    def to_dict(self) -> dict[str, Any]:
        return self.spec.to_dict()

    def max_mean(self) -> float:
        return moments(self.spec)[0]


@dataclass(frozen=True)
class Cycle:
    """Edge ``e`` gets ``specs[e % len(specs)]``."""

    specs: tuple[DistributionSpec, ...]

    def __post_init__(self) -> None:
        if not self.specs:
            raise ConfigError("cycle rule needs at least one distribution")

    def spec_for(self, index: int, src: int, dst: int, seed: int) -> DistributionSpec:
        return self.specs[index % len(self.specs)]

    def to_dict(self) -> dict[str, Any]:
        return {"rule": "cycle", "specs": [s.to_dict() for s in self.specs]}

    def max_mean(self) -> float:
        return max(moments(s)[0] for s in self.specs)


@dataclass(frozen=True)
class Jitter:
    """Per-edge parameter jitter.

    Edge (src, dst) takes ``base`` with ``param`` replaced by a uniform draw
    from [lo, hi]. The draw depends only on (seed, src, dst).
    """

    base: DistributionSpec
    param: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.param not in KINDS[self.base.kind]:
            raise ConfigError(f"{self.base.kind} has no parameter {self.param!r}")
        if not (self.lo <= self.hi):
            raise ConfigError(f"jitter interval must satisfy lo <= hi, got [{self.lo}, {self.hi}]")
        # both endpoints must give a valid law
        self.base.with_param(self.param, self.lo)
        self.base.with_param(self.param, self.hi)

    def spec_for(self, index: int, src: int, dst: int, seed: int) -> DistributionSpec:
        rng = seeding.derive_rng(seed, seeding.EDGE_JITTER, src, dst)
        return self.base.with_param(self.param, float(rng.uniform(self.lo, self.hi)))

    def to_dict(self) -> dict[str, Any]:
        return {"rule": "jitter", "base": self.base.to_dict(), "param": self.param, "lo": self.lo, "hi": self.hi}

    def max_mean(self) -> float:
        return max(moments(self.base.with_param(self.param, v))[0] for v in (self.lo, self.hi))


EdgeLaw = Homogeneous | Cycle | Jitter


def edge_law_from_dict(data: Mapping[str, Any]) -> EdgeLaw:
    if not isinstance(data, Mapping):
        raise ConfigError(f"edges section must be a mapping, got {data!r}")
    rule = data.get("rule")
    if rule is None:
        return Homogeneous(DistributionSpec.from_dict(data))
    if rule == "cycle":
        return Cycle(tuple(DistributionSpec.from_dict(s) for s in data.get("specs", ())))
    if rule == "jitter":
        try:
            return Jitter(
                DistributionSpec.from_dict(data["base"]),
                str(data["param"]),
                float(data["lo"]),
                float(data["hi"]),
            )
        except KeyError as exc:
            raise ConfigError(f"jitter rule is missing {exc.args[0]!r}") from None
    raise ConfigError(f"unknown edge rule {rule!r}")


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class RingConfig:
    """Full description of one simulation replica.

    ``stream_key`` namespaces the random streams of a replica under ``seed``;
    sweeps set it to ``(n, trial)`` so replicas never share a stream.
    """

    n: int
    direction: str = "uni"
    lambda_s: float = 1.0
    source_gen: DistributionSpec = field(default_factory=lambda: DistributionSpec.exponential(1.0))
    edge_law: EdgeLaw = field(default_factory=lambda: Homogeneous(DistributionSpec.exponential(1.0)))
    horizon: float = 1000.0
    seed: int = 0
    burn_in: str = "first_acceptance"
    tracked: tuple[int, ...] | None = None
    stream_key: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not (self.lambda_s > 0 and math.isfinite(self.lambda_s)):
            raise ConfigError(f"lambda_s must be positive and finite, got {self.lambda_s}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError(f"horizon must be positive and finite, got {self.horizon}")
        if self.burn_in not in BURN_IN_POLICIES:
            raise ConfigError(f"burn_in must be one of {BURN_IN_POLICIES}, got {self.burn_in!r}")
        seeding.check_seed(self.seed)
        if self.tracked is None:
            object.__setattr__(self, "tracked", (1 % self.n,))
        tracked = tuple(int(t) for t in self.tracked)
        if not tracked or any(not 0 <= t < self.n for t in tracked) or len(set(tracked)) != len(tracked):
            raise ConfigError(f"tracked nodes must be distinct indices in [0, {self.n}), got {self.tracked}")
        object.__setattr__(self, "tracked", tracked)
        object.__setattr__(self, "stream_key", tuple(int(k) for k in self.stream_key))

    def with_(self, **changes: Any) -> RingConfig:
        if "n" in changes and "tracked" not in changes:
            changes["tracked"] = None
        return replace(self, **changes)

    def rate_scale(self) -> float:
        """Slowest rate in the model; sets the time unit of horizon rules."""
        return min(self.lambda_s, 1.0 / moments(self.source_gen)[0], 1.0 / self.edge_law.max_mean())

    def to_dict(self) -> dict[str, Any]:
        return {
            "ring": {"n": self.n, "direction": self.direction, "lambda_s": self.lambda_s},
            "source": self.source_gen.to_dict(),
            "edges": self.edge_law.to_dict(),
            "sim": {"horizon": self.horizon, "seed": self.seed, "burn_in": self.burn_in},
            "track": {"nodes": list(self.tracked)},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RingConfig:
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(data) - {"ring", "source", "edges", "sim", "track"}
        if unknown:
            raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
        ring = data.get("ring", {})
        sim = data.get("sim", {})
        track = data.get("track", {})
        for name, section in (("ring", ring), ("sim", sim), ("track", track)):
            if not isinstance(section, Mapping):
                raise ConfigError(f"section {name!r} must be an object")
        kwargs: dict[str, Any] = {}
        if "n" not in ring:
            raise ConfigError("ring.n is required")
        kwargs["n"] = ring["n"]
        if "direction" in ring:
            kwargs["direction"] = ring["direction"]
        if "lambda_s" in ring:
            kwargs["lambda_s"] = _number(ring["lambda_s"], "ring.lambda_s")
        if "source" in data:
            kwargs["source_gen"] = DistributionSpec.from_dict(data["source"])
        if "edges" in data:
            kwargs["edge_law"] = edge_law_from_dict(data["edges"])
        if "horizon" in sim:
            kwargs["horizon"] = _number(sim["horizon"], "sim.horizon")
        if "seed" in sim:
            kwargs["seed"] = sim["seed"]
        if "burn_in" in sim:
            kwargs["burn_in"] = sim["burn_in"]
        if "nodes" in track:
            kwargs["tracked"] = tuple(track["nodes"])
        return cls(**kwargs)


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


# --- topology ---------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    spec: DistributionSpec


@dataclass(frozen=True)
class RingTopology:
    n: int
    direction: str
    edges: tuple[Edge, ...]
    delivery_rate: float

    def in_degree(self, node: int) -> int:
        return sum(1 for e in self.edges if e.dst == node)

    def hop_distance(self, a: int, b: int) -> int:
        """Shortest directed hop count from ``a`` to ``b``."""
        forward = (b - a) % self.n
        if self.direction == "uni":
            return forward
        return min(forward, self.n - forward) if forward else 0

    def entry_offset(self, entry: int, target: int) -> int:
        """Signed offset of ``entry`` relative to ``target``.

        Uni: upstream distance in [0, n). Bi: positive when ``entry`` lies on
        the increasing-index side, negative otherwise; the antipode of an even
        ring counts as positive.
        """
        if self.direction == "uni":
            return (target - entry) % self.n
        d = (entry - target) % self.n
        return d if d <= self.n // 2 else d - self.n

    def max_window(self) -> int:
        return self.n - 1 if self.direction == "uni" else (self.n - 1) // 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["src", "dst", "kind", "params", "mean", "variance"])
        for e in self.edges:
            mean, var = moments(e.spec)
            params = ";".join(f"{k}={v!r}" for k, v in zip(KINDS[e.spec.kind], e.spec.params))
            writer.writerow([e.src, e.dst, e.spec.kind, params, repr(mean), repr(var)])
        return buf.getvalue()


def build_ring(config: RingConfig) -> RingTopology:
    """Edges are ordered clockwise first (i -> i+1), then, for bi rings,
    anti-clockwise (i -> i-1). Self-loops (n = 1) are dropped."""
    n = config.n
    pairs = [(i, (i + 1) % n) for i in range(n)]
    if config.direction == "bi":
        pairs += [(i, (i - 1) % n) for i in range(n)]
    pairs = [(i, j) for i, j in pairs if i != j]
    edges = tuple(
        Edge(i, j, config.edge_law.spec_for(idx, i, j, config.seed)) for idx, (i, j) in enumerate(pairs)
    )
    return RingTopology(n, config.direction, edges, config.lambda_s / n)


def upstream_window(topology: RingTopology, target: int, k: int) -> set[int]:
    """Nodes whose updates can reach ``target`` within ``k`` hops.

    Uni: the ``k`` nearest upstream nodes. Bi: ``k`` on each side, ``2k`` total.
    """
    n = topology.n
    if not 0 <= target < n:
        raise DomainError(f"target {target} outside [0, {n})")
    if not 1 <= k <= topology.max_window():
        raise DomainError(f"k={k} outside [1, {topology.max_window()}] for a {topology.direction} ring of {n}")
    window = {(target - d) % n for d in range(1, k + 1)}
    if topology.direction == "bi":
        window |= {(target + d) % n for d in range(1, k + 1)}
    return window
