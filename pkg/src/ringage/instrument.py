"""Sample-path observables: age integrals, transit records and window statistics.

The engine talks to instruments through the :class:`Sink` callbacks. Both the
pure-Python engine (live) and the compiled kernel (by replaying its logs)
drive the same sinks, so every statistic has one implementation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from . import seeding
from .errors import DomainError, InsufficientData, UndefinedStatistic
from .network import RingTopology


class Sink:
    """No-op base for engine observers."""

    def on_source_generate(self, now: float) -> None:
        pass

    def on_source_deliver(self, node: int, now: float) -> None:
        pass

    def on_acceptance(self, node, version, gen_time, entry, hops, from_source, now):
        pass

    def finalize(self, horizon: float) -> None:
        pass


@dataclass(frozen=True)
class TransitRecord:
    node: int
    version: int
    transit: float
    inter_arrival: float | None
    entry_offset: int
    hops: int
    from_source: bool
    peak_age: int
    valley_age: int
    gen_time: float
    accept_time: float


RECORD_COLUMNS = ("node", "version", "transit", "inter_arrival", "entry_offset", "hops", "from_source", "peak", "valley")


def write_records_csv(records: Iterable[TransitRecord], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for r in records:
        writer.writerow([
            r.node,
            r.version,
            repr(r.transit),
            "" if r.inter_arrival is None else repr(r.inter_arrival),
            r.entry_offset,
            r.hops,
            int(r.from_source),
            r.peak_age,
            r.valley_age,
        ])


class RunningStats:
    """Welford mean/variance."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan


@dataclass
class _Track:
    version: int = 0
    integral: float = 0.0
    start: float | None = None
    last_time: float = 0.0
    last_accept: float | None = None
    seen: int = 0
    records: list[TransitRecord] = field(default_factory=list)
    stats: dict[str, RunningStats] = field(
        default_factory=lambda: {k: RunningStats() for k in ("peak", "valley", "transit", "inter_arrival")}
    )


class AgeAccumulator(Sink):
    """Time-weighted version age and transit records for tracked nodes.

    Observation of a node starts at its first acceptance; age before that is
    not integrated. When ``max_records`` is set, records beyond it are kept
    as a uniform reservoir sample while the running means stay exact.
    """

    def __init__(
        self,
        topology: RingTopology,
        tracked: Iterable[int],
        max_records: int | None = None,
        seed: int = 0,
    ) -> None:
        self.topology = topology
        self.tracks = {int(node): _Track() for node in tracked}
        self.source_version = 0
        self.max_records = max_records
        self.clock = 0.0
        self._reservoir_rng = seeding.derive_rng(seed, seeding.RESERVOIR) if max_records else None

    def _advance(self, track: _Track, now: float) -> None:
        if track.start is not None:
            track.integral += (self.source_version - track.version) * (now - track.last_time)
            track.last_time = now

    def age(self, node: int) -> int:
        return self.source_version - self.tracks[node].version

    def on_source_generate(self, now: float) -> None:
        for track in self.tracks.values():
            self._advance(track, now)
        self.source_version += 1
        self.clock = now

    def on_acceptance(self, node, version, gen_time, entry, hops, from_source, now) -> TransitRecord | None:
        track = self.tracks.get(node)
        if track is None:
            return None
        self.clock = now
        peak = self.source_version - track.version
        valley = self.source_version - version
        if track.start is None:
            track.start = now
            track.last_time = now
            inter = None
        else:
            self._advance(track, now)
            inter = now - track.last_accept
        track.version = version
        track.last_accept = now
        record = TransitRecord(
            node=node,
            version=version,
            transit=now - gen_time,
            inter_arrival=inter,
            entry_offset=0 if from_source else self.topology.entry_offset(entry, node),
            hops=hops,
            from_source=bool(from_source),
            peak_age=peak,
            valley_age=valley,
            gen_time=gen_time,
            accept_time=now,
        )
        self._keep(track, record)
        return record

    def _keep(self, track: _Track, record: TransitRecord) -> None:
        s = track.stats
        s["peak"].push(record.peak_age)
        s["valley"].push(record.valley_age)
        s["transit"].push(record.transit)
        if record.inter_arrival is not None:
            s["inter_arrival"].push(record.inter_arrival)
        track.seen += 1
        if self.max_records is None or len(track.records) < self.max_records:
            track.records.append(record)
            return
        j = int(self._reservoir_rng.integers(track.seen))
        if j < self.max_records:
            track.records[j] = record

    def finalize(self, horizon: float) -> None:
        for track in self.tracks.values():
            self._advance(track, horizon)
        self.clock = horizon

    def records(self, node: int) -> list[TransitRecord]:
        return self.tracks[node].records

    def acceptances(self, node: int) -> int:
        return self.tracks[node].seen

    def integral(self, node: int) -> float:
        return self.tracks[node].integral

    def time_average_age(self, node: int) -> float:
        track = self.tracks[node]
        if track.start is None:
            raise UndefinedStatistic(f"node {node} never accepted an update")
        duration = track.last_time - track.start
        if duration <= 0:
            raise UndefinedStatistic(f"node {node} observed for zero duration")
        return track.integral / duration

    def running_means(self, node: int) -> dict[str, float]:
        return {k: (s.mean if s.count else math.nan) for k, s in self.tracks[node].stats.items()}


def time_average_age(acc: AgeAccumulator, node: int) -> float:
    return acc.time_average_age(node)


class DeliveryLog(Sink):
    """Every source-to-node delivery, plus each node's first delivery after
    the horizon (filled in by the engine) so window waits are never censored."""

    def __init__(self, n: int) -> None:
        self.n = n
        self._times: list[float] = []
        self._nodes: list[int] = []
        self.pending = np.full(n, math.inf)

    def on_source_deliver(self, node: int, now: float) -> None:
        self._times.append(now)
        self._nodes.append(node)

    def set_arrays(self, times: np.ndarray, nodes: np.ndarray, pending: np.ndarray) -> None:
        self._times = list(times)
        self._nodes = list(nodes)
        self.pending = np.asarray(pending, dtype=float)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times, dtype=float)

    @property
    def nodes(self) -> np.ndarray:
        return np.asarray(self._nodes, dtype=np.int64)

    def window_waits(self, accept_times: Sequence[float], window: Iterable[int]) -> np.ndarray:
        """Time from each acceptance until the next delivery into ``window``."""
        members = np.zeros(self.n, dtype=bool)
        members[list(window)] = True
        if not members.any():
            raise DomainError("empty window")
        arrivals = self.times[members[self.nodes]]
        arrivals = np.append(arrivals, self.pending[members].min())
        accept_times = np.asarray(accept_times, dtype=float)
        idx = np.searchsorted(arrivals, accept_times, side="right")
        return arrivals[idx] - accept_times


# --- record statistics ------------------------------------------------------


def window_fraction(records: Sequence[TransitRecord], k: int, include_source: bool = True) -> float:
    """Share of records whose entry node lies within ``k`` hops of the tracked node.

    Source-direct records have offset 0 and so sit inside every window; pass
    ``include_source=False`` to restrict to gossip-delivered updates.
    """
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    pool = [r for r in records if include_source or not r.from_source]
    if not pool:
        raise UndefinedStatistic("no records to compute a window fraction from")
    return sum(1 for r in pool if abs(r.entry_offset) <= k) / len(pool)


def long_path_fraction(records: Sequence[TransitRecord], n: int, direction: str) -> float:
    """Share of gossip acceptances that travelled more than n/2 hops (bi rings only)."""
    if direction != "bi":
        raise DomainError("long paths are only defined on bi-directional rings")
    gossip = [r for r in records if not r.from_source]
    if not gossip:
        raise UndefinedStatistic("no gossip-delivered records")
    return sum(1 for r in gossip if r.hops > n / 2) / len(gossip)


def mean_hops(records: Sequence[TransitRecord]) -> float:
    gossip = [r.hops for r in records if not r.from_source]
    if not gossip:
        raise UndefinedStatistic("no gossip-delivered records")
    return float(np.mean(gossip))


@dataclass(frozen=True)
class PeakValley:
    mean_peak: float
    mean_valley: float
    mean_transit: float
    mean_inter_arrival: float


def peak_valley_stats(records: Sequence[TransitRecord]) -> PeakValley:
    if len(records) < 2:
        raise InsufficientData(f"need at least 2 records, got {len(records)}")
    inter = [r.inter_arrival for r in records if r.inter_arrival is not None]
    return PeakValley(
        mean_peak=float(np.mean([r.peak_age for r in records])),
        mean_valley=float(np.mean([r.valley_age for r in records])),
        mean_transit=float(np.mean([r.transit for r in records])),
        mean_inter_arrival=float(np.mean(inter)) if inter else math.nan,
    )
