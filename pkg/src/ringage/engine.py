"""Discrete-event engine for push gossip on a ring.

Process ids: 0 is source generation, ``1 + j`` is source delivery to node
``j``, ``1 + n + e`` is edge ``e`` of the topology. Events are ordered by
(time, priority class, enqueue sequence) with classes
SourceGenerate < SourceDeliver < EdgeFire.

:func:`simulate` is the entry point used by experiments; it runs either this
module's reference engine or the compiled kernel in :mod:`ringage._kernel`,
which produce bit-identical results for the same configuration.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from . import seeding
from .errors import ConfigError
from .instrument import AgeAccumulator, DeliveryLog, Sink
from .network import RingConfig, RingTopology, build_ring
from .renewal import DistributionSpec, RenewalStream

SOURCE_GENERATE = 0
SOURCE_DELIVER = 1
EDGE_FIRE = 2
KIND_NAMES = ("SourceGenerate", "SourceDeliver", "EdgeFire")


@dataclass(frozen=True)
class Event:
    time: float
    kind: int
    src: int
    dst: int
    seq: int
    accepted: bool
    version: int
    hops: int


@dataclass
class NodeState:
    """Held version and its provenance. ``entry_node == -1`` means the node
    has never accepted anything."""

    version: int = 0
    gen_time: float = 0.0
    entry_node: int = -1
    hops: int = -1
    accept_time: float = math.nan


@dataclass
class RunSummary:
    horizon: float
    events: dict[str, int]
    source_version: int
    final_ages: list[int]

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "events": dict(self.events),
            "source_version": self.source_version,
            "final_ages": list(self.final_ages),
        }


def process_streams(config: RingConfig, topology: RingTopology) -> list[RenewalStream]:
    specs = [config.source_gen]
    specs += [DistributionSpec.exponential(topology.delivery_rate)] * topology.n
    specs += [e.spec for e in topology.edges]
    return [
        RenewalStream(spec, seeding.derive_rng(config.seed, seeding.STREAMS, *config.stream_key, pid), pid)
        for pid, spec in enumerate(specs)
    ]


class TraceWriter:
    """CSV event trace: time, kind, src, dst, accepted, version, hops."""

    def __init__(self, fh: IO[str]) -> None:
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(["time", "kind", "src", "dst", "accepted", "version", "hops"])

    def write(self, ev: Event) -> None:
        self._writer.writerow([repr(ev.time), KIND_NAMES[ev.kind], ev.src, ev.dst, int(ev.accepted), ev.version, ev.hops])


class SimState:
    def __init__(self, config: RingConfig, sinks: Iterable[Sink] = (), trace: TraceWriter | None = None) -> None:
        self.config = config
        self.topology = build_ring(config)
        n = config.n
        self.clock = 0.0
        self.source_version = 0
        self.nodes = [NodeState() for _ in range(n)]
        self.streams = process_streams(config, self.topology)
        self.sinks = list(sinks)
        self.trace = trace
        self.counts = [0, 0, 0]
        self._gen_base = 0
        self._gen_times = [0.0]  # version 0 is "generated" at t = 0
        self._prune_at = 4 * n + 1024
        self._seq = 0
        self.queue: list[tuple[float, int, int, int]] = []
        for pid, stream in enumerate(self.streams):
            self._push(pid, stream.next_arrival)

    def _kind_of(self, pid: int) -> int:
        if pid == 0:
            return SOURCE_GENERATE
        return SOURCE_DELIVER if pid <= self.config.n else EDGE_FIRE

    def _push(self, pid: int, time: float) -> None:
        heapq.heappush(self.queue, (time, self._kind_of(pid), self._seq, pid))
        self._seq += 1

    def gen_time(self, version: int) -> float:
        return self._gen_times[version - self._gen_base]

    def age(self, node: int) -> int:
        return self.source_version - self.nodes[node].version

    def peek_time(self) -> float:
        return self.queue[0][0] if self.queue else math.inf

    def step(self) -> Event:
        time, kind, seq, pid = heapq.heappop(self.queue)
        self.clock = time
        n = self.config.n
        if kind == SOURCE_GENERATE:
            self.source_version += 1
            self._gen_times.append(time)
            if len(self._gen_times) > self._prune_at:
                self._prune()
            for sink in self.sinks:
                sink.on_source_generate(time)
            ev = Event(time, kind, -1, -1, seq, True, self.source_version, -1)
        elif kind == SOURCE_DELIVER:
            j = pid - 1
            self._adopt(j, self.source_version, self.gen_time(self.source_version), j, 0, True, time)
            for sink in self.sinks:
                sink.on_source_deliver(j, time)
            ev = Event(time, kind, -1, j, seq, True, self.source_version, 0)
        else:
            edge = self.topology.edges[pid - 1 - n]
            sender = self.nodes[edge.src]
            accepted = sender.version > self.nodes[edge.dst].version
            if accepted:
                self._adopt(edge.dst, sender.version, sender.gen_time, sender.entry_node, sender.hops + 1, False, time)
            ev = Event(time, kind, edge.src, edge.dst, seq, accepted, sender.version, sender.hops + 1)
        self.counts[kind] += 1
        self._push(pid, self.streams[pid].advance())
        if self.trace is not None:
            self.trace.write(ev)
        return ev

    def _adopt(self, node, version, gen_time, entry, hops, from_source, now) -> None:
        state = self.nodes[node]
        state.version = version
        state.gen_time = gen_time
        state.entry_node = entry
        state.hops = hops
        state.accept_time = now
        for sink in self.sinks:
            sink.on_acceptance(node, version, gen_time, entry, hops, from_source, now)

    def _prune(self) -> None:
        floor = min(s.version for s in self.nodes)
        drop = floor - self._gen_base
        if drop > 0:
            del self._gen_times[:drop]
            self._gen_base = floor
        self._prune_at = max(self._prune_at, 2 * len(self._gen_times))

    def summary(self, horizon: float) -> RunSummary:
        return RunSummary(
            horizon=horizon,
            events=dict(zip(KIND_NAMES, self.counts)),
            source_version=self.source_version,
            final_ages=[self.age(i) for i in range(self.config.n)],
        )


def init(config: RingConfig, sinks: Iterable[Sink] = (), trace: TraceWriter | None = None) -> SimState:
    return SimState(config, sinks, trace)


def step(state: SimState) -> Event:
    return state.step()


def run(state: SimState, horizon: float) -> RunSummary:
    """Process events up to and including time ``horizon``, then flush sinks."""
    while state.queue and state.queue[0][0] <= horizon:
        state.step()
    state.clock = max(state.clock, horizon)
    for sink in state.sinks:
        sink.finalize(horizon)
    return state.summary(horizon)


@dataclass
class RunResult:
    config: RingConfig
    topology: RingTopology
    summary: RunSummary
    ages: AgeAccumulator
    deliveries: DeliveryLog
    extra: dict = field(default_factory=dict)


def simulate(
    config: RingConfig,
    engine: str = "fast",
    sinks: Iterable[Sink] = (),
    trace: IO[str] | None = None,
    max_records: int | None = None,
) -> RunResult:
    """Run one replica to ``config.horizon`` and collect the standard instruments.

    Extra sinks and the event trace force the reference engine, since the
    compiled kernel only logs what the standard instruments need.
    """
    sinks = list(sinks)
    if engine not in ("fast", "python"):
        raise ConfigError(f"unknown engine {engine!r}")
    topology = build_ring(config)
    ages = AgeAccumulator(topology, config.tracked, max_records=max_records, seed=config.seed)
    deliveries = DeliveryLog(config.n)
    if engine == "fast" and not sinks and trace is None:
        from ._kernel import run_kernel

        summary = run_kernel(config, topology, ages, deliveries)
    else:
        state = SimState(config, [ages, deliveries, *sinks], TraceWriter(trace) if trace is not None else None)
        summary = run(state, config.horizon)
        deliveries.pending = np.array([s.next_arrival for s in state.streams[1 : config.n + 1]])
    return RunResult(config, topology, summary, ages, deliveries)
