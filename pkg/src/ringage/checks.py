"""Runtime verification of engine invariants.

:class:`InvariantChecker` is a sink that keeps the full generation history
and checks every acceptance as it happens: nonnegative age, strictly fresher
adoption, causality, feasible hop counts, and the valley/peak identities
replayed against the generation history.
"""

from __future__ import annotations

import bisect

from .instrument import Sink
from .network import RingTopology


class InvariantViolation(AssertionError):
    pass


def feasible_walk(topology: RingTopology, src: int, dst: int, hops: int) -> bool:
    """Whether some directed walk of exactly ``hops`` edges leads from src to dst."""
    n = topology.n
    delta = (dst - src) % n
    if topology.direction == "uni":
        return hops >= 0 and hops % n == delta if n > 1 else hops == 0
    # each step is +1 or -1; net displacement s has |s| <= hops and s = hops (mod 2)
    return any((s - delta) % n == 0 for s in range(-hops, hops + 1, 2))


class InvariantChecker(Sink):
    def __init__(self, topology: RingTopology) -> None:
        self.topology = topology
        self.gen_times: list[float] = []
        self.held = [0] * topology.n
        self.held_gen = [0.0] * topology.n
        self.last_accept: list[float | None] = [None] * topology.n
        self.acceptances = 0

    @property
    def source_version(self) -> int:
        return len(self.gen_times)

    def gens_in(self, lo: float, hi: float) -> int:
        """Generations with time in (lo, hi]; negative when lo > hi."""
        return bisect.bisect_right(self.gen_times, hi) - bisect.bisect_right(self.gen_times, lo)

    def on_source_generate(self, now: float) -> None:
        if self.gen_times and now <= self.gen_times[-1]:
            raise InvariantViolation(f"generation times not increasing at {now}")
        self.gen_times.append(now)

    def on_acceptance(self, node, version, gen_time, entry, hops, from_source, now) -> None:
        self.acceptances += 1
        sv = self.source_version
        expected_gen = self.gen_times[version - 1] if version > 0 else 0.0
        if gen_time != expected_gen:
            raise InvariantViolation(f"gen_time {gen_time} does not match version {version}")
        peak = sv - self.held[node]
        valley = sv - version
        if valley < 0:
            raise InvariantViolation(f"negative age at node {node}: source {sv}, version {version}")
        if gen_time > now:
            raise InvariantViolation(f"acceptance at {now} precedes generation at {gen_time}")
        if from_source:
            if hops != 0 or entry != node:
                raise InvariantViolation(f"source delivery with hops={hops}, entry={entry} at node {node}")
            if version != sv:
                raise InvariantViolation("source delivered a stale version")
        else:
            if version <= self.held[node]:
                raise InvariantViolation(f"gossip adopted version {version} over {self.held[node]} at node {node}")
            if not gen_time > self.held_gen[node]:
                raise InvariantViolation("adopted version is not generated later than the replaced one")
            if hops < max(1, self.topology.hop_distance(entry, node)):
                raise InvariantViolation(f"hops {hops} shorter than distance {entry}->{node}")
            if not feasible_walk(self.topology, entry, node, hops):
                raise InvariantViolation(f"no walk of {hops} hops from {entry} to {node}")
        if valley != self.gens_in(gen_time, now):
            raise InvariantViolation(f"valley {valley} != generations during transit at node {node}")
        # peak - valley counts generations between the replaced and adopted versions
        if peak - valley != self.gens_in(self.held_gen[node], gen_time):
            raise InvariantViolation(f"peak identity fails at node {node}")
        self.held[node] = version
        self.held_gen[node] = gen_time
        self.last_accept[node] = now
