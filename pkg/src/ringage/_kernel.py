"""Compiled event loop used for sweeps.

Same process ids, event order and per-stream sample blocks as
:class:`ringage.engine.SimState`. The kernel only logs what the standard
instruments need (generation times, deliveries, acceptances at tracked
nodes); the logs are then replayed through the Python sinks.

The loop is resumable: it returns to Python whenever a stream's sample
block runs dry or a log buffer fills, and picks up where it stopped.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .engine import KIND_NAMES, RunSummary, process_streams
from .renewal import BLOCK_SIZE, moments, sample_block

DONE, REFILL, GROW = 0, 1, 2

# slots of the int64 scalar-state array
SEQ, SRC_VERSION, N_GEN, N_ACC, N_DEL, EVENT, C_GEN, C_DEL, C_EDGE, REFILL_PID = range(10)


@njit(cache=True, inline="always")
def _before(a, b, nt, cls, seq):
    if nt[a] != nt[b]:
        return nt[a] < nt[b]
    if cls[a] != cls[b]:
        return cls[a] < cls[b]
    return seq[a] < seq[b]


@njit(cache=True)
def _sift_down(heap, nt, cls, seq):
    size = heap.shape[0]
    pos = 0
    item = heap[0]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        right = child + 1
        if right < size and _before(heap[right], heap[child], nt, cls, seq):
            child = right
        if _before(heap[child], item, nt, cls, seq):
            heap[pos] = heap[child]
            pos = child
        else:
            break
    heap[pos] = item


@njit(cache=True)
def _loop(
    horizon, n, esrc, edst, tracked,
    buf, cur, nt, cls, seq, heap,
    ver, gtime, entry, hops,
    st,
    gen_t, gen_ev,
    acc_ev, acc_t, acc_node, acc_ver, acc_gt, acc_entry, acc_hops, acc_src,
    del_t, del_node,
):
    block = buf.shape[1]
    while True:
        if st[N_GEN] >= gen_t.shape[0] or st[N_ACC] >= acc_t.shape[0] or st[N_DEL] >= del_t.shape[0]:
            return GROW
        p = heap[0]
        t = nt[p]
        if t > horizon:
            return DONE
        ev = st[EVENT]
        st[EVENT] = ev + 1
        k = cls[p]
        if k == 0:
            sv = st[SRC_VERSION] + 1
            st[SRC_VERSION] = sv
            g = st[N_GEN]
            gen_t[g] = t
            gen_ev[g] = ev
            st[N_GEN] = g + 1
            st[C_GEN] += 1
        elif k == 1:
            j = p - 1
            sv = st[SRC_VERSION]
            ver[j] = sv
            gtime[j] = gen_t[sv - 1] if sv > 0 else 0.0
            entry[j] = j
            hops[j] = 0
            d = st[N_DEL]
            del_t[d] = t
            del_node[d] = j
            st[N_DEL] = d + 1
            if tracked[j]:
                a = st[N_ACC]
                acc_ev[a] = ev
                acc_t[a] = t
                acc_node[a] = j
                acc_ver[a] = sv
                acc_gt[a] = gtime[j]
                acc_entry[a] = j
                acc_hops[a] = 0
                acc_src[a] = 1
                st[N_ACC] = a + 1
            st[C_DEL] += 1
        else:
            e = p - 1 - n
            i = esrc[e]
            j = edst[e]
            if ver[i] > ver[j]:
                ver[j] = ver[i]
                gtime[j] = gtime[i]
                entry[j] = entry[i]
                hops[j] = hops[i] + 1
                if tracked[j]:
                    a = st[N_ACC]
                    acc_ev[a] = ev
                    acc_t[a] = t
                    acc_node[a] = j
                    acc_ver[a] = ver[j]
                    acc_gt[a] = gtime[j]
                    acc_entry[a] = entry[j]
                    acc_hops[a] = hops[j]
                    acc_src[a] = 0
                    st[N_ACC] = a + 1
            st[C_EDGE] += 1
        c = cur[p]
        nt[p] = t + buf[p, c]
        cur[p] = c + 1
        seq[p] = st[SEQ]
        st[SEQ] += 1
        _sift_down(heap, nt, cls, seq)
        if c + 1 == block:
            st[REFILL_PID] = p
            return REFILL


class _Log:
    """Growable column store for one kernel log."""

    def __init__(self, capacity: int, **dtypes) -> None:
        self.cols = {name: np.zeros(capacity, dtype=dt) for name, dt in dtypes.items()}

    def grow(self, used: int, needed: bool) -> None:
        if not needed:
            return
        for name, col in self.cols.items():
            bigger = np.zeros(2 * col.size, dtype=col.dtype)
            bigger[:used] = col[:used]
            self.cols[name] = bigger

    def trimmed(self, used: int) -> dict[str, np.ndarray]:
        return {name: col[:used] for name, col in self.cols.items()}


def run_kernel(config, topology, ages, deliveries):
    n = config.n
    streams = process_streams(config, topology)
    count = len(streams)
    block = BLOCK_SIZE
    buf = np.empty((count, block))
    cur = np.empty(count, dtype=np.int64)
    nt = np.empty(count)
    for pid, s in enumerate(streams):
        buf[pid] = s._block
        cur[pid] = s._pos
        nt[pid] = s.next_arrival
    cls = np.full(count, 2, dtype=np.int64)
    cls[0] = 0
    cls[1 : n + 1] = 1
    seq = np.arange(count, dtype=np.int64)
    heap = np.lexsort((seq, cls, nt)).astype(np.int64)  # a sorted array is a valid heap
    esrc = np.array([e.src for e in topology.edges], dtype=np.int64)
    edst = np.array([e.dst for e in topology.edges], dtype=np.int64)
    tracked = np.zeros(n, dtype=np.bool_)
    tracked[list(config.tracked)] = True
    ver = np.zeros(n, dtype=np.int64)
    gtime = np.zeros(n)
    entry = np.full(n, -1, dtype=np.int64)
    hops = np.full(n, -1, dtype=np.int64)
    st = np.zeros(10, dtype=np.int64)
    st[SEQ] = count

    expected_gen = int(config.horizon * 1.2 / moments(config.source_gen)[0]) + 64
    expected_del = int(config.horizon * config.lambda_s * 1.2) + 64
    gen = _Log(expected_gen, t=np.float64, ev=np.int64)
    dlv = _Log(expected_del, t=np.float64, node=np.int64)
    acc = _Log(
        1024,
        ev=np.int64, t=np.float64, node=np.int64, ver=np.int64, gt=np.float64,
        entry=np.int64, hops=np.int64, src=np.int8,
    )

    while True:
        g, a, d = gen.cols, acc.cols, dlv.cols
        status = _loop(
            config.horizon, n, esrc, edst, tracked,
            buf, cur, nt, cls, seq, heap,
            ver, gtime, entry, hops,
            st,
            g["t"], g["ev"],
            a["ev"], a["t"], a["node"], a["ver"], a["gt"], a["entry"], a["hops"], a["src"],
            d["t"], d["node"],
        )
        if status == DONE:
            break
        if status == REFILL:
            p = int(st[REFILL_PID])
            buf[p] = sample_block(streams[p].spec, streams[p].rng, block)
            cur[p] = 0
        else:
            gen.grow(int(st[N_GEN]), st[N_GEN] >= g["t"].size)
            acc.grow(int(st[N_ACC]), st[N_ACC] >= a["t"].size)
            dlv.grow(int(st[N_DEL]), st[N_DEL] >= d["t"].size)

    gens = gen.trimmed(int(st[N_GEN]))
    accs = acc.trimmed(int(st[N_ACC]))
    dels = dlv.trimmed(int(st[N_DEL]))
    _replay(ages, gens, accs)
    ages.finalize(config.horizon)
    deliveries.set_arrays(dels["t"], dels["node"], nt[1 : n + 1].copy())
    sv = int(st[SRC_VERSION])
    return RunSummary(
        horizon=config.horizon,
        events=dict(zip(KIND_NAMES, (int(st[C_GEN]), int(st[C_DEL]), int(st[C_EDGE])))),
        source_version=sv,
        final_ages=[sv - int(v) for v in ver],
    )


def _replay(ages, gens, accs) -> None:
    """Feed logged generations and acceptances to ``ages`` in event order."""
    gen_t, gen_ev = gens["t"].tolist(), gens["ev"].tolist()
    acc_ev = accs["ev"].tolist()
    rows = list(zip(
        accs["node"].tolist(), accs["ver"].tolist(), accs["gt"].tolist(), accs["entry"].tolist(),
        accs["hops"].tolist(), accs["src"].tolist(), accs["t"].tolist(),
    ))
    gi = 0
    for ev, (node, version, gt, ent, hp, src, t) in zip(acc_ev, rows):
        while gi < len(gen_ev) and gen_ev[gi] < ev:
            ages.on_source_generate(gen_t[gi])
            gi += 1
        ages.on_acceptance(node, version, gt, ent, hp, bool(src), t)
    for t in gen_t[gi:]:
        ages.on_source_generate(t)
