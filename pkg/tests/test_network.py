import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringage.errors import ConfigError, DomainError
from ringage.network import Cycle, Homogeneous, Jitter, RingConfig, build_ring, upstream_window
from ringage.renewal import DistributionSpec

EXP1 = DistributionSpec.exponential(1.0)


def edges_of(topo):
    return [(e.src, e.dst) for e in topo.edges]


def test_uni_ring_edges():
    topo = build_ring(RingConfig(n=4))
    assert edges_of(topo) == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert topo.delivery_rate == 0.25


def test_bi_ring_in_degree():
    topo = build_ring(RingConfig(n=3, direction="bi"))
    assert len(topo.edges) == 6
    assert all(topo.in_degree(j) == 2 for j in range(3))


def test_single_node_has_no_edges():
    for direction in ("uni", "bi"):
        topo = build_ring(RingConfig(n=1, direction=direction))
        assert topo.edges == ()
    assert RingConfig(n=1).tracked == (0,)


@given(n=st.integers(2, 200), direction=st.sampled_from(["uni", "bi"]))
def test_edge_counts_and_degrees(n, direction):
    topo = build_ring(RingConfig(n=n, direction=direction))
    per = 1 if direction == "uni" else 2
    assert len(topo.edges) == per * n
    assert all(topo.in_degree(j) == per for j in range(n))


@given(n=st.integers(2, 60), a=st.integers(0, 59), b=st.integers(0, 59), direction=st.sampled_from(["uni", "bi"]))
def test_hop_distance_is_bfs_distance(n, a, b, direction):
    a, b = a % n, b % n
    topo = build_ring(RingConfig(n=n, direction=direction))
    adj = {i: [e.dst for e in topo.edges if e.src == i] for i in range(n)}
    dist, frontier = {a: 0}, [a]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    assert topo.hop_distance(a, b) == dist[b]


def test_uni_window_example():
    topo = build_ring(RingConfig(n=10))
    assert upstream_window(topo, 1, 3) == {0, 9, 8}
    assert upstream_window(topo, 4, 1) == {3}


def test_bi_window_example():
    topo = build_ring(RingConfig(n=10, direction="bi"))
    assert upstream_window(topo, 0, 2) == {9, 8, 1, 2}


@pytest.mark.parametrize("n, direction, k", [(10, "uni", 0), (10, "uni", 10), (10, "bi", 5), (2, "bi", 1)])
def test_window_out_of_range(n, direction, k):
    with pytest.raises(DomainError):
        upstream_window(build_ring(RingConfig(n=n, direction=direction)), 0, k)


@given(n=st.integers(3, 80), target=st.integers(0, 79), direction=st.sampled_from(["uni", "bi"]))
def test_window_nesting_and_size(n, target, direction):
    topo = build_ring(RingConfig(n=n, direction=direction))
    target %= n
    per = 1 if direction == "uni" else 2
    prev = set()
    for k in range(1, topo.max_window() + 1):
        w = upstream_window(topo, target, k)
        assert len(w) == per * k
        assert prev < w
        assert all(topo.hop_distance(v, target) <= k for v in w)
        prev = w


def test_entry_offsets():
    uni = build_ring(RingConfig(n=10))
    assert uni.entry_offset(8, 1) == 3
    assert uni.entry_offset(1, 1) == 0
    bi = build_ring(RingConfig(n=10, direction="bi"))
    assert bi.entry_offset(3, 1) == 2
    assert bi.entry_offset(9, 1) == -2
    assert bi.entry_offset(6, 1) == 5  # antipode counts as positive


def test_cycle_assignment():
    specs = (EXP1, DistributionSpec.gamma(2, 0.5), DistributionSpec.deterministic(1))
    topo = build_ring(RingConfig(n=5, edge_law=Cycle(specs)))
    assert [e.spec for e in topo.edges] == [specs[0], specs[1], specs[2], specs[0], specs[1]]


def test_jitter_is_pure_function_of_edge_and_seed():
    law = Jitter(EXP1, "rate", 0.5, 2.0)
    a = build_ring(RingConfig(n=12, direction="bi", edge_law=law, seed=5))
    b = build_ring(RingConfig(n=12, direction="bi", edge_law=law, seed=5))
    c = build_ring(RingConfig(n=12, direction="bi", edge_law=law, seed=6))
    assert a.edges == b.edges
    assert a.edges != c.edges
    rates = [e.spec.param("rate") for e in a.edges]
    assert all(0.5 <= r <= 2.0 for r in rates) and len(set(rates)) == len(rates)
    # same (i, j) gives the same law regardless of ring size
    small = build_ring(RingConfig(n=6, edge_law=law, seed=5))
    assert small.edges[0] == a.edges[0]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n": 0},
        {"n": 4, "direction": "both"},
        {"n": 4, "lambda_s": 0.0},
        {"n": 4, "horizon": -1.0},
        {"n": 4, "seed": -3},
        {"n": 4, "tracked": (4,)},
        {"n": 4, "tracked": (1, 1)},
        {"n": 4, "burn_in": "none"},
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        RingConfig(**kwargs)


def test_config_round_trip():
    cfg = RingConfig(
        n=7, direction="bi", lambda_s=2.0, source_gen=DistributionSpec.uniform(0.5, 1.5),
        edge_law=Jitter(EXP1, "rate", 0.5, 2.0), horizon=50.0, seed=9, tracked=(1, 3),
    )
    assert RingConfig.from_dict(cfg.to_dict()) == cfg
    hom = RingConfig(n=3, edge_law=Homogeneous(DistributionSpec.gamma(2, 0.5)))
    assert RingConfig.from_dict(hom.to_dict()) == hom
    cyc = RingConfig(n=3, edge_law=Cycle((EXP1, DistributionSpec.deterministic(2))))
    assert RingConfig.from_dict(cyc.to_dict()) == cyc


@pytest.mark.parametrize(
    "data",
    [
        {"ring": {}},
        {"ring": {"n": 4}, "extra": {}},
        {"ring": {"n": 4}, "edges": {"rule": "zigzag"}},
        {"ring": {"n": 4}, "edges": {"rule": "jitter", "base": {"kind": "exponential", "rate": 1}}},
        {"ring": {"n": 4}, "sim": {"horizon": "long"}},
        {"ring": {"n": 4, "lambda_s": True}},
        [],
    ],
)
def test_malformed_config_dicts(data):
    with pytest.raises(ConfigError):
        RingConfig.from_dict(data)


def test_topology_csv():
    topo = build_ring(RingConfig(n=3, edge_law=Homogeneous(DistributionSpec.gamma(2.0, 0.5))))
    rows = list(csv.DictReader(io.StringIO(topo.to_csv())))
    assert list(rows[0]) == ["src", "dst", "kind", "params", "mean", "variance"]
    assert [(r["src"], r["dst"]) for r in rows] == [("0", "1"), ("1", "2"), ("2", "0")]
    assert rows[0]["kind"] == "gamma"
    assert rows[0]["params"] == "shape=2.0;scale=0.5"
    assert float(rows[0]["mean"]) == 1.0 and float(rows[0]["variance"]) == 0.5
