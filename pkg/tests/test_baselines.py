import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from honeysim import baselines as B
from honeysim.baselines import GossipSubNetwork, KademliaNetwork


def test_xor_distance():
    assert B.xor_distance(9, 9) == 0
    assert B.xor_distance(0b0101, 0b0011) == 6
    with pytest.raises(ValueError):
        B.xor_distance(-1, 2)


@settings(max_examples=200)
@given(st.integers(0, 2**14 - 1), st.integers(0, 2**14 - 1))
def test_xor_distance_symmetric(a, b):
    assert B.xor_distance(a, b) == B.xor_distance(b, a)


def test_bucket_index_examples():
    assert B.bucket_index(0, 1 << 13, 14) == 1
    assert B.bucket_index(0b10101010101010, 0b10101010101011, 14) == 14
    assert B.bucket_index(0, 0b00100000000000, 14) == 3
    with pytest.raises(ValueError):
        B.bucket_index(5, 5, 14)


@settings(max_examples=200)
@given(st.integers(0, 1023), st.integers(0, 1023))
def test_bucket_index_counts_shared_prefix(a, b):
    if a == b:
        return
    i = B.bucket_index(a, b, 10)
    shared = i - 1
    assert a >> (10 - shared) == b >> (10 - shared)
    assert (a >> (10 - i)) != (b >> (10 - i))


def test_kademlia_bucket_invariant_after_many_inserts():
    net = KademliaNetwork(256, seed=1, period=10)
    rng = np.random.default_rng(0)
    for c in range(10_000):
        u, v = rng.integers(0, 256, size=2)
        if u != v:
            net.insert(int(u), int(v), rnd=c, ctr=c)
    net.check_invariants()
    assert all(len(b) <= 3 for u in range(256) for b in net.node(u).buckets)


def test_kademlia_lookup_finds_existing_id():
    net = KademliaNetwork(256, seed=2, period=10)
    for target in (3, 77, 200):
        found = net.kad_lookup(0, target)
        assert found[0] == target


def test_kademlia_discovery_keeps_invariants():
    net = KademliaNetwork(256, seed=3, period=10)
    for r in range(100):
        net.step_round(r)
    net.check_invariants()
    assert (net.total > 0).all()


def test_kademlia_flood_raises_dishonest_share():
    n = 256
    rng = np.random.default_rng(4)
    bad = np.zeros(n, dtype=bool)
    bad[rng.choice(n, int(0.3 * n), replace=False)] = True
    victim = ~bad
    net = KademliaNetwork(n, 4, 10, bad=bad, victim=victim, flags=B.F_ROUTING | B.F_SELECTION, flood_rate=8)
    for r in range(300):
        net.step_round(r)
    t = net.table_array()[~bad]
    ok = t >= 0
    assert bad[t[ok]].mean() > 0.3


def _gossip(n=64, seed=1):
    return GossipSubNetwork(n, seed=seed, period=10)


def test_gossip_exchange_with_self_is_noop():
    net = _gossip()
    assert net.gossip_peer_exchange(3, 3) == ([], [])


def test_gossip_exchange_sizes_and_merge():
    net = _gossip()
    partner = net.node(3).mesh[0]
    got, sent = net.gossip_peer_exchange(3, partner)
    assert len(got) <= B.EXCHANGE_SIZE and len(sent) <= B.EXCHANGE_SIZE
    assert got[0] == partner
    assert set(got) - {3} <= set(net.node(3).known_peers)


def test_gossip_mesh_maintenance_rules():
    net = _gossip()
    u = 5
    while net.mcnt[u] > 5:
        B._mesh_remove(net.mesh, net.mcnt, u, int(net.mesh[u, 0]))
    net.gossip_maintain_mesh(u)
    assert net.mcnt[u] == B.D
    v = 0
    while net.mcnt[u] < 13:
        B._mesh_add(net.mesh, net.mcnt, u, v)
        v += 1
    net.gossip_maintain_mesh(u)
    assert net.mcnt[u] == B.D
    B._mesh_remove(net.mesh, net.mcnt, u, int(net.mesh[u, 0]))
    before = net.node(u).mesh
    net.gossip_maintain_mesh(u)
    assert net.node(u).mesh == before and len(before) == 7
    net.check_invariants()


def test_gossip_rounds_keep_mesh_symmetric_and_bounded():
    net = _gossip(128, 2)
    for r in range(200):
        net.step_round(r)
    net.check_invariants()
    assert net.mcnt.max() <= B.D_HIGH + 1
    assert (net.table_array() >= 0).sum(axis=1).max() <= 24 + B.MESH_CAP


def test_gossip_recommendation_pushes_victim_share_up():
    n = 256
    rng = np.random.default_rng(5)
    bad = np.zeros(n, dtype=bool)
    bad[rng.choice(n, n // 2, replace=False)] = True
    victim = np.zeros(n, dtype=bool)
    victim[int(np.flatnonzero(~bad)[0])] = True
    flags = B.F_RECOMMEND | B.F_SELECTIVE | B.F_SELECTION
    net = GossipSubNetwork(n, 5, 10, bad=bad, victim=victim, flags=flags, flood_rate=1)
    for r in range(500):
        net.step_round(r)
    row = net.table_array()[victim][0]
    assert bad[row[row >= 0]].mean() > 0.6
