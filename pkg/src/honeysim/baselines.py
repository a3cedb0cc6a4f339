"""Kademlia-style lookup discovery and GossipSub-style peer exchange.

Both baselines run one discovery action per node per epoch on the same
periodic schedule as Honeybee, and keep routing tables of about 24 peers.
Round work runs in compiled kernels; randomness inside kernels comes from a
counter-based hash of (seed, round, node, purpose, counter).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .core import mix64

KAD_BUCKET_SIZE = 3
KAD_ALPHA = 3
KAD_TABLE_CAP = 24
D_LOW, D, D_HIGH = 6, 8, 12
EXCHANGE_SIZE = 8
CACHE_SIZE = 16
MESH_CAP = 32  # storage bound; maintenance keeps meshes within D_HIGH

# strategy bits shared by both kernels
F_ROUTING = 1
F_BLACK_HOLE = 2
F_SELECTIVE = 4
F_RECOMMEND = 8
F_SELECTION = 16


@njit(cache=True)
def _rand(seed, rnd, node, purpose, ctr):
    h = mix64(np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15))
    h = mix64(h ^ np.uint64(rnd))
    h = mix64(h ^ np.uint64(node))
    h = mix64(h ^ np.uint64(purpose))
    return mix64(h ^ np.uint64(ctr))


@njit(cache=True)
def _below(seed, rnd, node, purpose, ctr, m):
    return np.int64(_rand(seed, rnd, node, purpose, ctr) % np.uint64(m))


# --------------------------------------------------------------------------
# Kademlia


def xor_distance(a: int, b: int) -> int:
    if a < 0 or b < 0:
        raise ValueError("ids must be non-negative")
    return a ^ b


def bucket_index(self_id: int, peer_id: int, bit_width: int) -> int:
    """1-based bucket of ``peer_id``: one more than the shared prefix length."""
    if self_id == peer_id:
        raise ValueError("a node has no bucket for itself")
    d = self_id ^ peer_id
    if d >> bit_width:
        raise ValueError(f"ids exceed {bit_width} bits")
    return bit_width - d.bit_length() + 1


def bit_width_for(n: int) -> int:
    return max(1, (n - 1).bit_length())


@njit(cache=True)
def _bitlen(x):
    c = 0
    while x:
        x >>= 1
        c += 1
    return c


@njit(cache=True)
def _kad_bucket0(u, v, bits):
    return bits - _bitlen(u ^ v)


@njit(cache=True)
def _kad_insert(buckets, total, u, v, bits, cap, seed, rnd, ctr, bad, flags):
    """Insert v into u's table.  A full bucket replaces a random occupant; a
    full table evicts a random entry anywhere first."""
    if u == v:
        return
    if (flags & F_SELECTION) and bad[u] and not bad[v]:
        return
    b = _kad_bucket0(u, v, bits)
    size = buckets.shape[2]
    free = -1
    for j in range(size):
        if buckets[u, b, j] == v:
            return
        if buckets[u, b, j] < 0 and free < 0:
            free = j
    if free < 0:
        buckets[u, b, _below(seed, rnd, u, 31, ctr, size)] = v
        return
    if total[u] >= cap:
        r = _below(seed, rnd, u, 32, ctr, total[u])
        for bb in range(bits):
            for j in range(size):
                if buckets[u, bb, j] >= 0:
                    if r == 0:
                        buckets[u, bb, j] = -1
                        total[u] -= 1
                        if bb == b and free < 0:
                            free = j
                    r -= 1
    for j in range(size):
        if buckets[u, b, j] < 0:
            buckets[u, b, j] = v
            total[u] += 1
            return


@njit(cache=True)
def _closest_in_table(snap, q, target, bits, k, out):
    """k entries of q's table closest to target; returns how many."""
    cnt = 0
    size = snap.shape[2]
    for b in range(bits):
        for j in range(size):
            v = snap[q, b, j]
            if v < 0:
                continue
            d = v ^ target
            # insertion into a sorted list of length <= k
            if cnt < k:
                pos = cnt
                cnt += 1
            elif d < (out[cnt - 1] ^ target):
                pos = cnt - 1
            else:
                continue
            while pos > 0 and (out[pos - 1] ^ target) > d:
                out[pos] = out[pos - 1]
                pos -= 1
            out[pos] = v
    return cnt


@njit(cache=True)
def _closest_in_set(ids, target, exclude, k, out):
    cnt = 0
    for v in ids:
        if v == exclude:
            continue
        d = v ^ target
        if cnt < k:
            pos = cnt
            cnt += 1
        elif d < (out[cnt - 1] ^ target):
            pos = cnt - 1
        else:
            continue
        while pos > 0 and (out[pos - 1] ^ target) > d:
            out[pos] = out[pos - 1]
            pos -= 1
        out[pos] = v
    return cnt


@njit(cache=True)
def _shortlist_fresh(pool, state, npool, target, kk, limit, picks):
    """Indices of unqueried entries among the kk closest live pool entries,
    nearest first, at most ``limit``."""
    order = np.empty(kk, dtype=np.int64)
    cnt = 0
    for i in range(npool):
        if state[i] == 2:
            continue
        d = pool[i] ^ target
        if cnt < kk:
            pos = cnt
            cnt += 1
        elif d < (pool[order[cnt - 1]] ^ target):
            pos = cnt - 1
        else:
            continue
        while pos > 0 and (pool[order[pos - 1]] ^ target) > d:
            order[pos] = order[pos - 1]
            pos -= 1
        order[pos] = i
    m = 0
    for j in range(cnt):
        if state[order[j]] == 0 and m < limit:
            picks[m] = order[j]
            m += 1
    return m


@njit(cache=True)
def _kad_lookup(u, target, snap, buckets, total, bits, cap, alpha, kk, seed, rnd,
                bad, victim, bad_ids, flags, result):
    """Iterative lookup against round-start tables ``snap``; contacts are
    inserted into the live ``buckets``.  Returns the number of result ids."""
    POOL = 256
    pool = np.empty(POOL, dtype=np.int64)
    state = np.zeros(POOL, dtype=np.uint8)  # 0 fresh, 1 answered, 2 silent
    tmp = np.empty(kk, dtype=np.int64)
    picks = np.empty(kk, dtype=np.int64)
    npool = _closest_in_table(snap, u, target, bits, kk, tmp)
    for i in range(npool):
        pool[i] = tmp[i]
    best = np.int64(-1)
    for i in range(npool):
        if best < 0 or (pool[i] ^ target) < (best ^ target):
            best = pool[i]
    hostile = victim[u] and not bad[u]
    ctr = 0
    final = False
    for it in range(64):
        npk = _shortlist_fresh(pool, state, npool, target, kk, kk if final else alpha, picks)
        if npk == 0:
            break
        improved = False
        for z in range(npk):
            i = picks[z]
            q = pool[i]
            if bad[q] and hostile and (flags & F_BLACK_HOLE) and not (flags & F_ROUTING):
                state[i] = 2
                continue
            state[i] = 1
            ctr += 1
            _kad_insert(buckets, total, u, q, bits, cap, seed, rnd, ctr, bad, flags)
            ctr += 1
            _kad_insert(buckets, total, q, u, bits, cap, seed, rnd, ctr, bad, flags)
            if bad[q] and hostile and (flags & F_ROUTING):
                got = _closest_in_set(bad_ids, target, u, kk, tmp)
            else:
                got = _closest_in_table(snap, q, target, bits, kk, tmp)
            for g in range(got):
                v = tmp[g]
                if v == u:
                    continue
                seen = False
                for j in range(npool):
                    if pool[j] == v:
                        seen = True
                        break
                if seen or npool >= POOL:
                    continue
                pool[npool] = v
                npool += 1
                if best < 0 or (v ^ target) < (best ^ target):
                    best = v
                    improved = True
        if final:
            break
        if not improved:
            final = True  # one last sweep over the unqueried shortlist
    return _shortlist_done(pool, state, npool, target, kk, result)


@njit(cache=True)
def _shortlist_done(pool, state, npool, target, kk, result):
    cnt = 0
    for i in range(npool):
        if state[i] == 2:
            continue
        d = pool[i] ^ target
        if cnt < kk:
            pos = cnt
            cnt += 1
        elif d < (result[cnt - 1] ^ target):
            pos = cnt - 1
        else:
            continue
        while pos > 0 and (result[pos - 1] ^ target) > d:
            result[pos] = result[pos - 1]
            pos -= 1
        result[pos] = pool[i]
    return cnt


@njit(cache=True)
def _kad_round(walkers, buckets, total, bits, cap, alpha, kk, seed, rnd, bad, victim,
               bad_ids, victim_ids, flags, flood_rate, samples):
    snap = buckets.copy()
    result = np.empty(kk, dtype=np.int64)
    n = buckets.shape[0]
    for w in range(walkers.shape[0]):
        u = walkers[w]
        samples[w] = -1
        if bad[u] and (flags & F_SELECTION):
            continue
        target = _below(seed, rnd, u, 1, 0, n)
        c = _kad_lookup(u, target, snap, buckets, total, bits, cap, alpha, kk, seed, rnd,
                        bad, victim, bad_ids, flags, result)
        for i in range(c):
            _kad_insert(buckets, total, u, result[i], bits, cap, seed, rnd, 1000 + i, bad, flags)
        if c > 0:
            samples[w] = result[0]
    # request flood: victims add the sender on contact
    if flood_rate > 0 and victim_ids.shape[0] > 0:
        rate = flood_rate if victim_ids.shape[0] > 1 else 1
        for x in bad_ids:
            for r in range(rate):
                v = victim_ids[_below(seed, rnd, x, 2, r, victim_ids.shape[0])]
                _kad_insert(buckets, total, v, x, bits, cap, seed, rnd, 5000 + x * rate + r, bad, flags)


@dataclass
class KademliaNode:
    node_id: int
    buckets: list  # buckets[i] holds peers of 1-based bucket i + 1


class KademliaNetwork:
    """Kademlia discovery on ids 0..n-1 with random-eviction k-buckets."""

    def __init__(
        self,
        n: int,
        seed: int,
        period: int,
        bad: Optional[np.ndarray] = None,
        victim: Optional[np.ndarray] = None,
        flags: int = 0,
        flood_rate: int = 0,
        pools: Optional[Sequence[np.ndarray]] = None,
        bucket_size: int = KAD_BUCKET_SIZE,
        alpha: int = KAD_ALPHA,
        table_cap: int = KAD_TABLE_CAP,
    ) -> None:
        self.n = n
        self.seed = seed
        self.period = period
        self.bits = bit_width_for(n)
        self.alpha = alpha
        self.kk = bucket_size
        self.cap = table_cap
        self.bad = np.zeros(n, dtype=np.bool_) if bad is None else bad.astype(np.bool_)
        self.victim = np.zeros(n, dtype=np.bool_) if victim is None else victim.astype(np.bool_)
        self.bad_ids = np.nonzero(self.bad)[0].astype(np.int64)
        self.victim_ids = np.nonzero(self.victim)[0].astype(np.int64)
        self.flags = flags
        self.flood_rate = flood_rate
        self.buckets = np.full((n, self.bits, bucket_size), -1, dtype=np.int64)
        self.total = np.zeros(n, dtype=np.int64)
        self._bootstrap(pools)

    def _bootstrap(self, pools) -> None:
        """Random draws from each node's candidate pool until the table holds
        ``table_cap`` peers or the pool is exhausted."""
        rng = np.random.default_rng([self.seed, 21])
        everyone = np.arange(self.n, dtype=np.int64)
        for u in range(self.n):
            pool = everyone if pools is None else pools[u]
            if self.bad[u] and self.flags & F_SELECTION:
                pool = self.bad_ids
            order = rng.permutation(pool)
            for v in order:
                if self.total[u] >= self.cap:
                    break
                v = int(v)
                if v == u:
                    continue
                b = _kad_bucket0(u, v, self.bits)
                row = self.buckets[u, b]
                free = np.nonzero(row < 0)[0]
                if len(free):
                    row[free[0]] = v
                    self.total[u] += 1

    def node(self, u: int) -> KademliaNode:
        return KademliaNode(u, [[int(x) for x in self.buckets[u, b] if x >= 0] for b in range(self.bits)])

    def insert(self, u: int, v: int, rnd: int = 0, ctr: int = 0) -> None:
        _kad_insert(self.buckets, self.total, u, v, self.bits, self.cap, self.seed, rnd, ctr,
                    self.bad, self.flags)

    def kad_lookup(self, u: int, target: int, rnd: int = 0) -> list[int]:
        """Closest nodes to ``target`` found by ``u``, nearest first."""
        result = np.empty(self.kk, dtype=np.int64)
        c = _kad_lookup(u, target, self.buckets.copy(), self.buckets, self.total, self.bits, self.cap,
                        self.alpha, self.kk, self.seed, rnd, self.bad, self.victim, self.bad_ids,
                        self.flags, result)
        return [int(x) for x in result[:c]]

    def kad_discover(self, u: int, rnd: int = 0) -> list[int]:
        """One random-target lookup whose results enter the routing table."""
        walkers = np.array([u], dtype=np.int64)
        samples = np.empty(1, dtype=np.int64)
        _kad_round(walkers, self.buckets, self.total, self.bits, self.cap, self.alpha, self.kk,
                   self.seed, rnd, self.bad, self.victim, self.bad_ids, np.empty(0, np.int64),
                   self.flags, 0, samples)
        return [int(samples[0])] if samples[0] >= 0 else []

    def step_round(self, rnd: int) -> list[tuple[int, int]]:
        walkers = np.arange(rnd % self.period, self.n, self.period, dtype=np.int64)
        samples = np.empty(len(walkers), dtype=np.int64)
        _kad_round(walkers, self.buckets, self.total, self.bits, self.cap, self.alpha, self.kk,
                   self.seed, rnd, self.bad, self.victim, self.bad_ids, self.victim_ids,
                   self.flags, self.flood_rate, samples)
        return [(int(u), int(s)) for u, s in zip(walkers, samples) if s >= 0]

    def table_array(self) -> np.ndarray:
        return self.buckets.reshape(self.n, -1)

    def check_invariants(self) -> None:
        for u in range(self.n):
            seen = set()
            for b in range(self.bits):
                row = [int(x) for x in self.buckets[u, b] if x >= 0]
                assert len(row) <= self.kk
                for v in row:
                    assert bucket_index(u, v, self.bits) == b + 1, f"{v} misplaced at {u}"
                    assert v not in seen
                    seen.add(v)
            assert len(seen) == self.total[u] <= self.cap


# --------------------------------------------------------------------------
# GossipSub


@njit(cache=True)
def _in_row(arr, cnt, u, v):
    for j in range(cnt[u]):
        if arr[u, j] == v:
            return True
    return False


@njit(cache=True)
def _mesh_add(mesh, mcnt, u, v):
    if mcnt[u] >= mesh.shape[1] or mcnt[v] >= mesh.shape[1]:
        return False
    if u == v or _in_row(mesh, mcnt, u, v):
        return False
    mesh[u, mcnt[u]] = v
    mcnt[u] += 1
    mesh[v, mcnt[v]] = u
    mcnt[v] += 1
    return True


@njit(cache=True)
def _row_remove(arr, cnt, u, v):
    for j in range(cnt[u]):
        if arr[u, j] == v:
            arr[u, j] = arr[u, cnt[u] - 1]
            arr[u, cnt[u] - 1] = -1
            cnt[u] -= 1
            return


@njit(cache=True)
def _mesh_remove(mesh, mcnt, u, v):
    _row_remove(mesh, mcnt, u, v)
    _row_remove(mesh, mcnt, v, u)


@njit(cache=True)
def _cache_push(cache, ccnt, cpos, u, v):
    """FIFO insert of v into u's peer cache; known ids are skipped."""
    if u == v:
        return
    size = cache.shape[1]
    for j in range(ccnt[u]):
        if cache[u, j] == v:
            return
    if ccnt[u] < size:
        cache[u, ccnt[u]] = v
        ccnt[u] += 1
    else:
        cache[u, cpos[u]] = v
        cpos[u] = (cpos[u] + 1) % size


@njit(cache=True)
def _accepts_graft(mcnt, x, requester, bad, victim, flags):
    if bad[x]:
        if flags & F_SELECTIVE:
            return bad[requester] or victim[requester]
        return True
    return mcnt[x] <= D_HIGH  # one over D_HIGH triggers a prune at the next heartbeat


@njit(cache=True)
def _maintain(u, mesh, mcnt, cache, ccnt, bad, victim, flags, seed, rnd):
    if mcnt[u] < D_LOW:
        c = ccnt[u]
        start = _below(seed, rnd, u, 41, 0, c) if c > 0 else 0
        for j in range(c):
            if mcnt[u] >= D:
                break
            v = cache[u, (start + j) % c]
            if v == u or _in_row(mesh, mcnt, u, v):
                continue
            if _accepts_graft(mcnt, v, u, bad, victim, flags):
                _mesh_add(mesh, mcnt, u, v)
    elif mcnt[u] > D_HIGH:
        ctr = 0
        while mcnt[u] > D:
            j = _below(seed, rnd, u, 42, ctr, mcnt[u])
            ctr += 1
            _mesh_remove(mesh, mcnt, u, mesh[u, j])


@njit(cache=True)
def _rotate(u, mesh, mcnt, cache, ccnt, bad, victim, flags, seed, rnd):
    """Swap one random mesh member for a random cache candidate, modelling
    the peer turnover of a live mesh."""
    c = ccnt[u]
    if mcnt[u] < D_LOW or c == 0:
        return
    v = cache[u, _below(seed, rnd, u, 47, 0, c)]
    if v == u or _in_row(mesh, mcnt, u, v) or not _accepts_graft(mcnt, v, u, bad, victim, flags):
        return
    _mesh_remove(mesh, mcnt, u, mesh[u, _below(seed, rnd, u, 48, 0, mcnt[u])])
    _mesh_add(mesh, mcnt, u, v)


@njit(cache=True)
def _payload(x, receiver, cache, ccnt, bad, victim, bad_ids, flags, seed, rnd, out):
    """Peer records sent by x: its own id plus EXCHANGE_SIZE - 1 cache entries,
    or colluder ids only when x recommends adversarially to this receiver."""
    out[0] = x
    m = 1
    hostile = bad[x] and (flags & F_RECOMMEND) and victim[receiver] and not bad[receiver]
    if hostile:
        nb = bad_ids.shape[0]
        ctr = 0
        while m < out.shape[0] and ctr < 8 * out.shape[0]:
            v = bad_ids[_below(seed, rnd, x, 43, ctr, nb)]
            ctr += 1
            dup = v == receiver
            for j in range(m):
                if out[j] == v:
                    dup = True
            if not dup:
                out[m] = v
                m += 1
        return m
    c = ccnt[x]
    # partial Fisher-Yates over cache positions
    idx = np.arange(c)
    for j in range(min(c, out.shape[0] - 1)):
        r = j + _below(seed, rnd, x, 44, j, c - j)
        idx[j], idx[r] = idx[r], idx[j]
        v = cache[x, idx[j]]
        if v != receiver:
            out[m] = v
            m += 1
    return m


@njit(cache=True)
def _gossip_round(walkers, mesh, mcnt, cache, ccnt, cpos, seed, rnd, bad, victim,
                  bad_ids, victim_ids, flags, flood_rate, samples):
    pay = np.empty(EXCHANGE_SIZE, dtype=np.int64)
    back = np.empty(EXCHANGE_SIZE, dtype=np.int64)
    for w in range(walkers.shape[0]):
        u = walkers[w]
        samples[w] = -1
        if bad[u]:
            continue  # colluders do not need discovery
        _maintain(u, mesh, mcnt, cache, ccnt, bad, victim, flags, seed, rnd)
        _rotate(u, mesh, mcnt, cache, ccnt, bad, victim, flags, seed, rnd)
        if mcnt[u] == 0:
            continue
        partner = mesh[u, _below(seed, rnd, u, 45, 0, mcnt[u])]
        m = _payload(partner, u, cache, ccnt, bad, victim, bad_ids, flags, seed, rnd, pay)
        mb = _payload(u, partner, cache, ccnt, bad, victim, bad_ids, flags, seed, rnd, back)
        for j in range(m):
            _cache_push(cache, ccnt, cpos, u, pay[j])
        for j in range(mb):
            _cache_push(cache, ccnt, cpos, partner, back[j])
        if m > 1:
            samples[w] = pay[1 + _below(seed, rnd, u, 46, 0, m - 1)]
    if flood_rate > 0 and victim_ids.shape[0] > 0:
        rate = flood_rate if victim_ids.shape[0] > 1 else 1
        for x in bad_ids:
            for r in range(rate):
                v = victim_ids[_below(seed, rnd, x, 3, r, victim_ids.shape[0])]
                if not _in_row(mesh, mcnt, v, x) and _accepts_graft(mcnt, v, x, bad, victim, flags):
                    _mesh_add(mesh, mcnt, v, x)
                m = _payload(x, v, cache, ccnt, bad, victim, bad_ids, flags, seed, rnd + r, pay)
                for j in range(m):
                    _cache_push(cache, ccnt, cpos, v, pay[j])


@dataclass
class GossipSubNode:
    node_id: int
    mesh: list
    known_peers: list


class GossipSubNetwork:
    """Mesh overlay with peer exchange and flat peer scoring."""

    def __init__(
        self,
        n: int,
        seed: int,
        period: int,
        bad: Optional[np.ndarray] = None,
        victim: Optional[np.ndarray] = None,
        flags: int = 0,
        flood_rate: int = 0,
        pools: Optional[Sequence[np.ndarray]] = None,
        cache_size: int = CACHE_SIZE,
    ) -> None:
        self.n = n
        self.seed = seed
        self.period = period
        self.bad = np.zeros(n, dtype=np.bool_) if bad is None else bad.astype(np.bool_)
        self.victim = np.zeros(n, dtype=np.bool_) if victim is None else victim.astype(np.bool_)
        self.bad_ids = np.nonzero(self.bad)[0].astype(np.int64)
        self.victim_ids = np.nonzero(self.victim)[0].astype(np.int64)
        self.flags = flags
        self.flood_rate = flood_rate
        self.mesh = np.full((n, MESH_CAP), -1, dtype=np.int64)
        self.mcnt = np.zeros(n, dtype=np.int64)
        self.cache = np.full((n, cache_size), -1, dtype=np.int64)
        self.ccnt = np.zeros(n, dtype=np.int64)
        self.cpos = np.zeros(n, dtype=np.int64)
        self._bootstrap(pools)

    def _bootstrap(self, pools) -> None:
        rng = np.random.default_rng([self.seed, 22])
        everyone = np.arange(self.n, dtype=np.int64)
        for u in range(self.n):
            pool = everyone if pools is None else pools[u]
            for v in rng.permutation(pool)[: self.cache.shape[1] + 1]:
                _cache_push(self.cache, self.ccnt, self.cpos, u, int(v))
        for u in rng.permutation(self.n):
            pool = everyone if pools is None else pools[u]
            for v in rng.permutation(pool):
                if self.mcnt[u] >= D:
                    break
                v = int(v)
                if v != u and self.mcnt[v] < D:
                    _mesh_add(self.mesh, self.mcnt, int(u), v)

    def node(self, u: int) -> GossipSubNode:
        return GossipSubNode(
            u,
            [int(x) for x in self.mesh[u, : self.mcnt[u]]],
            [int(x) for x in self.cache[u, : self.ccnt[u]]],
        )

    def gossip_peer_exchange(self, u: int, partner: int, rnd: int = 0) -> tuple[list[int], list[int]]:
        """Swap peer records between u and a mesh partner; returns what each
        side received."""
        if u == partner:
            return [], []
        if not _in_row(self.mesh, self.mcnt, u, partner):
            raise ValueError(f"{partner} is not in the mesh of {u}")
        pay = np.empty(EXCHANGE_SIZE, dtype=np.int64)
        back = np.empty(EXCHANGE_SIZE, dtype=np.int64)
        m = _payload(partner, u, self.cache, self.ccnt, self.bad, self.victim, self.bad_ids,
                     self.flags, self.seed, rnd, pay)
        mb = _payload(u, partner, self.cache, self.ccnt, self.bad, self.victim, self.bad_ids,
                      self.flags, self.seed, rnd, back)
        for j in range(m):
            _cache_push(self.cache, self.ccnt, self.cpos, u, pay[j])
        for j in range(mb):
            _cache_push(self.cache, self.ccnt, self.cpos, partner, back[j])
        return [int(x) for x in pay[:m]], [int(x) for x in back[:mb]]

    def gossip_maintain_mesh(self, u: int, rnd: int = 0) -> None:
        _maintain(u, self.mesh, self.mcnt, self.cache, self.ccnt, self.bad, self.victim,
                  self.flags, self.seed, rnd)

    def step_round(self, rnd: int) -> list[tuple[int, int]]:
        walkers = np.arange(rnd % self.period, self.n, self.period, dtype=np.int64)
        samples = np.empty(len(walkers), dtype=np.int64)
        _gossip_round(walkers, self.mesh, self.mcnt, self.cache, self.ccnt, self.cpos, self.seed,
                      rnd, self.bad, self.victim, self.bad_ids, self.victim_ids, self.flags,
                      self.flood_rate, samples)
        return [(int(u), int(s)) for u, s in zip(walkers, samples) if s >= 0]

    def table_array(self) -> np.ndarray:
        """Mesh plus cache per node, duplicates blanked."""
        return _gossip_table(self.mesh, self.mcnt, self.cache, self.ccnt)

    def check_invariants(self) -> None:
        for u in range(self.n):
            row = self.mesh[u, : self.mcnt[u]]
            assert len(set(row.tolist())) == len(row)
            for v in row:
                assert _in_row(self.mesh, self.mcnt, int(v), u), f"asymmetric mesh edge {u}-{v}"


@njit(cache=True)
def _gossip_table(mesh, mcnt, cache, ccnt):
    n = mesh.shape[0]
    out = np.full((n, mesh.shape[1] + cache.shape[1]), -1, dtype=np.int64)
    for u in range(n):
        m = 0
        for j in range(mcnt[u]):
            out[u, m] = mesh[u, j]
            m += 1
        for j in range(ccnt[u]):
            v = cache[u, j]
            if not _in_row(mesh, mcnt, u, v):
                out[u, m] = v
                m += 1
    return out
