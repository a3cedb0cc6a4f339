"""Honeybee node state machine.

Address tables are split into ``n_out`` slot-indexed outgoing entries and an
incoming set of at most ``n_in`` entries.  Every round an eligible node runs
a verifiable random walk whose hop indices come from its VRF; the terminal
node is asked to accept the initiator as a new incoming peer.  Nodes keep
signed snapshots of each other's tables and compare them on every hop
contact (the table consistency check); snapshots of the same owner that
differ by more than the window's churn allowance produce a fraud proof.
"""

from __future__ import annotations

import enum
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Optional, Sequence

import numpy as np
from numba import njit

from . import core
from .core import (
    EMPTY,
    FraudProof,
    NodeIdentity,
    RoundBeacon,
    TableSnapshot,
    VrfOutput,
    hop_digest,
    mix64,
    snapshot_diff,
)

if TYPE_CHECKING:
    from .adversary import Adversary

LENGTH_HOP = -1  # hop counter value reserved for the walk-length draw


# --------------------------------------------------------------------------
# parameters


def ceil_log(n: int, base: int) -> int:
    """Smallest c with base**c >= n, computed without floating point."""
    c, p = 0, 1
    while p < n:
        p *= base
        c += 1
    return c


def period_of(eta: float) -> int:
    """Epoch length 1/eta in rounds; raises when it is not an integer."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    period = round(1 / eta)
    if abs(period * eta - 1) > 1e-9:
        raise ValueError(f"1/eta must be an integer, got eta={eta}")
    return period


@dataclass(frozen=True)
class HoneybeeParams:
    n: int
    k: int = 24
    eta: float = 0.1
    l_min: int = 2
    l_max: Optional[int] = None
    t_max: Optional[int] = None
    tau_slack: int = 2

    def __post_init__(self) -> None:
        if self.k < 2 or self.k % 2:
            raise ValueError(f"k must be even and >= 2, got {self.k}")
        if self.n <= self.k:
            raise ValueError(f"n must exceed k, got n={self.n}, k={self.k}")
        period = period_of(self.eta)
        object.__setattr__(self, "_period", period)
        if self.l_max is None:
            object.__setattr__(self, "l_max", max(self.l_min, 2 * ceil_log(self.n, self.k)))
        if self.t_max is None:
            object.__setattr__(self, "t_max", self.k * period // 2)
        if not 1 <= self.l_min <= self.l_max:
            raise ValueError(f"need 1 <= l_min <= l_max, got {self.l_min}, {self.l_max}")

    @property
    def n_out(self) -> int:
        return self.k // 2

    @property
    def n_in(self) -> int:
        return self.k // 2

    @property
    def period(self) -> int:
        return self._period

    @property
    def lifetime(self) -> int:
        """Agreement lifetime in rounds: k epochs."""
        return self.k * self.period


def tau(window: int, period: int, t_max: int, slack: int = 2) -> int:
    """Allowed outgoing-set difference between two snapshots ``window`` rounds
    apart: two units per epoch boundary the window may cross, plus slack."""
    if window < 0:
        raise ValueError(f"window must be non-negative, got {window}")
    if window > t_max:
        raise ValueError(f"window {window} exceeds t_max={t_max}")
    return 2 * (-(-window // period)) + slack


def is_eligible(node_id: int, beacon: RoundBeacon | int, eta: float, n: int) -> bool:
    """Periodic schedule: node v walks in rounds t with t = v (mod 1/eta)."""
    period = period_of(eta)
    if not 0 <= node_id < n:
        raise ValueError(f"node id {node_id} outside [0, {n})")
    t = beacon.round if isinstance(beacon, RoundBeacon) else int(beacon)
    return t % period == node_id % period


def eligible_nodes(round: int, period: int, n: int) -> range:
    return range(round % period, n, period)


def derive_walk_plan(
    identity: NodeIdentity, b: RoundBeacon, epoch: int, params: HoneybeeParams
) -> tuple[int, VrfOutput]:
    """Walk length drawn uniformly from [l_min, l_max] with the node's VRF."""
    out = core.vrf_hop(identity.secret_key, b, epoch, LENGTH_HOP, identity.id)
    span = params.l_max - params.l_min + 1
    return params.l_min + out.value % span, out


def verify_walk_plan(
    public_key: int, node_id: int, b: RoundBeacon, epoch: int, params: HoneybeeParams,
    length: int, proof: VrfOutput,
) -> bool:
    if not core.vrf_hop_verify(public_key, b, epoch, LENGTH_HOP, node_id, proof):
        return False
    return length == params.l_min + proof.value % (params.l_max - params.l_min + 1)


# --------------------------------------------------------------------------
# walk objects


@dataclass(frozen=True)
class HopRecord:
    source: int           # node whose table was indexed
    index: int            # slot index chosen by the VRF
    vrf: VrfOutput
    snapshot: TableSnapshot  # snapshot of ``source`` the walker checked against
    target: int           # id found at that slot


@dataclass
class WalkState:
    initiator: int
    epoch: int
    round: int
    path_length: int
    length_proof: VrfOutput
    hop_counter: int = 0
    current: int = -1
    first_hop_index: int = -1
    trace: list = field(default_factory=list)
    held: Optional[TableSnapshot] = None  # walker's copy of the current node's table
    verified: int = 0                     # trace prefix already checked


@dataclass(frozen=True)
class HopRejection:
    reason: str
    node: int
    evidence: Optional[tuple[TableSnapshot, TableSnapshot]] = None


@dataclass(frozen=True)
class SampleOutcome:
    initiator: int
    terminal: int
    accepted: bool
    slot: int = -1
    reason: str = ""


class Verdict(enum.Enum):
    VALID = "valid"
    REFUTED_BY_HISTORY = "refuted_by_history"
    INVALID = "invalid"


@dataclass(frozen=True)
class SlotUpdate:
    """A signed single-slot change of an owner's outgoing table.  ``round``
    is the first round in which the new content is in effect."""

    owner: int
    round: int
    slot: int
    old: int
    new: int
    signature: bytes

    def message(self) -> bytes:
        return update_message(self.owner, self.round, self.slot, self.old, self.new)


def update_message(owner: int, round: int, slot: int, old: int, new: int) -> bytes:
    return core.encode(b"slot-update", owner, round, slot, old, new)


def make_update(identity: NodeIdentity, round: int, slot: int, old: int, new: int) -> SlotUpdate:
    sig = core.sign(identity.secret_key, update_message(identity.id, round, slot, old, new))
    return SlotUpdate(identity.id, round, slot, old, new, sig)


def verify_fraud_proof(
    proof: FraudProof,
    public_key: int,
    params: HoneybeeParams,
    history: Optional[Sequence[SlotUpdate]] = None,
) -> Verdict:
    """Check a fraud proof and, if it stands, give the accused the chance to
    explain it with its signed update chain."""
    a, b = proof.snapshot_a, proof.snapshot_b
    if a.owner != proof.accused or b.owner != proof.accused:
        return Verdict.INVALID
    if not (core.snapshot_valid(a, public_key) and core.snapshot_valid(b, public_key)):
        return Verdict.INVALID
    window = abs(a.round - b.round)
    if window != proof.window or window > params.t_max:
        return Verdict.INVALID
    diff = snapshot_diff(a, b)
    if diff != proof.diff_count or diff <= tau(window, params.period, params.t_max, params.tau_slack):
        return Verdict.INVALID
    if history is not None and _chain_explains(a, b, public_key, history):
        return Verdict.REFUTED_BY_HISTORY
    return Verdict.VALID


def _chain_explains(
    a: TableSnapshot, b: TableSnapshot, public_key: int, history: Sequence[SlotUpdate]
) -> bool:
    if a.round > b.round:
        a, b = b, a
    if len(a.outgoing) != len(b.outgoing):
        return False
    table = list(a.outgoing)
    try:
        for up in sorted(history, key=lambda u: u.round):
            if not a.round < up.round <= b.round:
                continue
            if up.owner != a.owner or not core.verify(public_key, up.message(), up.signature):
                return False
            if not 0 <= up.slot < len(table) or table[up.slot] != up.old:
                return False
            table[up.slot] = up.new
    except (AttributeError, TypeError):
        return False  # malformed chain counts as no chain
    return frozenset(x for x in table if x != EMPTY) == b.outgoing_set()


def acceptance_policy(
    requests: Sequence[int], leftover: Sequence[int], capacity: int, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    """Decide which sampling requests a node admits and which leftover
    incoming edges it evicts to stay within ``capacity``."""
    i = len(requests)
    if i >= capacity:
        pick = rng.choice(i, size=capacity, replace=False)
        return sorted(requests[j] for j in pick), sorted(leftover)
    excess = max(0, i - capacity + len(leftover))
    evicted: list[int] = []
    if excess:
        pool = sorted(leftover)
        evicted = sorted(pool[j] for j in rng.choice(len(pool), size=excess, replace=False))
    return list(requests), evicted


def origin_slot(outgoing: Sequence[int], i: int) -> int:
    """Slot used by the initiator's own hop: the first non-empty slot at or
    after ``i``, cyclically, so a walk never stalls on its owner's vacancies.
    Returns ``i`` when every slot is empty."""
    m = len(outgoing)
    for j in range(m):
        s = (i + j) % m
        if outgoing[s] >= 0:
            return s
    return i


# --------------------------------------------------------------------------
# compiled honest walk


# purposes of the counter-hash draws shared by the Python and compiled commits
P_LOTTERY = 1
P_EVICT = 2
P_REBOOT = 3


@njit(cache=True)
def _draw(seed, rnd, node, purpose, ctr, m):
    """Uniform integer in [0, m) from a hash of its coordinates."""
    h = mix64(np.uint64(seed) ^ np.uint64(0x243F6A8885A308D3))
    h = mix64(h ^ np.uint64(rnd))
    h = mix64(h ^ np.uint64(node))
    h = mix64(h ^ np.uint64(purpose))
    h = mix64(h ^ np.uint64(ctr))
    return np.int64(h % np.uint64(m))


@njit(cache=True)
def _choose(seed, rnd, node, purpose, m, k, buf):
    """``k`` distinct indices of range(m) by a partial Fisher-Yates shuffle,
    sorted into ``buf[:k]``."""
    for j in range(m):
        buf[j] = j
    for j in range(k):
        r = j + _draw(seed, rnd, node, purpose, j, m - j)
        tmp = buf[j]
        buf[j] = buf[r]
        buf[r] = tmp
    buf[:k].sort()


def choose_indices(seed: int, rnd: int, node: int, purpose: int, m: int, k: int) -> list[int]:
    buf = np.empty(m, dtype=np.int64)
    _choose(seed, rnd, node, purpose, m, k, buf)
    return buf[:k].tolist()


def draw(seed: int, rnd: int, node: int, purpose: int, ctr: int, m: int) -> int:
    return int(_draw(seed, rnd, node, purpose, ctr, m))


@njit(cache=True)
def _one_walk(u, key, out, expiry, b_lo, b_hi, epoch, rnd, l_min, span):
    """(terminal, first hop index, status) of one honest walk; status 1 marks
    an empty or expired slot."""
    n_out = out.shape[1]
    p = l_min + hop_digest(key, b_lo, b_hi, epoch, np.uint64(0xFFFFFFFFFFFFFFFF), np.uint64(u)) % np.uint64(span)
    cur = u
    d = -1
    for h in range(np.int64(p)):
        i = np.int64(hop_digest(key, b_lo, b_hi, epoch, np.uint64(h), np.uint64(cur)) % np.uint64(n_out))
        if h == 0:
            for j in range(n_out):
                if out[cur, (i + j) % n_out] >= 0:
                    i = (i + j) % n_out
                    break
            d = i
        nxt = out[cur, i]
        if nxt < 0 or expiry[cur, i] <= rnd:
            return cur, d, 1
        cur = nxt
    return cur, d, 0


@njit(cache=True)
def _honest_walks(walkers, keys, out, expiry, b_lo, b_hi, epoch, rnd, l_min, span, res):
    """Walks of ``walkers`` on round-start tables; ``res`` rows receive
    (terminal, first_hop_index, status)."""
    for w in range(walkers.shape[0]):
        t, d, status = _one_walk(walkers[w], keys[walkers[w]], out, expiry, b_lo, b_hi, epoch, rnd, l_min, span)
        res[w, 0] = t
        res[w, 1] = d
        res[w, 2] = status


@njit(cache=True)
def _inc_remove(inc, inc_cnt, t, x):
    c = inc_cnt[t]
    for j in range(c):
        if inc[t, j] == x:
            inc[t, j] = inc[t, c - 1]
            inc[t, c - 1] = -1
            inc_cnt[t] = c - 1
            return True
    return False


@njit(cache=True)
def _inc_has(inc, inc_cnt, t, x):
    for j in range(inc_cnt[t]):
        if inc[t, j] == x:
            return True
    return False


@njit(cache=True)
def _k_set_slot(out, expiry, version, u, s, new, rnd, lifetime):
    if out[u, s] == new:
        return
    out[u, s] = new
    expiry[u, s] = rnd + lifetime if new >= 0 else 0
    version[u] = rnd + 1


@njit(cache=True)
def _k_drop_edge(out, expiry, version, inc, inc_cnt, u, w, rnd, lifetime):
    for s in range(out.shape[1]):
        if out[u, s] == w:
            _k_set_slot(out, expiry, version, u, s, -1, rnd, lifetime)
    if _inc_remove(inc, inc_cnt, w, u):
        version[w] = rnd + 1


@njit(cache=True)
def _fast_rounds(out, expiry, version, inc, inc_cnt, keys, idle, b_lo, b_hi, r0, rounds, period,
                 l_min, span, lifetime, seed, samples, fails):
    """All-honest rounds ``r0 .. r0+rounds-1`` in one call, mirroring the
    Python commit step for step.  Successful samples go to ``samples`` as
    (round, initiator, terminal) rows; returns how many were written."""
    n, n_out = out.shape
    n_in = inc.shape[1]
    m = 0
    cap = n // period + 1
    req_u = np.empty(cap, dtype=np.int64)
    req_t = np.empty(cap, dtype=np.int64)
    req_d = np.empty(cap, dtype=np.int64)
    acc = np.zeros(cap, dtype=np.bool_)
    tslot = np.empty(cap, dtype=np.int64)
    walkers = np.empty(cap, dtype=np.int64)
    buf = np.empty(max(cap, n_in) + 1, dtype=np.int64)
    left = np.empty(n_in, dtype=np.int64)
    stale = np.empty(n_out, dtype=np.int64)
    ev = np.empty(n_in, dtype=np.int64)
    for i in range(rounds):
        rnd = r0 + i
        epoch = np.uint64(rnd // period)
        nf = 0
        nw = 0
        for u in range(rnd % period, n, period):
            if not idle[u]:
                walkers[nw] = u
                nw += 1
        # walks and duplicate filter
        nr = 0
        for w in range(nw):
            u = walkers[w]
            t, d, status = _one_walk(u, keys[u], out, expiry, b_lo[i], b_hi[i], epoch, rnd, l_min, span)
            if status:
                nf += 1
                continue
            dup = t == u
            for s in range(n_out):
                if out[u, s] == t:
                    dup = True
            if dup:
                nf += 1
                continue
            req_u[nr] = u
            req_t[nr] = t
            req_d[nr] = d
            nr += 1
        order = np.argsort(req_t[:nr] * n + req_u[:nr])
        ru = req_u[:nr][order].copy()
        rt = req_t[:nr][order].copy()
        rd = req_d[:nr][order].copy()
        # 1) acceptance decisions per terminal
        g = 0
        while g < nr:
            e = g
            while e < nr and rt[e] == rt[g]:
                e += 1
            cnt = e - g
            if cnt >= n_in:
                _choose(seed, rnd, rt[g], P_LOTTERY, cnt, n_in, buf)
                for j in range(g, e):
                    acc[j] = False
                for j in range(n_in):
                    acc[g + buf[j]] = True
                nf += cnt - n_in
            else:
                for j in range(g, e):
                    acc[j] = True
            g = e
        # 2) accepted initiators release the slot they overwrite
        for j in range(nr):
            if not acc[j]:
                continue
            u = ru[j]
            s = rd[j]
            for q in range(n_out):
                if out[u, q] < 0:
                    s = q
                    break
            tslot[j] = s
            old = out[u, s]
            if old >= 0 and _inc_remove(inc, inc_cnt, old, u):
                version[old] = rnd + 1
        # 3) evictions and admissions
        g = 0
        while g < nr:
            e = g
            while e < nr and rt[e] == rt[g]:
                e += 1
            t = rt[g]
            na = 0
            for j in range(g, e):
                if acc[j]:
                    na += 1
            nl = inc_cnt[t]
            for j in range(nl):
                left[j] = inc[t, j]
            left[:nl].sort()
            if e - g >= n_in:
                for j in range(nl):
                    _k_drop_edge(out, expiry, version, inc, inc_cnt, left[j], t, rnd, lifetime)
            else:
                excess = na - n_in + nl
                if excess > 0:
                    _choose(seed, rnd, t, P_EVICT, nl, excess, buf)
                    for j in range(excess):
                        ev[j] = left[buf[j]]
                    for j in range(excess):
                        _k_drop_edge(out, expiry, version, inc, inc_cnt, ev[j], t, rnd, lifetime)
            for j in range(g, e):
                if not acc[j]:
                    continue
                u = ru[j]
                if not _inc_has(inc, inc_cnt, t, u):
                    inc[t, inc_cnt[t]] = u
                    inc_cnt[t] += 1
                _k_set_slot(out, expiry, version, u, tslot[j], t, rnd, lifetime)
                samples[m, 0] = rnd
                samples[m, 1] = u
                samples[m, 2] = t
                m += 1
            version[t] = rnd + 1
            g = e
        # 4) renewals and expiry
        for w in range(nw):
            u = walkers[w]
            ns = 0
            for s in range(n_out):
                if out[u, s] >= 0 and expiry[u, s] <= rnd:
                    stale[ns] = out[u, s]
                    ns += 1
            for j in range(ns):
                _k_drop_edge(out, expiry, version, inc, inc_cnt, u, stale[j], rnd, lifetime)
            for s in range(n_out):
                if out[u, s] >= 0:
                    expiry[u, s] = rnd + lifetime
        # 5) empty tables fall back to the bootstrap oracle
        for w in range(nw):
            u = walkers[w]
            empty = True
            for s in range(n_out):
                if out[u, s] >= 0:
                    empty = False
            if not empty:
                continue
            for s in range(n_out):
                for c in range(8):
                    x = _draw(seed, rnd, u, P_REBOOT, s * 8 + c, n)
                    if x == u or inc_cnt[x] >= n_in:
                        continue
                    taken = False
                    for q in range(n_out):
                        if out[u, q] == x:
                            taken = True
                    if taken:
                        continue
                    _k_set_slot(out, expiry, version, u, s, x, rnd, lifetime)
                    inc[x, inc_cnt[x]] = u
                    inc_cnt[x] += 1
                    version[x] = rnd + 1
                    break
        fails[i] = nf
    return m


# --------------------------------------------------------------------------
# network


@dataclass
class RoundReport:
    round: int
    outcomes: list = field(default_factory=list)      # SampleOutcome
    failures: list = field(default_factory=list)      # (initiator, reason)
    proofs: list = field(default_factory=list)        # (FraudProof, Verdict)
    evictions: list = field(default_factory=list)     # (acceptor, evicted initiator)
    flood_accepted: int = 0
    flood_rejected: int = 0


Logger = Callable[[dict], None]


class HoneybeeNetwork:
    """State of every node plus the per-round protocol.

    ``mode`` selects the full protocol or one of the ablations: ``full``,
    ``no_vrw`` (hops are not verified) or ``no_tcc`` (snapshots are never
    compared).

    ``audit`` sets how much checking the simulator performs:

    * ``full``: visited nodes re-verify the whole trace and every shared
      snapshot is compared.
    * ``targeted``: only checks whose outcome can change protocol state are
      run, namely comparisons of dishonest owners' snapshots.  Honest owners
      can always refute with their update chain and honestly produced
      traces always verify, so the resulting state equals ``full``.
    * ``off``: all-honest networks only; walks run in a compiled kernel.
    """

    MODES = ("full", "no_vrw", "no_tcc")

    def __init__(
        self,
        params: HoneybeeParams,
        identities: Sequence[NodeIdentity],
        out_table: np.ndarray,
        seed: int,
        adversary: Optional["Adversary"] = None,
        mode: str = "full",
        audit: str = "full",
        idle: Iterable[int] = (),
        logger: Optional[Logger] = None,
        tracked: Iterable[int] = (),
    ) -> None:
        if mode not in self.MODES:
            raise ValueError(f"unknown mode {mode!r}")
        n = params.n
        if out_table.shape != (n, params.n_out):
            raise ValueError(f"out_table must have shape {(n, params.n_out)}")
        self.params = params
        self.ids = list(identities)
        self.seed = seed
        self.adv = adversary
        self.mode = mode
        if audit not in ("full", "targeted", "off"):
            raise ValueError(f"unknown audit level {audit!r}")
        if adversary is not None and adversary.dishonest_count and audit == "off":
            raise ValueError("audit may only be disabled in all-honest networks")
        self.audit = audit
        self.full_audit = audit == "full"
        self.checks = audit != "off"
        self.vrw = mode != "no_vrw"
        self.tcc = mode == "full"
        self.idle = frozenset(idle)
        self.log = logger
        self.tracked = frozenset(tracked)

        self.out = np.array(out_table, dtype=np.int64)
        self._lifetime = params.lifetime
        self.expiry = np.full((n, params.n_out), params.lifetime, dtype=np.int64)
        self.expiry[self.out < 0] = 0
        self.inc: list[set[int]] = [set() for _ in range(n)]
        for u in range(n):
            for v in self.out[u]:
                if v >= 0:
                    self.inc[v].add(u)
        self.flood_out: list[set[int]] = [set() for _ in range(n)]
        self.version = np.zeros(n, dtype=np.int64)  # round from which the table is in effect
        self._snap: dict[int, TableSnapshot] = {}
        self.keys = np.array([core.SCHEME.vrf_key(x.secret_key) for x in self.ids], dtype=np.uint64)
        self.slashed: set[int] = set()
        self.enc: list[OrderedDict] = [OrderedDict() for _ in range(n)]
        self.history: list[deque] = [deque() for _ in range(n)]
        self._variants: dict[tuple[int, int], tuple[int, TableSnapshot]] = {}
        self.valid_proofs = 0
        self.refuted_proofs = 0
        self._tau = [tau(w, params.period, params.t_max, params.tau_slack) for w in range(params.t_max + 1)]
        self._peers: dict[int, set[int]] = {}
        self._bad_peers: dict[int, set[int]] = {}
        self._bad = frozenset(int(x) for x in adversary.dishonest_ids) if adversary is not None else frozenset()
        self._pending_proofs: list[FraudProof] = []

    # ------------------------------------------------------------------ views

    @property
    def n(self) -> int:
        return self.params.n

    def dishonest(self, u: int) -> bool:
        return self.adv is not None and self.adv.is_dishonest(u)

    def outgoing(self, u: int) -> list[int]:
        return [int(x) for x in self.out[u] if x >= 0]

    def table(self, u: int) -> list[int]:
        """All peers of ``u``: outgoing slots, incoming set and flood edges."""
        return self.outgoing(u) + sorted(self.inc[u]) + sorted(self.flood_out[u])

    def table_row(self, u: int) -> np.ndarray:
        """Outgoing slots followed by the incoming set, padded with EMPTY."""
        row = np.full(self.params.k, EMPTY, dtype=np.int64)
        row[: self.params.n_out] = self.out[u]
        inc = sorted(self.inc[u])
        row[self.params.n_out : self.params.n_out + len(inc)] = inc
        return row

    def table_array(self) -> np.ndarray:
        return np.stack([self.table_row(u) for u in range(self.n)])

    def snapshot(self, u: int) -> TableSnapshot:
        s = self._snap.get(u)
        if s is None:
            s = core.make_snapshot(
                self.ids[u].secret_key, u, int(self.version[u]), self.out[u].tolist(), self.inc[u]
            )
            self._snap[u] = s
        return s

    def served_snapshot(self, z: int, requester: int) -> TableSnapshot:
        """Snapshot of ``z`` handed to ``requester`` (equivocators tailor it)."""
        if self.adv is not None and self.adv.equivocates(z):
            return self._variant(z, self.adv.variant_index(z, requester))
        return self.snapshot(z)

    def _variant(self, z: int, j: int) -> TableSnapshot:
        ver = int(self.version[z])
        hit = self._variants.get((z, j))
        if hit is not None and hit[0] == ver:
            return hit[1]
        outgoing = self.adv.variant_table(z, j, ver, self.out[z].tolist())
        s = core.make_snapshot(self.ids[z].secret_key, z, ver, outgoing, self.inc[z])
        self._variants[(z, j)] = (ver, s)
        return s

    def _held(self, holder: int, z: int, peers: set) -> Optional[TableSnapshot]:
        if z in peers:
            return self.served_snapshot(z, holder)
        hit = self.enc[holder].get(z)
        return None if hit is None else hit[0]

    def peer_set(self, u: int) -> set[int]:
        """Outgoing and incoming peers; cached between commits."""
        s = self._peers.get(u)
        if s is None:
            s = set(self.inc[u])
            s.update(x for x in self.out[u].tolist() if x >= 0)
            self._peers[u] = s
        return s

    # ------------------------------------------------------------------ walks

    def start_walk(self, u: int, b: RoundBeacon, rnd: int) -> WalkState:
        epoch = rnd // self.params.period
        p, proof = derive_walk_plan(self.ids[u], b, epoch, self.params)
        return WalkState(u, epoch, rnd, p, proof, current=u, held=self.snapshot(u))

    def _emit(self, rec: dict) -> None:
        if self.log is not None:
            self.log(rec)

    def execute_hop(self, walk: WalkState, b: RoundBeacon) -> WalkState | HopRejection:
        """Advance ``walk`` by one hop.  Tables are read as of round start."""
        if walk.hop_counter >= walk.path_length:
            return HopRejection("hop_budget_exceeded", walk.current)
        u = walk.current
        walker = walk.initiator
        adv = self.adv
        n_out = self.params.n_out
        vrf = core.vrf_hop(self.ids[walker].secret_key, b, walk.epoch, walk.hop_counter, u)
        i = vrf.value % n_out
        held = walk.held
        if walk.hop_counter == 0 and held is not None:
            i = origin_slot(held.outgoing, i)
        expected = held.outgoing[i] if held is not None else EMPTY

        behaviour = "honest"
        if u != walker and adv is not None and adv.is_dishonest(u):
            behaviour = adv.hop_behaviour(u, walker)
        if behaviour == "drop" or u in self.slashed:
            return HopRejection("unresponsive", u)

        if behaviour == "lie":
            answer = self.adv.lie_target(u, walker, walk.round, walk.hop_counter, exclude=expected)
            if self.vrw:
                lied = self._lie_snapshot(u, held, i, answer)
                return HopRejection("slot_mismatch", u, (held, lied))
        elif behaviour == "hijack":
            answer = self.adv.lie_target(u, walker, walk.round, walk.hop_counter, exclude=-1)
        elif behaviour == "equivocate":
            answer = expected
        else:
            answer = int(self.out[u, i])
            if answer >= 0 and self.expiry[u, i] <= walk.round:
                answer = EMPTY
            if self.vrw and answer >= 0 and answer != expected:
                return HopRejection("slot_mismatch", u, (held, self.snapshot(u)))
        if answer < 0:
            return HopRejection("empty_slot", u)
        if answer in self.slashed:
            return HopRejection("unresponsive", answer)

        # snapshot of the next node: the copy stored by u, then the node's own reply
        nxt = int(answer)
        if self.dishonest(u) or behaviour != "honest":
            stored = self.served_snapshot(nxt, walker)
        else:
            stored = self.served_snapshot(nxt, u)
        reply = stored if self.dishonest(nxt) else self.snapshot(nxt)

        walk.trace.append(HopRecord(u, i, vrf, held, nxt))
        if walk.hop_counter == 0:
            walk.first_hop_index = i
        walk.hop_counter += 1
        walk.current = nxt
        walk.held = stored

        if self.vrw and self.full_audit and not self.dishonest(nxt):
            bad = self.verify_trace(walk, b)
            if bad is not None:
                return HopRejection(bad, nxt)
        if self.tcc and self.checks and not self.dishonest(walker):
            self._direct_check(walk, nxt, stored, reply)
        return walk

    def _lie_snapshot(self, u: int, held: TableSnapshot, i: int, answer: int) -> TableSnapshot:
        outgoing = list(held.outgoing)
        outgoing[i] = answer
        return core.make_snapshot(self.ids[u].secret_key, u, held.round, outgoing, held.incoming)

    def verify_trace(self, walk: WalkState, b: RoundBeacon) -> Optional[str]:
        """Checks a visited node runs on the walk it is asked to serve.  Each
        trace entry is checked once per walk since the outcome is a pure
        function of the entry."""
        ident = self.ids[walk.initiator]
        if walk.verified == 0:
            if not verify_walk_plan(ident.public_key, ident.id, b, walk.epoch, self.params,
                                    walk.path_length, walk.length_proof):
                return "bad_length_proof"
        if walk.hop_counter > walk.path_length:
            return "hop_budget_exceeded"
        for h in range(walk.verified, len(walk.trace)):
            rec = walk.trace[h]
            if not core.vrf_hop_verify(ident.public_key, b, walk.epoch, h, rec.source, rec.vrf):
                return "bad_vrf"
            i = rec.vrf.value % self.params.n_out
            if h == 0:
                i = origin_slot(rec.snapshot.outgoing, i)
            if rec.index != i:
                return "bad_index"
            if rec.snapshot.outgoing[rec.index] != rec.target:
                return "trace_mismatch"
            if not core.snapshot_valid(rec.snapshot, self.ids[rec.source].public_key):
                return "bad_snapshot"
            if h + 1 < len(walk.trace) and walk.trace[h + 1].source != rec.target:
                return "broken_path"
        walk.verified = len(walk.trace)
        return None

    # ------------------------------------------------------------------ TCC

    def _direct_check(self, walk: WalkState, nxt: int, stored: TableSnapshot, reply: TableSnapshot) -> None:
        if stored is not reply:
            self._compare(walk.round, nxt, stored, reply)
        if not self.full_audit and not self.dishonest(nxt):
            return
        enc = self.enc[walk.initiator]
        enc[nxt] = (reply, walk.round)
        enc.move_to_end(nxt)

    def _compare(self, rnd: int, z: int, a: TableSnapshot, b: TableSnapshot) -> Optional[FraudProof]:
        window = abs(a.round - b.round)
        if window > self.params.t_max:
            return None
        d = snapshot_diff(a, b)
        if d <= self._tau[window]:
            return None
        proof = FraudProof(z, a, b, d, window)
        self._pending_proofs.append(proof)
        return proof

    def tcc_check(self, a: int, b: int, rnd: int) -> list[FraudProof]:
        """Compare both parties' snapshots of every node they both know."""
        if self.dishonest(a) or self.dishonest(b):
            return []
        self._expire_encounters(a, rnd)
        self._expire_encounters(b, rnd)
        pa, pb = self._tcc_peers(a), self._tcc_peers(b)
        ea, eb = self.enc[a], self.enc[b]
        common = (pa | ea.keys()) & (pb | eb.keys())
        common.discard(a)
        common.discard(b)
        found = []
        for z in sorted(common):
            sa = self._held(a, z, pa)
            sb = self._held(b, z, pb)
            if sa is sb or sa is None or sb is None:
                continue
            proof = self._compare(rnd, z, sa, sb)
            if proof is not None:
                found.append(proof)
        if not self.full_audit:
            return found  # honest counterparties are never compared
        # each side keeps the other's table for later checks
        sa_own, sb_own = self.snapshot(a), self.snapshot(b)
        ea[b] = (sb_own, rnd)
        ea.move_to_end(b)
        eb[a] = (sa_own, rnd)
        eb.move_to_end(a)
        return found

    def _tcc_peers(self, u: int) -> set[int]:
        if self.full_audit:
            return self.peer_set(u)
        s = self._bad_peers.get(u)
        if s is None:
            s = self.peer_set(u) & self._bad
            self._bad_peers[u] = s
        return s

    def _expire_encounters(self, u: int, rnd: int) -> None:
        enc = self.enc[u]
        limit = rnd - self.params.t_max
        while enc:
            z, (snap, seen) = next(iter(enc.items()))
            if seen >= limit:
                break
            enc.popitem(last=False)

    # ------------------------------------------------------------------ rounds

    def _rng(self, purpose: int, rnd: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, purpose, rnd])

    def walk(self, u: int, b: RoundBeacon, rnd: int) -> tuple[Optional[WalkState], Optional[HopRejection]]:
        w = self.start_walk(u, b, rnd)
        tracked = u in self.tracked
        if tracked:
            self._emit({"event": "walk_started", "round": rnd, "initiator": u, "length": w.path_length})
        while w.hop_counter < w.path_length:
            r = self.execute_hop(w, b)
            if isinstance(r, HopRejection):
                if tracked:
                    self._emit({"event": "hop_rejected", "round": rnd, "initiator": u,
                                "node": r.node, "reason": r.reason})
                return w, r
            if tracked:
                self._emit({"event": "hop_ok", "round": rnd, "initiator": u,
                            "hop": w.hop_counter, "node": w.current})
            if self.tcc and self.checks and not self.dishonest(u) and not self.dishonest(w.current):
                self.tcc_check(u, w.current, rnd)
        return w, None

    def step_round(self, rnd: int, b: RoundBeacon) -> RoundReport:
        """Phases 2 to 6 of a round: eligibility, walks against round-start
        tables, consistency checks, sampling requests and the commit."""
        p = self.params
        report = RoundReport(rnd)
        self._pending_proofs: list[FraudProof] = []
        walkers = [u for u in eligible_nodes(rnd, p.period, p.n) if u not in self.idle and u not in self.slashed]
        requests: list[tuple[int, int, int]] = []  # (initiator, terminal, first hop index)
        drop_first: list[tuple[int, int]] = []

        fast = self.audit == "off"
        if fast and walkers:
            requests, failed = self._fast_walks(walkers, rnd, b)
            for u, reason in failed:
                report.failures.append((u, reason))
        else:
            for u in walkers:
                if self.dishonest(u) and not self.vrw:
                    requests.extend(self._selected_peer(u, rnd))
                    continue
                w, rej = self.walk(u, b, rnd)
                if rej is not None:
                    report.failures.append((u, rej.reason))
                    if w.hop_counter <= 1 and rej.node == self._first_peer(w) and rej.reason in ("unresponsive", "slot_mismatch"):
                        drop_first.append((u, w.first_hop_index if w.first_hop_index >= 0 else -1))
                    if u in self.tracked:
                        self._emit({"event": "walk_failed", "round": rnd, "initiator": u, "reason": rej.reason})
                    continue
                t = w.current
                if t == u or t in self.out[u]:
                    report.failures.append((u, "duplicate"))
                    if u in self.tracked:
                        self._emit({"event": "walk_failed", "round": rnd, "initiator": u, "reason": "duplicate"})
                    continue
                requests.append((u, t, w.first_hop_index))

        self._settle_proofs(rnd, report)
        floods = self._flood_requests(rnd, walkers, report)
        self._commit(rnd, requests, floods, drop_first, walkers, report)
        return report

    def fast_forward(self, r0: int, beacons: Sequence[RoundBeacon]) -> tuple[np.ndarray, np.ndarray]:
        """Run ``len(beacons)`` rounds from ``r0`` in one compiled call.

        Only for all-honest networks without audit.  The resulting state is
        identical to calling :meth:`step_round` round by round; events other
        than committed samples are not logged.  Returns the committed samples
        as (round, initiator, terminal) rows and the failure count per round.
        """
        if self.audit != "off":
            raise ValueError("fast_forward needs audit='off'")
        p = self.params
        n = self.n
        rounds = len(beacons)
        inc = np.full((n, p.n_in), EMPTY, dtype=np.int64)
        inc_cnt = np.zeros(n, dtype=np.int64)
        for u in range(n):
            row = sorted(self.inc[u])
            inc[u, : len(row)] = row
            inc_cnt[u] = len(row)
        idle = np.zeros(n, dtype=np.bool_)
        idle[list(self.idle)] = True
        b_lo = np.array([b.lo for b in beacons], dtype=np.uint64)
        b_hi = np.array([b.hi for b in beacons], dtype=np.uint64)
        samples = np.empty((rounds * (n // p.period + 1), 3), dtype=np.int64)
        fails = np.zeros(rounds, dtype=np.int64)
        m = _fast_rounds(self.out, self.expiry, self.version, inc, inc_cnt, self.keys, idle, b_lo, b_hi,
                         r0, rounds, p.period, p.l_min, p.l_max - p.l_min + 1, self._lifetime,
                         self.seed, samples, fails)
        self.inc = [set(inc[u, : inc_cnt[u]].tolist()) for u in range(n)]
        self._snap.clear()
        self._peers.clear()
        self._bad_peers.clear()
        samples = samples[:m]
        if self.log is not None and self.tracked:
            for r, u, t in samples.tolist():
                if u in self.tracked:
                    self._emit({"event": "sample_committed", "round": r, "initiator": u, "sample": t})
        return samples, fails

    def _first_peer(self, w: WalkState) -> int:
        if w.trace:
            return w.trace[0].target
        return -2

    def _fast_walks(self, walkers: list[int], rnd: int, b: RoundBeacon):
        arr = np.asarray(walkers, dtype=np.int64)
        res = np.empty((len(walkers), 3), dtype=np.int64)
        p = self.params
        _honest_walks(arr, self.keys, self.out, self.expiry, np.uint64(b.lo), np.uint64(b.hi),
                      np.uint64(rnd // p.period), rnd, p.l_min, p.l_max - p.l_min + 1, res)
        requests, failed = [], []
        out = self.out
        for (u, (t, d, status)) in zip(walkers, res.tolist()):
            if status:
                failed.append((u, "empty_slot"))
            elif t == u or (out[u] == t).any():
                failed.append((u, "duplicate"))
            else:
                requests.append((u, t, d))
        if self.tracked and self.log is not None:
            for u, t, d in requests:
                if u in self.tracked:
                    self._emit({"event": "walk_started", "round": rnd, "initiator": u})
            for u, reason in failed:
                if u in self.tracked:
                    self._emit({"event": "walk_failed", "round": rnd, "initiator": u, "reason": reason})
        return requests, failed

    def _selected_peer(self, u: int, rnd: int) -> list[tuple[int, int, int]]:
        """Unverified dishonest update: replace a slot with a chosen peer."""
        pick = self.adv.pick_peer(u, rnd, exclude=set(self.outgoing(u)) | {u})
        if pick < 0:
            return []
        slot = self.adv.rand(u, rnd, 7) % self.params.n_out
        return [(u, pick, slot)]

    def _flood_requests(self, rnd: int, walkers: list[int], report: RoundReport) -> list[tuple[int, int]]:
        if self.adv is None or not self.adv.floods:
            return []
        if not self.vrw:
            reqs = self.adv.flood(rnd)
        elif self.mode == "no_tcc":
            # a forged walk needs an eligible sender and a colluder already
            # holding an agreement with the target
            reqs = []
            for x in walkers:
                if self.adv.is_dishonest(x):
                    w = self.adv.flood_target(x, rnd, 0)
                    if w >= 0 and any(self.adv.is_dishonest(z) for z in self.inc[w]):
                        reqs.append((x, w))
                    else:
                        report.flood_rejected += 1
        else:
            report.flood_rejected += self.adv.flood_volume()
            return []
        return reqs

    def _settle_proofs(self, rnd: int, report: RoundReport) -> None:
        for proof in self._pending_proofs:
            z = proof.accused
            if z in self.slashed:
                continue
            history = None if self.dishonest(z) else list(self.history[z])
            verdict = verify_fraud_proof(proof, self.ids[z].public_key, self.params, history)
            report.proofs.append((proof, verdict))
            self._emit({"event": "fraud_proof", "round": rnd, "accused": z, "window": proof.window,
                        "diff": proof.diff_count, "verdict": verdict.value})
            if verdict is Verdict.VALID:
                self.valid_proofs += 1
                self.slashed.add(z)
            elif verdict is Verdict.REFUTED_BY_HISTORY:
                self.refuted_proofs += 1
        self._pending_proofs = []

    # ------------------------------------------------------------------ commit

    def _set_slot(self, u: int, s: int, new: int, rnd: int) -> None:
        old = int(self.out[u, s])
        if old == new:
            return
        self.out[u, s] = new
        self.expiry[u, s] = rnd + self._lifetime if new >= 0 else 0
        self.version[u] = rnd + 1
        self._snap.pop(u, None)
        if self.full_audit:
            hist = self.history[u]
            hist.append(make_update(self.ids[u], rnd + 1, s, old, new))
            horizon = rnd - 2 * self.params.t_max
            while hist and hist[0].round < horizon:
                hist.popleft()

    def _touch(self, u: int, rnd: int) -> None:
        if self.version[u] != rnd + 1:
            self.version[u] = rnd + 1
        self._snap.pop(u, None)

    def _drop_edge(self, u: int, w: int, rnd: int) -> None:
        """Remove every u -> w edge (slot or flood edge) on both sides."""
        hit = np.nonzero(self.out[u] == w)[0]
        for s in hit:
            self._set_slot(u, int(s), EMPTY, rnd)
        self.flood_out[u].discard(w)
        if u in self.inc[w]:
            self.inc[w].discard(u)
            self._touch(w, rnd)

    def _commit(self, rnd, requests, floods, drop_first, walkers, report: RoundReport) -> None:
        p = self.params
        adv = self.adv
        rng = self._rng(1, rnd)
        self._peers.clear()
        self._bad_peers.clear()

        # slashed nodes leave every honest table
        for z in sorted(self.slashed):
            for x in sorted(self.inc[z]):
                self._drop_edge(x, z, rnd)
            for w in self.outgoing(z) + sorted(self.flood_out[z]):
                self._drop_edge(z, w, rnd)

        # misbehaving first hops are dropped by the walker
        for u, d in drop_first:
            if d >= 0 and self.out[u, d] >= 0:
                self._drop_edge(u, int(self.out[u, d]), rnd)

        by_terminal: dict[int, list[tuple[int, int]]] = {}
        for u, t, d in sorted(requests):
            if t in self.slashed:
                report.failures.append((u, "unresponsive"))
                continue
            by_terminal.setdefault(t, []).append((u, d))
        flood_set: dict[int, set[int]] = {}
        for x, w in floods:
            if x in self.inc[w] or w in self.flood_out[x] or x in self.slashed:
                continue
            flood_set.setdefault(w, set()).add(x)
        for w, xs in flood_set.items():
            lst = by_terminal.setdefault(w, [])
            known = {u for u, _ in lst}
            lst.extend((x, -1) for x in sorted(xs) if x not in known)
            lst.sort()

        # 1) acceptance decisions
        decisions: dict[int, tuple[list[int], bool]] = {}
        slot_of: dict[int, int] = {}
        for t in sorted(by_terminal):
            reqs = by_terminal[t]
            if adv is not None and adv.is_dishonest(t):
                admitted = [u for u, _ in reqs if adv.accepts(t, u)]
            else:
                admitted = [u for u, _ in reqs]
            for u, d in reqs:
                slot_of[u] = d
            rejected = len(reqs) - len(admitted)
            if rejected:
                for u, _ in reqs:
                    if u not in admitted:
                        report.failures.append((u, "rejected"))
            if adv is not None and adv.is_dishonest(t):
                kept = self._colluder_keep(admitted, sorted(self.inc[t]), rng)
                for u in admitted:
                    if u not in kept:
                        report.failures.append((u, "rejected"))
                decisions[t] = ([u for u in admitted if u in kept], False)
            elif len(admitted) >= p.n_in:
                pick = choose_indices(self.seed, rnd, t, P_LOTTERY, len(admitted), p.n_in)
                chosen = sorted(admitted[j] for j in pick)
                for u in admitted:
                    if u not in chosen:
                        report.failures.append((u, "rejected"))
                decisions[t] = (chosen, True)
            else:
                decisions[t] = (admitted, False)

        # 2) accepted initiators release the slot they are about to overwrite
        target_slot: dict[int, int] = {}
        for t in sorted(decisions):
            for u in decisions[t][0]:
                if slot_of[u] < 0:
                    continue  # flood edge, no slot involved
                empties = np.nonzero(self.out[u] < 0)[0]
                s = int(empties[0]) if len(empties) else slot_of[u]
                target_slot[u] = s
                old = int(self.out[u, s])
                if old >= 0 and u in self.inc[old]:
                    self.inc[old].discard(u)
                    self._touch(old, rnd)

        # 3) evictions and admissions
        for t in sorted(decisions):
            admitted, clear_all = decisions[t]
            leftover = sorted(self.inc[t])
            if adv is not None and adv.is_dishonest(t):
                excess = max(0, len(admitted) - p.n_in + len(leftover))
                evicted = sorted(self._by_priority(leftover, rng)[::-1][:excess])
            elif clear_all:
                evicted = leftover
            else:
                excess = max(0, len(admitted) - p.n_in + len(leftover))
                evicted = sorted(leftover[j] for j in choose_indices(self.seed, rnd, t, P_EVICT, len(leftover), excess)) if excess else []
            for x in evicted:
                self._drop_edge(x, t, rnd)
                report.evictions.append((t, x))
                if x in self.tracked or t in self.tracked:
                    self._emit({"event": "eviction", "round": rnd, "acceptor": t, "evicted": x})
            for u in admitted:
                self.inc[t].add(u)
                if slot_of[u] < 0:
                    self.flood_out[u].add(t)
                    report.flood_accepted += 1
                else:
                    self._set_slot(u, target_slot[u], t, rnd)
                    report.outcomes.append(SampleOutcome(u, t, True, target_slot[u]))
                    if u in self.tracked:
                        self._emit({"event": "sample_committed", "round": rnd, "initiator": u,
                                    "sample": t, "slot": target_slot[u]})
            self._touch(t, rnd)

        # 4) renewals and expiry for this round's eligible nodes
        life = rnd + self._lifetime
        for u in walkers:
            row = self.out[u]
            live = row >= 0
            exp = self.expiry[u]
            stale = live & (exp <= rnd)
            if stale.any():
                for w in row[stale].tolist():
                    self._drop_edge(u, w, rnd)
                live = self.out[u] >= 0
            if adv is None or not adv.dishonest_count:
                exp[live] = life
                continue
            for s in np.nonzero(live)[0].tolist():
                w = int(row[s])
                if not adv.is_dishonest(w) or adv.responds(w, u):
                    exp[s] = life

        # 5) nodes left without outgoing peers fall back to the bootstrap oracle
        for u in walkers:
            if (self.out[u] < 0).all() and not self.dishonest(u):
                self._rebootstrap(u, rnd)
        self._peers.clear()
        self._bad_peers.clear()

    def _by_priority(self, ids: list[int], rng) -> list[int]:
        """Dishonest acceptor's order of preference: victims, then honest
        peers, then colluders, ties broken at random."""
        adv = self.adv
        rank = {x: 0 if adv.is_victim(x) else (2 if adv.is_dishonest(x) else 1) for x in ids}
        noise = rng.random(len(ids))
        order = sorted(range(len(ids)), key=lambda j: (rank[ids[j]], noise[j]))
        return [ids[j] for j in order]

    def _colluder_keep(self, admitted: list[int], current: list[int], rng) -> set[int]:
        """Admitted requests a dishonest acceptor keeps: victims are never let
        go, then honest peers are kept over colluders."""
        pool = self._by_priority(sorted(set(admitted) | set(current)), rng)
        return set(pool[: self.params.n_in])

    def _rebootstrap(self, u: int, rnd: int) -> None:
        p = self.params
        for s in range(p.n_out):
            for c in range(8):
                w = draw(self.seed, rnd, u, P_REBOOT, s * 8 + c, self.n)
                if w == u or w in self.out[u] or w in self.slashed or len(self.inc[w]) >= p.n_in:
                    continue
                if self.adv is not None and self.adv.is_dishonest(w) and not self.adv.accepts(w, u):
                    continue
                self._set_slot(u, s, w, rnd)
                self.inc[w].add(u)
                self._touch(w, rnd)
                break

    # ------------------------------------------------------------------ single-walk API

    def finalize_walk(self, walk: WalkState, rnd: int) -> SampleOutcome:
        """Send the sampling request of a completed walk and commit the answer."""
        if walk.hop_counter != walk.path_length:
            raise ValueError("walk is not complete")
        u, t = walk.initiator, walk.current
        if t == u or t in self.out[u]:
            return SampleOutcome(u, t, False, reason="duplicate")
        report = self.handle_sampling_requests(t, [(u, walk.first_hop_index)], rnd)
        for o in report.outcomes:
            if o.initiator == u:
                return o
        return SampleOutcome(u, t, False, reason="rejected")

    def handle_sampling_requests(self, v: int, requests: Sequence[tuple[int, int]], rnd: int) -> RoundReport:
        """Resolve requests ``(initiator, slot)`` addressed to ``v`` in one round."""
        report = RoundReport(rnd)
        self._commit(rnd, [(u, v, d) for u, d in requests], [], [], [], report)
        return report

    # ------------------------------------------------------------------ checks

    def check_invariants(self) -> None:
        p = self.params
        for u in range(self.n):
            row = [int(x) for x in self.out[u] if x >= 0]
            assert len(row) == len(set(row)), f"duplicate outgoing entries at {u}"
            assert u not in row, f"self loop at {u}"
            assert len(self.inc[u]) <= p.n_in, f"incoming overflow at {u}"
            for v in row:
                assert u in self.inc[v], f"edge {u}->{v} missing on the incoming side"
            for v in self.inc[u]:
                assert u in self.out[v] or u in self.flood_out[v], f"stale incoming {v} at {u}"


def bootstrap(
    node: int,
    oracle: Callable[[int], Sequence[int]],
    k: int,
) -> list[int]:
    """Initial outgoing table of a joining node: k/2 distinct uniform samples
    from the bootstrap oracle, excluding the node itself."""
    want = k // 2
    picked: list[int] = []
    while len(picked) < want:
        for v in oracle(want - len(picked)):
            v = int(v)
            if v != node and v not in picked:
                picked.append(v)
            if len(picked) == want:
                break
    return picked


def regular_out_table(n: int, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Random directed graph with out-degree and in-degree ``n_out`` for every
    node, no self loops and no parallel edges."""
    out = np.full((n, n_out), EMPTY, dtype=np.int64)
    for s in range(n_out):
        for _ in range(1000):
            perm = rng.permutation(n)
            ok = perm != np.arange(n)
            if s:
                ok &= ~(out[:, :s] == perm[:, None]).any(axis=1)
            if ok.all():
                out[:, s] = perm
                break
            # repair the few conflicting rows by swapping with random partners
            bad = np.nonzero(~ok)[0]
            for u in bad:
                for _ in range(100):
                    v = int(rng.integers(n))
                    a, c = perm[u], perm[v]
                    if c != u and a != v and c not in out[u, :s] and a not in out[v, :s]:
                        perm[u], perm[v] = c, a
                        break
            ok = perm != np.arange(n)
            if s:
                ok &= ~(out[:, :s] == perm[:, None]).any(axis=1)
            if ok.all():
                out[:, s] = perm
                break
        else:
            raise RuntimeError("could not build a regular table")
    return out
