"""Dishonest roles, initial layouts and adversarial strategies.

Strategy decisions are pure functions of (seed, round, interaction) so an
attack replays exactly.  Dishonest nodes always cooperate with each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import mix64_int

STRATEGIES = (
    "request_flood",
    "adversarial_routing",
    "adversarial_peer_selection",
    "equivocal_table",
    "selective_acceptance",
    "adversarial_recommendation",
    "black_hole",
)

LAYOUTS = ("mixed", "clustered")

ROLE_PURPOSE = 11
VICTIM_PURPOSE = 12
LAYOUT_PURPOSE = 13


@dataclass(frozen=True)
class AdversaryConfig:
    fraction: float = 0.0
    layout: str = "mixed"
    victims: str = "single"           # "single" or "all_honest"
    victim_id: Optional[int] = None   # single victim; chosen at random when None
    strategies: tuple[str, ...] = STRATEGIES
    flood_rate: int = 8               # requests per dishonest node per round
    equivocal_m: int = 4              # table variants per equivocating node
    gateway_share: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategies", tuple(self.strategies))

    def errors(self) -> list[str]:
        errs = []
        if not 0 <= self.fraction < 1:
            errs.append(f"adversary.fraction: must lie in [0, 1), got {self.fraction}")
        if self.layout not in LAYOUTS:
            errs.append(f"adversary.layout: unknown layout {self.layout!r}")
        if self.victims not in ("single", "all_honest"):
            errs.append(f"adversary.victims: must be 'single' or 'all_honest', got {self.victims!r}")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            errs.append(f"adversary.strategies: unknown strategies {bad}")
        if self.flood_rate < 0:
            errs.append("adversary.flood_rate: must be non-negative")
        if self.equivocal_m < 1:
            errs.append("adversary.equivocal_m: must be at least 1")
        if not 0 < self.gateway_share <= 1:
            errs.append("adversary.gateway_share: must lie in (0, 1]")
        return errs


@dataclass(frozen=True)
class ClusterLayout:
    gateways: frozenset
    traps: frozenset


def assign_roles(n: int, f: float, seed: int) -> np.ndarray:
    """Uniform random floor(f*n)-subset of node ids, sorted."""
    count = int(np.floor(f * n + 1e-9))
    rng = np.random.default_rng([seed, ROLE_PURPOSE])
    return np.sort(rng.choice(n, size=count, replace=False)).astype(np.int64)


def split_cluster(dishonest: Sequence[int], share: float, seed: int) -> ClusterLayout:
    """Pick the gateway subset of a dishonest cluster; the rest are traps."""
    d = np.asarray(dishonest, dtype=np.int64)
    if len(d) == 0:
        return ClusterLayout(frozenset(), frozenset())
    count = max(1, int(round(share * len(d))))
    rng = np.random.default_rng([seed, LAYOUT_PURPOSE, 1])
    gw = frozenset(int(x) for x in rng.choice(d, size=min(count, len(d)), replace=False))
    return ClusterLayout(gw, frozenset(int(x) for x in d) - gw)


def _hash(*parts: int) -> int:
    h = 0x6A09E667F3BCC908
    for p in parts:
        h = mix64_int(h ^ (p & 0xFFFFFFFFFFFFFFFF))
    return h


@dataclass
class Adversary:
    """Dishonest population plus its strategy book for one experiment.

    ``protocol`` is the protocol under attack; it decides which strategies
    are reachable (hop lies are only invisible without VRW, variants only
    matter where snapshots are stored).
    """

    config: AdversaryConfig
    n: int
    seed: int
    protocol: str
    dishonest_ids: np.ndarray
    victim_ids: np.ndarray
    cluster: Optional[ClusterLayout] = None
    mask: np.ndarray = field(init=False)
    victim_mask: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.mask = np.zeros(self.n, dtype=np.bool_)
        self.mask[self.dishonest_ids] = True
        self.victim_mask = np.zeros(self.n, dtype=np.bool_)
        self.victim_mask[self.victim_ids] = True
        self._dishonest = frozenset(int(x) for x in self.dishonest_ids)
        self._victims = frozenset(int(x) for x in self.victim_ids)
        s = set(self.config.strategies)
        self.s_flood = "request_flood" in s and self.config.flood_rate > 0
        self.s_routing = "adversarial_routing" in s
        self.s_selection = "adversarial_peer_selection" in s
        self.s_equivocal = "equivocal_table" in s and self.protocol in ("honeybee", "honeybee_no_tcc")
        self.s_selective = "selective_acceptance" in s
        self.s_recommend = "adversarial_recommendation" in s
        self.s_black_hole = "black_hole" in s

    @classmethod
    def build(cls, config: AdversaryConfig, n: int, seed: int, protocol: str) -> "Adversary":
        dishonest = assign_roles(n, config.fraction, seed)
        honest = np.setdiff1d(np.arange(n, dtype=np.int64), dishonest)
        if config.victims == "all_honest":
            victims = honest
        elif config.victim_id is not None:
            if config.victim_id in set(dishonest.tolist()):
                raise ValueError(f"victim {config.victim_id} is dishonest")
            victims = np.array([config.victim_id], dtype=np.int64)
        else:
            rng = np.random.default_rng([seed, VICTIM_PURPOSE])
            victims = np.array([int(rng.choice(honest))], dtype=np.int64)
        cluster = split_cluster(dishonest, config.gateway_share, seed) if config.layout == "clustered" else None
        return cls(config, n, seed, protocol, dishonest, victims, cluster)

    # ------------------------------------------------------------------ roles

    @property
    def dishonest_count(self) -> int:
        return len(self.dishonest_ids)

    def is_dishonest(self, u: int) -> bool:
        return u in self._dishonest

    def is_victim(self, u: int) -> bool:
        return u in self._victims

    @property
    def floods(self) -> bool:
        return self.s_flood and self.dishonest_count > 0

    def rand(self, *parts: int) -> int:
        return _hash(self.seed, *parts)

    # ------------------------------------------------------------------ honeybee

    def equivocates(self, z: int) -> bool:
        return self.s_equivocal and z in self._dishonest

    def variant_index(self, z: int, requester: int) -> int:
        return _hash(self.seed, 0xE0, z, requester) % self.config.equivocal_m

    def variant_table(self, z: int, j: int, version: int, outgoing: Sequence[int]) -> list[int]:
        """Variant ``j`` of ``z``'s table: honest entries swapped for dishonest
        ids picked by hash, so the split views differ between variants."""
        d = self.dishonest_ids
        row = [int(x) for x in outgoing]
        taken = set(row)
        for s, x in enumerate(row):
            if x < 0 or x in self._dishonest:
                continue
            for c in range(64):
                pick = int(d[_hash(self.seed, 0xE1, z, j, version, s, c) % len(d)])
                if pick != z and pick not in taken:
                    taken.add(pick)
                    row[s] = pick
                    break
        return row

    def hop_behaviour(self, z: int, walker: int) -> str:
        """How dishonest ``z`` serves a walk hop of ``walker``."""
        if self.is_dishonest(walker):
            return "honest"
        if self.protocol == "honeybee_no_vrw":
            return "hijack" if self.s_routing and self.is_victim(walker) else "honest"
        if self.s_equivocal:
            return "equivocate"
        if not self.is_victim(walker):
            return "honest"
        if self.s_routing:
            return "lie"
        if self.s_black_hole:
            return "drop"
        return "honest"

    def lie_target(self, z: int, walker: int, rnd: int, hop: int, exclude: int = -1) -> int:
        d = self.dishonest_ids
        for c in range(16):
            pick = int(d[_hash(self.seed, 0xA1, z, walker, rnd, hop, c) % len(d)])
            if pick != exclude and pick != walker:
                return pick
        return int(d[0])

    def accepts(self, t: int, u: int) -> bool:
        """Whether dishonest ``t`` accepts a sampling or connection request."""
        if not self.s_selective or (self.s_routing and self.protocol == "honeybee_no_vrw"):
            # without VRW every honest edge into a colluder is a hijack opportunity
            return True
        return u in self._dishonest or u in self._victims

    def responds(self, z: int, requester: int) -> bool:
        return self.hop_behaviour(z, requester) != "drop"

    def pick_peer(self, u: int, rnd: int, exclude: Iterable[int] = ()) -> int:
        """Colluding peer chosen by a dishonest node that may pick freely."""
        if not self.s_selection:
            return -1
        ex = set(exclude)
        d = self.dishonest_ids
        for c in range(16):
            pick = int(d[_hash(self.seed, 0xB1, u, rnd, c) % len(d)])
            if pick not in ex:
                return pick
        return -1

    def flood_target(self, x: int, rnd: int, r: int) -> int:
        v = self.victim_ids
        if len(v) == 0:
            return -1
        return int(v[_hash(self.seed, 0xF1, x, rnd, r) % len(v)])

    def flood(self, rnd: int) -> list[tuple[int, int]]:
        """Unverified connection requests sent this round."""
        if not self.floods:
            return []
        reqs = []
        rate = self.config.flood_rate if len(self.victim_ids) > 1 else 1
        for x in self.dishonest_ids.tolist():
            for r in range(rate):
                reqs.append((x, self.flood_target(x, rnd, r)))
        return reqs

    def flood_volume(self) -> int:
        return self.dishonest_count * self.config.flood_rate if self.floods else 0


# --------------------------------------------------------------------------
# layouts on slot tables


def _swap(out: np.ndarray, u: int, su: int, x: int, sx: int) -> bool:
    """Exchange the targets of edges u->out[u,su] and x->out[x,sx] when that
    keeps both rows free of self loops and duplicates."""
    a, b = int(out[u, su]), int(out[x, sx])
    if a == b or b == u or a == x or b in out[u] or a in out[x]:
        return False
    out[u, su], out[x, sx] = b, a
    return True


def build_layout(
    dishonest: Sequence[int],
    layout: str,
    out: np.ndarray,
    seed: int,
    cluster: Optional[ClusterLayout] = None,
) -> np.ndarray:
    """Rewire a random regular slot table for the requested layout.

    ``mixed`` keeps the table as is.  ``clustered`` rewires it into an honest
    cluster and a dishonest one where only gateways keep edges across.
    Degree sequences are preserved by double-edge swaps.
    """
    if layout == "mixed":
        return out
    if layout != "clustered":
        raise ValueError(f"unknown layout {layout!r}")
    out = out.copy()
    n, n_out = out.shape
    bad = np.zeros(n, dtype=bool)
    bad[np.asarray(dishonest, dtype=np.int64)] = True
    if cluster is None:
        cluster = split_cluster(dishonest, 0.02, seed)
    gate = np.zeros(n, dtype=bool)
    gate[list(cluster.gateways)] = True
    rng = np.random.default_rng([seed, LAYOUT_PURPOSE, 2])

    def crossing(u: int, s: int) -> bool:
        v = out[u, s]
        if v < 0 or bad[u] == bad[v]:
            return False
        return not (gate[u] or gate[v])

    for _ in range(50):
        edges = [(u, s) for u in range(n) for s in range(n_out) if crossing(u, s)]
        if not edges:
            break
        rng.shuffle(edges)
        for u, s in edges:
            if not crossing(u, s):
                continue
            # pair with another crossing edge of the opposite direction
            for _ in range(200):
                x = int(rng.integers(n))
                sx = int(rng.integers(n_out))
                if bad[x] == bad[u] or not crossing(x, sx):
                    continue
                if _swap(out, u, s, x, sx):
                    break
    # unpaired leftovers: reroute through a gateway edge, which may cross
    for u, s in [(u, s) for u in range(n) for s in range(n_out) if crossing(u, s)]:
        if bad[u]:
            # trap -> honest becomes trap -> gateway; honest x -> gateway takes the honest target
            pairs = [(x, sx) for x in np.flatnonzero(~bad) for sx in range(n_out) if gate[out[x, sx]]]
        else:
            # honest -> trap becomes honest -> honest; gateway g -> honest takes the trap target
            pairs = [(g, sg) for g in np.flatnonzero(gate) for sg in range(n_out)
                     if out[g, sg] >= 0 and not bad[out[g, sg]]]
        for j in rng.permutation(len(pairs)):
            if _swap(out, u, s, int(pairs[j][0]), pairs[j][1]):
                break
    return out


def inject_bad_start(
    out: np.ndarray,
    node: int,
    dishonest_out: int,
    dishonest_in: Optional[int],
    dishonest: Sequence[int],
    seed: int,
) -> np.ndarray:
    """Rewire ``node`` so that ``dishonest_out`` of its outgoing slots and
    ``dishonest_in`` of its incoming edges are dishonest, by degree-preserving
    swaps."""
    out = out.copy()
    n, n_out = out.shape
    bad = np.zeros(n, dtype=bool)
    bad[np.asarray(dishonest, dtype=np.int64)] = True
    rng = np.random.default_rng([seed, LAYOUT_PURPOSE, 3])
    d_list = np.nonzero(bad)[0]
    h_list = np.nonzero(~bad)[0]

    def count_out() -> int:
        return int(bad[out[node][out[node] >= 0]].sum())

    def fix_out(want: int, pool: np.ndarray, to_bad: bool) -> None:
        tries = 0
        while count_out() != want and tries < 100000:
            tries += 1
            slots = [s for s in range(n_out) if out[node, s] >= 0 and bad[out[node, s]] != to_bad]
            s = slots[int(rng.integers(len(slots)))]
            x = int(rng.integers(n))
            sx = int(rng.integers(n_out))
            if x == node or out[x, sx] < 0 or bad[out[x, sx]] != to_bad:
                continue
            _swap(out, node, s, x, sx)

    target = min(dishonest_out, n_out)
    if count_out() < target:
        fix_out(target, d_list, True)
    elif count_out() > target:
        fix_out(target, h_list, False)

    def incoming() -> list[tuple[int, int]]:
        return [(int(u), int(s)) for u, s in zip(*np.nonzero(out == node))]

    def count_in() -> int:
        return sum(bad[u] for u, _ in incoming())

    if dishonest_in is None:
        return out
    tries = 0
    while count_in() != dishonest_in and tries < 100000:
        tries += 1
        to_bad = count_in() < dishonest_in
        cand = [(u, s) for u, s in incoming() if bad[u] != to_bad]
        if not cand:
            break
        u, s = cand[int(rng.integers(len(cand)))]
        x = int(rng.integers(n))
        sx = int(rng.integers(n_out))
        if x == node or bad[x] != to_bad or out[x, sx] < 0 or out[x, sx] == node:
            continue
        _swap(out, u, s, x, sx)
    return out
