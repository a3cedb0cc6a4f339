"""Closed-form bounds for random-walk sampling, each paired with an oracle.

The closed forms cover:

* the return probability of a walk on the infinite k-regular tree
* the sampling success and retention of the acceptance game
* the detection bounds for equivocation

The oracles are either exhaustive enumeration or Monte Carlo over
self-contained models.  They use none of the protocol engine, so a bug
on one side cannot hide behind the same bug on the other.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from numba import njit
from scipy import stats

from . import metrics


@dataclass(frozen=True)
class TreeWalkParams:
    k: int
    l: int

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("k must be at least 3")
        if self.l < 1:
            raise ValueError("l must be at least 1")

    @property
    def half(self) -> Optional[int]:
        return self.l // 2 if self.l % 2 == 0 else None


@dataclass(frozen=True)
class BoundInputs:
    n: int
    k: int
    eta: float
    m: int = 2
    l: int = 2
    sigma: float = 1.0

    def __post_init__(self):
        if min(self.n, self.k, self.m, self.l) <= 0 or self.sigma <= 0 or self.eta <= 0:
            raise ValueError("all inputs must be positive")
        if self.eta >= 1:
            raise ValueError("eta must be below 1")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    trials: int

    def z(self, reference: float) -> float:
        """Standardised distance to ``reference``; 0 when both agree exactly
        and the estimate has no spread."""
        d = self.value - reference
        if self.stderr == 0:
            return 0.0 if abs(d) < 1e-12 else math.copysign(math.inf, d)
        return d / self.stderr


# --------------------------------------------------------------------------
# returns on the k-regular tree


def catalan(m: int) -> int:
    return math.comb(2 * m, m) // (m + 1)


def return_prob_catalan(k: int, l: int) -> float:
    """C_m k (k-1)^(m-1) / k^(2m) for l = 2m.

    This gives every Dyck path the weight of a single departure from the
    origin.  Paths that come back to the origin and leave again are
    undercounted, so for l >= 4 the value is a strict lower bound on the
    true return probability.
    """
    TreeWalkParams(k, l)
    if l % 2:
        return 0.0
    m = l // 2
    return catalan(m) * k * (k - 1) ** (m - 1) / k ** (2 * m)


def return_count(k: int, l: int) -> int:
    """Number of the k^l walks of length ``l`` from the root of the
    k-regular tree that end at the root, by a depth recursion.

    Each step leaves the root by one of k edges.  Elsewhere it goes back
    by one edge or deeper by one of k-1 edges.
    """
    TreeWalkParams(k, l)
    ways = [1] + [0] * l
    for _ in range(l):
        nxt = [0] * (l + 1)
        nxt[1] += ways[0] * k
        for d in range(1, l):
            if ways[d]:
                nxt[d - 1] += ways[d]
                nxt[d + 1] += ways[d] * (k - 1)
        ways = nxt
    return ways[0]


def return_prob_exact(k: int, l: int) -> float:
    return float(Fraction(return_count(k, l), k**l))


def enumerate_return_count(k: int, l: int) -> int:
    """Brute-force oracle: build the k-regular tree explicitly and push
    every one of the k^l neighbour-choice sequences through it.

    Depth only needs to reach l/2.  A walk that goes deeper cannot be back
    by step l, so all such nodes collapse into one absorbing sink.
    """
    TreeWalkParams(k, l)
    if l % 2:
        return 0
    depth = l // 2
    # node 0 is the root; children are numbered breadth first
    parent = [-1]
    children: list[list[int]] = [[]]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for u in frontier:
            for _ in range(k if u == 0 else k - 1):
                parent.append(u)
                children.append([])
                children[u].append(len(parent) - 1)
                nxt.append(len(parent) - 1)
        frontier = nxt
    size = len(parent)
    sink = size
    nbr = np.full((size + 1, k), sink, dtype=np.int64)
    for u in range(size):
        row = ([parent[u]] if parent[u] >= 0 else []) + children[u]
        if row and len(row) == k:
            nbr[u] = row
        elif u in frontier:
            nbr[u, 0] = parent[u]  # the rest lead past the depth cap
    pos = np.zeros(1, dtype=np.int64)
    for _ in range(l):
        pos = nbr[pos].reshape(-1)
    assert len(pos) == k**l
    return int((pos == 0).sum())


def return_prob_mc(k: int, l: int, trials: int = 10**6, seed: int = 0) -> Estimate:
    """Fraction of simulated walks that end at the origin.  The tree is
    replaced by its depth process, which is exact for the infinite
    k-regular tree."""
    TreeWalkParams(k, l)
    if trials < 10**4:
        raise ValueError("trials must be at least 10^4")
    rng = np.random.default_rng([seed, k, l])
    depth = np.zeros(trials, dtype=np.int64)
    for _ in range(l):
        back = rng.random(trials) < 1.0 / k
        depth = np.where(depth == 0, 1, np.where(back, depth - 1, depth + 1))
    p = float((depth == 0).mean())
    return Estimate(p, math.sqrt(p * (1 - p) / trials), trials)


# --------------------------------------------------------------------------
# sampling success and retention


def eligible_count(n: int, eta: float) -> int:
    """Requests per round in the acceptance game: eta*n rounded to the
    nearest integer, at least one."""
    return max(1, int(round(eta * n)))


def sampling_success_exact(n: int, k: int, eta: float) -> float:
    """Probability that a uniformly terminating request is admitted.

    The other eta*n - 1 requests land on the same terminal independently
    with probability 1/n.  With j rivals, admission is certain for j < k and
    has probability k/(j+1) otherwise.
    """
    BoundInputs(n, k, eta)
    others = eligible_count(n, eta) - 1
    if others <= 0:
        return 1.0
    j = np.arange(others + 1)
    logp = stats.binom.logpmf(j, others, 1.0 / n)
    share = np.where(j < k, 1.0, k / (j + 1.0))
    return float(min(1.0, np.exp(logp + np.log(share)).sum()))


def sampling_success_bound(n: int, k: int, eta: float) -> float:
    BoundInputs(n, k, eta)
    return 1.0 - (eta - 1.0 / n) / k


def retention_bound(sigma: float, k: int, eta: float) -> float:
    """Expected number of rounds an admitted sample stays in the table, from
    below: sigma (1 - e^-k) / (1 - e^-eta)."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    return sigma * (1.0 - math.exp(-k)) / (1.0 - math.exp(-eta))


def retention_sum(sigma: float, n: int, k: int, eta: float) -> float:
    """The geometric sum the closed form approximates: the sample survives
    round Delta if no request reached its holder in the Delta rounds before."""
    BoundInputs(n, k, eta, sigma=sigma)
    rounds = int(round(k / eta))
    q = (1.0 - 1.0 / n) ** (eta * n)
    return sigma * (1.0 - q**rounds) / (1.0 - q)


@njit(cache=True)
def _remove_edge(inc, cnt, v, e):
    for i in range(cnt[v]):
        if inc[v, i] == e:
            cnt[v] -= 1
            inc[v, i] = inc[v, cnt[v]]
            return


@njit(cache=True)
def _acceptance_game(n, k, period, rounds, warmup, seed):
    """One node in every ``period`` walks per round and overwrites one of
    its k slots.  Each terminal holds at most k incoming edges.

    Per round, each request lands on a uniform terminal.  A terminal with
    at least k requests admits a random k of them and drops every old
    incoming edge.  Otherwise it admits all of them and evicts just enough
    old edges at random to stay within k.

    Returns per-round (requests, admitted) and the lifetimes in rounds of
    samples admitted after ``warmup`` whose window closed before the end.
    """
    np.random.seed(seed)
    out = np.full((n, k), -1, np.int64)
    born = np.zeros((n, k), np.int64)
    inc = np.empty((n, k), np.int64)
    cnt = np.zeros(n, np.int64)
    window = k * period
    reqs = np.zeros(rounds, np.int64)
    oks = np.zeros(rounds, np.int64)
    life = np.empty(n * rounds // period + n, np.int64)
    lives = 0
    target = np.empty(n, np.int64)
    byv_cnt = np.zeros(n, np.int64)
    byv = np.empty((n, n // period + 2), np.int64)
    for t in range(rounds):
        s = (t // period) % k
        first = t % period
        touched = []
        for u in range(first, n, period):
            old = out[u, s]
            if old >= 0:
                _remove_edge(inc, cnt, old, u * k + s)
                if born[u, s] >= warmup and born[u, s] + window <= rounds:
                    life[lives] = t - born[u, s]
                    lives += 1
                out[u, s] = -1
            v = np.random.randint(n)
            target[u] = v
            if byv_cnt[v] == 0:
                touched.append(v)
            byv[v, byv_cnt[v]] = u
            byv_cnt[v] += 1
            reqs[t] += 1
        for v in touched:
            i = byv_cnt[v]
            reqs_v = byv[v, :i].copy()
            if i >= k:
                np.random.shuffle(reqs_v)
                reqs_v = reqs_v[:k]
                drop = cnt[v]
            else:
                drop = max(0, i - k + cnt[v])
            for _ in range(drop):
                j = np.random.randint(cnt[v])
                e = inc[v, j]
                eu = e // k
                es = e % k
                _remove_edge(inc, cnt, v, e)
                if born[eu, es] >= warmup and born[eu, es] + window <= rounds:
                    life[lives] = t - born[eu, es]
                    lives += 1
                out[eu, es] = -1
            for u in reqs_v:
                out[u, s] = v
                born[u, s] = t
                inc[v, cnt[v]] = u * k + s
                cnt[v] += 1
                oks[t] += 1
            byv_cnt[v] = 0
    return reqs, oks, life[:lives]


@dataclass(frozen=True)
class GameEstimate:
    sigma: Estimate
    rho: Estimate


def _batch_se(x: np.ndarray, batches: int = 20) -> float:
    """Standard error from batch means, which absorbs short-range
    correlation between consecutive observations."""
    if len(x) < 2 * batches:
        return float(np.std(x) / math.sqrt(max(len(x), 1)))
    means = np.array([b.mean() for b in np.array_split(x, batches)])
    return float(means.std(ddof=1) / math.sqrt(batches))


def acceptance_game_mc(n: int = 1024, k: int = 24, eta: float = 0.1, epochs: int = 10**4,
                       seed: int = 0, warmup_epochs: Optional[int] = None) -> GameEstimate:
    """Monte Carlo of the acceptance game.  Every node is eligible once per
    ``round(1/eta)`` rounds, so ``epochs`` epochs give ``epochs/eta``
    rounds.  The first ``warmup_epochs`` (default k) fill the tables and
    are left out."""
    BoundInputs(n, k, eta)
    period = max(1, int(round(1 / eta)))
    rounds = epochs * period
    warm = (k if warmup_epochs is None else warmup_epochs) * period
    if warm >= rounds:
        raise ValueError("warm-up exceeds the horizon")
    reqs, oks, life = _acceptance_game(n, k, period, rounds, warm, seed)
    r, o = reqs[warm:], oks[warm:]
    per_round = o / np.maximum(r, 1)
    sigma = Estimate(float(o.sum() / r.sum()), _batch_se(per_round), int(r.sum()))
    life = life.astype(float)
    rho = Estimate(float(life.mean()) if len(life) else float("nan"), _batch_se(life), len(life))
    return GameEstimate(sigma, rho)


# --------------------------------------------------------------------------
# equivocation


def equivocation_bounds(m: int, l: int, k: int) -> tuple[float, float]:
    """(upper bound on the chance that m tables of one node all go
    unnoticed for a window, number of tables above which that bound drops
    under 1/e)."""
    if m < 2:
        raise ValueError("m must be at least 2")
    scale = 2 * l * k ** (l - 1)
    return math.exp(-m * (m - 1) / scale), math.sqrt(scale) + 1


def regular_multigraph(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random k-regular multigraph as an (n, k) neighbour array, the union
    of k/2 random permutations and their inverses.  Loops and parallel edges
    are allowed."""
    if k % 2:
        raise ValueError("k must be even")
    nbr = np.empty((n, k), dtype=np.int64)
    for i in range(k // 2):
        p = rng.permutation(n)
        nbr[:, 2 * i] = p
        nbr[p, 2 * i + 1] = np.arange(n)
    return nbr


@njit(cache=True)
def _detect_trial(nbr, is_copy, copy_idx, m, period, window, walk_len, seed):
    """Returns (detected, number of copies with at least one visitor).

    Window one records, for every copy, the honest nodes that walked
    through it.  A node that saw two copies detects at once.  In window two
    a walk by a visitor of copy i that passes a visitor of another copy
    detects.
    """
    np.random.seed(seed)
    n, k = nbr.shape
    seen = np.full(n, -1, np.int64)  # copy visited in window one, -1 none
    conflict = False
    visited = np.zeros(m, np.bool_)
    for t in range(window):
        for u in range(t % period, n, period):
            if is_copy[u]:
                continue
            x = u
            for _ in range(walk_len):
                x = nbr[x, np.random.randint(k)]
                if is_copy[x]:
                    c = copy_idx[x]
                    visited[c] = True
                    if seen[u] >= 0 and seen[u] != c:
                        conflict = True
                    seen[u] = c
    hits = 0
    for c in range(m):
        hits += visited[c]
    if conflict:
        return True, hits
    for t in range(window, 2 * window):
        for u in range(t % period, n, period):
            if is_copy[u] or seen[u] < 0:
                continue
            x = u
            for _ in range(walk_len):
                x = nbr[x, np.random.randint(k)]
                if seen[x] >= 0 and seen[x] != seen[u]:
                    return True, hits
    return False, hits


@dataclass(frozen=True)
class DetectionEstimate:
    detection: Estimate
    visited: Estimate      # P(a given copy has at least one honest visitor)
    missed_bound: float
    threshold: float


def detection_mc(n: int = 512, k: int = 8, l: int = 3, m: int = 21, eta: float = 0.1,
                 trials: int = 500, seed: int = 0) -> DetectionEstimate:
    """One-window detection rate of an m-way equivocation.  The m copies
    are distinct nodes of a random k-regular graph and the walks have
    fixed length l."""
    BoundInputs(n, k, eta, m=m, l=l)
    period = max(1, int(round(1 / eta)))
    window = max(1, int(round(k / (2 * eta))))
    hit = np.zeros(trials, dtype=bool)
    seen = np.zeros(trials)
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        nbr = regular_multigraph(n, k, rng)
        copies = rng.choice(n, size=m, replace=False)
        is_copy = np.zeros(n, dtype=np.bool_)
        is_copy[copies] = True
        idx = np.full(n, -1, dtype=np.int64)
        idx[copies] = np.arange(m)
        hit[i], h = _detect_trial(nbr, is_copy, idx, m, period, window, l,
                                  int(rng.integers(2**31)))
        seen[i] = h / m
    p = float(hit.mean())
    missed, thr = equivocation_bounds(m, l, k)
    return DetectionEstimate(
        Estimate(p, math.sqrt(p * (1 - p) / trials), trials),
        Estimate(float(seen.mean()), float(seen.std() / math.sqrt(trials)), trials * m),
        missed, thr,
    )


# --------------------------------------------------------------------------
# single walker


@dataclass
class WalkerTrace:
    n: int
    degree: int
    walk_length: int
    walker: int
    terminal: np.ndarray   # terminal reached in each epoch
    success: np.ndarray    # whether the epoch's slot was refreshed
    slot: np.ndarray

    @property
    def failure_rate(self) -> float:
        return float(1.0 - self.success.mean())

    @property
    def samples(self) -> np.ndarray:
        return self.terminal[self.success]


def _drop_one(row: np.ndarray, x: int) -> int:
    return int(np.flatnonzero(row == x)[0])


def single_walker_model(n: int = 1024, k: int = 24, epochs: int = 10**4, seed: int = 0,
                        walk_length: Optional[int] = None) -> WalkerTrace:
    """One node walks and every other node refreshes from an oracle.

    The graph is a random regular multigraph whose degree is the walker's
    outgoing share k/2.  In epoch e the walker replaces slot e mod k/2:

    * Its walk enters through that slot's peer u_1 and takes l-1 more
      uniform hops.
    * It fails if the terminal u_l is the walker itself or is already in
      the walker's table.
    * Otherwise four edge ends move.  The walker swaps u_1 for u_l, and
      u_{l-1} swaps u_l for u_1, so every degree stays put.

    The default length is twice the ceiling of log base k of n.
    """
    degree = k // 2
    if degree < 2 or degree % 2:
        raise ValueError("k/2 must be an even number of at least 2")
    if walk_length is None:
        walk_length = 2 * max(1, math.ceil(math.log(n) / math.log(k) - 1e-12))
    if walk_length < 2:
        raise ValueError("walk_length must be at least 2")
    rng = np.random.default_rng([seed, n, k])
    nbr = regular_multigraph(n, degree, rng)
    v = int(rng.integers(n))
    terminal = np.full(epochs, -1, dtype=np.int64)
    success = np.zeros(epochs, dtype=bool)
    slot = np.arange(epochs) % degree
    for e in range(epochs):
        s = int(slot[e])
        path = [v, int(nbr[v, s])]
        for _ in range(walk_length - 1):
            path.append(int(nbr[path[-1], rng.integers(degree)]))
        u1, prev, end = path[1], path[-2], path[-1]
        terminal[e] = end
        if end == v or (nbr[v] == end).any():
            continue
        # walker: u1 -> end; u1: v -> prev; prev: end -> u1; end: prev -> v
        nbr[v, s] = end
        nbr[u1, _drop_one(nbr[u1], v)] = prev
        nbr[prev, _drop_one(nbr[prev], end)] = u1
        nbr[end, _drop_one(nbr[end], prev)] = v
        success[e] = True
    return WalkerTrace(n, degree, walk_length, v, terminal, success, slot)


def walker_checks(trace: WalkerTrace, bins: int = 31, alpha: float = 0.05) -> dict:
    """Uniformity of the refreshed peers and lag-k/2 independence of the
    sample sequence.  The walker's own id is outside the support; the test
    drops the remainder of support ids beyond the last full bin."""
    s = trace.samples
    support = np.arange(trace.n)
    support = support[support != trace.walker]
    usable = len(support) - len(support) % bins
    keep = support[:usable]
    inside = s[np.isin(s, keep)]
    test = metrics.chi_square_uniform(inside, keep, n_bins=bins, n_intervals=1, alpha=alpha)[0]
    lag = trace.degree
    r = metrics.autocorrelation(s.astype(float), lag)
    return {
        "failure_rate": trace.failure_rate,
        "chi_square": test.statistic,
        "chi_critical": test.critical,
        "uniform": not test.reject,
        "autocorrelation": r,
        "autocorrelation_limit": 3.0 / math.sqrt(len(s)),
        "independent": abs(r) < 3.0 / math.sqrt(len(s)),
    }


# --------------------------------------------------------------------------
# formula against oracle table


@dataclass(frozen=True)
class CheckRow:
    check: str
    params: str
    kind: str        # "equal": oracle estimates the formula; "lower"/"upper": formula bounds it
    formula: float
    oracle: float
    stderr: float

    @property
    def z(self) -> float:
        est = Estimate(self.oracle, self.stderr, 0)
        z = est.z(self.formula)
        if self.kind == "lower":
            return min(0.0, z)
        if self.kind == "upper":
            return max(0.0, z)
        return z


TABLE_FIELDS = ("check", "params", "kind", "formula", "oracle", "stderr", "abs_z")


def theory_checks(seed: int = 0, scale: float = 1.0) -> list[CheckRow]:
    """Every closed form next to its oracle.  ``scale`` shrinks trial
    counts and horizons for quick runs."""
    rows = []
    trials = max(10**4, int(10**6 * scale))
    for l in (2, 4, 6):
        est = return_prob_mc(24, l, trials, seed)
        rows.append(CheckRow("return_prob", f"k=24 l={l}", "equal",
                             return_prob_exact(24, l), est.value, est.stderr))
        if l > 2:
            rows.append(CheckRow("return_prob_catalan", f"k=24 l={l}", "lower",
                                 return_prob_catalan(24, l), est.value, est.stderr))
    epochs = max(3 * 24, int(10**4 * scale))
    game = acceptance_game_mc(1024, 24, 0.1, epochs, seed)
    sig = game.sigma
    rows.append(CheckRow("sampling_success", "n=1024 k=24 eta=0.1", "equal",
                         sampling_success_exact(1024, 24, 0.1), sig.value, sig.stderr))
    rows.append(CheckRow("sampling_success_bound", "n=1024 k=24 eta=0.1", "lower",
                         sampling_success_bound(1024, 24, 0.1), sig.value, sig.stderr))
    rho = game.rho
    rows.append(CheckRow("retention_bound", "n=1024 k=24 eta=0.1", "lower",
                         retention_bound(sig.value, 24, 0.1), rho.value, rho.stderr))
    rows.append(CheckRow("retention_sum", "n=1024 k=24 eta=0.1", "lower",
                         retention_sum(sig.value, 1024, 24, 0.1), rho.value, rho.stderr))
    det = detection_mc(512, 8, 3, 21, 0.1, max(50, int(500 * scale)), seed)
    rows.append(CheckRow("equivocation_detection", "n=512 k=8 l=3 m=21", "lower",
                         1.0 - det.missed_bound, det.detection.value, det.detection.stderr))
    trace = single_walker_model(1024, 24, max(2000, int(10**4 * scale)), seed)
    fail = trace.failure_rate
    rows.append(CheckRow("walker_failure", "n=1024 k=24", "upper", 0.02, fail,
                         math.sqrt(max(fail * (1 - fail), 1e-12) / len(trace.success))))
    s = trace.samples.astype(float)
    rows.append(CheckRow("walker_autocorrelation", f"lag={trace.degree}", "equal", 0.0,
                         metrics.autocorrelation(s, trace.degree), 1.0 / math.sqrt(len(s))))
    return rows


def checks_csv(rows: list[CheckRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_FIELDS)
    for r in rows:
        w.writerow([r.check, r.params, r.kind, metrics._fmt(r.formula), metrics._fmt(r.oracle),
                    metrics._fmt(r.stderr), metrics._fmt(abs(r.z))])
    return buf.getvalue()
