"""Uniformity and attack metrics.

Tables are passed around as 2-D integer arrays with ``-1`` marking empty
entries, one row per node, so the same code serves all three protocols.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special


def tvd(p_counts: Sequence[float], q_dist: Sequence[float]) -> float:
    """Total variation distance between the empirical distribution of
    ``p_counts`` and the reference distribution ``q_dist``."""
    p = np.asarray(p_counts, dtype=float)
    q = np.asarray(q_dist, dtype=float)
    if p.shape != q.shape:
        raise ValueError("histogram and reference must share the same support")
    total = p.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    return 0.5 * float(np.abs(p / total - q / q.sum()).sum())


def chi2_critical(df: int, alpha: float = 0.05) -> float:
    """Upper ``alpha`` quantile of the chi-square law, by inverting the
    regularized upper incomplete gamma function."""
    if df < 1:
        raise ValueError("df must be positive")
    return 2.0 * float(special.gammainccinv(df / 2.0, alpha))


@dataclass(frozen=True)
class IntervalTest:
    statistic: float
    critical: float
    reject: bool
    underpowered: bool
    samples: int


@dataclass
class SampleHistogram:
    observer: int
    support: np.ndarray          # candidate ids, sorted
    counts: np.ndarray           # one entry per support id
    epochs: int = 0

    @classmethod
    def empty(cls, observer: int, n: int) -> "SampleHistogram":
        support = np.array([v for v in range(n) if v != observer], dtype=np.int64)
        return cls(observer, support, np.zeros(len(support), dtype=np.int64))

    def add(self, ids: Iterable[int]) -> None:
        for v in ids:
            self.counts[self._rank(v)] += 1

    def _rank(self, v: int) -> int:
        i = int(np.searchsorted(self.support, v))
        if i >= len(self.support) or self.support[i] != v:
            raise ValueError(f"{v} is outside the support")
        return i

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class UniformityVerdict:
    tvd: float
    intervals: tuple
    epsilon_uniform: Optional[bool] = None

    @property
    def rejections(self) -> int:
        return sum(1 for t in self.intervals if t.reject)


def chi_square_uniform(
    samples: Sequence[int],
    support: Sequence[int],
    n_bins: int = 31,
    n_intervals: int = 10,
    alpha: float = 0.05,
) -> list[IntervalTest]:
    """Chi-square test of a time-ordered sample sequence against the uniform
    law on ``support``, per time interval.

    Ids are grouped into ``n_bins`` runs of consecutive support ranks.  An
    interval whose expected bin count falls below 5 is flagged underpowered
    and never rejected.
    """
    sup = np.sort(np.asarray(support, dtype=np.int64))
    if len(sup) % n_bins:
        raise ValueError(f"support size {len(sup)} is not divisible by {n_bins} bins")
    width = len(sup) // n_bins
    x = np.asarray(samples, dtype=np.int64)
    ranks = np.searchsorted(sup, x)
    if len(x) and (sup[np.minimum(ranks, len(sup) - 1)] != x).any():
        raise ValueError("samples outside the support")
    crit = chi2_critical(n_bins - 1, alpha)
    out = []
    for part in np.array_split(ranks // width, n_intervals):
        m = len(part)
        expected = m / n_bins
        if expected < 5:
            out.append(IntervalTest(float("nan"), crit, False, True, m))
            continue
        obs = np.bincount(part, minlength=n_bins)
        stat = float(((obs - expected) ** 2 / expected).sum())
        out.append(IntervalTest(stat, crit, stat > crit, False, m))
    return out


def dishonest_ratio(row: Sequence[int], bad: np.ndarray) -> float:
    """Dishonest share of the non-empty entries of one table; NaN when the
    table is empty."""
    r = np.asarray(row, dtype=np.int64)
    r = r[r >= 0]
    if len(r) == 0:
        return float("nan")
    return float(bad[r].mean())


def dishonest_ratios(table: np.ndarray, bad: np.ndarray) -> np.ndarray:
    ok = table >= 0
    size = ok.sum(axis=1)
    hits = (bad[np.where(ok, table, 0)] & ok).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(size > 0, hits / np.maximum(size, 1), np.nan)


def eclipsed_mask(table: np.ndarray, bad: np.ndarray) -> np.ndarray:
    """Honest nodes whose non-empty table is entirely dishonest."""
    r = dishonest_ratios(table, bad)
    return (r == 1.0) & ~bad


def eclipse_count(table: np.ndarray, bad: np.ndarray, nodes: Optional[Sequence[int]] = None) -> int:
    mask = eclipsed_mask(table, bad)
    if nodes is not None:
        return int(mask[np.asarray(nodes, dtype=np.int64)].sum())
    return int(mask.sum())


def epsilon_uniform(ratio_series: Sequence[float], f: float, eps: float) -> bool:
    r = np.asarray(ratio_series, dtype=float)
    r = r[~np.isnan(r)]
    if len(r) == 0:
        return False
    return float(r.mean()) <= f + eps


def freshness_check(
    tables: Sequence[frozenset],
    failed: Sequence[bool],
    warmup: int = 0,
    idle: bool = False,
) -> bool:
    """``tables[e]`` is the outgoing set at the start of epoch ``e`` and
    ``failed[e]`` tells whether the walk of epoch ``e`` verifiably failed.
    Every epoch after ``warmup`` must add a new peer or have failed."""
    if idle:
        return True
    for e in range(warmup, len(tables) - 1):
        if not (set(tables[e + 1]) - set(tables[e])) and not failed[e]:
            return False
    return True


def autocorrelation(seq: Sequence[float], lag: int) -> float:
    x = np.asarray(seq, dtype=float)
    if lag < 1 or lag >= len(x):
        raise ValueError("lag must lie in [1, len(seq))")
    x = x - x.mean()
    den = float((x * x).sum())
    if den == 0:
        return 0.0
    return float((x[:-lag] * x[lag:]).sum() / den)


def independence_check(seq: Sequence[float], lag: int = 1) -> bool:
    """Lag autocorrelation indistinguishable from zero: |r| < 3/sqrt(N)."""
    return abs(autocorrelation(seq, lag)) < 3.0 / math.sqrt(len(seq))


def tvd_checkpoints(samples: Sequence[int], support: Sequence[int], points: int = 5) -> list[float]:
    """TVD of the cumulative histogram against uniform at ``points`` equally
    spaced cut points of the sample sequence."""
    sup = np.sort(np.asarray(support, dtype=np.int64))
    ranks = np.searchsorted(sup, np.asarray(samples, dtype=np.int64))
    q = np.full(len(sup), 1.0 / len(sup))
    out = []
    for i in range(1, points + 1):
        cut = len(ranks) * i // points
        if cut == 0:
            out.append(float("nan"))
            continue
        out.append(tvd(np.bincount(ranks[:cut], minlength=len(sup)), q))
    return out


# --------------------------------------------------------------------------
# recording


@dataclass
class Recorder:
    """Append-only metric rows ``(round, epoch, metric, node_id, value)``."""

    rows: list = field(default_factory=list)

    def add(self, rnd: int, epoch: int, metric: str, node: Optional[int], value: float) -> None:
        self.rows.append((rnd, epoch, metric, "" if node is None else node, value))

    def series(self, metric: str, node: Optional[int] = None) -> list[float]:
        want = "" if node is None else node
        return [r[4] for r in self.rows if r[2] == metric and r[3] == want]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "epoch", "metric", "node_id", "value"])
        for r in self.rows:
            v = r[4]
            w.writerow([r[0], r[1], r[2], r[3], _fmt(v)])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(round(v, 10))
