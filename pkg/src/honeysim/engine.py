"""Experiment configuration, round loop and result bundles.

One experiment builds a network for a single protocol, drives it round by
round with the seeded beacon, and records metric rows, a JSON summary and a
JSON-lines event log.  Everything is a pure function of the config, so two
runs with equal configs write byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import baselines, core, metrics
from .adversary import Adversary, AdversaryConfig, build_layout, inject_bad_start
from .honeybee import HoneybeeNetwork, HoneybeeParams, period_of, regular_out_table

PROTOCOLS = ("honeybee", "honeybee_no_vrw", "honeybee_no_tcc", "kademlia", "gossipsub")
HONEYBEE_MODES = {"honeybee": "full", "honeybee_no_vrw": "no_vrw", "honeybee_no_tcc": "no_tcc"}
AUDIT_LEVELS = ("auto", "full", "targeted", "off")
EVENT_LEVELS = ("none", "tracked", "all")

OBSERVER_PURPOSE = 41
IDLE_PURPOSE = 42
TABLE_PURPOSE = 43


def default_bins(n: int) -> int:
    """Bin count for the chi-square test: 31 or 127 when either divides the
    n-1 candidate ids, else the largest divisor not above 31."""
    m = n - 1
    for b in (31, 127):
        if m % b == 0 and m // b >= 1:
            return b
    return max(d for d in range(1, min(31, m) + 1) if m % d == 0)


@dataclass
class ExperimentConfig:
    n: int = 1024
    protocol: str = "honeybee"
    k: int = 24
    eta: float = 0.1
    l_min: int = 2
    l_max: Optional[int] = None
    t_max: Optional[int] = None
    tau_slack: int = 2
    horizon_epochs: int = 1000
    seed: int = 0
    bootstrap_count: Optional[int] = None
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    bad_start: Optional[float] = None          # initial dishonest share of the victim's table
    victim_honest_slots: Optional[int] = None  # honest outgoing slots left to the victim
    idle_fraction: float = 0.0
    observers: int = 4
    chi_bins: Optional[int] = None
    chi_intervals: int = 10
    tvd_points: int = 5
    record_samples: bool = True
    record_tables: bool = True
    audit: str = "auto"
    events: str = "tracked"

    # ------------------------------------------------------------------ derived

    @property
    def period(self) -> int:
        return period_of(self.eta)

    @property
    def rounds(self) -> int:
        return self.horizon_epochs * self.period

    @property
    def bootstrap_nodes(self) -> int:
        return self.bootstrap_count if self.bootstrap_count is not None else math.ceil(0.001 * self.n)

    @property
    def bins(self) -> int:
        return self.chi_bins if self.chi_bins is not None else default_bins(self.n)

    def honeybee_params(self) -> HoneybeeParams:
        return HoneybeeParams(self.n, self.k, self.eta, self.l_min, self.l_max, self.t_max, self.tau_slack)

    def resolved_audit(self) -> str:
        if self.audit != "auto":
            return self.audit
        return "targeted" if self.adversary.fraction > 0 else "off"

    # ------------------------------------------------------------------ validation

    def errors(self) -> list[str]:
        """Every problem with the config, one message per offending field."""
        errs: list[str] = []
        if not isinstance(self.n, int) or self.n < 2:
            errs.append(f"n: must be an integer of at least 2, got {self.n!r}")
        if self.protocol not in PROTOCOLS:
            errs.append(f"protocol: must be one of {', '.join(PROTOCOLS)}, got {self.protocol!r}")
        if not isinstance(self.k, int) or self.k < 2 or self.k % 2:
            errs.append(f"k: must be a positive even integer, got {self.k!r}")
        elif isinstance(self.n, int) and self.k >= self.n:
            errs.append(f"k: must be below n={self.n}, got {self.k}")
        period_ok = False
        if not isinstance(self.eta, (int, float)) or not 0 < self.eta <= 1:
            errs.append(f"eta: must lie in (0, 1], got {self.eta!r}")
        else:
            try:
                period_of(self.eta)
                period_ok = True
            except ValueError:
                errs.append(f"eta: 1/eta must be an integer, got eta={self.eta}")
        if self.l_min < 1:
            errs.append(f"l_min: must be at least 1, got {self.l_min}")
        if self.l_max is not None and self.l_max < self.l_min:
            errs.append(f"l_max: must be at least l_min={self.l_min}, got {self.l_max}")
        if self.t_max is not None and self.t_max < 0:
            errs.append(f"t_max: must be non-negative, got {self.t_max}")
        if self.tau_slack < 0:
            errs.append(f"tau_slack: must be non-negative, got {self.tau_slack}")
        if not isinstance(self.horizon_epochs, int) or self.horizon_epochs < 0:
            errs.append(f"horizon_epochs: must be a non-negative integer, got {self.horizon_epochs!r}")
        if self.bootstrap_count is not None and self.bootstrap_count < 1:
            errs.append(f"bootstrap_count: must be at least 1, got {self.bootstrap_count}")
        errs.extend(self.adversary.errors())
        single = self.adversary.victims == "single"
        if self.bad_start is not None:
            if not 0 < self.bad_start <= 1:
                errs.append(f"bad_start: must lie in (0, 1], got {self.bad_start}")
            if not self.protocol.startswith("honeybee"):
                errs.append("bad_start: only supported for Honeybee protocols")
            if not single or self.adversary.fraction <= 0:
                errs.append("bad_start: needs a single victim and a dishonest population")
        if self.victim_honest_slots is not None:
            if isinstance(self.k, int) and not 0 <= self.victim_honest_slots <= self.k // 2:
                errs.append(f"victim_honest_slots: must lie in [0, k/2], got {self.victim_honest_slots}")
            if not self.protocol.startswith("honeybee"):
                errs.append("victim_honest_slots: only supported for Honeybee protocols")
            if not single or self.adversary.fraction <= 0:
                errs.append("victim_honest_slots: needs a single victim and a dishonest population")
        if not 0 <= self.idle_fraction < 1:
            errs.append(f"idle_fraction: must lie in [0, 1), got {self.idle_fraction}")
        elif self.idle_fraction > 0 and not self.protocol.startswith("honeybee"):
            errs.append("idle_fraction: only supported for Honeybee protocols")
        if self.observers < 1:
            errs.append(f"observers: must be at least 1, got {self.observers}")
        if self.chi_bins is not None and isinstance(self.n, int) and (
            self.chi_bins < 2 or (self.n - 1) % self.chi_bins
        ):
            errs.append(f"chi_bins: must be at least 2 and divide n-1={self.n - 1}, got {self.chi_bins}")
        if self.chi_intervals < 1:
            errs.append(f"chi_intervals: must be at least 1, got {self.chi_intervals}")
        if self.tvd_points < 1:
            errs.append(f"tvd_points: must be at least 1, got {self.tvd_points}")
        if self.audit not in AUDIT_LEVELS:
            errs.append(f"audit: must be one of {', '.join(AUDIT_LEVELS)}, got {self.audit!r}")
        elif self.audit == "off" and self.adversary.fraction > 0:
            errs.append("audit: 'off' is only allowed without dishonest nodes")
        if self.events not in EVENT_LEVELS:
            errs.append(f"events: must be one of {', '.join(EVENT_LEVELS)}, got {self.events!r}")
        if period_ok and isinstance(self.n, int) and isinstance(self.k, int) and self.k >= 2 and not self.k % 2:
            try:
                self.honeybee_params()
            except ValueError as exc:
                errs.append(f"honeybee parameters: {exc}")
        return errs

    # ------------------------------------------------------------------ JSON

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adversary"]["strategies"] = list(self.adversary.strategies)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(unknown)}")
        adv = d.pop("adversary", None) or {}
        if isinstance(adv, dict):
            aknown = {f.name for f in dataclasses.fields(AdversaryConfig)}
            bad = sorted(set(adv) - aknown)
            if bad:
                raise ValueError(f"unknown adversary fields: {', '.join(bad)}")
            adv = AdversaryConfig(**adv)
        return cls(adversary=adv, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str]) -> None:
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


# --------------------------------------------------------------------------
# state


@dataclass
class SimulationState:
    config: ExperimentConfig
    network: Any
    adversary: Adversary
    bad: np.ndarray                 # dishonest mask
    victims: np.ndarray             # victim ids ("single" or every honest node)
    observers: list[int]
    idle: list[int]
    recorder: metrics.Recorder
    events: list[str]
    samples: dict                   # observer -> list of sampled ids, in order
    round: int = 0
    walk_failures: int = 0
    eclipsed_ever: Optional[np.ndarray] = None

    @property
    def epoch(self) -> int:
        return self.round // self.config.period

    def table_array(self) -> np.ndarray:
        return self.network.table_array()


def _event_sink(state_events: list[str], protocol: str, baseline: bool) -> Callable[[dict], None]:
    def emit(rec: dict) -> None:
        if baseline:
            rec = dict(rec, protocol=protocol)
        state_events.append(json.dumps(rec, sort_keys=True))
    return emit


def _pools(adv: Adversary, n: int) -> Optional[list[np.ndarray]]:
    """Bootstrap candidates per node under the clustered layout: honest nodes
    and traps see their own side plus gateways, gateways see everyone."""
    if adv.cluster is None:
        return None
    everyone = np.arange(n, dtype=np.int64)
    gates = np.array(sorted(adv.cluster.gateways), dtype=np.int64)
    honest = everyone[~adv.mask]
    dishonest = everyone[adv.mask]
    honest_pool = np.union1d(honest, gates)
    pools = []
    for u in range(n):
        if u in adv.cluster.gateways:
            pools.append(everyone)
        elif adv.mask[u]:
            pools.append(dishonest)
        else:
            pools.append(honest_pool)
    return pools


def _baseline_flags(adv: Adversary) -> int:
    flags = 0
    if adv.s_routing:
        flags |= baselines.F_ROUTING
    if adv.s_black_hole:
        flags |= baselines.F_BLACK_HOLE
    if adv.s_selective:
        flags |= baselines.F_SELECTIVE
    if adv.s_recommend:
        flags |= baselines.F_RECOMMEND
    if adv.s_selection:
        flags |= baselines.F_SELECTION
    return flags


def init(config: ExperimentConfig) -> SimulationState:
    """Assign roles, build the layout and bootstrap every node."""
    errs = config.errors()
    if errs:
        raise ConfigError(errs)
    n, seed = config.n, config.seed
    adv = Adversary.build(config.adversary, n, seed, config.protocol)
    bad = adv.mask.copy()
    honest = np.nonzero(~bad)[0]

    rng = np.random.default_rng([seed, OBSERVER_PURPOSE])
    pool = np.setdiff1d(honest, adv.victim_ids) if config.adversary.victims == "single" else honest
    if len(pool) == 0:
        pool = honest
    observers = sorted(int(x) for x in rng.choice(pool, size=min(config.observers, len(pool)), replace=False))
    idle: list[int] = []
    if config.idle_fraction > 0:
        cand = np.setdiff1d(np.setdiff1d(honest, observers), adv.victim_ids if config.adversary.victims == "single" else [])
        count = int(math.floor(config.idle_fraction * n))
        irng = np.random.default_rng([seed, IDLE_PURPOSE])
        idle = sorted(int(x) for x in irng.choice(cand, size=min(count, len(cand)), replace=False))

    events: list[str] = []
    tracked = set(observers)
    if config.adversary.victims == "single":
        tracked |= {int(v) for v in adv.victim_ids}
    if config.events == "all":
        tracked = set(range(n))
    elif config.events == "none":
        tracked = set()

    if config.protocol in HONEYBEE_MODES:
        params = config.honeybee_params()
        _, ids = core.make_identities(n, seed)
        out = regular_out_table(n, params.n_out, np.random.default_rng([seed, TABLE_PURPOSE]))
        dishonest = adv.dishonest_ids
        if len(dishonest):
            out = build_layout(dishonest, config.adversary.layout, out, seed, adv.cluster)
            if config.adversary.victims == "single":
                v = int(adv.victim_ids[0])
                if config.bad_start is not None:
                    total = int(round(config.bad_start * params.k))
                    d_out = min(params.n_out, math.ceil(total / 2))
                    out = inject_bad_start(out, v, d_out, total - d_out, dishonest, seed)
                if config.victim_honest_slots is not None:
                    out = inject_bad_start(out, v, params.n_out - config.victim_honest_slots, None, dishonest, seed)
        net = HoneybeeNetwork(
            params, ids, out, seed,
            adversary=adv,
            mode=HONEYBEE_MODES[config.protocol],
            audit=config.resolved_audit(),
            idle=idle,
            logger=_event_sink(events, config.protocol, False) if tracked else None,
            tracked=tracked,
        )
    else:
        cls = baselines.KademliaNetwork if config.protocol == "kademlia" else baselines.GossipSubNetwork
        net = cls(
            n, seed, config.period,
            bad=bad,
            victim=adv.victim_mask,
            flags=_baseline_flags(adv),
            flood_rate=config.adversary.flood_rate if adv.floods else 0,
            pools=_pools(adv, n),
        )
    state = SimulationState(
        config, net, adv, bad, adv.victim_ids, observers, idle, metrics.Recorder(), events,
        {o: [] for o in observers},
    )
    state._tracked = tracked  # type: ignore[attr-defined]
    state._emit = _event_sink(events, config.protocol, True) if tracked else None  # type: ignore[attr-defined]
    state.eclipsed_ever = np.zeros(n, dtype=bool)
    record_snapshot(state)
    return state


# --------------------------------------------------------------------------
# round loop


def step(state: SimulationState) -> None:
    """Advance one round; table metrics are recorded at each epoch boundary."""
    cfg = state.config
    t = state.round
    net = state.network
    if cfg.protocol in HONEYBEE_MODES:
        report = net.step_round(t, core.beacon(cfg.seed, t))
        state.walk_failures += len(report.failures)
        samples = [(o.initiator, o.terminal) for o in report.outcomes]
    else:
        samples = net.step_round(t)
        emit = state._emit  # type: ignore[attr-defined]
        if emit is not None:
            tracked = state._tracked  # type: ignore[attr-defined]
            for u, s in samples:
                if u in tracked:
                    emit({"event": "sample_committed", "round": t, "initiator": u, "sample": s})
    epoch = t // cfg.period
    for u, s in samples:
        if u in state.samples:
            state.samples[u].append(s)
            if cfg.record_samples:
                state.recorder.add(t, epoch, "sample", u, s)
    state.round = t + 1
    if state.round % cfg.period == 0:
        record_snapshot(state)


def record_snapshot(state: SimulationState) -> None:
    cfg = state.config
    if not cfg.record_tables:
        return
    rec = state.recorder
    r, e = state.round, state.epoch
    adv = state.adversary
    if adv.dishonest_count:
        table = state.table_array()
        if cfg.adversary.victims == "single":
            for v in state.victims.tolist():
                rec.add(r, e, "dishonest_ratio", v, metrics.dishonest_ratio(table[v], state.bad))
        else:
            ratios = metrics.dishonest_ratios(table[state.victims], state.bad)
            rec.add(r, e, "mean_dishonest_ratio", None, float(np.nanmean(ratios)) if len(ratios) else float("nan"))
            mask = metrics.eclipsed_mask(table, state.bad)
            state.eclipsed_ever |= mask
            rec.add(r, e, "eclipsed", None, int(mask[state.victims].sum()))
            rec.add(r, e, "eclipsed_cumulative", None, int(state.eclipsed_ever[state.victims].sum()))
    if cfg.protocol in HONEYBEE_MODES:
        net = state.network
        rec.add(r, e, "walk_failures", None, state.walk_failures)
        rec.add(r, e, "valid_proofs", None, net.valid_proofs)
        rec.add(r, e, "slashed", None, len(net.slashed))
        state.walk_failures = 0


# --------------------------------------------------------------------------
# results


@dataclass
class MetricsBundle:
    config: ExperimentConfig
    recorder: metrics.Recorder
    summary: dict
    events: list[str]

    def csv(self) -> str:
        return self.recorder.to_csv()

    def write(self, out_dir: str) -> dict[str, str]:
        """Write config, metric rows, summary and event log under ``out_dir``."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "config": os.path.join(out_dir, "config.json"),
            "metrics": os.path.join(out_dir, "metrics.csv"),
            "summary": os.path.join(out_dir, "summary.json"),
            "events": os.path.join(out_dir, "events.jsonl"),
        }
        with open(paths["config"], "w") as fh:
            fh.write(self.config.to_json() + "\n")
        with open(paths["metrics"], "w", newline="") as fh:
            fh.write(self.csv())
        with open(paths["summary"], "w") as fh:
            fh.write(json.dumps(_clean(self.summary), indent=2, sort_keys=True) + "\n")
        with open(paths["events"], "w") as fh:
            for line in self.events:
                fh.write(line + "\n")
        return paths


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def summarize(state: SimulationState) -> dict:
    cfg = state.config
    rec = state.recorder
    adv = state.adversary
    out: dict[str, Any] = {
        "protocol": cfg.protocol,
        "n": cfg.n,
        "seed": cfg.seed,
        "rounds": state.round,
        "epochs": state.epoch,
        "fraction": cfg.adversary.fraction,
        "dishonest": adv.dishonest_count,
        "observers": state.observers,
    }
    if adv.dishonest_count and cfg.record_tables:
        if cfg.adversary.victims == "single":
            v = int(state.victims[0])
            series = rec.series("dishonest_ratio", v)
            out["victim"] = v
            out["victim_ratio_initial"] = series[0] if series else None
            tail = np.asarray(series[1:], dtype=float)
            out["victim_ratio_mean"] = float(np.nanmean(tail)) if len(tail) and not np.isnan(tail).all() else None
            out["victim_ratio_final"] = series[-1] if series else None
            out["victim_eclipsed_epochs"] = int(sum(1 for x in series if x == 1.0))
            out["epsilon_uniform"] = {
                str(eps): metrics.epsilon_uniform(tail, cfg.adversary.fraction, eps) for eps in (0.03, 0.05)
            } if len(tail) else {}
        else:
            mean = np.asarray(rec.series("mean_dishonest_ratio")[1:], dtype=float)
            out["mean_ratio"] = float(np.nanmean(mean)) if len(mean) else None
            final = rec.series("eclipsed")
            cum = rec.series("eclipsed_cumulative")
            out["honest_nodes"] = int(len(state.victims))
            out["eclipsed_final"] = final[-1] if final else 0
            out["eclipsed_cumulative"] = cum[-1] if cum else 0
            out["eclipsed_fraction"] = (cum[-1] / len(state.victims)) if cum and len(state.victims) else 0.0
    if cfg.protocol in HONEYBEE_MODES:
        net = state.network
        out["valid_proofs"] = net.valid_proofs
        out["refuted_proofs"] = net.refuted_proofs
        out["slashed"] = len(net.slashed)
        out["slashed_honest"] = int(sum(1 for z in net.slashed if not state.bad[z]))
    out["uniformity"] = uniformity_summary(state)
    return out


def uniformity_summary(state: SimulationState) -> dict:
    cfg = state.config
    n = cfg.n
    res: dict[str, Any] = {}
    for o in state.observers:
        seq = state.samples[o]
        support = [v for v in range(n) if v != o]
        entry: dict[str, Any] = {"samples": len(seq)}
        if seq:
            entry["tvd_checkpoints"] = metrics.tvd_checkpoints(seq, support, cfg.tvd_points)
            tests = metrics.chi_square_uniform(seq, support, cfg.bins, cfg.chi_intervals)
            entry["chi_square"] = [
                {"statistic": t.statistic, "critical": t.critical, "reject": t.reject,
                 "underpowered": t.underpowered, "samples": t.samples}
                for t in tests
            ]
            entry["rejections"] = sum(t.reject for t in tests)
            entry["underpowered"] = sum(t.underpowered for t in tests)
        res[str(o)] = entry
    cps = [res[str(o)].get("tvd_checkpoints") for o in state.observers if res[str(o)].get("tvd_checkpoints")]
    if cps:
        means = []
        for c in zip(*cps):
            c = np.asarray(c, dtype=float)
            means.append(float(c[~np.isnan(c)].mean()) if (~np.isnan(c)).any() else float("nan"))
        res["mean_tvd_checkpoints"] = means
    return res


FAST_CHUNK_EPOCHS = 500


def _fast_capable(state: SimulationState) -> bool:
    net = state.network
    return isinstance(net, HoneybeeNetwork) and net.audit == "off"


def fast_forward(state: SimulationState, epochs: int) -> None:
    """Advance whole epochs through the compiled all-honest kernel, recording
    the same rows :func:`step` would."""
    cfg = state.config
    period = cfg.period
    rec = state.recorder
    r0 = state.round
    rounds = epochs * period
    samples, fails = state.network.fast_forward(r0, [core.beacon(cfg.seed, r) for r in range(r0, r0 + rounds)])
    j = 0
    m = len(samples)
    rows = samples.tolist()
    fl = fails.tolist()
    for i in range(rounds):
        t = r0 + i
        epoch = t // period
        while j < m and rows[j][0] == t:
            _, u, v = rows[j]
            if u in state.samples:
                state.samples[u].append(v)
                if cfg.record_samples:
                    rec.add(t, epoch, "sample", u, v)
            j += 1
        state.walk_failures += fl[i]
        state.round = t + 1
        if state.round % period == 0:
            record_snapshot(state)


def run(config: ExperimentConfig, progress: Optional[Callable[[SimulationState], None]] = None) -> MetricsBundle:
    """Run ``config`` to its horizon.  ``progress`` is called once per epoch,
    or once per compiled chunk on the all-honest fast path."""
    state = init(config)
    period = config.period
    if _fast_capable(state) and state.round % period == 0:
        left = config.horizon_epochs
        while left > 0:
            e = min(left, FAST_CHUNK_EPOCHS)
            fast_forward(state, e)
            left -= e
            if progress is not None:
                progress(state)
    else:
        for _ in range(config.rounds):
            step(state)
            if progress is not None and state.round % period == 0:
                progress(state)
    return MetricsBundle(config, state.recorder, summarize(state), state.events)


def run_many(configs: Sequence[ExperimentConfig], workers: int = 1) -> list[MetricsBundle]:
    """Run independent experiments, in worker processes when ``workers > 1``.
    Results come back in input order."""
    if workers <= 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))
