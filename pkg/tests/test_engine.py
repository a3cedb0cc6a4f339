import json
import os

import pytest

from honeysim import engine
from honeysim.adversary import AdversaryConfig
from honeysim.engine import ConfigError, ExperimentConfig


def small(protocol="honeybee", f=0.0, epochs=20, **kw):
    adv = AdversaryConfig(fraction=f, **kw.pop("adv", {}))
    return ExperimentConfig(n=128, protocol=protocol, horizon_epochs=epochs, adversary=adv, **kw)


def test_default_bins():
    assert engine.default_bins(1024) == 31
    assert engine.default_bins(16384) == 127
    assert engine.default_bins(128) == 127
    assert engine.default_bins(256) == 17


def test_defaults_are_valid():
    cfg = ExperimentConfig()
    assert cfg.errors() == []
    assert (cfg.n, cfg.k, cfg.eta, cfg.period, cfg.rounds, cfg.bins) == (1024, 24, 0.1, 10, 10000, 31)
    assert cfg.resolved_audit() == "off"
    assert small(f=0.2).resolved_audit() == "targeted"


def test_errors_are_aggregated_and_named():
    errs = ExperimentConfig(k=5, eta=0.3, protocol="chord", observers=0).errors()
    fields = {e.split(":")[0] for e in errs}
    assert {"k", "eta", "protocol", "observers"} <= fields
    assert any(e.startswith("audit") for e in ExperimentConfig(audit="off", adversary=AdversaryConfig(0.2)).errors())
    assert any(e.startswith("bad_start") for e in ExperimentConfig(protocol="kademlia", bad_start=0.8).errors())


def test_json_roundtrip_and_unknown_fields():
    cfg = small(f=0.3, adv={"layout": "clustered"}, seed=9)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"adversary": {"bogus": 1}})


def test_init_rejects_invalid_config():
    with pytest.raises(ConfigError) as exc:
        engine.init(ExperimentConfig(k=5))
    assert exc.value.errors


@pytest.mark.parametrize("protocol", engine.PROTOCOLS)
def test_every_protocol_runs(protocol):
    b = engine.run(small(protocol, f=0.2, epochs=5))
    s = b.summary
    assert s["epochs"] == 5 and s["rounds"] == 50
    assert "victim_ratio_mean" in s
    rows = b.csv().splitlines()
    assert rows[0] == "round,epoch,metric,node_id,value"
    assert any(",dishonest_ratio," in r for r in rows)


def test_snapshot_per_epoch_rows():
    b = engine.run(small(f=0.2, epochs=6))
    v = b.summary["victim"]
    assert len(b.recorder.series("dishonest_ratio", v)) == 7  # round 0 plus one per epoch


def test_all_victims_metrics():
    b = engine.run(small("gossipsub", f=0.3, epochs=5, adv={"victims": "all_honest"}))
    s = b.summary
    assert s["honest_nodes"] == 128 - int(0.3 * 128)
    assert 0 <= s["eclipsed_fraction"] <= 1
    assert len(b.recorder.series("eclipsed_cumulative")) == 6


def test_honest_network_skips_ratio_metrics():
    b = engine.run(small(epochs=10, adv={"victims": "all_honest"}))
    assert "mean_ratio" not in b.summary
    assert b.summary["valid_proofs"] == 0
    table = engine.init(small()).table_array()
    assert (table >= 0).sum(axis=1).min() > 0


def test_samples_recorded_for_observers_only():
    cfg = small(epochs=30, record_samples=True)
    b = engine.run(cfg)
    rows = [r.split(",") for r in b.csv().splitlines()[1:] if ",sample," in r]
    assert rows and {int(r[3]) for r in rows} <= set(b.summary["observers"])


def test_fast_path_matches_stepping():
    cfg = small(epochs=30, idle_fraction=0.1)
    fast = engine.run(cfg).csv()
    state = engine.init(cfg)
    for _ in range(cfg.rounds):
        engine.step(state)
    slow = engine.MetricsBundle(cfg, state.recorder, engine.summarize(state), state.events).csv()
    assert fast == slow


@pytest.mark.parametrize("protocol", ["honeybee", "kademlia", "gossipsub"])
def test_same_seed_same_bytes(protocol):
    cfg = small(protocol, f=0.2, epochs=8)
    assert engine.run(cfg).csv() == engine.run(cfg).csv()
    assert engine.run(cfg).csv() != engine.run(cfg.replace(seed=1)).csv()


def test_workers_do_not_change_results():
    cfgs = [small("gossipsub", f=0.2, epochs=5, seed=s) for s in range(3)]
    one = [b.csv() for b in engine.run_many(cfgs, 1)]
    two = [b.csv() for b in engine.run_many(cfgs, 2)]
    assert one == two


def test_bundle_write(tmp_path):
    b = engine.run(small(f=0.2, epochs=3))
    paths = b.write(str(tmp_path))
    assert set(os.listdir(tmp_path)) == {"config.json", "metrics.csv", "summary.json", "events.jsonl"}
    assert ExperimentConfig.from_json(open(paths["config"]).read()) == b.config
    json.load(open(paths["summary"]))
    lines = open(paths["events"]).read().splitlines()
    assert lines and all("event" in json.loads(x) for x in lines)


def test_baseline_events_carry_protocol_tag():
    b = engine.run(small("kademlia", f=0.2, epochs=3))
    recs = [json.loads(x) for x in b.events]
    assert recs and all(r["protocol"] == "kademlia" for r in recs)


def test_bad_start_and_honest_slots_applied():
    s = engine.init(small(f=0.5, bad_start=0.875))
    v = int(s.victims[0])
    row = s.network.table_row(v)
    assert s.bad[row[row >= 0]].mean() == pytest.approx(0.875, abs=0.05)
    s = engine.init(small(f=0.5, victim_honest_slots=1, adv={"layout": "clustered"}))
    v = int(s.victims[0])
    out = s.network.out[v]
    assert (~s.bad[out[out >= 0]]).sum() == 1


def test_zero_horizon():
    b = engine.run(small(epochs=0))
    assert b.summary["rounds"] == 0
