import dataclasses
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from honeysim import core
from honeysim.adversary import Adversary, AdversaryConfig
from honeysim.core import FraudProof
from honeysim.honeybee import (
    HoneybeeNetwork, HoneybeeParams, HopRejection, Verdict, WalkState, acceptance_policy,
    bootstrap, choose_indices, derive_walk_plan, eligible_nodes, is_eligible, make_update,
    origin_slot, regular_out_table, tau, verify_fraud_proof, verify_walk_plan,
)


def make_net(n=64, seed=1, audit="full", mode="full", adversary=None, idle=()):
    params = HoneybeeParams(n)
    _, ids = core.make_identities(n, seed)
    out = regular_out_table(n, params.n_out, np.random.default_rng(seed))
    return HoneybeeNetwork(params, ids, out, seed, adversary=adversary, mode=mode, audit=audit, idle=idle)


def run_rounds(net, rounds, seed=1, r0=0):
    return [net.step_round(r, core.beacon(seed, r)) for r in range(r0, r0 + rounds)]


# --------------------------------------------------------------------------
# parameters and schedule


def test_default_parameters():
    p = HoneybeeParams(1024)
    assert (p.n_out, p.n_in, p.l_min, p.l_max, p.t_max, p.period, p.lifetime) == (12, 12, 2, 6, 120, 10, 240)


def test_tau_values():
    assert tau(0, 10, 120) == 2
    assert tau(10, 10, 120) == 4
    vals = [tau(w, 10, 120) for w in range(121)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        tau(121, 10, 120)


def test_eligibility_schedule():
    n, period = 1024, 10
    sizes = {len(eligible_nodes(t, period, n)) for t in range(period)}
    assert sizes == {102, 103}
    assert list(eligible_nodes(3, period, n)) == list(eligible_nodes(13, period, n))
    for start in (0, 7, 55):
        seen = Counter(v for t in range(start, start + period) for v in eligible_nodes(t, period, n))
        assert set(seen) == set(range(n)) and set(seen.values()) == {1}
    assert is_eligible(13, core.beacon(0, 3), 0.1, n)
    assert not is_eligible(13, 4, 0.1, n)


def test_walk_plan_deterministic_and_uniform():
    params = HoneybeeParams(1024)
    _, ids = core.make_identities(4, 2)
    b = core.beacon(2, 0)
    p1, proof = derive_walk_plan(ids[0], b, 5, params)
    assert (p1, proof) == derive_walk_plan(ids[0], b, 5, params)
    assert verify_walk_plan(ids[0].public_key, 0, b, 5, params, p1, proof)
    assert not verify_walk_plan(ids[0].public_key, 0, b, 5, params, p1 + 1, proof)
    lengths = [derive_walk_plan(ids[e % 4], b, e, params)[0] for e in range(10_000)]
    freq = Counter(lengths)
    assert set(freq) == {2, 3, 4, 5, 6}
    assert all(abs(c / 10_000 - 0.2) <= 0.02 for c in freq.values())


# --------------------------------------------------------------------------
# bootstrap and tables


def test_bootstrap_fills_distinct_outgoing():
    rng = np.random.default_rng(0)
    table = bootstrap(5, lambda m: rng.integers(0, 1024, size=m), 24)
    assert len(table) == 12 == len(set(table)) and 5 not in table


def test_bootstrap_dishonest_share_matches_fraction():
    rng = np.random.default_rng(1)
    bad = np.zeros(1024, dtype=bool)
    bad[rng.choice(1024, 512, replace=False)] = True
    shares = [bad[bootstrap(0, lambda m: rng.integers(0, 1024, size=m), 24)].mean() for _ in range(200)]
    assert 0.44 <= np.mean(shares) <= 0.56


def test_regular_out_table_degrees():
    out = regular_out_table(200, 12, np.random.default_rng(3))
    assert (out != np.arange(200)[:, None]).all()
    assert all(len(set(r)) == 12 for r in out.tolist())
    assert (np.bincount(out.ravel(), minlength=200) == 12).all()


def test_origin_slot():
    assert origin_slot([5, -1, -1, 7], 1) == 3
    assert origin_slot([5, -1, -1, 7], 0) == 0
    assert origin_slot([-1, -1, 9], 0) == 2
    assert origin_slot([-1, -1], 1) == 1


# --------------------------------------------------------------------------
# acceptance policy


def test_policy_examples():
    rng = np.random.default_rng(0)
    assert acceptance_policy([], [1, 2], 12, rng) == ([], [])
    acc, ev = acceptance_policy(list(range(12)), [], 12, rng)
    assert acc == list(range(12)) and ev == []
    acc, ev = acceptance_policy([100, 101, 102, 103, 104], list(range(10)), 12, rng)
    assert len(acc) == 5 and len(ev) == 3 and set(ev) <= set(range(10))
    acc, ev = acceptance_policy(list(range(20)), [50, 51], 12, rng)
    assert len(acc) == 12 and ev == [50, 51]


@settings(max_examples=200, deadline=None)
@given(i=st.integers(0, 30), j=st.integers(0, 12), cap=st.integers(1, 12), seed=st.integers(0, 1000))
def test_policy_respects_capacity(i, j, cap, seed):
    j = min(j, cap)
    reqs = list(range(100, 100 + i))
    left = list(range(j))
    acc, ev = acceptance_policy(reqs, left, cap, np.random.default_rng(seed))
    assert len(acc) + len(left) - len(ev) <= cap
    assert len(acc) == min(i, cap)
    assert set(ev) <= set(left) and len(set(acc)) == len(acc)


@settings(max_examples=100, deadline=None)
@given(m=st.integers(1, 40), data=st.data())
def test_choose_indices_distinct_sorted(m, data):
    k = data.draw(st.integers(0, m))
    idx = choose_indices(1, 2, 3, 1, m, k)
    assert idx == sorted(set(idx)) and len(idx) == k and all(0 <= x < m for x in idx)


# --------------------------------------------------------------------------
# walks


def test_honest_walk_accepted_by_every_hop():
    net = make_net()
    b = core.beacon(1, 4)
    w, rej = net.walk(4, b, 4)
    assert rej is None
    assert w.hop_counter == w.path_length == len(w.trace)
    assert w.trace[0].source == 4 and w.first_hop_index == w.trace[0].index
    for a, c in zip(w.trace, w.trace[1:]):
        assert a.target == c.source
    fresh = dataclasses.replace(w, verified=0)
    assert net.verify_trace(fresh, b) is None


def test_budget_exhausted_hop_rejected():
    net = make_net()
    b = core.beacon(1, 4)
    w, _ = net.walk(4, b, 4)
    r = net.execute_hop(w, b)
    assert isinstance(r, HopRejection) and r.reason == "hop_budget_exceeded"


@pytest.mark.parametrize("field,reason", [("index", "bad_index"), ("target", "trace_mismatch"), ("vrf", "bad_vrf")])
def test_altered_trace_rejected(field, reason):
    net = make_net()
    b = core.beacon(1, 4)
    w, _ = net.walk(4, b, 4)
    rec = w.trace[1]
    if field == "index":
        bad = dataclasses.replace(rec, index=(rec.index + 1) % 12)
    elif field == "target":
        bad = dataclasses.replace(rec, target=(rec.target + 1) % 64)
    else:
        bad = dataclasses.replace(rec, vrf=core.VrfOutput(rec.vrf.value ^ 1, rec.vrf.proof))
    trace = list(w.trace)
    trace[1] = bad
    assert net.verify_trace(dataclasses.replace(w, trace=trace, verified=0), b) == reason


def test_forged_snapshot_rejected():
    net = make_net()
    b = core.beacon(1, 4)
    w, _ = net.walk(4, b, 4)
    rec = w.trace[1]
    snap = rec.snapshot
    forged = core.TableSnapshot(snap.owner, snap.round, snap.outgoing, snap.incoming, b"\x00" * 8)
    trace = list(w.trace)
    trace[1] = dataclasses.replace(rec, snapshot=forged)
    assert net.verify_trace(dataclasses.replace(w, trace=trace, verified=0), b) == "bad_snapshot"


def test_routing_lies_always_caught():
    n = 64
    cfg = AdversaryConfig(fraction=0.3, strategies=("adversarial_routing",), victim_id=None)
    adv = Adversary.build(cfg, n, 5, "honeybee")
    victim = int(adv.victim_ids[0])
    net = make_net(n, seed=5, adversary=adv, audit="full")
    caught = 0
    for r in range(40):
        b = core.beacon(5, r)
        w, rej = net.walk(victim, b, r)
        assert all(not adv.is_dishonest(h.source) or h.source == victim for h in w.trace[1:])
        if rej is not None and adv.is_dishonest(rej.node):
            assert rej.reason == "slot_mismatch"
            held, lied = rej.evidence
            assert held.owner == lied.owner == rej.node
            # one slot rewritten; the lie target may already sit in another slot
            assert sum(x != y for x, y in zip(held.outgoing, lied.outgoing)) == 1
            assert core.snapshot_diff(held, lied) in (1, 2)
            assert core.snapshot_valid(lied, net.ids[rej.node].public_key)
            caught += 1
    assert caught > 0


def test_finalize_walk_updates_one_slot():
    net = make_net()
    b = core.beacon(1, 4)
    w, _ = net.walk(4, b, 4)
    before = net.out[4].copy()
    o = net.finalize_walk(w, 4)
    changed = np.flatnonzero(before != net.out[4])
    if o.accepted:
        assert len(changed) == 1 and net.out[4, changed[0]] == w.current
        assert 4 in net.inc[w.current]
    else:
        assert len(changed) == 0
    net.check_invariants()


def test_finalize_walk_duplicate_terminal_fails():
    net = make_net()
    b = core.beacon(1, 4)
    w, _ = net.walk(4, b, 4)
    w.current = int(net.out[4, 3])
    before = net.out.copy()
    o = net.finalize_walk(w, 4)
    assert not o.accepted and o.reason == "duplicate"
    assert (before == net.out).all()


def test_sampling_requests_within_capacity():
    net = make_net(n=64)
    t = 10
    reqs = [(u, 0) for u in range(20, 40) if u != t and t not in net.out[u]]
    rep = net.handle_sampling_requests(t, reqs, 1)
    assert len(net.inc[t]) <= net.params.n_in
    net.check_invariants()
    assert len([o for o in rep.outcomes if o.accepted]) <= net.params.n_in


# --------------------------------------------------------------------------
# fraud proofs


def _snap(net, owner, outgoing, rnd):
    return core.make_snapshot(net.ids[owner].secret_key, owner, rnd, outgoing, [])


def test_identical_snapshots_no_proof():
    net = make_net()
    s = net.snapshot(3)
    assert net._compare(0, 3, s, s) is None


def test_disjoint_tables_give_valid_proof():
    net = make_net()
    a = _snap(net, 3, list(range(10, 22)), 5)
    b = _snap(net, 3, list(range(30, 42)), 7)
    proof = net._compare(7, 3, a, b)
    assert proof is not None and proof.diff_count == 24
    assert verify_fraud_proof(proof, net.ids[3].public_key, net.params) is Verdict.VALID
    assert verify_fraud_proof(proof, net.ids[3].public_key, net.params, history=[]) is Verdict.VALID


def test_stale_or_malformed_proof_invalid():
    net = make_net()
    pk = net.ids[3].public_key
    a = _snap(net, 3, list(range(10, 22)), 0)
    b = _snap(net, 3, list(range(30, 42)), 121)
    assert verify_fraud_proof(FraudProof(3, a, b, 24, 121), pk, net.params) is Verdict.INVALID
    c = _snap(net, 3, list(range(30, 42)), 10)
    assert verify_fraud_proof(FraudProof(3, a, c, 23, 10), pk, net.params) is Verdict.INVALID
    assert verify_fraud_proof(FraudProof(3, a, c, 24, 10), net.ids[4].public_key, net.params) is Verdict.INVALID


def test_update_chain_refutes_forced_accusation():
    net = make_net()
    ident = net.ids[3]
    start = list(range(10, 22))
    a = _snap(net, 3, start, 0)
    table = list(start)
    history = []
    for s in range(4):
        new = 50 + s
        history.append(make_update(ident, 10 * (s + 1), s, table[s], new))
        table[s] = new
    b = _snap(net, 3, table, 40)
    # forced through with a permissive tau, only the chain can answer it
    params = dataclasses.replace(net.params, tau_slack=-100)
    proof = FraudProof(3, a, b, 8, 40)
    assert verify_fraud_proof(proof, ident.public_key, params, history) is Verdict.REFUTED_BY_HISTORY
    broken = history[:2] + history[3:]
    assert verify_fraud_proof(proof, ident.public_key, params, broken) is Verdict.VALID
    assert verify_fraud_proof(proof, ident.public_key, params, ["junk"]) is Verdict.VALID


# --------------------------------------------------------------------------
# network-level properties


def test_honest_rounds_keep_invariants():
    net = make_net(n=128, audit="full")
    epoch_tables = [net.out.copy()]
    for r in range(300):
        rep = net.step_round(r, core.beacon(1, r))
        net.check_invariants()
        assert not any(v is Verdict.VALID for _, v in rep.proofs)
        if (r + 1) % net.params.period == 0:
            epoch_tables.append(net.out.copy())
    assert net.valid_proofs == 0 and not net.slashed
    for a, b in zip(epoch_tables, epoch_tables[1:]):
        # one commit per epoch; evictions and expiry only empty slots
        assert (((a != b) & (b >= 0)).sum(axis=1) <= 1).all()


def test_audit_levels_agree_when_honest():
    nets = {a: make_net(n=96, audit=a) for a in ("full", "targeted", "off")}
    for net in nets.values():
        run_rounds(net, 150)
    ref = nets["full"]
    for net in nets.values():
        assert (net.out == ref.out).all() and net.inc == ref.inc and (net.expiry == ref.expiry).all()


def test_targeted_audit_matches_full_under_attack():
    res = {}
    for audit in ("full", "targeted"):
        adv = Adversary.build(AdversaryConfig(fraction=0.2), 96, 2, "honeybee")
        net = make_net(n=96, seed=2, adversary=adv, audit=audit)
        run_rounds(net, 120, seed=2)
        res[audit] = net
    a, b = res["full"], res["targeted"]
    assert (a.out == b.out).all() and a.inc == b.inc and a.slashed == b.slashed


def test_compiled_rounds_match_python_rounds():
    py = make_net(n=128, audit="off", idle=[5, 9])
    fast = make_net(n=128, audit="off", idle=[5, 9])
    reports = run_rounds(py, 400)
    samples, fails = fast.fast_forward(0, [core.beacon(1, r) for r in range(400)])
    assert (py.out == fast.out).all() and (py.expiry == fast.expiry).all()
    assert (py.version == fast.version).all() and py.inc == fast.inc
    assert fails.tolist() == [len(r.failures) for r in reports]
    want = [(r.round, o.initiator, o.terminal) for r in reports for o in r.outcomes if o.accepted]
    assert sorted(map(tuple, samples.tolist())) == sorted(want)


def test_idle_nodes_never_walk():
    net = make_net(n=64, audit="off", idle=[7])
    before = net.out[7].copy()
    for rep in run_rounds(net, 60):
        assert all(o.initiator != 7 for o in rep.outcomes)
    kept = [x for x in net.out[7] if x >= 0]
    assert set(kept) <= set(before.tolist())


def test_equivocator_gets_slashed():
    adv = Adversary.build(AdversaryConfig(fraction=0.2, strategies=("equivocal_table",)), 96, 4, "honeybee")
    net = make_net(n=96, seed=4, adversary=adv, audit="full")
    run_rounds(net, 200, seed=4)
    assert net.slashed and all(adv.is_dishonest(z) for z in net.slashed)
