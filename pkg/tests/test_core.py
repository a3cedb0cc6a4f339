import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from honeysim import core


@pytest.fixture(scope="module")
def ids():
    return core.make_identities(8, seed=3)


def test_sign_verify_roundtrip(ids):
    _, nodes = ids
    a, b = nodes[0], nodes[1]
    sig = core.sign(a.secret_key, b"hello")
    assert core.verify(a.public_key, b"hello", sig)
    assert not core.verify(a.public_key, b"hellp", sig)
    assert not core.verify(b.public_key, b"hello", sig)


def test_unknown_public_key_never_verifies(ids):
    _, nodes = ids
    sig = core.sign(nodes[0].secret_key, b"m")
    assert not core.verify(12345, b"m", sig)


def test_certificates_verify_under_authority(ids):
    authority, nodes = ids
    assert all(core.verify_certificate(x, authority.public_key) for x in nodes)
    assert len({x.id for x in nodes}) == len(nodes)
    assert not core.verify_certificate(nodes[0], nodes[1].public_key)


def test_beacon_determinism_and_collisions():
    assert core.beacon(7, 5) == core.beacon(7, 5)
    values = {core.beacon(7, r).value for r in range(100_000)}
    assert len(values) == 100_000


def test_beacon_bit_frequency():
    vals = [core.beacon(11, r).value for r in range(10_000)]
    bits = np.array([[(v >> i) & 1 for i in range(128)] for v in vals])
    freq = bits.mean(axis=0)
    assert np.all(np.abs(freq - 0.5) <= 0.02)


def test_beacon_rejects_negative_round():
    with pytest.raises(ValueError):
        core.beacon(0, -1)


def test_vrf_verify_and_determinism(ids):
    _, nodes = ids
    sk, pk = nodes[2].secret_key, nodes[2].public_key
    b = core.beacon(1, 10)
    x = core.hop_input(b, 1, 0, 2)
    y = core.hop_input(b, 1, 1, 2)
    out = core.vrf_eval(sk, x)
    assert out == core.vrf_eval(sk, x)
    assert core.vrf_verify(pk, x, out)
    assert not core.vrf_verify(pk, y, out)
    assert not core.vrf_verify(nodes[3].public_key, x, out)


@settings(max_examples=60, deadline=None)
@given(epoch=st.integers(0, 2**40), hop=st.integers(-1, 50), cur=st.integers(0, 2**20),
       rnd=st.integers(0, 10**6))
def test_compiled_hop_digest_matches_encoding(ids, epoch, hop, cur, rnd):
    _, nodes = ids
    b = core.beacon(5, rnd)
    sk = nodes[4].secret_key
    assert core.vrf_hop(sk, b, epoch, hop, cur) == core.vrf_eval(sk, core.hop_input(b, epoch, hop, cur))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_mix64_twins_agree(x):
    assert core.mix64_int(x) == int(core.mix64(np.uint64(x)))


def test_encoding_is_length_prefixed():
    assert core.encode(1) == (8).to_bytes(8, "little") + (1).to_bytes(8, "little")
    assert core.encode(-1)[8:] == b"\xff" * 8
    assert core.encode(b"ab") == (2).to_bytes(8, "little") + b"ab"
    assert core.encode([1, 2]) != core.encode(1, 2)


def _snap(nodes, owner, out, inc=(), rnd=0):
    return core.make_snapshot(nodes[owner].secret_key, owner, rnd, out, inc)


def test_snapshot_diff(ids):
    _, nodes = ids
    a = _snap(nodes, 0, [1, 2, 3])
    assert core.snapshot_diff(a, a) == 0
    assert core.snapshot_diff(a, _snap(nodes, 0, [1, 2, 4])) == 2
    x = _snap(nodes, 0, list(range(100, 112)))
    y = _snap(nodes, 0, list(range(200, 212)))
    assert core.snapshot_diff(x, y) == 24
    with pytest.raises(ValueError):
        core.snapshot_diff(a, _snap(nodes, 1, [1, 2, 3]))


def test_snapshot_diff_ignores_empty_slots_and_incoming(ids):
    _, nodes = ids
    a = _snap(nodes, 0, [1, -1, 3], inc=[5])
    b = _snap(nodes, 0, [3, 1, -1], inc=[6, 7])
    assert core.snapshot_diff(a, b) == 0


def test_snapshot_signature_and_json(ids):
    _, nodes = ids
    s = _snap(nodes, 0, [1, -1, 3], inc=[4], rnd=9)
    assert core.snapshot_valid(s, nodes[0].public_key)
    assert not core.snapshot_valid(s, nodes[1].public_key)
    doc = s.to_json()
    assert list(doc) == ["owner", "round", "outgoing", "incoming", "signature"]
    back = core.TableSnapshot.from_json(json.loads(json.dumps(doc)))
    assert back == s and back.signature == s.signature
    forged = core.TableSnapshot(0, 9, (1, 2, 3), (4,), s.signature)
    assert not core.snapshot_valid(forged, nodes[0].public_key)


def test_agreement_validity_window(ids):
    _, nodes = ids
    ag = core.make_agreement(nodes[0], nodes[1], created_round=100, lifetime=240)
    assert ag.expiry_round == 340
    assert core.agreement_valid(ag, 100)
    assert core.agreement_valid(ag, 339)
    assert not core.agreement_valid(ag, 340)
    bad = core.PeeringAgreement(**{**ag.__dict__, "sig_acceptor": b"\x00" * 8})
    assert not core.agreement_valid(bad, 100)
