"""Identities, a keyed-hash signature scheme, the round beacon, a VRF and
the signed objects (snapshots, peering agreements, fraud proofs) shared by
the protocol modules.

The signature scheme is a deterministic test scheme: a secret key is a
64-bit seed, a signature is a keyed digest of the message and a VRF proof is
the digest itself.  Verification goes through a registry that maps public
keys to the secret keys that produced them, which stands in for the
asymmetric verification a real deployment would use.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
EMPTY = -1
_EMPTY_SET = frozenset((EMPTY,))
_U64 = struct.Struct("<Q")
_PAIR = struct.Struct("<QQ")

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_IV = np.uint64(0x243F6A8885A308D3)

# Domain tags keep VRF outputs, public keys and signatures unrelated even
# though all are derived from the same secret seed.
_VRF_TAG = 0x5652465F444F4D31
_PK_TAG = 0x504B5F444F4D4131


@njit(cache=True)
def mix64(z):
    """splitmix64 finalizer on a uint64."""
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True)
def hash_words(key, words, nbytes):
    """Keyed 64-bit digest over little-endian 64-bit words."""
    h = np.uint64(key) ^ _IV
    for i in range(words.shape[0]):
        h = mix64(h ^ words[i])
    return mix64(h ^ np.uint64(nbytes))


@njit(cache=True)
def hop_digest(key, beacon_lo, beacon_hi, epoch, hop, current):
    """Digest of ``encode(beacon_bytes, epoch, hop, current)`` under ``key``.

    Word-for-word identical to ``hash_words`` over the canonical encoding,
    spelled out so compiled walk loops avoid building byte strings.
    """
    h = np.uint64(key) ^ _IV
    h = mix64(h ^ np.uint64(16))
    h = mix64(h ^ np.uint64(beacon_lo))
    h = mix64(h ^ np.uint64(beacon_hi))
    h = mix64(h ^ np.uint64(8))
    h = mix64(h ^ np.uint64(epoch))
    h = mix64(h ^ np.uint64(8))
    h = mix64(h ^ np.uint64(hop))
    h = mix64(h ^ np.uint64(8))
    h = mix64(h ^ np.uint64(current))
    return mix64(h ^ np.uint64(72))


def mix64_int(x: int) -> int:
    """Pure-Python twin of :func:`mix64` for plain ints."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


# --------------------------------------------------------------------------
# canonical encoding

Field = Union[int, bytes, Sequence[int]]


def encode(*fields: Field) -> bytes:
    """Canonical encoding: every field is preceded by its byte length as a
    little-endian u64.  Integers are u64 (negative values wrap, so the empty
    slot marker -1 becomes 2**64-1), byte strings are copied verbatim and
    integer sequences are concatenated u64 values.
    """
    parts = []
    for f in fields:
        if isinstance(f, (bytes, bytearray)):
            parts.append(_U64.pack(len(f)))
            parts.append(bytes(f))
        elif isinstance(f, (int, np.integer)):
            parts.append(_PAIR.pack(8, int(f) & MASK64))
        else:
            items = [int(x) & MASK64 for x in f]
            parts.append(struct.pack(f"<{len(items) + 1}Q", 8 * len(items), *items))
    return b"".join(parts)


def digest(key: int, data: bytes) -> int:
    pad = (-len(data)) % 8
    words = np.frombuffer(data + b"\x00" * pad, dtype="<u8")
    return int(hash_words(np.uint64(key & MASK64), words, np.uint64(len(data))))


# --------------------------------------------------------------------------
# keys and the keyed-hash scheme


@dataclass(frozen=True)
class KeyPair:
    public_key: int
    secret_key: int


class KeyedHashScheme:
    """Deterministic signature/VRF scheme backed by keyed digests."""

    def __init__(self) -> None:
        self._secret_of: dict[int, int] = {}

    def keygen(self, seed: int, index: int) -> KeyPair:
        h = hashlib.blake2b(encode(seed, index), digest_size=8, person=b"hs-keygen")
        sk = int.from_bytes(h.digest(), "little")
        pk = mix64_int(sk ^ _PK_TAG)
        self._secret_of[pk] = sk
        return KeyPair(pk, sk)

    def secret_of(self, public_key: int) -> int | None:
        """Registry lookup standing in for asymmetric verification."""
        return self._secret_of.get(public_key)

    def public_key_of(self, secret_key: int) -> int:
        return mix64_int(secret_key ^ _PK_TAG)

    def sign(self, secret_key: int, message: bytes) -> bytes:
        return digest(secret_key, message).to_bytes(8, "little")

    def verify(self, public_key: int, message: bytes, signature: bytes) -> bool:
        sk = self._secret_of.get(public_key)
        if sk is None:
            return False
        return self.sign(sk, message) == bytes(signature)

    def vrf_eval(self, secret_key: int, message: bytes) -> "VrfOutput":
        value = digest(secret_key ^ _VRF_TAG, message)
        return VrfOutput(value, value.to_bytes(8, "little"))

    def vrf_verify(self, public_key: int, message: bytes, output: "VrfOutput") -> bool:
        sk = self._secret_of.get(public_key)
        if sk is None:
            return False
        expect = self.vrf_eval(sk, message)
        return expect.value == output.value and expect.proof == bytes(output.proof)

    def vrf_key(self, secret_key: int) -> int:
        """Key actually fed to the digest for VRF evaluations."""
        return (secret_key ^ _VRF_TAG) & MASK64


SCHEME = KeyedHashScheme()


def keygen(seed: int, index: int) -> KeyPair:
    return SCHEME.keygen(seed, index)


def sign(secret_key: int, message: bytes) -> bytes:
    return SCHEME.sign(secret_key, message)


def verify(public_key: int, message: bytes, signature: bytes) -> bool:
    return SCHEME.verify(public_key, message, signature)


@dataclass(frozen=True)
class VrfOutput:
    value: int
    proof: bytes


def vrf_eval(secret_key: int, message: bytes) -> VrfOutput:
    return SCHEME.vrf_eval(secret_key, message)


def vrf_verify(public_key: int, message: bytes, output: VrfOutput) -> bool:
    return SCHEME.vrf_verify(public_key, message, output)


# --------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class NodeIdentity:
    id: int
    public_key: int
    secret_key: int = field(repr=False)
    address: int
    certificate: bytes

    def binding(self) -> bytes:
        return encode(self.id, self.public_key, self.address)


def make_identities(n: int, seed: int) -> tuple[KeyPair, list[NodeIdentity]]:
    """Create the bootstrap authority and ``n`` certified identities."""
    authority = keygen(seed, -1)
    nodes = []
    for i in range(n):
        kp = keygen(seed, i)
        address = mix64_int((seed << 20) ^ i ^ 0xADD2E55)
        cert = sign(authority.secret_key, encode(i, kp.public_key, address))
        nodes.append(NodeIdentity(i, kp.public_key, kp.secret_key, address, cert))
    return authority, nodes


def verify_certificate(identity: NodeIdentity, authority_key: int) -> bool:
    return verify(authority_key, identity.binding(), identity.certificate)


# --------------------------------------------------------------------------
# round beacon


@dataclass(frozen=True)
class RoundBeacon:
    round: int
    value: int

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(16, "little")

    @property
    def lo(self) -> int:
        return self.value & MASK64

    @property
    def hi(self) -> int:
        return self.value >> 64


def beacon(global_seed: int, round: int) -> RoundBeacon:
    if round < 0:
        raise ValueError(f"round must be non-negative, got {round}")
    h = hashlib.blake2b(encode(global_seed, round), digest_size=16, person=b"hs-beacon")
    return RoundBeacon(round, int.from_bytes(h.digest(), "little"))


def hop_input(b: RoundBeacon, epoch: int, hop: int, current: int) -> bytes:
    """VRF input for one walk hop."""
    return encode(b.to_bytes(), epoch, hop, current)


def vrf_hop(secret_key: int, b: RoundBeacon, epoch: int, hop: int, current: int) -> VrfOutput:
    """Same output as ``vrf_eval(secret_key, hop_input(...))`` through the
    compiled digest, skipping the byte encoding."""
    value = int(hop_digest(
        np.uint64(SCHEME.vrf_key(secret_key)), np.uint64(b.lo), np.uint64(b.hi),
        np.uint64(epoch & MASK64), np.uint64(hop & MASK64), np.uint64(current & MASK64),
    ))
    return VrfOutput(value, value.to_bytes(8, "little"))


def vrf_hop_verify(
    public_key: int, b: RoundBeacon, epoch: int, hop: int, current: int, output: VrfOutput
) -> bool:
    sk = SCHEME.secret_of(public_key)
    if sk is None:
        return False
    expect = vrf_hop(sk, b, epoch, hop, current)
    return expect.value == output.value and expect.proof == bytes(output.proof)


# --------------------------------------------------------------------------
# snapshots, agreements and fraud proofs


@dataclass(frozen=True)
class TableSnapshot:
    owner: int
    round: int
    outgoing: tuple[int, ...]
    incoming: tuple[int, ...]
    signature: bytes = field(compare=False)

    def message(self) -> bytes:
        return snapshot_message(self.owner, self.round, self.outgoing, self.incoming)

    def outgoing_set(self) -> frozenset[int]:
        cached = self.__dict__.get("_outgoing_set")
        if cached is None:
            cached = frozenset(self.outgoing) - _EMPTY_SET
            object.__setattr__(self, "_outgoing_set", cached)
        return cached

    def to_json(self) -> dict:
        return {
            "owner": self.owner,
            "round": self.round,
            "outgoing": list(self.outgoing),
            "incoming": list(self.incoming),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TableSnapshot":
        return cls(
            int(doc["owner"]),
            int(doc["round"]),
            tuple(int(x) for x in doc["outgoing"]),
            tuple(int(x) for x in doc["incoming"]),
            bytes.fromhex(doc["signature"]),
        )


def snapshot_message(owner: int, round: int, outgoing: Iterable[int], incoming: Iterable[int]) -> bytes:
    return encode(b"snapshot", owner, round, list(outgoing), list(incoming))


def make_snapshot(
    secret_key: int, owner: int, round: int, outgoing: Iterable[int], incoming: Iterable[int]
) -> TableSnapshot:
    out = tuple(int(x) for x in outgoing)
    inc = tuple(sorted(int(x) for x in incoming))
    sig = sign(secret_key, snapshot_message(owner, round, out, inc))
    return TableSnapshot(owner, round, out, inc, sig)


def snapshot_valid(s: TableSnapshot, public_key: int) -> bool:
    # snapshots are immutable, so a successful check is remembered per key
    if s.__dict__.get("_valid_for") == public_key:
        return True
    ok = verify(public_key, s.message(), s.signature)
    if ok:
        object.__setattr__(s, "_valid_for", public_key)
    return ok


def snapshot_diff(a: TableSnapshot, b: TableSnapshot) -> int:
    """Number of ids in exactly one of the two outgoing sets."""
    if a.owner != b.owner:
        raise ValueError(f"snapshots belong to different owners ({a.owner} != {b.owner})")
    if a.outgoing == b.outgoing:
        return 0
    return len(a.outgoing_set() ^ b.outgoing_set())


@dataclass(frozen=True)
class PeeringAgreement:
    initiator: int
    acceptor: int
    created_round: int
    expiry_round: int
    initiator_key: int
    acceptor_key: int
    sig_initiator: bytes
    sig_acceptor: bytes

    def message(self) -> bytes:
        return agreement_message(self.initiator, self.acceptor, self.created_round, self.expiry_round)


def agreement_message(initiator: int, acceptor: int, created: int, expiry: int) -> bytes:
    return encode(b"agreement", initiator, acceptor, created, expiry)


def make_agreement(
    initiator: NodeIdentity, acceptor: NodeIdentity, created_round: int, lifetime: int
) -> PeeringAgreement:
    expiry = created_round + lifetime
    msg = agreement_message(initiator.id, acceptor.id, created_round, expiry)
    return PeeringAgreement(
        initiator.id,
        acceptor.id,
        created_round,
        expiry,
        initiator.public_key,
        acceptor.public_key,
        sign(initiator.secret_key, msg),
        sign(acceptor.secret_key, msg),
    )


def agreement_valid(agreement: PeeringAgreement, current_round: int) -> bool:
    msg = agreement.message()
    return (
        verify(agreement.initiator_key, msg, agreement.sig_initiator)
        and verify(agreement.acceptor_key, msg, agreement.sig_acceptor)
        and current_round < agreement.expiry_round
    )


@dataclass(frozen=True)
class FraudProof:
    accused: int
    snapshot_a: TableSnapshot
    snapshot_b: TableSnapshot
    diff_count: int
    window: int

    def to_json(self) -> dict:
        return {
            "accused": self.accused,
            "window": self.window,
            "diff": self.diff_count,
            "snapshot_a": self.snapshot_a.to_json(),
            "snapshot_b": self.snapshot_b.to_json(),
        }
