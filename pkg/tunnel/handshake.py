"""
Two-message IK handshake.

Mix sequence: initiator sends ephemeral, es, static, ss, timestamp; responder answers with
ephemeral, ee, se, psk. HKDF-HMAC-SHA256 is the KDF, SHA-256 the transcript hash and
ChaCha20Poly1305 the AEAD.
"""
import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Set, Tuple, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import AuthenticationError, IndexMismatch, MalformedFrame, MalformedKey, StaleTimestamp
from .frames import InitiationFrame, ResponseFrame, decode_frame
from .keys import KEY_LEN, RandomSource, StaticKeypair, dh, generate_keypair
from .session import RekeyPolicy, TransportSession

logger = logging.getLogger(__name__)

CONSTRUCTION = b"sliceguard v1 tunnel"
ZERO_PSK = bytes(KEY_LEN)
TAI64_BASE = 2**62
# Virtual clocks start at zero; timestamps are offset so they look like wall-clock time.
TIMESTAMP_EPOCH = 1_700_000_000

Clock = Callable[[], float]
PskSource = Union[bytes, Callable[[bytes], bytes]]


def _hash(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _kdf(key: bytes, material: bytes, n: int) -> Tuple[bytes, ...]:
    out = HKDF(algorithm=hashes.SHA256(), length=32 * n, salt=key, info=b"").derive(material)
    return tuple(out[i * 32:(i + 1) * 32] for i in range(n))


def _aead_seal(key: bytes, plaintext: bytes, aad: bytes) -> bytes:
    return ChaCha20Poly1305(key).encrypt(bytes(12), plaintext, aad)


def _aead_open(key: bytes, ciphertext: bytes, aad: bytes, what: str) -> bytes:
    try:
        return ChaCha20Poly1305(key).decrypt(bytes(12), ciphertext, aad)
    except InvalidTag as e:
        raise AuthenticationError(f"{what} failed authentication") from e


def _dh(private: bytes, public: bytes) -> bytes:
    try:
        return dh(private, public)
    except (MalformedKey, ValueError) as e:
        # low-order points and corrupted ephemerals end up here
        raise AuthenticationError(f"key agreement failed: {e}") from e


def tai64n(seconds: float) -> bytes:
    total_ns = int(round((seconds + TIMESTAMP_EPOCH) * 1e9))
    secs, nanos = divmod(total_ns, 10**9)
    return (TAI64_BASE + secs).to_bytes(8, "big") + nanos.to_bytes(4, "big")


class IndexTable:
    """Session indices that are live on one node."""

    def __init__(self):
        self._live: Set[int] = set()

    def allocate(self, rng: RandomSource) -> int:
        while True:
            index = int.from_bytes(rng(4), "little")
            if index not in self._live:
                self._live.add(index)
                return index

    def release(self, index: int) -> None:
        self._live.discard(index)

    def __contains__(self, index: int) -> bool:
        return index in self._live


class InitiationGuard:
    """Greatest initiation timestamp seen per initiator static key."""

    def __init__(self):
        self._greatest: Dict[bytes, bytes] = {}

    def check(self, initiator_static: bytes, timestamp: bytes) -> None:
        last = self._greatest.get(initiator_static)
        if last is not None and timestamp <= last:
            raise StaleTimestamp("initiation timestamp is not newer than the last one seen")

    def record(self, initiator_static: bytes, timestamp: bytes) -> None:
        self._greatest[initiator_static] = timestamp


@dataclass
class HandshakeState:
    chaining_key: bytes = field(repr=False)
    transcript_hash: bytes = field(repr=False)
    local_ephemeral: StaticKeypair = field(repr=False)
    local_index: int
    role: str
    local_static: StaticKeypair = field(repr=False)
    remote_static: bytes
    psk: bytes = field(repr=False)
    clock: Clock = field(repr=False)


def _initial_state(responder_public: bytes) -> Tuple[bytes, bytes]:
    chaining_key = _hash(CONSTRUCTION)
    return chaining_key, _hash(chaining_key + responder_public)


def initiate(
    local: StaticKeypair,
    remote_public: bytes,
    psk: bytes = ZERO_PSK,
    clock: Clock = lambda: 0.0,
    rng: RandomSource = os.urandom,
    indices: Optional[IndexTable] = None,
) -> Tuple[HandshakeState, InitiationFrame]:
    """Build the first handshake message towards remote_public."""
    if len(remote_public) != KEY_LEN:
        raise MalformedKey("remote public key must be 32 bytes")
    c, h = _initial_state(remote_public)

    ephemeral = generate_keypair(rng)
    (c,) = _kdf(c, ephemeral.public, 1)
    h = _hash(h + ephemeral.public)

    c, k = _kdf(c, _dh(ephemeral.private, remote_public), 2)
    encrypted_static = _aead_seal(k, local.public, h)
    h = _hash(h + encrypted_static)

    c, k = _kdf(c, _dh(local.private, remote_public), 2)
    encrypted_timestamp = _aead_seal(k, tai64n(clock()), h)
    h = _hash(h + encrypted_timestamp)

    index = indices.allocate(rng) if indices is not None else int.from_bytes(rng(4), "little")
    state = HandshakeState(
        chaining_key=c, transcript_hash=h, local_ephemeral=ephemeral, local_index=index,
        role="initiator", local_static=local, remote_static=remote_public, psk=psk, clock=clock,
    )
    return state, InitiationFrame(index, ephemeral.public, encrypted_static, encrypted_timestamp)


def respond(
    local: StaticKeypair,
    psk: PskSource,
    msg: Union[InitiationFrame, bytes],
    clock: Clock = lambda: 0.0,
    rng: RandomSource = os.urandom,
    guard: Optional[InitiationGuard] = None,
    indices: Optional[IndexTable] = None,
    policy: Optional[RekeyPolicy] = None,
) -> Tuple[ResponseFrame, TransportSession]:
    """
    Consume an initiation and produce the response plus the responder's session.

    The decrypted initiator static key is exposed as session.remote_static for policy checks.
    psk may be a callable mapping that key to the pre-shared key to use.
    """
    if isinstance(msg, (bytes, bytearray)):
        msg = decode_frame(bytes(msg))
    if not isinstance(msg, InitiationFrame):
        raise MalformedFrame("expected an initiation frame")

    c, h = _initial_state(local.public)
    (c,) = _kdf(c, msg.ephemeral, 1)
    h = _hash(h + msg.ephemeral)

    c, k = _kdf(c, _dh(local.private, msg.ephemeral), 2)
    initiator_static = _aead_open(k, msg.encrypted_static, h, "initiator static")
    h = _hash(h + msg.encrypted_static)

    c, k = _kdf(c, _dh(local.private, initiator_static), 2)
    timestamp = _aead_open(k, msg.encrypted_timestamp, h, "initiation timestamp")
    h = _hash(h + msg.encrypted_timestamp)
    if guard is not None:
        guard.check(initiator_static, timestamp)

    psk_value = psk(initiator_static) if callable(psk) else psk
    ephemeral = generate_keypair(rng)
    (c,) = _kdf(c, ephemeral.public, 1)
    h = _hash(h + ephemeral.public)
    (c,) = _kdf(c, _dh(ephemeral.private, msg.ephemeral), 1)
    (c,) = _kdf(c, _dh(ephemeral.private, initiator_static), 1)
    c, tau, k = _kdf(c, psk_value, 3)
    h = _hash(h + tau)
    encrypted_empty = _aead_seal(k, b"", h)
    h = _hash(h + encrypted_empty)

    initiator_send, initiator_recv = _kdf(c, b"", 2)
    index = indices.allocate(rng) if indices is not None else int.from_bytes(rng(4), "little")
    if guard is not None:
        guard.record(initiator_static, timestamp)

    session = TransportSession(
        send_key=initiator_recv, recv_key=initiator_send, local_index=index,
        remote_index=msg.sender_index, established_at=clock(), remote_static=initiator_static,
        is_initiator=False, clock=clock, policy=policy or RekeyPolicy(), handshake_hash=h,
    )
    return ResponseFrame(index, msg.sender_index, ephemeral.public, encrypted_empty), session


def finalize(
    state: HandshakeState,
    msg: Union[ResponseFrame, bytes],
    policy: Optional[RekeyPolicy] = None,
) -> TransportSession:
    """Consume the response on the initiator side and derive its session."""
    if isinstance(msg, (bytes, bytearray)):
        msg = decode_frame(bytes(msg))
    if not isinstance(msg, ResponseFrame):
        raise MalformedFrame("expected a response frame")
    if state.role != "initiator":
        raise MalformedFrame("only an initiator can finalize a handshake")
    if msg.receiver_index != state.local_index:
        raise IndexMismatch(
            f"response for index {msg.receiver_index:#010x}, handshake is {state.local_index:#010x}"
        )

    c, h = state.chaining_key, state.transcript_hash
    (c,) = _kdf(c, msg.ephemeral, 1)
    h = _hash(h + msg.ephemeral)
    (c,) = _kdf(c, _dh(state.local_ephemeral.private, msg.ephemeral), 1)
    (c,) = _kdf(c, _dh(state.local_static.private, msg.ephemeral), 1)
    c, tau, k = _kdf(c, state.psk, 3)
    h = _hash(h + tau)
    _aead_open(k, msg.encrypted_empty, h, "response")
    h = _hash(h + msg.encrypted_empty)

    send_key, recv_key = _kdf(c, b"", 2)
    return TransportSession(
        send_key=send_key, recv_key=recv_key, local_index=state.local_index,
        remote_index=msg.sender_index, established_at=state.clock(),
        remote_static=state.remote_static, is_initiator=True, clock=state.clock,
        policy=policy or RekeyPolicy(), handshake_hash=h,
    )
