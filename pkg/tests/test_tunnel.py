import random

import pytest

from tunnel.device import PeerDescriptor, TunnelDevice
from tunnel.errors import (
    AuthenticationError,
    IndexMismatch,
    MalformedFrame,
    MalformedKey,
    ReplayError,
    SessionExpired,
    StaleTimestamp,
    TunnelError,
)
from tunnel.frames import INITIATION_LEN, MSG_TRANSPORT, RESPONSE_LEN, TransportFrame, decode_frame
from tunnel.handshake import InitiationGuard, finalize, initiate, respond
from tunnel.keys import decode_key, derive_public, encode_key, generate_keypair
from tunnel.session import RekeyPolicy, RekeyStatus, ReplayWindow, rekey_status

from tests.conftest import SeededBytes

RFC7748_PRIVATE = bytes.fromhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a")
RFC7748_PUBLIC = bytes.fromhex("8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaab4e6a")


def handshake(rng, psk=bytes(32), now=lambda: 0.0, policy=None):
    a, b = generate_keypair(rng), generate_keypair(rng)
    state, init = initiate(a, b.public, psk, now, rng)
    response, responder = respond(b, psk, init.encode(), now, rng, policy=policy)
    initiator = finalize(state, response.encode(), policy)
    return initiator, responder


# -- keys -----------------------------------------------------------------------------------


def test_generate_keypair_is_clamped_and_deterministic():
    first = generate_keypair(SeededBytes(11))
    second = generate_keypair(SeededBytes(11))
    assert first == second
    assert first.private[31] & 0x80 == 0
    assert first.private[31] & 0x40
    assert first.private[0] & 0x07 == 0
    assert derive_public(first.private) == first.public


def test_derive_public_known_vector():
    assert derive_public(RFC7748_PRIVATE) == RFC7748_PUBLIC
    assert derive_public(RFC7748_PRIVATE) == derive_public(RFC7748_PRIVATE)


def test_key_codec():
    assert encode_key(bytes(32)) == "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA="
    key = random.Random(5).randbytes(32)
    assert decode_key(encode_key(key)) == key
    with pytest.raises(MalformedKey):
        decode_key("A" * 43)
    with pytest.raises(MalformedKey):
        decode_key("!" * 43 + "=")


# -- handshake ------------------------------------------------------------------------------


def test_handshake_key_agreement_randomized():
    rng = SeededBytes(1)
    psk_rng = random.Random(2)
    for _ in range(1000):
        psk = psk_rng.randbytes(32) if psk_rng.random() < 0.5 else bytes(32)
        initiator, responder = handshake(rng, psk)
        assert initiator.send_key == responder.recv_key
        assert initiator.recv_key == responder.send_key
        assert initiator.send_key != initiator.recv_key
        assert initiator.handshake_hash == responder.handshake_hash


def test_initiation_is_reproducible_with_fixed_rng_and_clock():
    a, b = generate_keypair(SeededBytes(1)), generate_keypair(SeededBytes(2))
    _, first = initiate(a, b.public, clock=lambda: 12.5, rng=SeededBytes(3))
    _, second = initiate(a, b.public, clock=lambda: 12.5, rng=SeededBytes(3))
    assert first.encode() == second.encode()
    assert len(first.encode()) == INITIATION_LEN == 4 + 4 + 32 + (32 + 16) + (12 + 16)
    _, third = initiate(a, b.public, clock=lambda: 12.5, rng=SeededBytes(4))
    assert third.ephemeral != first.ephemeral


def test_independent_handshakes_derive_different_keys(rng):
    a, b = generate_keypair(rng), generate_keypair(rng)
    keys = set()
    for _ in range(2):
        state, init = initiate(a, b.public, rng=rng, clock=lambda: float(len(keys)))
        response, _ = respond(b, bytes(32), init, rng=rng, clock=lambda: float(len(keys)))
        keys.add(finalize(state, response).send_key)
    assert len(keys) == 2


def test_replayed_initiation_is_stale(rng):
    a, b = generate_keypair(rng), generate_keypair(rng)
    guard = InitiationGuard()
    _, init = initiate(a, b.public, clock=lambda: 1.0, rng=rng)
    respond(b, bytes(32), init, rng=rng, guard=guard)
    with pytest.raises(StaleTimestamp):
        respond(b, bytes(32), init, rng=rng, guard=guard)


def test_wrong_psk_fails_at_finalize(rng):
    a, b = generate_keypair(rng), generate_keypair(rng)
    state, init = initiate(a, b.public, bytes(32), rng=rng)
    response, _ = respond(b, b"\x01" * 32, init, rng=rng)
    with pytest.raises(AuthenticationError):
        finalize(state, response)


def test_responder_psk_callable_sees_initiator_static(rng):
    a, b = generate_keypair(rng), generate_keypair(rng)
    seen = []
    psk = b"\x42" * 32

    def lookup(static):
        seen.append(static)
        return psk

    state, init = initiate(a, b.public, psk, rng=rng)
    response, responder = respond(b, lookup, init, rng=rng)
    assert seen == [a.public]
    assert responder.remote_static == a.public
    assert finalize(state, response).send_key == responder.recv_key


def test_finalize_rejects_foreign_response(rng):
    a, b = generate_keypair(rng), generate_keypair(rng)
    state, _ = initiate(a, b.public, rng=rng)
    _, other_init = initiate(a, b.public, rng=rng, clock=lambda: 1.0)
    response, _ = respond(b, bytes(32), other_init, rng=rng)
    with pytest.raises(IndexMismatch):
        finalize(state, response)
    with pytest.raises(MalformedFrame):
        finalize(state, other_init.encode())


INITIATION_FIELDS = [(0, 1), (1, 4), (4, 8), (8, 40), (40, 88), (88, 116)]
RESPONSE_FIELDS = [(0, 1), (1, 4), (4, 8), (8, 12), (12, 44), (44, 60)]


def _bit_positions(fields, sampler):
    for start, end in fields:
        yield start * 8
        yield end * 8 - 1
        for _ in range(4):
            yield sampler.randrange(start * 8, end * 8)


def _flip(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


def test_single_bit_corruption_is_always_rejected():
    rng = SeededBytes(9)
    sampler = random.Random(9)
    a, b = generate_keypair(rng), generate_keypair(rng)

    def run(flip_init=None, flip_response=None):
        state, init = initiate(a, b.public, rng=rng)
        init_bytes = init.encode() if flip_init is None else _flip(init.encode(), flip_init)
        response, responder = respond(b, bytes(32), init_bytes, rng=rng)
        response_bytes = response.encode() if flip_response is None else _flip(response.encode(), flip_response)
        initiator = finalize(state, response_bytes)
        assert responder.open(decode_frame(initiator.seal(b"ping").encode())) == b"ping"
        assert initiator.open(decode_frame(responder.seal(b"pong").encode())) == b"pong"

    run()
    for bit in _bit_positions(INITIATION_FIELDS, sampler):
        with pytest.raises(TunnelError):
            run(flip_init=bit)
    for bit in _bit_positions(RESPONSE_FIELDS, sampler):
        with pytest.raises(TunnelError):
            run(flip_response=bit)


def test_frame_lengths():
    rng = SeededBytes(4)
    initiator, _ = handshake(rng)
    assert len(initiator.seal(b"x" * 1000).encode()) == 1032
    assert len(initiator.seal(b"").encode()) == 32
    state, init = initiate(generate_keypair(rng), generate_keypair(rng).public, rng=rng)
    assert len(init.encode()) == INITIATION_LEN
    assert RESPONSE_LEN == 60


# -- transport ------------------------------------------------------------------------------


def test_seal_open_round_trip_and_counters(rng):
    initiator, responder = handshake(rng)
    first, second = initiator.seal(b"hello"), initiator.seal(b"world")
    assert (first.counter, second.counter) == (0, 1)
    assert first.receiver_index == responder.local_index
    assert decode_frame(first.encode()).msg_type == MSG_TRANSPORT
    assert responder.open(decode_frame(second.encode())) == b"world"
    assert responder.open(first) == b"hello"
    with pytest.raises(ReplayError):
        responder.open(first)


def test_open_checks_index_and_tag(rng):
    initiator, responder = handshake(rng)
    frame = initiator.seal(b"data")
    with pytest.raises(IndexMismatch):
        responder.open(TransportFrame(frame.receiver_index ^ 1, frame.counter, frame.body))
    with pytest.raises(AuthenticationError):
        responder.open(TransportFrame(frame.receiver_index, frame.counter, _flip(frame.body, 3)))
    assert responder.open(frame) == b"data"


def test_replay_window_edges():
    window = ReplayWindow()
    window.strike_out(6)
    window.strike_out(5)
    with pytest.raises(ReplayError):
        window.strike_out(5)
    window.strike_out(10000)
    assert not window.is_valid(1)
    assert not window.is_valid(10000 - 2048)
    assert window.is_valid(10000 - 2047)


def test_replay_window_random_permutation():
    rng = SeededBytes(21)
    initiator, responder = handshake(rng)
    frames = [initiator.seal(i.to_bytes(4, "little")) for i in range(10_000)]
    order = list(range(10_000))
    random.Random(21).shuffle(order)
    deliveries = order + random.Random(22).sample(order, 500)

    accepted = []
    greatest, seen = -1, set()
    expected = []
    for counter in deliveries:
        if counter > greatest or (greatest - counter < 2048 and counter not in seen):
            expected.append(counter)
            seen.add(counter)
            greatest = max(greatest, counter)
        try:
            payload = responder.open(frames[counter])
        except ReplayError:
            continue
        accepted.append(int.from_bytes(payload, "little"))

    assert accepted == expected
    assert len(accepted) == len(set(accepted))


def test_rekey_status_thresholds(rng):
    now = [0.0]
    initiator, _ = handshake(rng, now=lambda: now[0])
    assert rekey_status(initiator, 0.0) is RekeyStatus.FRESH
    assert rekey_status(initiator, 150.0) is RekeyStatus.REKEY_RECOMMENDED
    assert rekey_status(initiator, 181.0) is RekeyStatus.EXPIRED
    now[0] = 181.0
    with pytest.raises(SessionExpired):
        initiator.seal(b"late")


def test_message_limit_triggers_rekey(rng):
    initiator, _ = handshake(rng, policy=RekeyPolicy(rekey_after_messages=3))
    for _ in range(3):
        initiator.seal(b"m")
    assert rekey_status(initiator, 0.0) is RekeyStatus.REKEY_RECOMMENDED


# -- device ---------------------------------------------------------------------------------


class Wire:
    """Two devices joined back to back; frames are queued and flushed on demand."""

    def __init__(self, rng):
        self.queue = []
        self.delivered = {"a": [], "b": []}
        self.now = 0.0
        kwargs = dict(clock=lambda: self.now, rng=rng)
        self.a = TunnelDevice("a", 51820, "10.200.0.0/24", "10.200.0.2",
                              transmit=lambda peer, d, data, sealed: self.queue.append(("b", data)),
                              deliver=lambda peer, data: self.delivered["a"].append(data), **kwargs)
        self.b = TunnelDevice("b", 51820, "10.200.0.0/24", "10.200.0.1",
                              transmit=lambda peer, d, data, sealed: self.queue.append(("a", data)),
                              deliver=lambda peer, data: self.delivered["b"].append(data), **kwargs)
        self.a.apply_peer("b", self.descriptor(self.b, "10.200.0.1"))
        self.b.apply_peer("a", self.descriptor(self.a, "10.200.0.2"))

    @staticmethod
    def descriptor(device, address):
        return PeerDescriptor(device.public_key, "192.168.10.10", device.listen_port, address, (f"{address}/32",))

    def flush(self):
        while self.queue:
            target, data = self.queue.pop(0)
            getattr(self, target).receive(data)


def test_device_stages_until_session_and_delivers(rng):
    wire = Wire(rng)
    assert wire.a.send("b", b"early") is False
    assert wire.a.handshaking("b")
    wire.flush()
    assert wire.a.session("b") is not None and wire.b.session("a") is not None
    assert wire.delivered["b"] == [b"early"]
    assert wire.a.send_to("10.200.0.1", b"routed") is True
    wire.flush()
    assert wire.delivered["b"] == [b"early", b"routed"]


def test_device_rejects_plaintext_and_unknown_peers(rng):
    wire = Wire(rng)
    wire.b.receive(b"imsi=001010123456789")
    assert wire.b.rejected == 1
    stranger = TunnelDevice("c", 51821, "10.200.0.0/24", "10.200.0.3", clock=lambda: 0.0,
                            transmit=lambda *a: wire.queue.append(("b", a[2])), deliver=lambda *a: None, rng=rng)
    stranger.apply_peer("b", Wire.descriptor(wire.b, "10.200.0.1"))
    stranger.connect("b")
    wire.flush()
    assert wire.b.rejected == 2
    assert wire.b.session("c") is None


def test_device_rotate_key_drops_sessions(rng):
    wire = Wire(rng)
    wire.a.connect("b")
    wire.flush()
    old = wire.a.public_key
    wire.a.rotate_key()
    assert wire.a.public_key != old
    assert wire.a.session("b") is None


def test_peer_descriptor_validation():
    key = bytes(32)
    with pytest.raises(ValueError):
        PeerDescriptor(key, "h", 0, "10.0.0.1", ("10.0.0.1/32",))
    with pytest.raises(ValueError):
        PeerDescriptor(key, "h", 51820, "10.0.0.1", ())
    with pytest.raises(MalformedKey):
        PeerDescriptor(b"short", "h", 51820, "10.0.0.1", ("10.0.0.1/32",))
