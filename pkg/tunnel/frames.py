"""
Wire layouts of tunnel frames.

All integers are little-endian. Every frame starts with a one-byte type followed by three
reserved zero bytes.

  initiation (1): type | reserved | sender_index(4) | ephemeral(32) | enc_static(48) | enc_timestamp(28)
  response   (2): type | reserved | sender_index(4) | receiver_index(4) | ephemeral(32) | enc_empty(16)
  transport  (4): type | reserved | receiver_index(4) | counter(8) | ciphertext(n + 16)
"""
import struct
from dataclasses import dataclass
from typing import Union

from .errors import MalformedFrame

MSG_INITIATION = 1
MSG_RESPONSE = 2
MSG_TRANSPORT = 4

TAG_LEN = 16
TIMESTAMP_LEN = 12

_INITIATION = struct.Struct("<B3xI32s48s28s")
_RESPONSE = struct.Struct("<B3xII32s16s")
_TRANSPORT_HEADER = struct.Struct("<B3xIQ")

INITIATION_LEN = _INITIATION.size
RESPONSE_LEN = _RESPONSE.size
TRANSPORT_HEADER_LEN = _TRANSPORT_HEADER.size
TRANSPORT_OVERHEAD = TRANSPORT_HEADER_LEN + TAG_LEN


@dataclass(frozen=True)
class InitiationFrame:
    sender_index: int
    ephemeral: bytes
    encrypted_static: bytes
    encrypted_timestamp: bytes

    msg_type = MSG_INITIATION

    def encode(self) -> bytes:
        return _INITIATION.pack(
            MSG_INITIATION, self.sender_index, self.ephemeral,
            self.encrypted_static, self.encrypted_timestamp,
        )


@dataclass(frozen=True)
class ResponseFrame:
    sender_index: int
    receiver_index: int
    ephemeral: bytes
    encrypted_empty: bytes

    msg_type = MSG_RESPONSE

    def encode(self) -> bytes:
        return _RESPONSE.pack(
            MSG_RESPONSE, self.sender_index, self.receiver_index,
            self.ephemeral, self.encrypted_empty,
        )


@dataclass(frozen=True)
class TransportFrame:
    receiver_index: int
    counter: int
    body: bytes

    msg_type = MSG_TRANSPORT

    def encode(self) -> bytes:
        return _TRANSPORT_HEADER.pack(MSG_TRANSPORT, self.receiver_index, self.counter) + self.body


TunnelFrame = Union[InitiationFrame, ResponseFrame, TransportFrame]


def frame_type(data: bytes) -> int:
    """Peek at the message type of a datagram; 0 when it cannot be a tunnel frame."""
    if len(data) < 4 or data[1:4] != b"\x00\x00\x00":
        return 0
    return data[0] if data[0] in (MSG_INITIATION, MSG_RESPONSE, MSG_TRANSPORT) else 0


def decode_frame(data: bytes) -> TunnelFrame:
    kind = frame_type(data)
    if kind == MSG_INITIATION:
        if len(data) != INITIATION_LEN:
            raise MalformedFrame(f"initiation must be {INITIATION_LEN} bytes, got {len(data)}")
        _, sender, ephemeral, enc_static, enc_ts = _INITIATION.unpack(data)
        return InitiationFrame(sender, ephemeral, enc_static, enc_ts)
    if kind == MSG_RESPONSE:
        if len(data) != RESPONSE_LEN:
            raise MalformedFrame(f"response must be {RESPONSE_LEN} bytes, got {len(data)}")
        _, sender, receiver, ephemeral, enc_empty = _RESPONSE.unpack(data)
        return ResponseFrame(sender, receiver, ephemeral, enc_empty)
    if kind == MSG_TRANSPORT:
        if len(data) < TRANSPORT_OVERHEAD:
            raise MalformedFrame(f"transport frame too short: {len(data)} bytes")
        _, receiver, counter = _TRANSPORT_HEADER.unpack_from(data)
        return TransportFrame(receiver, counter, data[TRANSPORT_HEADER_LEN:])
    raise MalformedFrame("not a tunnel frame")
