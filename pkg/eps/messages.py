"""
Flat ASCII message set standing in for S1AP, Diameter, GTP-C, PFCP and user-plane data.

Wire form is a netstring whose body is a sequence of netstrings: the message kind first, then one
"key=value" netstring per field. Identifiers such as the IMSI or realm appear verbatim, which is
what makes an unencrypted interface observable.

    encode(EchoRequest{seq: 1}) == b"23:11:EchoRequest,5:seq=1,,"
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import MalformedMessage

logger = logging.getLogger(__name__)

ENCODING = "latin-1"
MAX_MESSAGE_LEN = 1 << 20


class MessageKind(str, enum.Enum):
    ATTACH_REQUEST = "AttachRequest"
    AUTH_INFO_REQUEST = "AuthInfoRequest"
    AUTH_INFO_ANSWER = "AuthInfoAnswer"
    UPDATE_LOCATION_REQUEST = "UpdateLocationRequest"
    UPDATE_LOCATION_ANSWER = "UpdateLocationAnswer"
    CREATE_SESSION_REQUEST = "CreateSessionRequest"
    CREATE_SESSION_RESPONSE = "CreateSessionResponse"
    SESSION_ESTABLISHMENT_REQUEST = "SessionEstablishmentRequest"
    SESSION_ESTABLISHMENT_RESPONSE = "SessionEstablishmentResponse"
    INITIAL_CONTEXT_SETUP = "InitialContextSetup"
    ATTACH_ACCEPT = "AttachAccept"
    ATTACH_REJECT = "AttachReject"
    GTP_DATA = "GtpData"
    ECHO_REQUEST = "EchoRequest"
    ECHO_REPLY = "EchoReply"
    PROBE_DATA = "ProbeData"


@dataclass(frozen=True)
class EpsMessage:
    kind: MessageKind
    fields: Dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.fields.get(key, default)

    def __getitem__(self, key: str) -> str:
        try:
            return self.fields[key]
        except KeyError:
            raise MalformedMessage(f"{self.kind.value} has no field '{key}'") from None

    def with_fields(self, **updates: str) -> "EpsMessage":
        return EpsMessage(self.kind, {**self.fields, **updates})


def message(kind: MessageKind, **fields: object) -> EpsMessage:
    return EpsMessage(kind, {key: str(value) for key, value in fields.items()})


def _netstring(data: bytes) -> bytes:
    return str(len(data)).encode() + b":" + data + b","


def _read_netstring(data: bytes, offset: int) -> Tuple[Optional[bytes], int]:
    """Parse one netstring at offset. Returns (None, offset) when data is incomplete."""
    colon = data.find(b":", offset, offset + 12)
    if colon < 0:
        if len(data) - offset >= 12 or not data[offset:].isdigit():
            raise MalformedMessage("netstring length prefix is missing")
        return None, offset
    prefix = data[offset:colon]
    if not prefix.isdigit() or (len(prefix) > 1 and prefix.startswith(b"0")):
        raise MalformedMessage(f"bad netstring length {prefix!r}")
    length = int(prefix)
    if length > MAX_MESSAGE_LEN:
        raise MalformedMessage(f"netstring of {length} bytes is too large")
    end = colon + 1 + length
    if len(data) < end + 1:
        return None, offset
    if data[end:end + 1] != b",":
        raise MalformedMessage("netstring is not terminated by ','")
    return data[colon + 1:end], end + 1


def encode(msg: EpsMessage) -> bytes:
    body = _netstring(msg.kind.value.encode(ENCODING))
    for key, value in msg.fields.items():
        if "=" in key:
            raise MalformedMessage(f"field name '{key}' contains '='")
        body += _netstring(f"{key}={value}".encode(ENCODING))
    return _netstring(body)


def _decode_body(body: bytes) -> EpsMessage:
    parts: List[bytes] = []
    offset = 0
    while offset < len(body):
        part, offset = _read_netstring(body, offset)
        if part is None:
            raise MalformedMessage("truncated field")
        parts.append(part)
    if not parts:
        raise MalformedMessage("empty message")
    try:
        kind = MessageKind(parts[0].decode(ENCODING))
    except ValueError:
        raise MalformedMessage(f"unknown message kind {parts[0]!r}") from None
    fields: Dict[str, str] = {}
    for part in parts[1:]:
        key, sep, value = part.decode(ENCODING).partition("=")
        if not sep or not key:
            raise MalformedMessage(f"field {part[:32]!r} is not key=value")
        fields[key] = value
    return EpsMessage(kind, fields)


def decode(data: bytes) -> EpsMessage:
    """Decode exactly one message."""
    body, end = _read_netstring(data, 0)
    if body is None:
        raise MalformedMessage("incomplete message")
    if end != len(data):
        raise MalformedMessage(f"{len(data) - end} trailing bytes after message")
    return _decode_body(body)


class MessageReader:
    """Reassembles messages from a byte stream that may arrive split across frames."""

    def __init__(self):
        self._buffer = b""

    def feed(self, data: bytes) -> List[EpsMessage]:
        self._buffer += data
        messages = []
        offset = 0
        try:
            while offset < len(self._buffer):
                body, next_offset = _read_netstring(self._buffer, offset)
                if body is None:
                    break
                messages.append(_decode_body(body))
                offset = next_offset
        except MalformedMessage:
            self._buffer = b""
            raise
        self._buffer = self._buffer[offset:]
        return messages

    @property
    def pending(self) -> int:
        return len(self._buffer)


def sized(kind: MessageKind, size: int, pad_field: str = "pad", **fields: object) -> EpsMessage:
    """Build a message whose encoding is exactly size bytes by padding one field."""
    msg = message(kind, **fields, **{pad_field: ""})
    for _ in range(4):
        missing = size - len(encode(msg))
        if missing == 0:
            return msg
        pad = len(msg.fields[pad_field]) + missing
        if pad < 0:
            break
        msg = msg.with_fields(**{pad_field: "x" * pad})
    if len(encode(msg)) != size:
        raise ValueError(f"cannot build a {size}-byte {kind.value}")
    return msg
