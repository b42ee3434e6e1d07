"""
AEAD transport sessions with a sliding replay window and rekey policy.
"""
import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import AuthenticationError, IndexMismatch, ReplayError, SessionExpired
from .frames import TransportFrame

logger = logging.getLogger(__name__)

WINDOW_SIZE = 2048
REJECT_AFTER_MESSAGES = 2**64 - 2**13 - 1


def transport_nonce(counter: int) -> bytes:
    return b"\x00\x00\x00\x00" + counter.to_bytes(8, "little")


@dataclass(frozen=True)
class RekeyPolicy:
    rekey_after_s: float = 120.0
    reject_after_s: float = 180.0
    rekey_after_messages: int = 2**48
    reject_after_messages: int = REJECT_AFTER_MESSAGES


class RekeyStatus(str, enum.Enum):
    FRESH = "fresh"
    REKEY_RECOMMENDED = "rekey_recommended"
    EXPIRED = "expired"


class ReplayWindow:
    """
    Sliding window over received counters.

    The greatest accepted counter is the high-water mark; bit i of the bitmap records whether
    counter (greatest - i) was seen. Counters at or below greatest - size are rejected.
    """

    def __init__(self, size: int = WINDOW_SIZE):
        self.size = size
        self.greatest = -1
        self._bitmap = 0
        self._mask = (1 << size) - 1

    def is_valid(self, counter: int) -> bool:
        if counter >= REJECT_AFTER_MESSAGES:
            return False
        if counter > self.greatest:
            return True
        offset = self.greatest - counter
        if offset >= self.size:
            return False
        return (self._bitmap >> offset) & 1 == 0

    def strike_out(self, counter: int) -> None:
        if not self.is_valid(counter):
            raise ReplayError(f"counter {counter} already used or outside the window")
        if counter > self.greatest:
            shift = counter - self.greatest
            self._bitmap = ((self._bitmap << shift) | 1) & self._mask if shift < self.size else 1
            self.greatest = counter
        else:
            self._bitmap |= 1 << (self.greatest - counter)


@dataclass(eq=False)
class TransportSession:
    send_key: bytes = field(repr=False)
    recv_key: bytes = field(repr=False)
    local_index: int
    remote_index: int
    established_at: float
    remote_static: bytes
    is_initiator: bool
    clock: Callable[[], float] = field(repr=False)
    policy: RekeyPolicy = field(default_factory=RekeyPolicy)
    send_counter: int = 0
    messages_sealed: int = 0
    recv_window: ReplayWindow = field(default_factory=ReplayWindow, repr=False)
    handshake_hash: bytes = field(default=b"", repr=False)
    invalidated: bool = False

    def __post_init__(self):
        self._send_aead = ChaCha20Poly1305(self.send_key)
        self._recv_aead = ChaCha20Poly1305(self.recv_key)
        self._send_lock = threading.Lock()
        self._recv_lock = threading.Lock()

    def expire(self) -> None:
        """Invalidate the session ahead of its time limit (key rotation, peer removal)."""
        self.invalidated = True

    def seal(self, plaintext: bytes) -> TransportFrame:
        if rekey_status(self, self.clock()) is RekeyStatus.EXPIRED:
            raise SessionExpired(f"session {self.local_index:#010x} expired")
        with self._send_lock:
            counter = self.send_counter
            body = self._send_aead.encrypt(transport_nonce(counter), plaintext, None)
            self.send_counter += 1
            self.messages_sealed += 1
        return TransportFrame(receiver_index=self.remote_index, counter=counter, body=body)

    def open(self, frame: TransportFrame) -> bytes:
        if frame.receiver_index != self.local_index:
            raise IndexMismatch(
                f"frame for index {frame.receiver_index:#010x}, session is {self.local_index:#010x}"
            )
        if rekey_status(self, self.clock()) is RekeyStatus.EXPIRED:
            raise SessionExpired(f"session {self.local_index:#010x} expired")
        with self._recv_lock:
            if not self.recv_window.is_valid(frame.counter):
                logger.debug(f"Replay rejected: counter {frame.counter} on {self.local_index:#010x}")
                raise ReplayError(f"counter {frame.counter} already used or outside the window")
            try:
                plaintext = self._recv_aead.decrypt(transport_nonce(frame.counter), frame.body, None)
            except InvalidTag as e:
                raise AuthenticationError("transport frame failed authentication") from e
            self.recv_window.strike_out(frame.counter)
        return plaintext

    def peek(self, frame: TransportFrame) -> bytes:
        """Decrypt without touching the replay window; for inspecting captured frames."""
        try:
            return self._recv_aead.decrypt(transport_nonce(frame.counter), frame.body, None)
        except InvalidTag as e:
            raise AuthenticationError("transport frame failed authentication") from e


def rekey_status(session: TransportSession, now: float) -> RekeyStatus:
    """Classify a session's age and usage against its rekey policy."""
    policy = session.policy
    age = now - session.established_at
    if (
        session.invalidated
        or age > policy.reject_after_s
        or session.messages_sealed >= policy.reject_after_messages
    ):
        return RekeyStatus.EXPIRED
    if age > policy.rekey_after_s or session.messages_sealed >= policy.rekey_after_messages:
        return RekeyStatus.REKEY_RECOMMENDED
    return RekeyStatus.FRESH
