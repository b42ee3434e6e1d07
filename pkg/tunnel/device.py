"""
Unit-local tunnel device: one static keypair, its peers and their live sessions.

The device never touches the network itself. Datagrams leave through the transmit callback and
decrypted payloads are handed to the deliver callback.
"""
import ipaddress
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import MalformedKey, SessionExpired, TunnelError, UnknownPeer
from .frames import MSG_INITIATION, MSG_RESPONSE, MSG_TRANSPORT, decode_frame, frame_type
from .handshake import ZERO_PSK, HandshakeState, IndexTable, InitiationGuard, finalize, initiate, respond
from .keys import KEY_LEN, RandomSource, encode_key, generate_keypair
from .session import RekeyPolicy, RekeyStatus, TransportSession, rekey_status

logger = logging.getLogger(__name__)

MAX_STAGED = 128


@dataclass(frozen=True)
class PeerDescriptor:
    remote_public: bytes
    endpoint_host: str
    endpoint_port: int
    tunnel_address: str
    allowed_cidrs: Tuple[str, ...]
    preshared_key: bytes = field(default=ZERO_PSK, repr=False)

    def __post_init__(self):
        if len(self.remote_public) != KEY_LEN:
            raise MalformedKey("peer public key must be 32 bytes")
        if not 1 <= self.endpoint_port <= 65535:
            raise ValueError(f"endpoint port {self.endpoint_port} out of range")
        if not self.allowed_cidrs:
            raise ValueError("allowed_cidrs must not be empty")
        for cidr in self.allowed_cidrs:
            ipaddress.ip_network(cidr, strict=False)
        if len(self.preshared_key) != KEY_LEN:
            raise ValueError("preshared key must be 32 bytes")

    def routes(self, address: str) -> bool:
        ip = ipaddress.ip_address(address)
        return any(ip in ipaddress.ip_network(cidr, strict=False) for cidr in self.allowed_cidrs)


Transmit = Callable[[str, PeerDescriptor, bytes, bool], None]
Deliver = Callable[[str, bytes], None]
Schedule = Callable[[float, Callable[[], None]], None]


class TunnelDevice:
    """A WireGuard-like interface bound to one data-plane interface of a unit."""

    def __init__(
        self,
        name: str,
        listen_port: int,
        tunnel_network: str,
        tunnel_address: str,
        clock: Callable[[], float],
        transmit: Transmit,
        deliver: Deliver,
        rng: RandomSource = os.urandom,
        schedule: Optional[Schedule] = None,
        policy: Optional[RekeyPolicy] = None,
        retry_s: float = 5.0,
        handshake_attempts: int = 3,
        persistent_keepalive_s: int = 0,
        mtu: int = 1420,
    ):
        self.name = name
        self.listen_port = listen_port
        self.tunnel_network = ipaddress.ip_network(tunnel_network)
        self.tunnel_address = tunnel_address
        self.mtu = mtu
        self.persistent_keepalive_s = persistent_keepalive_s
        self._clock = clock
        self._transmit = transmit
        self._deliver = deliver
        self._rng = rng
        self._schedule = schedule
        self._policy = policy or RekeyPolicy()
        self._retry_s = retry_s
        self._handshake_attempts = handshake_attempts
        self._keypair = generate_keypair(rng)
        self._peers: Dict[str, PeerDescriptor] = {}
        self._sessions: Dict[str, TransportSession] = {}
        self._previous: Dict[str, TransportSession] = {}
        self._by_index: Dict[int, Tuple[str, TransportSession]] = {}
        self._pending: Dict[int, Tuple[str, HandshakeState]] = {}
        self._staged: Dict[str, List[bytes]] = {}
        self._guard = InitiationGuard()
        self._indices = IndexTable()
        self.rejected = 0
        self.on_session: Optional[Callable[[str, TransportSession], None]] = None
        if ipaddress.ip_address(tunnel_address) not in self.tunnel_network:
            raise ValueError(f"{tunnel_address} is outside {tunnel_network}")

    @property
    def public_key(self) -> bytes:
        return self._keypair.public

    @property
    def public_key_b64(self) -> str:
        return encode_key(self._keypair.public)

    def holds_private(self, candidate: bytes) -> bool:
        return candidate == self._keypair.private

    @property
    def peers(self) -> Dict[str, PeerDescriptor]:
        return dict(self._peers)

    def session(self, peer_name: str) -> Optional[TransportSession]:
        session = self._sessions.get(peer_name)
        if session is None or rekey_status(session, self._clock()) is RekeyStatus.EXPIRED:
            return None
        return session

    def apply_peer(self, peer_name: str, descriptor: PeerDescriptor) -> bool:
        """
        Install or update a peer. Applying the same descriptor twice is a no-op.
        Returns True when the peer table changed.
        """
        if ipaddress.ip_address(descriptor.tunnel_address) not in self.tunnel_network:
            raise ValueError(f"peer address {descriptor.tunnel_address} is outside {self.tunnel_network}")
        current = self._peers.get(peer_name)
        if current == descriptor:
            return False
        if current is not None and current.remote_public != descriptor.remote_public:
            self._drop_sessions(peer_name)
        self._peers[peer_name] = descriptor
        logger.info(f"{self.name}: peer {peer_name} set to {encode_key(descriptor.remote_public)}")
        return True

    def remove_peer(self, peer_name: str) -> None:
        if self._peers.pop(peer_name, None) is None:
            raise UnknownPeer(f"{self.name} has no peer {peer_name}")
        self._drop_sessions(peer_name)

    def rotate_key(self) -> None:
        """Replace the static keypair; every session and pending handshake is discarded."""
        self._keypair = generate_keypair(self._rng)
        for peer_name in list(self._peers):
            self._drop_sessions(peer_name)
        logger.info(f"{self.name}: static key rotated to {self.public_key_b64}")

    def close(self) -> None:
        for peer_name in list(self._peers):
            self._drop_sessions(peer_name)
        self._peers.clear()

    def _retire(self, session: Optional[TransportSession]) -> None:
        if session is None:
            return
        session.expire()
        self._by_index.pop(session.local_index, None)
        self._indices.release(session.local_index)

    def _drop_sessions(self, peer_name: str) -> None:
        self._retire(self._sessions.pop(peer_name, None))
        self._retire(self._previous.pop(peer_name, None))
        self._staged.pop(peer_name, None)
        for index, (name, _) in list(self._pending.items()):
            if name == peer_name:
                del self._pending[index]
                self._indices.release(index)

    def _peer_by_static(self, static: bytes) -> Tuple[Optional[str], Optional[PeerDescriptor]]:
        for name, peer in self._peers.items():
            if peer.remote_public == static:
                return name, peer
        return None, None

    def connect(self, peer_name: str, attempt: int = 1) -> None:
        """Send a handshake initiation to a known peer; unanswered initiations are retried."""
        peer = self._peers.get(peer_name)
        if peer is None:
            raise UnknownPeer(f"{self.name} has no peer {peer_name}")
        state, frame = initiate(
            self._keypair, peer.remote_public, peer.preshared_key, self._clock, self._rng, self._indices
        )
        self._pending[state.local_index] = (peer_name, state)
        logger.debug(f"{self.name}: initiation {state.local_index:#010x} to {peer_name} (attempt {attempt})")
        self._transmit(peer_name, peer, frame.encode(), False)
        if self._schedule is not None and attempt < self._handshake_attempts:
            self._schedule(self._retry_s, lambda: self._retry(peer_name, state.local_index, attempt + 1))

    def _retry(self, peer_name: str, index: int, attempt: int) -> None:
        if self._pending.pop(index, None) is None:
            return
        self._indices.release(index)
        if peer_name not in self._peers or self._pending_for(peer_name):
            return
        logger.info(f"{self.name}: no answer from {peer_name} after {self._retry_s}s, retrying")
        self.connect(peer_name, attempt)

    def send(self, peer_name: str, plaintext: bytes) -> bool:
        """
        Seal and transmit to a peer. Without a usable session the payload is staged, a handshake
        is started and False is returned; staged payloads go out once the session exists.
        """
        if peer_name not in self._peers:
            raise UnknownPeer(f"{self.name} has no peer {peer_name}")
        session = self.session(peer_name)
        if session is None:
            staged = self._staged.setdefault(peer_name, [])
            if len(staged) < MAX_STAGED:
                staged.append(plaintext)
            else:
                logger.debug(f"{self.name}: staging queue for {peer_name} full, dropping {len(plaintext)} bytes")
            if not self._pending_for(peer_name):
                self.connect(peer_name)
            return False
        if rekey_status(session, self._clock()) is RekeyStatus.REKEY_RECOMMENDED and not self._pending_for(peer_name):
            self.connect(peer_name)
        try:
            frame = session.seal(plaintext)
        except SessionExpired:
            return False
        self._transmit(peer_name, self._peers[peer_name], frame.encode(), True)
        return True

    def send_to(self, address: str, plaintext: bytes) -> bool:
        """Route by allowed_cidrs and send."""
        for name, peer in self._peers.items():
            if peer.routes(address):
                return self.send(name, plaintext)
        raise UnknownPeer(f"{self.name} has no peer routing {address}")

    def handshaking(self, peer_name: str) -> bool:
        """True while an initiation to peer_name awaits its response."""
        return self._pending_for(peer_name)

    def _pending_for(self, peer_name: str) -> bool:
        return any(name == peer_name for name, _ in self._pending.values())

    def receive(self, datagram: bytes) -> Optional[bytes]:
        """
        Process one datagram from the underlay.
        Handshake frames are answered internally; transport frames return their plaintext.
        Anything else is counted as rejected and returns None.
        """
        kind = frame_type(datagram)
        try:
            if kind == MSG_INITIATION:
                self._on_initiation(datagram)
                return None
            if kind == MSG_RESPONSE:
                self._on_response(datagram)
                return None
            if kind == MSG_TRANSPORT:
                return self._on_transport(datagram)
            raise UnknownPeer("plaintext datagram on a tunneled interface")
        except (TunnelError, ValueError) as e:
            self.rejected += 1
            logger.debug(f"{self.name}: rejected datagram: {e}")
            return None

    def _psk_for(self, static: bytes) -> bytes:
        _, peer = self._peer_by_static(static)
        return peer.preshared_key if peer is not None else ZERO_PSK

    def _on_initiation(self, datagram: bytes) -> None:
        response, session = respond(
            self._keypair, self._psk_for, datagram, self._clock, self._rng,
            self._guard, self._indices, self._policy,
        )
        peer_name, peer = self._peer_by_static(session.remote_static)
        if peer is None:
            self._indices.release(session.local_index)
            raise UnknownPeer(f"initiation from unknown key {encode_key(session.remote_static)}")
        self._install(peer_name, session)
        self._transmit(peer_name, peer, response.encode(), False)

    def _on_response(self, datagram: bytes) -> None:
        frame = decode_frame(datagram)
        pending = self._pending.pop(frame.receiver_index, None)
        if pending is None:
            raise UnknownPeer(f"response for unknown handshake {frame.receiver_index:#010x}")
        peer_name, state = pending
        session = finalize(state, frame, self._policy)
        self._install(peer_name, session)

    def _on_transport(self, datagram: bytes) -> bytes:
        frame = decode_frame(datagram)
        entry = self._by_index.get(frame.receiver_index)
        if entry is None:
            raise UnknownPeer(f"no session with index {frame.receiver_index:#010x}")
        peer_name, session = entry
        plaintext = session.open(frame)
        if plaintext:
            self._deliver(peer_name, plaintext)
        return plaintext

    def _install(self, peer_name: str, session: TransportSession) -> None:
        previous = self._sessions.get(peer_name)
        if previous is not None:
            # the previous session keeps opening frames already in flight
            self._retire(self._previous.pop(peer_name, None))
            self._previous[peer_name] = previous
        self._sessions[peer_name] = session
        self._by_index[session.local_index] = (peer_name, session)
        logger.info(f"{self.name}: session {session.local_index:#010x} with {peer_name} established")
        if self.on_session is not None:
            self.on_session(peer_name, session)
        for plaintext in self._staged.pop(peer_name, []):
            self.send(peer_name, plaintext)
        if self.persistent_keepalive_s and self._schedule is not None:
            self._schedule(self.persistent_keepalive_s, lambda: self._keepalive(peer_name, session))

    def _keepalive(self, peer_name: str, session: TransportSession) -> None:
        if self._sessions.get(peer_name) is not session or session.invalidated:
            return
        self.send(peer_name, b"")
        self._schedule(self.persistent_keepalive_s, lambda: self._keepalive(peer_name, session))
