"""
Emulated EPS network functions: HSS, MME, SPGW-C, SPGW-U, eNB and UE.

Each function is a message handler bound to the interfaces of its unit. It never talks to the
fabric directly; it hands encoded messages to a send callback and receives decoded ones.
"""
import enum
import hashlib
import ipaddress
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import simpy

from netem.clock import Clock

from .errors import AttachRejected, AttachTimeout, NotAttached, UnknownSubscriber, UnknownTeid
from .messages import EpsMessage, MessageKind, encode, message
from .subscribers import DEFAULT_APN, DEFAULT_REALM, SubscriberStore

logger = logging.getLogger(__name__)

RESULT_SUCCESS = "2001"
RESULT_USER_UNKNOWN = "5001"
UE_POOL = "12.1.1.0/24"

Send = Callable[[str, bytes], None]
# (interface, message, time in microseconds)
Observer = Callable[[str, EpsMessage, float], None]


class AttachState(str, enum.Enum):
    IDLE = "idle"
    AUTHENTICATING = "authenticating"
    LOCATING = "locating"
    SESSION_SETUP = "session_setup"
    ATTACHED = "attached"
    REJECTED = "rejected"


@dataclass
class AttachContext:
    imsi: str
    state: AttachState = AttachState.IDLE
    ue_ip: Optional[str] = None
    teid_ul: Optional[int] = None
    teid_dl: Optional[int] = None
    cause: Optional[str] = None
    timestamps: Dict[str, float] = field(default_factory=dict)

    def advance(self, state: AttachState, now_us: float) -> None:
        self.state = state
        self.timestamps[state.value] = now_us


@dataclass(frozen=True)
class SrtSample:
    imsi: str
    request_kind: str
    t_request_sent: float
    t_answer_received: float
    success: bool = True

    @property
    def srt_ms(self) -> float:
        return self.t_answer_received - self.t_request_sent


class NetworkFunction:
    """Base message handler; every function answers echo requests on every interface."""

    role = "nf"

    def __init__(self, name: str, clock: Clock, realm: str = DEFAULT_REALM):
        self.name = name
        self.clock = clock
        self.realm = realm
        self.running = False
        self.observers: List[Observer] = []
        self._send: Optional[Send] = None
        self._handlers: Dict[MessageKind, Callable[[str, EpsMessage], None]] = {
            MessageKind.ECHO_REQUEST: self._on_echo_request,
        }

    @property
    def hostname(self) -> str:
        return f"{self.role}.{self.realm}"

    def bind(self, send: Send) -> None:
        self._send = send

    def start(self) -> None:
        self.running = True
        logger.info(f"{self.name}: {self.role} service started")

    def stop(self) -> None:
        self.running = False

    def send(self, interface: str, msg: EpsMessage) -> None:
        if self._send is None:
            raise RuntimeError(f"{self.name} is not bound to a unit")
        self._send(interface, encode(msg))

    def receive(self, interface: str, msg: EpsMessage) -> None:
        now = self.clock.now_us
        for observer in list(self.observers):
            observer(interface, msg, now)
        if not self.running:
            logger.debug(f"{self.name}: service not started, ignoring {msg.kind.value}")
            return
        handler = self._handlers.get(msg.kind)
        if handler is None:
            logger.debug(f"{self.name}: no handler for {msg.kind.value} on {interface}")
            return
        handler(interface, msg)

    def _on_echo_request(self, interface: str, msg: EpsMessage) -> None:
        self.send(interface, EpsMessage(MessageKind.ECHO_REPLY, dict(msg.fields)))


class Hss(NetworkFunction):
    role = "hss"

    def __init__(self, name: str, clock: Clock, rng: Callable[[int], bytes],
                 service_time_ms: float = 5.4, realm: str = DEFAULT_REALM):
        super().__init__(name, clock, realm)
        self.subscribers = SubscriberStore()
        self.service_time_ms = service_time_ms
        self._rng = rng
        self._free_at_us = 0.0
        self._handlers[MessageKind.AUTH_INFO_REQUEST] = self._on_request
        self._handlers[MessageKind.UPDATE_LOCATION_REQUEST] = self._on_request

    def answer(self, msg: EpsMessage) -> EpsMessage:
        """Compute the Diameter-style answer to an AIR or ULR; unknown IMSIs get an error answer."""
        common = {
            "session_id": msg.get("session_id", ""),
            "origin_host": self.hostname,
            "origin_realm": self.realm,
            "imsi": msg["imsi"],
        }
        kind = (MessageKind.AUTH_INFO_ANSWER if msg.kind is MessageKind.AUTH_INFO_REQUEST
                else MessageKind.UPDATE_LOCATION_ANSWER)
        try:
            record = self.subscribers.get(msg["imsi"])
        except UnknownSubscriber as e:
            logger.warning(f"{self.name}: {e}")
            return message(kind, **common, result_code=RESULT_USER_UNKNOWN)
        if kind is MessageKind.AUTH_INFO_ANSWER:
            rand = self._rng(16)
            xres = hashlib.sha256(record.key + rand).digest()[:8]
            return message(kind, **common, result_code=RESULT_SUCCESS, rand=rand.hex(), xres=xres.hex())
        return message(kind, **common, result_code=RESULT_SUCCESS, apn=record.apn, subscription="ambr=1000000")

    def _on_request(self, interface: str, msg: EpsMessage) -> None:
        reply = self.answer(msg)
        now = self.clock.now_us
        start = max(now, self._free_at_us)
        self._free_at_us = start + self.service_time_ms * 1000
        self.clock.call_later(self._free_at_us - now, lambda: self.send(interface, reply))


class Mme(NetworkFunction):
    role = "mme"

    def __init__(self, name: str, clock: Clock, realm: str = DEFAULT_REALM):
        super().__init__(name, clock, realm)
        self.contexts: Dict[str, AttachContext] = {}
        self.srt_samples: List[SrtSample] = []
        self._air_sent: Dict[str, float] = {}
        self._session_seq = 0
        self._handlers.update({
            MessageKind.ATTACH_REQUEST: self._on_attach_request,
            MessageKind.AUTH_INFO_ANSWER: self._on_auth_info_answer,
            MessageKind.UPDATE_LOCATION_ANSWER: self._on_update_location_answer,
            MessageKind.CREATE_SESSION_RESPONSE: self._on_create_session_response,
            MessageKind.INITIAL_CONTEXT_SETUP: self._on_context_setup_complete,
        })

    def _diameter(self, kind: MessageKind, imsi: str, **extra: object) -> EpsMessage:
        self._session_seq += 1
        return message(
            kind,
            session_id=f"{self.hostname};{self._session_seq}",
            origin_host=self.hostname,
            origin_realm=self.realm,
            destination_host=f"hss.{self.realm}",
            destination_realm=self.realm,
            imsi=imsi,
            **extra,
        )

    def _on_attach_request(self, interface: str, msg: EpsMessage) -> None:
        imsi = msg["imsi"]
        ctx = AttachContext(imsi)
        ctx.timestamps[AttachState.IDLE.value] = self.clock.now_us
        self.contexts[imsi] = ctx
        ctx.advance(AttachState.AUTHENTICATING, self.clock.now_us)
        self._air_sent[imsi] = self.clock.now_ms()
        self.send("s6a", self._diameter(MessageKind.AUTH_INFO_REQUEST, imsi, visited_plmn="00101", vectors="1"))

    def _reject(self, ctx: AttachContext, cause: str) -> None:
        ctx.cause = cause
        ctx.advance(AttachState.REJECTED, self.clock.now_us)
        logger.warning(f"{self.name}: attach of {ctx.imsi} rejected ({cause})")
        self.send("s1c", message(MessageKind.ATTACH_REJECT, imsi=ctx.imsi, cause=cause))

    def _on_auth_info_answer(self, interface: str, msg: EpsMessage) -> None:
        imsi = msg["imsi"]
        ctx = self.contexts.get(imsi)
        sent = self._air_sent.pop(imsi, None)
        if ctx is None or sent is None:
            return
        success = msg.get("result_code") == RESULT_SUCCESS
        self.srt_samples.append(SrtSample(imsi, MessageKind.AUTH_INFO_REQUEST.value, sent, self.clock.now_ms(), success))
        if not success:
            self._reject(ctx, f"diameter-{msg.get('result_code')}")
            return
        ctx.advance(AttachState.LOCATING, self.clock.now_us)
        self.send("s6a", self._diameter(MessageKind.UPDATE_LOCATION_REQUEST, imsi, rat_type="EUTRAN"))

    def _on_update_location_answer(self, interface: str, msg: EpsMessage) -> None:
        ctx = self.contexts.get(msg["imsi"])
        if ctx is None:
            return
        if msg.get("result_code") != RESULT_SUCCESS:
            self._reject(ctx, f"diameter-{msg.get('result_code')}")
            return
        ctx.advance(AttachState.SESSION_SETUP, self.clock.now_us)
        self.send("s11", message(MessageKind.CREATE_SESSION_REQUEST, imsi=ctx.imsi, apn=msg.get("apn", DEFAULT_APN),
                                 sender=self.hostname))

    def _on_create_session_response(self, interface: str, msg: EpsMessage) -> None:
        ctx = self.contexts.get(msg["imsi"])
        if ctx is None:
            return
        if msg.get("cause") != "accepted":
            self._reject(ctx, f"session-{msg.get('cause')}")
            return
        ctx.teid_ul = int(msg["teid_ul"])
        ctx.teid_dl = int(msg["teid_dl"])
        self.send("s1c", message(MessageKind.INITIAL_CONTEXT_SETUP, imsi=ctx.imsi, ue_ip=msg["ue_ip"],
                                 teid_ul=ctx.teid_ul, teid_dl=ctx.teid_dl))

    def _on_context_setup_complete(self, interface: str, msg: EpsMessage) -> None:
        ctx = self.contexts.get(msg["imsi"])
        if ctx is None or msg.get("status") != "complete":
            return
        ctx.ue_ip = msg["ue_ip"]
        ctx.advance(AttachState.ATTACHED, self.clock.now_us)
        logger.info(f"{self.name}: {ctx.imsi} attached with {ctx.ue_ip}")
        self.send("s1c", message(MessageKind.ATTACH_ACCEPT, imsi=ctx.imsi, ue_ip=ctx.ue_ip, realm=self.realm))


class SpgwC(NetworkFunction):
    role = "spgwc"

    def __init__(self, name: str, clock: Clock, realm: str = DEFAULT_REALM, pool: str = UE_POOL):
        super().__init__(name, clock, realm)
        hosts = ipaddress.ip_network(pool).hosts()
        next(hosts)  # .1 is the PDN gateway itself
        self._free = hosts
        self._by_imsi: Dict[str, Tuple[str, int, int]] = {}
        self._next_teid = 0x1000
        self._handlers.update({
            MessageKind.CREATE_SESSION_REQUEST: self._on_create_session_request,
            MessageKind.SESSION_ESTABLISHMENT_RESPONSE: self._on_establishment_response,
        })

    def _teid(self) -> int:
        self._next_teid += 1
        return self._next_teid

    def _on_create_session_request(self, interface: str, msg: EpsMessage) -> None:
        imsi = msg["imsi"]
        if imsi in self._by_imsi:
            ue_ip = self._by_imsi[imsi][0]
        else:
            try:
                ue_ip = str(next(self._free))
            except StopIteration:
                self.send(interface, message(MessageKind.CREATE_SESSION_RESPONSE, imsi=imsi, cause="no-resources"))
                return
        teid_ul, teid_dl = self._teid(), self._teid()
        self._by_imsi[imsi] = (ue_ip, teid_ul, teid_dl)
        self.send("sx", message(MessageKind.SESSION_ESTABLISHMENT_REQUEST, imsi=imsi, apn=msg.get("apn", DEFAULT_APN),
                                ue_ip=ue_ip, teid_ul=teid_ul, teid_dl=teid_dl, seid=teid_ul))

    def _on_establishment_response(self, interface: str, msg: EpsMessage) -> None:
        imsi = msg["imsi"]
        session = self._by_imsi.get(imsi)
        if session is None:
            return
        ue_ip, teid_ul, teid_dl = session
        cause = "accepted" if msg.get("cause") == "accepted" else "rejected"
        self.send("s11", message(MessageKind.CREATE_SESSION_RESPONSE, imsi=imsi, cause=cause,
                                 ue_ip=ue_ip, teid_ul=teid_ul, teid_dl=teid_dl))


class SpgwU(NetworkFunction):
    """User-plane gateway. Uplink data ends at an echo sink standing in for the PDN."""

    role = "spgwu"

    def __init__(self, name: str, clock: Clock, realm: str = DEFAULT_REALM):
        super().__init__(name, clock, realm)
        self.sessions: Dict[int, Tuple[str, int]] = {}
        self.sink_bytes = 0
        self._handlers.update({
            MessageKind.SESSION_ESTABLISHMENT_REQUEST: self._on_establishment_request,
            MessageKind.GTP_DATA: self._on_gtp_data,
        })

    def stop(self) -> None:
        super().stop()
        self.sessions.clear()

    def _on_establishment_request(self, interface: str, msg: EpsMessage) -> None:
        teid_ul = int(msg["teid_ul"])
        self.sessions = {k: v for k, v in self.sessions.items() if v[0] != msg["ue_ip"]}
        self.sessions[teid_ul] = (msg["ue_ip"], int(msg["teid_dl"]))
        self.send(interface, message(MessageKind.SESSION_ESTABLISHMENT_RESPONSE, imsi=msg["imsi"],
                                     seid=msg.get("seid", ""), cause="accepted"))

    def forward(self, msg: EpsMessage) -> Optional[EpsMessage]:
        """Hand uplink data to the PDN sink. Returns the downlink echo, if one is due."""
        teid = int(msg["teid"])
        session = self.sessions.get(teid)
        if session is None:
            raise UnknownTeid(f"no session for TEID {teid:#x}")
        payload = msg.get("payload", "")
        self.sink_bytes += len(payload)
        if msg.get("echo", "1") != "1":
            return None
        return msg.with_fields(teid=str(session[1]))

    def _on_gtp_data(self, interface: str, msg: EpsMessage) -> None:
        try:
            reply = self.forward(msg)
        except UnknownTeid as e:
            logger.debug(f"{self.name}: {e}")
            return
        if reply is not None:
            self.send(interface, reply)


class Enb(NetworkFunction):
    """Relays NAS between Uu and S1-C and user data between Uu and S1-U."""

    role = "enb"

    def __init__(self, name: str, clock: Clock, realm: str = DEFAULT_REALM):
        super().__init__(name, clock, realm)
        self.bearers: Dict[str, Tuple[int, int]] = {}
        self._ue_ids = 0
        self._handlers.update({
            MessageKind.ATTACH_REQUEST: self._on_attach_request,
            MessageKind.INITIAL_CONTEXT_SETUP: self._on_context_setup,
            MessageKind.ATTACH_ACCEPT: self._relay_to_ue,
            MessageKind.ATTACH_REJECT: self._relay_to_ue,
            MessageKind.GTP_DATA: self._on_gtp_data,
        })

    def _on_attach_request(self, interface: str, msg: EpsMessage) -> None:
        if interface != "uu":
            return
        self._ue_ids += 1
        self.send("s1c", msg.with_fields(enb_ue_id=str(self._ue_ids), tai="00101-1"))

    def _on_context_setup(self, interface: str, msg: EpsMessage) -> None:
        self.bearers[msg["ue_ip"]] = (int(msg["teid_ul"]), int(msg["teid_dl"]))
        self.send("s1c", message(MessageKind.INITIAL_CONTEXT_SETUP, imsi=msg["imsi"], ue_ip=msg["ue_ip"],
                                 status="complete"))

    def _relay_to_ue(self, interface: str, msg: EpsMessage) -> None:
        if interface == "s1c":
            self.send("uu", msg)

    def _on_gtp_data(self, interface: str, msg: EpsMessage) -> None:
        if interface == "uu":
            bearer = self.bearers.get(msg.get("ue_ip", ""))
            if bearer is None:
                logger.debug(f"{self.name}: no bearer for {msg.get('ue_ip')}")
                return
            self.send("s1u", msg.with_fields(teid=str(bearer[0])))
        elif interface == "s1u":
            teid = int(msg["teid"])
            for ue_ip, (_, teid_dl) in self.bearers.items():
                if teid_dl == teid:
                    self.send("uu", msg.with_fields(ue_ip=ue_ip))
                    return


class Ue(NetworkFunction):
    role = "ue"

    def __init__(self, name: str, clock: Clock, imsi: str, realm: str = DEFAULT_REALM):
        super().__init__(name, clock, realm)
        self.imsi = imsi
        self.ue_ip: Optional[str] = None
        self._answer: Optional[simpy.Event] = None
        self._handlers.update({
            MessageKind.ATTACH_ACCEPT: self._on_attach_answer,
            MessageKind.ATTACH_REJECT: self._on_attach_answer,
        })

    @property
    def attached(self) -> bool:
        return self.ue_ip is not None

    def attach(self) -> simpy.Event:
        """Send an AttachRequest; the event resolves to the AttachAccept or AttachReject."""
        self.ue_ip = None
        self._answer = self.clock.event()
        self.send("uu", message(MessageKind.ATTACH_REQUEST, imsi=self.imsi, realm=self.realm,
                                ue_capability="eea0-eia2"))
        return self._answer

    def _on_attach_answer(self, interface: str, msg: EpsMessage) -> None:
        if msg.get("imsi") != self.imsi:
            return
        if msg.kind is MessageKind.ATTACH_ACCEPT:
            self.ue_ip = msg["ue_ip"]
        if self._answer is not None and not self._answer.triggered:
            self._answer.succeed(msg)

    def send_data(self, payload: str, **extra: object) -> None:
        if not self.attached:
            raise NotAttached(f"{self.imsi} is not attached")
        self.send("uu", message(MessageKind.GTP_DATA, ue_ip=self.ue_ip, **extra, payload=payload))


def attach(ue: Ue, mme: Mme, timeout_s: float = 5.0) -> AttachContext:
    """Run one attach of ue to completion on the virtual clock and return the MME's context."""
    answer = ue.attach()
    if not ue.clock.run_until(answer, timeout_s * 1e6):
        raise AttachTimeout(f"no attach answer for {ue.imsi} within {timeout_s}s")
    ctx = mme.contexts[ue.imsi]
    if answer.value.kind is MessageKind.ATTACH_REJECT:
        raise AttachRejected(f"attach of {ue.imsi} rejected: {answer.value.get('cause')}")
    return ctx
