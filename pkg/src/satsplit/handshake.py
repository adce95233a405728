"""Symbolic TLS handshake timelines for the three session-establishment paths.

Three drivers produce flight-by-flight timelines on the event engine:

  * run_vanilla  — client and origin exchange every flight end to end.
  * run_keyless  — the terminal answers with the origin's certificate and
    relays exactly one private-key operation per handshake to the origin.
  * run_dane     — the terminal answers with its own delegated certificate;
    the client validates it against the pinning record fetched through the
    terminal's DNS forwarder, so a warm cache never touches the satellite.

Handshake shape is a 1-RTT transport connect (optional) plus a configurable
number of TLS round trips (default 2).  Cryptography here is symbolic —
opaque random strings and a hash-based key schedule — because these timelines
measure latency, not cipher cost.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .dane import DaneResolver, validate_pin
from .errors import (BogusSignature, ChannelDown, MalformedSni, NxDomain,
                     RevokedChannel)
from .keyless import (
    ChannelState,
    KeylessChannel,
    KeylessRequest,
    KxMode,
    OP_FOR_MODE,
)
from .sim import SECOND, SimTime, Simulator
from .topology import NodeId, Role, Topology


class InterceptDecision(Enum):
    INTERCEPT = "intercept"
    FORWARD = "forward"


class Outcome(Enum):
    COMPLETED = "completed"
    REFUSED = "refused"
    VALIDATION_FAILED = "validation-failed"


class VariantKind(Enum):
    VANILLA = "vanilla"
    KEYLESS = "keyless"
    DANE = "dane"


@dataclass(frozen=True)
class HandshakeVariant:
    kind: VariantKind
    kx_mode: KxMode = KxMode.RSA_DECRYPT
    dns_cached: bool = True

    @classmethod
    def vanilla(cls) -> "HandshakeVariant":
        return cls(kind=VariantKind.VANILLA)

    @classmethod
    def keyless(cls, kx_mode: KxMode = KxMode.RSA_DECRYPT) -> "HandshakeVariant":
        return cls(kind=VariantKind.KEYLESS, kx_mode=kx_mode)

    @classmethod
    def dane(cls, dns_cached: bool = True) -> "HandshakeVariant":
        return cls(kind=VariantKind.DANE, dns_cached=dns_cached)

    def label(self) -> str:
        if self.kind is VariantKind.DANE:
            return "dane-cached" if self.dns_cached else "dane-uncached"
        return self.kind.value


@dataclass(frozen=True)
class ClientHello:
    sni: str
    client_random: bytes
    offered_suites: tuple = ("TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256",)


def intercept_decision(hello: ClientHello, authorized) -> InterceptDecision:
    """Terminal policy: intercept iff the named service is on its allow-list.

    Matching is exact on the ASCII-lowercased name; an empty name cannot be
    routed and is rejected outright.
    """
    if not hello.sni or not hello.sni.strip():
        raise MalformedSni("hello carries no server name")
    wanted = hello.sni.strip().lower()
    if any(wanted == entry.lower() for entry in authorized):
        return InterceptDecision.INTERCEPT
    return InterceptDecision.FORWARD


@dataclass(frozen=True)
class SessionKeys:
    session_id: bytes
    key_material: bytes
    established_at: SimTime
    ttl: SimTime

    def expired(self, now: SimTime) -> bool:
        return now >= self.established_at + self.ttl


def derive_session_keys(client_random: bytes, server_random: bytes,
                        premaster: bytes, established_at: SimTime,
                        ttl: SimTime) -> SessionKeys:
    key_material = hashlib.sha256(client_random + server_random + premaster).digest()
    session_id = hashlib.sha256(b"sid" + key_material).digest()[:16]
    return SessionKeys(session_id=session_id, key_material=key_material,
                       established_at=established_at, ttl=ttl)


@dataclass(frozen=True)
class Flight:
    at: SimTime
    src: NodeId
    dst: NodeId
    label: str
    size: int


@dataclass
class HandshakeTrace:
    variant: HandshakeVariant
    start: SimTime
    end: SimTime
    flights: tuple
    satellite_round_trips: int
    outcome: Outcome
    session: Optional[SessionKeys] = None

    @property
    def duration(self) -> SimTime:
        return self.end - self.start


DEFAULT_SESSION_TTL = 600 * SECOND


@dataclass
class HandshakeParams:
    sni: str = "video.example"
    authorized: frozenset = frozenset({"video.example"})
    handshake_rtts: int = 2
    tcp_connect: bool = True
    kx_mode: KxMode = KxMode.RSA_DECRYPT
    session_ttl: SimTime = DEFAULT_SESSION_TTL
    # scalar applied at every responding node, or a per-node mapping
    processing_delay: object = 0
    overlap_keyless: bool = False

    def turnaround(self, node) -> SimTime:
        if isinstance(self.processing_delay, int):
            return self.processing_delay
        return self.processing_delay.get(node, 0)


# Nominal flight sizes in octets; they only matter when the per-byte
# serialization term is enabled on the topology.
_SIZES = {
    "tcp-syn": 60, "tcp-synack": 60,
    "client-hello": 280, "server-hello-cert": 3200, "terminal-cert": 1800,
    "server-hello-finished": 3300, "key-exchange": 180, "finished": 80,
    "tlsa-query": 70, "tlsa-answer": 360, "tlsa-fetch": 70, "tlsa-record": 360,
    "keyless-request": 300, "keyless-response": 300,
    "handshake-alert": 40, "validation-alert": 40,
}


def _tls_pairs(rtts: int) -> list:
    if rtts < 1:
        raise ValueError("handshake needs at least one round trip")
    if rtts == 1:
        return [("client-hello", "server-hello-finished")]
    pairs = [("client-hello", "server-hello-cert")]
    for i in range(rtts - 2):
        pairs.append((f"handshake-data-{i + 2}", f"handshake-ack-{i + 2}"))
    pairs.append(("key-exchange", "finished"))
    return pairs


def _size(label: str) -> int:
    return _SIZES.get(label, 120)


class _Run:
    """Shared flight bookkeeping for one handshake on one simulator."""

    def __init__(self, sim: Simulator, topo: Topology, params: HandshakeParams,
                 variant: HandshakeVariant):
        self.sim = sim
        self.topo = topo
        self.params = params
        self.variant = variant
        self.start = sim.now
        self.flights: list[Flight] = []
        self.outcome: Optional[Outcome] = None
        self.end: SimTime = sim.now
        self.session: Optional[SessionKeys] = None

    def fly(self, src, dst, label, then, *, delay: SimTime = 0):
        """Record a flight leaving src after `delay` and deliver it to dst."""
        def depart(sim: Simulator) -> None:
            self.flights.append(Flight(sim.now, src, dst, label, _size(label)))
            sim.send(src, dst, label, size=_size(label),
                     deliver=lambda s, m: then())
        if delay:
            self.sim.call_in(delay, depart)
        else:
            depart(self.sim)

    def finish(self, outcome: Outcome) -> None:
        self.outcome = outcome
        self.end = self.sim.now

    def trace(self) -> HandshakeTrace:
        crossings = sum(
            1 for f in self.flights if self.topo.crosses_satellite(f.src, f.dst))
        return HandshakeTrace(
            variant=self.variant,
            start=self.start,
            end=self.end,
            flights=tuple(self.flights),
            satellite_round_trips=crossings // 2,
            outcome=self.outcome,
            session=self.session,
        )

    def make_session(self, client_random: bytes, server_random: bytes,
                     premaster: bytes) -> None:
        self.session = derive_session_keys(
            client_random, server_random, premaster,
            established_at=self.sim.now, ttl=self.params.session_ttl)


def _drive_pairs(run: _Run, client, peer, pairs, index, between, on_done):
    """Walk alternating client->peer / peer->client flights.

    `between(i, cont)` runs on the peer after the client flight of pair i
    arrives and before the reply departs, letting variants graft extra
    round trips (key relay, record resolution) into the timeline.
    """
    if index == len(pairs):
        on_done()
        return
    up, down = pairs[index]

    def on_up_arrival():
        def reply():
            run.fly(peer, client, down,
                    lambda: _drive_pairs(run, client, peer, pairs, index + 1,
                                         between, on_done),
                    delay=run.params.turnaround(peer))
        between(index, reply)

    run.fly(client, peer, up, on_up_arrival)


def _with_tcp(run: _Run, client, peer, then) -> None:
    if not run.params.tcp_connect:
        then()
        return
    run.fly(client, peer, "tcp-syn",
            lambda: run.fly(peer, client, "tcp-synack", then,
                            delay=run.params.turnaround(peer)))


def _first_client(topo: Topology) -> NodeId:
    return topo.by_role(Role.CLIENT)[0]


def run_vanilla(topo: Topology, params: Optional[HandshakeParams] = None, *,
                sim: Optional[Simulator] = None,
                client: Optional[NodeId] = None) -> HandshakeTrace:
    """End-to-end handshake: every flight crosses the whole path."""
    params = params or HandshakeParams()
    sim = sim or Simulator(topo)
    client = client or _first_client(topo)
    run = _Run(sim, topo, params, HandshakeVariant.vanilla())
    _run_direct(run, client, topo.server)
    sim.run()
    return run.trace()


def _run_direct(run: _Run, client, peer) -> None:
    sim = run.sim
    client_random = sim.rng.randbytes(32)
    server_random = sim.rng.randbytes(32)
    premaster = sim.rng.randbytes(48)
    pairs = _tls_pairs(run.params.handshake_rtts)

    def done():
        run.make_session(client_random, server_random, premaster)
        run.finish(Outcome.COMPLETED)

    _with_tcp(run, client, peer, lambda: _drive_pairs(
        run, client, peer, pairs, 0, lambda i, cont: cont(), done))


def run_keyless(topo: Topology, params: Optional[HandshakeParams],
                channel: KeylessChannel, *,
                sim: Optional[Simulator] = None,
                client: Optional[NodeId] = None,
                on_push=None) -> HandshakeTrace:
    """Terminal-split handshake with one key-operation relay to the origin.

    The relay point depends on the key-exchange mode: a signature is needed
    before the certificate flight can leave the terminal, a premaster
    decryption only after the client's key-exchange flight arrives.  A dead
    channel refuses the handshake at the terminal without ever touching the
    satellite.
    """
    params = params or HandshakeParams()
    sim = sim or Simulator(topo)
    client = client or _first_client(topo)
    terminal = topo.terminal_of(client)
    origin = channel.origin
    variant = HandshakeVariant.keyless(params.kx_mode)
    run = _Run(sim, topo, params, variant)

    client_random = sim.rng.randbytes(32)
    server_random = sim.rng.randbytes(32)
    premaster = sim.rng.randbytes(48)
    hello = ClientHello(sni=params.sni, client_random=client_random)
    session_hint = hashlib.sha256(client_random).digest()[:16]

    if intercept_decision(hello, params.authorized) is InterceptDecision.FORWARD:
        _run_direct(run, client, topo.server)
        sim.run()
        return run.trace()

    pairs = _tls_pairs(params.handshake_rtts)
    mode = variant.kx_mode
    # pair index whose turnaround performs the delegated key operation
    relay_index = 0 if (mode is KxMode.ECDHE_SIGN or len(pairs) == 1) else len(pairs) - 1

    def relay(cont):
        request = KeylessRequest(
            op=OP_FOR_MODE[mode],
            payload=sim.rng.randbytes(64),
            session_id=session_hint,
            kx_mode=mode,
            push_hint=params.sni,
        )

        def at_origin():
            try:
                response = origin.process(channel, request, sim.now)
            except (RevokedChannel, ChannelDown):
                # revoked while the request was in flight: refuse the handshake
                run.fly(channel.server, terminal, "keyless-refusal",
                        lambda: run.fly(terminal, client, "handshake-alert",
                                        lambda: run.finish(Outcome.REFUSED),
                                        delay=params.turnaround(terminal)),
                        delay=params.turnaround(channel.server))
                return

            def back_at_terminal():
                if on_push:
                    for path, body in response.pushed:
                        on_push(terminal, params.sni, path, body)
                cont()

            run.fly(channel.server, terminal, "keyless-response", back_at_terminal,
                    delay=params.turnaround(channel.server))

        run.fly(terminal, channel.server, "keyless-request", at_origin)

    def between(i, cont):
        if i == relay_index:
            relay(cont)
        else:
            cont()

    def done():
        run.make_session(client_random, server_random, premaster)
        run.finish(Outcome.COMPLETED)

    def start_tls():
        if channel.state is not ChannelState.UP:
            # terminal cannot reach the key; refuse locally
            run.fly(client, terminal, "client-hello",
                    lambda: run.fly(terminal, client, "handshake-alert",
                                    lambda: run.finish(Outcome.REFUSED),
                                    delay=params.turnaround(terminal)))
            return
        _drive_pairs(run, client, terminal, pairs, 0, between, done)

    _with_tcp(run, client, terminal, start_tls)
    sim.run()
    return run.trace()


def run_dane(topo: Topology, params: Optional[HandshakeParams],
             resolver: DaneResolver, *,
             sim: Optional[Simulator] = None,
             client: Optional[NodeId] = None) -> HandshakeTrace:
    """Terminal-split handshake validated by pinning-record resolution.

    After the terminal's certificate flight, the client queries the
    terminal's forwarder; a fresh cached record answers in one terrestrial
    round trip, otherwise the forwarder fetches across the satellite.  A
    digest mismatch or failed record signature aborts with a validation
    alert.
    """
    params = params or HandshakeParams()
    sim = sim or Simulator(topo)
    client = client or _first_client(topo)
    terminal = resolver.forwarder.terminal
    variant = HandshakeVariant.dane(dns_cached=params_dns_cached(resolver, sim.now))
    run = _Run(sim, topo, params, variant)

    client_random = sim.rng.randbytes(32)
    server_random = sim.rng.randbytes(32)
    premaster = sim.rng.randbytes(48)
    hello = ClientHello(sni=params.sni, client_random=client_random)

    if intercept_decision(hello, params.authorized) is InterceptDecision.FORWARD:
        _run_direct(run, client, topo.server)
        sim.run()
        return run.trace()

    pairs = _tls_pairs(params.handshake_rtts)
    state = {"record": None}

    def resolve(cont):
        """client -> forwarder -> (authority if stale) -> client"""
        def at_forwarder():
            cached = resolver.forwarder.lookup_cached(params.sni, sim.now)
            if cached is not None:
                state["record"] = cached
                run.fly(terminal, client, "tlsa-answer", cont,
                        delay=params.turnaround(terminal))
                return

            def at_authority():
                try:
                    record = resolver.forwarder.fetch_from_authority(
                        params.sni, sim.now)
                except (NxDomain, BogusSignature):
                    record = None
                state["record"] = record

                def back():
                    run.fly(terminal, client, "tlsa-answer", cont,
                            delay=params.turnaround(terminal))

                run.fly(topo.auth_dns, terminal, "tlsa-record", back,
                        delay=params.turnaround(topo.auth_dns))

            run.fly(terminal, topo.auth_dns, "tlsa-fetch", at_authority,
                    delay=params.turnaround(terminal))

        run.fly(client, terminal, "tlsa-query", at_forwarder)

    def after_cert(cont):
        def validated():
            record = state["record"]
            if record is None or not validate_pin(resolver.cert, record, sim.now):
                run.fly(client, terminal, "validation-alert",
                        lambda: run.finish(Outcome.VALIDATION_FAILED))
                return
            cont()
        resolve(validated)

    def done():
        run.make_session(client_random, server_random, premaster)
        run.finish(Outcome.COMPLETED)

    def drive(index):
        if index == len(pairs):
            done()
            return
        up, _down = pairs[index]
        # the first reply carries the terminal's own certificate
        down = "terminal-cert" if index == 0 else _down

        def on_up():
            def delivered():
                if index == 0:
                    # certificate received: client pins it before continuing
                    after_cert(lambda: drive(index + 1))
                else:
                    drive(index + 1)
            run.fly(terminal, client, down, delivered,
                    delay=params.turnaround(terminal))

        run.fly(client, terminal, up, on_up)

    _with_tcp(run, client, terminal, lambda: drive(0))
    sim.run()
    return run.trace()


def params_dns_cached(resolver: DaneResolver, now: SimTime) -> bool:
    return resolver.forwarder.lookup_cached(resolver.cert.issued_for, now) is not None
