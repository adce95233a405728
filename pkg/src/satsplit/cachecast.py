"""Broadcast-fed terminal caches with gateway request aggregation.

Static content travels the satellite segment as shared-key encrypted bodies
over plain HTTP, so one downlink transmission populates every terminal under
the beam.  Each terminal bridges cached bodies into its clients' sessions by
decrypting with the epoch's shared content key and re-sealing under a key
bound to the session — the same record codec both times, so delivered bytes
round-trip exactly and nothing delivered to one session opens under another.

The gateway coalesces concurrent upstream fetches per resource: the first
requester triggers the fetch, later ones wait for the same response.  A fetch
that races an in-flight broadcast gets a small control notice instead of a
second copy of the data; by the time the notice lands, the broadcast has.
"""

from __future__ import annotations

import dataclasses
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import ece
from .errors import KeyEpochMismatch, SessionExpired
from .handshake import SessionKeys
from .sim import SECOND, SimTime, Simulator
from .topology import NodeId, Role, Topology


@dataclass(frozen=True)
class ResourceId:
    domain: str
    path: str

    def __post_init__(self):
        if not self.domain or not self.path:
            raise ValueError("resource needs a domain and a path")

    def __str__(self) -> str:
        return f"{self.domain}{self.path}"


@dataclass(frozen=True)
class Resource:
    rid: ResourceId
    data: bytes
    cacheable: bool = True

    @property
    def size(self) -> int:
        return len(self.data)


@dataclass
class CacheEntry:
    rid: ResourceId
    body: ece.EceBody
    epoch: int
    stored_at: SimTime
    size: int


class TerminalCache:
    """LRU cache of encrypted bodies; unbounded unless given a byte capacity."""

    def __init__(self, capacity_bytes: Optional[int] = None):
        self.capacity_bytes = capacity_bytes
        self._entries: OrderedDict = OrderedDict()
        self._bytes = 0
        self.hits = 0
        self.misses = 0

    def get(self, rid: ResourceId) -> Optional[CacheEntry]:
        entry = self._entries.get(rid)
        if entry is None:
            self.misses += 1
            return None
        self._entries.move_to_end(rid)
        self.hits += 1
        return entry

    def put(self, entry: CacheEntry) -> None:
        old = self._entries.pop(entry.rid, None)
        if old is not None:
            self._bytes -= old.size
        self._entries[entry.rid] = entry
        self._bytes += entry.size
        if self.capacity_bytes is not None:
            while self._bytes > self.capacity_bytes and len(self._entries) > 1:
                _, evicted = self._entries.popitem(last=False)
                self._bytes -= evicted.size

    def evict(self, rid: ResourceId) -> None:
        old = self._entries.pop(rid, None)
        if old is not None:
            self._bytes -= old.size

    def __contains__(self, rid: ResourceId) -> bool:
        return rid in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class AggregateOutcome(Enum):
    ENQUEUED = "enqueued"
    TRIGGERED_FETCH = "triggered-fetch"


class PendingRequests:
    """At most one upstream fetch in flight per resource."""

    def __init__(self):
        self.waiting: dict = {}

    def aggregate(self, rid: ResourceId, requester) -> AggregateOutcome:
        if rid in self.waiting:
            self.waiting[rid].append(requester)
            return AggregateOutcome.ENQUEUED
        self.waiting[rid] = [requester]
        return AggregateOutcome.TRIGGERED_FETCH

    def pop(self, rid: ResourceId) -> list:
        return self.waiting.pop(rid, [])

    def __contains__(self, rid: ResourceId) -> bool:
        return rid in self.waiting


DEFAULT_EPOCH_LEN = 3600 * SECOND


class ContentKeyRing:
    """Epoch keys derivable from the shared master secret, with bounded retention.

    Holders keep keys for the current epoch and `retention - 1` epochs back;
    anything older is destroyed and its cached bodies become undecryptable.
    """

    def __init__(self, master: bytes, *, epoch_len: SimTime = DEFAULT_EPOCH_LEN,
                 retention: int = 2):
        self.master = master
        self.epoch_len = epoch_len
        self.retention = retention

    def epoch_at(self, now: SimTime) -> int:
        return now // self.epoch_len

    def current_key(self, now: SimTime) -> ece.ContentKey:
        return self.key_for_epoch(self.epoch_at(now), now)

    def key_for_epoch(self, epoch: int, now: SimTime) -> ece.ContentKey:
        current = self.epoch_at(now)
        if epoch > current or epoch <= current - self.retention:
            raise KeyEpochMismatch(
                f"epoch {epoch} key not obtainable at epoch {current}")
        return ece.rotate_content_key(self.master, epoch, epoch_len=self.epoch_len)


class ContentOrigin:
    """Origin server holding the resource table and the shared master secret."""

    def __init__(self, node: NodeId, master: bytes, *,
                 epoch_len: SimTime = DEFAULT_EPOCH_LEN, rs: int = ece.DEFAULT_RECORD_SIZE):
        self.node = node
        self.keyring = ContentKeyRing(master, epoch_len=epoch_len, retention=10 ** 9)
        self.resources: dict = {}
        self.rs = rs

    def add_resource(self, resource: Resource) -> None:
        self.resources[resource.rid] = resource

    def get(self, rid: ResourceId) -> Resource:
        return self.resources[rid]

    def encrypt_resource(self, rid: ResourceId, now: SimTime, rng) -> tuple:
        """(encrypted body, epoch) under the current shared content key."""
        resource = self.resources[rid]
        key = self.keyring.current_key(now)
        salt = rng.randbytes(16)
        body = ece.ece_encrypt(resource.data, key, rs=self.rs, salt=salt)
        return body, key.epoch


def session_content_key(session: SessionKeys) -> ece.ContentKey:
    """Per-session key for the terminal-to-client bridge; distinct sessions
    never share it, so re-sealed bytes are junk to every other session."""
    return ece.ContentKey(keyid=b"sess-" + session.session_id.hex().encode(),
                          ikm=session.key_material[:16])


@dataclass
class ServeResult:
    rid: ResourceId
    latency: SimTime
    satellite_bytes: int
    hit: bool
    plaintext: bytes


@dataclass
class _TerminalState:
    cache: TerminalCache
    waiting: dict = field(default_factory=dict)   # rid -> [(client, session, t0)]


class CacheNetwork:
    """Terminals, gateway, and origin wired onto one simulator instance."""

    def __init__(self, sim: Simulator, topo: Topology, origin: ContentOrigin, *,
                 keyring: Optional[ContentKeyRing] = None,
                 capacity_bytes: Optional[int] = None,
                 session_rs: int = ece.DEFAULT_RECORD_SIZE):
        self.sim = sim
        self.topo = topo
        self.origin = origin
        self.keyring = keyring or ContentKeyRing(
            origin.keyring.master, epoch_len=origin.keyring.epoch_len)
        self.session_rs = session_rs
        self.terminals = {
            t: _TerminalState(cache=TerminalCache(capacity_bytes))
            for t in topo.terminals()
        }
        self.pending = PendingRequests()
        self.recently_broadcast: dict = {}     # rid -> epoch
        self.upstream_fetches: dict = {}       # rid -> count
        self.downlink_transmissions: dict = {} # rid -> count
        self.satellite_data_bytes = 0
        self.results: list[ServeResult] = []
        self.errors: list = []
        self._tx_bytes: dict = {}

        for t in self.terminals:
            sim.attach(t, self._on_terminal_message)
        sim.attach(topo.gateway, self._on_gateway_message)
        sim.attach(origin.node, self._on_origin_message)

    # -- client side ---------------------------------------------------------

    def request(self, client: NodeId, rid: ResourceId, session: SessionKeys,
                at: Optional[SimTime] = None) -> None:
        """Issue one client request at the given time (default: now)."""
        def fire(sim: Simulator) -> None:
            if session.expired(sim.now):
                self.errors.append(SessionExpired(
                    f"session for {client} expired before request of {rid}"))
                return
            sim.send(client, self.topo.terminal_of(client), "content-request",
                     size=180, data=(rid, session, client, sim.now))
        if at is None or at <= self.sim.now:
            fire(self.sim)
        else:
            self.sim.call_at(at, fire)

    # -- terminal side ---------------------------------------------------------

    def _on_terminal_message(self, sim: Simulator, msg) -> None:
        terminal = msg.dst
        state = self.terminals[terminal]
        if msg.label == "content-request":
            rid, session, client, t0 = msg.data
            self._serve_local(sim, terminal, state, rid, session, client, t0)
        elif msg.label == "content-broadcast":
            rid, body_bytes, epoch, cacheable = msg.data
            body = ece.EceBody.parse(body_bytes)
            if cacheable:
                state.cache.put(CacheEntry(
                    rid=rid, body=body, epoch=epoch,
                    stored_at=sim.now, size=len(body_bytes)))
            self._answer_waiters(sim, terminal, state, rid, body, epoch)
        elif msg.label == "cache-notify":
            rid = msg.data
            entry = state.cache.get(rid)
            if entry is not None:
                self._answer_waiters(sim, terminal, state, rid, entry.body,
                                     entry.epoch)
            elif rid in state.waiting:
                # notify raced an eviction; insist on a real fetch
                sim.send(terminal, self.topo.gateway, "cache-fetch", size=90,
                         data=(rid, terminal, True))

    def _serve_local(self, sim, terminal, state, rid, session, client, t0) -> None:
        entry = state.cache.get(rid)
        if entry is not None:
            try:
                self._respond(sim, terminal, client, rid, entry.body,
                              entry.epoch, session, t0, hit=True)
                return
            except KeyEpochMismatch as exc:
                state.cache.evict(rid)
                self.errors.append(exc)
                return
        waiters = state.waiting.setdefault(rid, [])
        waiters.append((client, session, t0))
        if len(waiters) == 1:
            sim.send(terminal, self.topo.gateway, "cache-fetch", size=90,
                     data=(rid, terminal, False))

    def _answer_waiters(self, sim, terminal, state, rid, body, epoch) -> None:
        for client, session, t0 in state.waiting.pop(rid, []):
            try:
                self._respond(sim, terminal, client, rid, body, epoch,
                              session, t0, hit=False)
            except KeyEpochMismatch as exc:
                self.errors.append(exc)

    def _respond(self, sim, terminal, client, rid, body, epoch, session,
                 t0, *, hit: bool) -> None:
        """Decrypt with the epoch key, re-seal for the session, send down."""
        key = self.keyring.key_for_epoch(epoch, sim.now)
        plaintext = ece.ece_decrypt(body, {key.keyid: key})
        session_key = session_content_key(session)
        salt = sim.rng.randbytes(16)
        session_body = ece.ece_encrypt(plaintext, session_key,
                                       rs=self.session_rs, salt=salt)
        wire = session_body.encode()
        sat_bytes = 0 if hit else self._last_transmission_bytes(rid)

        def delivered(s: Simulator, m) -> None:
            received = ece.ece_decrypt(m.data, {session_key.keyid: session_key})
            self.results.append(ServeResult(
                rid=rid, latency=s.now - t0, satellite_bytes=sat_bytes,
                hit=hit, plaintext=received))

        sim.send(terminal, client, "content-response", size=len(wire),
                 data=wire, deliver=delivered)

    def _last_transmission_bytes(self, rid) -> int:
        return self._tx_bytes.get(rid, 0)

    # -- gateway side ----------------------------------------------------------

    def _on_gateway_message(self, sim: Simulator, msg) -> None:
        if msg.label == "cache-fetch":
            rid, terminal, retry = msg.data
            if not retry and rid in self.recently_broadcast:
                # the data is already on (or through) the downlink; a control
                # notice is enough and costs no second transmission
                sim.send(self.topo.gateway, terminal, "cache-notify", size=60,
                         data=rid)
                return
            if self.pending.aggregate(rid, terminal) is AggregateOutcome.TRIGGERED_FETCH:
                sim.send(self.topo.gateway, self.origin.node, "origin-fetch",
                         size=90, data=rid)
        elif msg.label == "origin-response":
            rid, body_bytes, epoch, cacheable = msg.data
            self.pending.pop(rid)
            self.recently_broadcast[rid] = epoch
            self.downlink_transmissions[rid] = self.downlink_transmissions.get(rid, 0) + 1
            self._tx_bytes[rid] = len(body_bytes)
            self.satellite_data_bytes += len(body_bytes)
            sim.broadcast(self.topo.gateway, "content-broadcast",
                          size=len(body_bytes),
                          data=(rid, body_bytes, epoch, cacheable))

    # -- origin side -------------------------------------------------------------

    def _on_origin_message(self, sim: Simulator, msg) -> None:
        if msg.label == "origin-fetch":
            rid = msg.data
            self.upstream_fetches[rid] = self.upstream_fetches.get(rid, 0) + 1
            body, epoch = self.origin.encrypt_resource(rid, sim.now, sim.rng)
            wire = body.encode()
            cacheable = self.origin.get(rid).cacheable
            sim.send(self.origin.node, self.topo.gateway, "origin-response",
                     size=len(wire), data=(rid, wire, epoch, cacheable))

    def warm(self, rid: ResourceId, now: Optional[SimTime] = None) -> None:
        """Install the resource in every terminal cache, sealed at the
        current epoch, without spending any simulated time."""
        now = self.sim.now if now is None else now
        body, epoch = self.origin.encrypt_resource(rid, now, self.sim.rng)
        wire = body.encode()
        for state in self.terminals.values():
            state.cache.put(CacheEntry(
                rid=rid, body=ece.EceBody.parse(wire), epoch=epoch,
                stored_at=now, size=len(wire)))


def serve(rid: ResourceId, session: SessionKeys, terminal: NodeId,
          topo: Topology, *, network: Optional[CacheNetwork] = None,
          origin: Optional[ContentOrigin] = None,
          sim: Optional[Simulator] = None,
          client: Optional[NodeId] = None) -> ServeResult:
    """Serve one request through a terminal and run the network to completion.

    A warm cache answers in one client<->terminal round trip with nothing on
    the satellite; a miss fetches upstream once and the broadcast populates
    every terminal under the beam before the response goes down the last
    terrestrial hop.
    """
    if network is None:
        if origin is None:
            raise ValueError("serve needs a CacheNetwork or a ContentOrigin")
        sim = sim or Simulator(topo)
        network = CacheNetwork(sim, topo, origin)
    sim = network.sim
    client = client or topo.clients_of(terminal)[0]
    if session.expired(sim.now):
        raise SessionExpired("session ttl elapsed")
    before = len(network.results)
    network.request(client, rid, session)
    sim.run()
    if len(network.results) == before:
        if network.errors:
            raise network.errors[-1]
        raise KeyEpochMismatch(f"no response produced for {rid}")
    return network.results[-1]


DEFAULT_PAGE = Resource(
    rid=ResourceId(domain="video.example", path="/index.html"),
    data=bytes(10 * 1024),
    cacheable=True,
)


@dataclass
class PageLoadResult:
    total: SimTime
    handshake: SimTime
    retrieval: SimTime
    satellite_bytes: int
    hit: bool
    trace: object


def run_page_load(variant, use_ece_cache: bool, topo: Topology, *,
                  params=None, resource: Resource = DEFAULT_PAGE,
                  seed: int = 0, keyless_push: bool = False,
                  push_paths=(), dnssec_valid: bool = True,
                  replay_attack: bool = False,
                  tlsa_ttl: SimTime = 300 * SECOND,
                  refresh_interval: SimTime = 0) -> PageLoadResult:
    """One page view: a handshake for the variant, then one object fetch.

    With the shared-key cache the object is a terminal hit — either warmed
    by an earlier broadcast or, for a pushing delegation channel, primed by
    content riding the key-operation response (those bytes do cross the
    satellite and are reported).  Without the cache, the object travels
    client<->server end to end.

    An aborted handshake (refused channel, failed validation) ends the page
    view at the abort: no retrieval is attempted.  `replay_attack` stages a
    captured pinning answer in the forwarder after the authority has rotated
    away from it, demonstrating the stale-replay weakness.
    """
    from .dane import (AuthorityDns, DaneResolver, ForwarderCache,
                       issue_delegated_cert)
    from .handshake import (HandshakeParams, Outcome, VariantKind, run_dane,
                            run_keyless, run_vanilla)
    from .keyless import KeylessServer

    params = params or HandshakeParams(sni=resource.rid.domain,
                                       authorized=frozenset({resource.rid.domain}))
    sim = Simulator(topo, seed=seed)
    client = topo.by_role(Role.CLIENT)[0]
    terminal = topo.terminal_of(client)
    domain = resource.rid.domain

    origin = ContentOrigin(topo.server, master=sim.rng.randbytes(32))
    origin.add_resource(resource)
    network = CacheNetwork(sim, topo, origin) if use_ece_cache else None
    pushed_bytes = {"total": 0}

    if variant.kind is VariantKind.VANILLA:
        trace = run_vanilla(topo, params, sim=sim, client=client)
    elif variant.kind is VariantKind.KEYLESS:
        push_enabled = keyless_push and use_ece_cache
        wanted_paths = set(push_paths) or {resource.rid.path}

        def push_provider(hint: str):
            if hint != domain:
                return []
            out = []
            for path in sorted(wanted_paths):
                rid = ResourceId(domain, path)
                if rid in origin.resources:
                    body, epoch = origin.encrypt_resource(rid, sim.now, sim.rng)
                    out.append((path, (body, epoch)))
            return out

        origin_ks = KeylessServer(topo.server, push_enabled=push_enabled,
                                  push_provider=push_provider)
        origin_ks.provision(terminal)
        channel = origin_ks.establish_channel(topo, terminal)
        kp = dataclasses.replace(params, kx_mode=variant.kx_mode)

        def on_push(term, push_domain, path, payload):
            body, epoch = payload
            wire = body.encode()
            pushed_bytes["total"] += len(wire)
            network.terminals[term].cache.put(CacheEntry(
                rid=ResourceId(push_domain, path), body=body, epoch=epoch,
                stored_at=sim.now, size=len(wire)))

        trace = run_keyless(topo, kp, channel, sim=sim, client=client,
                            on_push=on_push if push_enabled else None)
    else:
        authority = AuthorityDns(topo.auth_dns)
        cert = issue_delegated_cert(sim.rng, terminal, domain,
                                    not_after=10 ** 15)
        authority.publish(domain, cert.digest, ttl=tlsa_ttl,
                          signature_valid=dnssec_valid)
        forwarder = ForwarderCache(terminal=terminal, authority=authority,
                                   refresh_interval=refresh_interval)
        if replay_attack:
            captured = authority.lookup(domain)
            authority.rotate_record(domain, sim.rng.randbytes(32))
            forwarder.store_replayed(captured, now=0)
        elif variant.dns_cached and dnssec_valid:
            forwarder.fetch_from_authority(domain, now=0)
        trace = run_dane(topo, params, DaneResolver(forwarder, cert),
                         sim=sim, client=client)

    handshake_time = trace.duration
    session = trace.session

    if trace.outcome is not Outcome.COMPLETED:
        return PageLoadResult(
            total=handshake_time, handshake=handshake_time, retrieval=0,
            satellite_bytes=0, hit=False, trace=trace,
        )

    if use_ece_cache:
        if not (keyless_push and variant.kind is VariantKind.KEYLESS):
            network.warm(resource.rid)
        result = serve(resource.rid, session, terminal, topo,
                       network=network, client=client)
        return PageLoadResult(
            total=handshake_time + result.latency,
            handshake=handshake_time,
            retrieval=result.latency,
            satellite_bytes=result.satellite_bytes + pushed_bytes["total"],
            hit=result.hit,
            trace=trace,
        )

    # direct retrieval: request and response cross the whole path
    done = {}

    def response_arrived(s: Simulator, m) -> None:
        done["latency"] = s.now - done["t0"]

    def request_arrived(s: Simulator, m) -> None:
        s.send(topo.server, client, "https-response", size=resource.size,
               deliver=response_arrived)

    done["t0"] = sim.now
    sim.send(client, topo.server, "https-request", size=200,
             deliver=request_arrived)
    sim.run()
    return PageLoadResult(
        total=handshake_time + done["latency"],
        handshake=handshake_time,
        retrieval=done["latency"],
        satellite_bytes=resource.size,
        hit=False,
        trace=trace,
    )


def page_load(variant, use_ece_cache: bool, topo: Topology, **kwargs) -> SimTime:
    """Total page-view time; see run_page_load for the breakdown."""
    return run_page_load(variant, use_ece_cache, topo, **kwargs).total
