"""TLSA-style certificate pinning with delegation, plus the terminal DNS cache.

The authoritative server publishes, per domain, the digest of the certificate
a client should accept — including a delegated intermediary's certificate, so
a terminal can answer for the origin.  DNSSEC is reduced to a single validity
bit on each record plus a stale-replay scenario; chain-of-trust mechanics are
out of scope.  Terminals run a forwarder whose cache obeys record TTLs and can
refresh proactively off the critical path.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .errors import BogusSignature, InvalidParameter, NxDomain
from .sim import SimTime, Simulator
from .topology import NodeId, Topology

DIGEST_LEN = 32


def cert_digest(cert_bytes: bytes) -> bytes:
    return hashlib.sha256(cert_bytes).digest()


@dataclass(frozen=True)
class TlsaRecord:
    domain: str
    cert_digest: bytes
    ttl: SimTime
    serial: int = 0
    signature_valid: bool = True

    def __post_init__(self):
        if len(self.cert_digest) != DIGEST_LEN:
            raise InvalidParameter(f"digest must be {DIGEST_LEN} octets")
        if self.ttl <= 0:
            raise InvalidParameter("record ttl must be positive")


@dataclass(frozen=True)
class DelegatedCert:
    """Certificate issued to a terminal for answering on a domain's behalf."""

    subject: NodeId
    cert_bytes: bytes
    issued_for: str
    not_after: SimTime

    @property
    def digest(self) -> bytes:
        return cert_digest(self.cert_bytes)


def issue_delegated_cert(rng, terminal: NodeId, domain: str,
                         not_after: SimTime) -> DelegatedCert:
    return DelegatedCert(
        subject=terminal,
        cert_bytes=rng.randbytes(96),
        issued_for=domain,
        not_after=not_after,
    )


class AuthorityDns:
    """Authoritative publisher of pinning records (the single trusted signer)."""

    def __init__(self, node: NodeId):
        self.node = node
        self.records: dict[str, TlsaRecord] = {}

    def publish(self, domain: str, digest: bytes, ttl: SimTime, *,
                signature_valid: bool = True) -> TlsaRecord:
        record = TlsaRecord(domain=domain, cert_digest=digest, ttl=ttl,
                            serial=self._next_serial(domain),
                            signature_valid=signature_valid)
        self.records[domain] = record
        return record

    def rotate_record(self, domain: str, new_digest: bytes) -> TlsaRecord:
        """Replace the served digest; caches keep the old one until TTL expiry."""
        old = self.lookup(domain)
        record = TlsaRecord(domain=domain, cert_digest=new_digest, ttl=old.ttl,
                            serial=old.serial + 1,
                            signature_valid=old.signature_valid)
        self.records[domain] = record
        return record

    def lookup(self, domain: str) -> TlsaRecord:
        try:
            return self.records[domain]
        except KeyError:
            raise NxDomain(f"no record published for {domain!r}") from None

    def _next_serial(self, domain: str) -> int:
        prev = self.records.get(domain)
        return prev.serial + 1 if prev else 0


@dataclass
class ForwarderCache:
    """Terminal-hosted DNS forwarder with TTL-bounded record cache."""

    terminal: NodeId
    authority: AuthorityDns
    refresh_interval: SimTime = 0
    entries: dict = field(default_factory=dict)   # domain -> (record, fetched_at)
    background_round_trips: int = 0

    def lookup_cached(self, domain: str, now: SimTime) -> Optional[TlsaRecord]:
        """Fresh cached record, or None; never serves past fetched_at + ttl."""
        hit = self.entries.get(domain)
        if hit is None:
            return None
        record, fetched_at = hit
        if now >= fetched_at + record.ttl:
            return None
        return record

    def fetch_from_authority(self, domain: str, now: SimTime) -> TlsaRecord:
        """Authoritative fetch with DNSSEC validation; caches valid answers."""
        record = self.authority.lookup(domain)
        if not record.signature_valid:
            raise BogusSignature(f"record for {domain!r} failed DNSSEC validation")
        self.entries[domain] = (record, now)
        return record

    def store_replayed(self, record: TlsaRecord, now: SimTime) -> None:
        """Attacker-injected replay of a previously captured answer."""
        self.entries[record.domain] = (record, now)


def resolve_tlsa(domain: str, forwarder: ForwarderCache, topo: Topology,
                 now: SimTime = 0) -> tuple[TlsaRecord, SimTime, bool]:
    """Resolve a pinning record through the terminal forwarder.

    Returns (record, latency seen by the client, cache hit).  A fresh cache
    entry costs one client<->terminal round trip and never touches the
    satellite; a miss or stale entry adds the terminal<->authoritative fetch.

    A fetched entry's age counts from the moment the authority produced the
    answer (never later), so a record cached just before a rotation can be
    served strictly less than one ttl past that rotation.
    """
    client = topo.clients_of(forwarder.terminal)[0]
    latency = topo.rtt(client, forwarder.terminal)
    record = forwarder.lookup_cached(domain, now)
    if record is not None:
        return record, latency, True
    authority_emit = (now + latency // 2
                      + topo.one_way_delay(forwarder.terminal, topo.auth_dns))
    record = forwarder.fetch_from_authority(domain, authority_emit)
    latency += topo.rtt(forwarder.terminal, topo.auth_dns)
    return record, latency, False


def validate_pin(cert: DelegatedCert, record: TlsaRecord, now: SimTime = 0) -> bool:
    """True iff the certificate digest is pinned for the domain and unexpired."""
    return (
        cert.digest == record.cert_digest
        and cert.issued_for == record.domain
        and now <= cert.not_after
    )


@dataclass
class RefreshReport:
    refreshed: tuple
    satellite_round_trips: int


def proactive_refresh(forwarder: ForwarderCache, now: SimTime) -> RefreshReport:
    """Re-fetch cache entries older than the refresh interval.

    Runs in the background: crossings are counted on the forwarder but never
    appear in any handshake's flight timeline.  Disabled when the interval
    is zero.
    """
    if forwarder.refresh_interval <= 0:
        return RefreshReport(refreshed=(), satellite_round_trips=0)
    refreshed = []
    for domain in sorted(forwarder.entries):
        record, fetched_at = forwarder.entries[domain]
        if now - fetched_at >= forwarder.refresh_interval:
            try:
                forwarder.fetch_from_authority(domain, now)
            except (NxDomain, BogusSignature):
                del forwarder.entries[domain]
            refreshed.append(domain)
            forwarder.background_round_trips += 1
    return RefreshReport(refreshed=tuple(refreshed),
                         satellite_round_trips=len(refreshed))


def schedule_proactive_refresh(sim: Simulator, forwarder: ForwarderCache,
                               until: SimTime) -> None:
    """Self-rescheduling refresh timer, bounded by a horizon."""
    interval = forwarder.refresh_interval
    if interval <= 0:
        return

    def tick(s: Simulator) -> None:
        proactive_refresh(forwarder, s.now)
        if s.now + interval <= until:
            s.call_in(interval, tick)

    sim.call_in(interval, tick)


@dataclass
class DaneResolver:
    """What a terminal needs to answer for a domain: forwarder plus identity."""

    forwarder: ForwarderCache
    cert: DelegatedCert
