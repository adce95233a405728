"""Pinning records, forwarder cache TTL behavior, rotation windows, refresh."""

import pytest
from hypothesis import given, settings, strategies as st

from satsplit.dane import (
    AuthorityDns,
    DaneResolver,
    ForwarderCache,
    TlsaRecord,
    cert_digest,
    issue_delegated_cert,
    proactive_refresh,
    resolve_tlsa,
    schedule_proactive_refresh,
    validate_pin,
)
from satsplit.errors import BogusSignature, InvalidParameter, NxDomain
from satsplit.sim import MS, SECOND, Rng, Simulator
from satsplit.topology import default_topology

DOMAIN = "video.example"
TTL = 300 * SECOND


@pytest.fixture
def topo():
    return default_topology(1, 1)


@pytest.fixture
def rng():
    return Rng(1234)


def make_world(topo, rng, ttl=TTL, refresh_interval=0):
    authority = AuthorityDns(topo.auth_dns)
    terminal = topo.terminals()[0]
    cert = issue_delegated_cert(rng, terminal, DOMAIN, not_after=10 ** 15)
    authority.publish(DOMAIN, cert.digest, ttl)
    forwarder = ForwarderCache(terminal=terminal, authority=authority,
                               refresh_interval=refresh_interval)
    return authority, forwarder, cert


def test_resolve_cold_then_warm(topo, rng):
    _, forwarder, _ = make_world(topo, rng)
    record, latency, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    assert not hit
    assert latency == 540 * MS  # 20 terrestrial + 520 across the satellite
    record, latency, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=latency)
    assert hit
    assert latency == 20 * MS


def test_stale_entry_is_a_miss(topo, rng):
    _, forwarder, _ = make_world(topo, rng)
    resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    # ttl counts from the authority's answer, 270 ms into the resolution
    stamp = 270 * MS
    _, _, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=stamp + TTL - 1)
    assert hit
    _, _, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=stamp + TTL)
    assert not hit


def test_unpublished_domain_raises(topo, rng):
    _, forwarder, _ = make_world(topo, rng)
    with pytest.raises(NxDomain):
        resolve_tlsa("unknown.example", forwarder, topo, now=0)


def test_bogus_signature_rejected_and_not_cached(topo, rng):
    authority, forwarder, cert = make_world(topo, rng)
    authority.publish(DOMAIN, cert.digest, TTL, signature_valid=False)
    with pytest.raises(BogusSignature):
        resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    assert forwarder.lookup_cached(DOMAIN, 0) is None


def test_validate_pin_matrix(topo, rng):
    _, _, cert = make_world(topo, rng)
    record = TlsaRecord(domain=DOMAIN, cert_digest=cert.digest, ttl=TTL)
    assert validate_pin(cert, record, now=0)
    # flip one bit of the digest
    bad = bytearray(cert.digest)
    bad[0] ^= 0x01
    assert not validate_pin(cert, TlsaRecord(DOMAIN, bytes(bad), TTL), now=0)
    # right digest, wrong domain
    assert not validate_pin(
        cert, TlsaRecord("other.example", cert.digest, TTL), now=0)
    # right digest, certificate expired
    assert not validate_pin(cert, record, now=cert.not_after + 1)


def test_record_invariants():
    with pytest.raises(InvalidParameter):
        TlsaRecord(DOMAIN, b"short", TTL)
    with pytest.raises(InvalidParameter):
        TlsaRecord(DOMAIN, bytes(32), 0)


def test_rotation_serial_and_cold_fetch(topo, rng):
    authority, forwarder, cert = make_world(topo, rng)
    new_digest = rng.randbytes(32)
    rotated = authority.rotate_record(DOMAIN, new_digest)
    assert rotated.serial == 1
    record, _, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    assert not hit
    assert record.cert_digest == new_digest


def test_rotation_window_stale_until_ttl(topo, rng):
    """A warm cache keeps validating the old digest, but never past its ttl."""
    authority, forwarder, cert = make_world(topo, rng)
    forwarder.fetch_from_authority(DOMAIN, 0)           # cache at t=0
    authority.rotate_record(DOMAIN, rng.randbytes(32))  # rotate immediately

    inside = forwarder.lookup_cached(DOMAIN, TTL - 1)
    assert inside is not None and inside.cert_digest == cert.digest
    assert validate_pin(cert, inside, now=TTL - 1)

    assert forwarder.lookup_cached(DOMAIN, TTL) is None
    fresh = forwarder.fetch_from_authority(DOMAIN, TTL)
    assert not validate_pin(cert, fresh, now=TTL)


@settings(deadline=None, max_examples=60)
@given(
    fetch_offset=st.integers(0, TTL - 1),
    rotate_offset=st.integers(0, TTL - 1),
    probes=st.lists(st.integers(0, 3 * TTL), min_size=1, max_size=20),
)
def test_revocation_window_bound_randomized(fetch_offset, rotate_offset, probes):
    """No query schedule observes the rotated-away digest at or after
    rotation + ttl."""
    topo = default_topology(1, 1)
    rng = Rng(99)
    authority, forwarder, cert = make_world(topo, rng)
    forwarder.fetch_from_authority(DOMAIN, fetch_offset)
    rotated_at = fetch_offset + rotate_offset
    authority.rotate_record(DOMAIN, rng.randbytes(32))
    for t in sorted(probes):
        record = forwarder.lookup_cached(DOMAIN, t)
        if record is None:
            record = forwarder.fetch_from_authority(DOMAIN, t)
        if record.cert_digest == cert.digest and t >= rotated_at:
            assert t < rotated_at + TTL


def test_replayed_stale_record_reopens_window(topo, rng):
    """The documented DNSSEC weakness: replaying a captured answer lets an
    old digest validate again, bounded by the record ttl from injection."""
    authority, forwarder, cert = make_world(topo, rng)
    old_record, _, _ = resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    authority.rotate_record(DOMAIN, rng.randbytes(32))
    replay_at = 2 * TTL
    assert forwarder.lookup_cached(DOMAIN, replay_at) is None
    forwarder.store_replayed(old_record, replay_at)
    served = forwarder.lookup_cached(DOMAIN, replay_at + TTL - 1)
    assert served is not None and validate_pin(cert, served, replay_at + TTL - 1)
    assert forwarder.lookup_cached(DOMAIN, replay_at + TTL) is None


def test_proactive_refresh_keeps_cache_fresh(topo, rng):
    """Refresh at ttl/2 gives a continuously queried domain a 100% hit rate
    after the first fetch; the refresh traffic stays off the critical path."""
    authority, forwarder, cert = make_world(topo, rng,
                                            refresh_interval=TTL // 2)
    sim = Simulator(topo)
    horizon = 10 * TTL
    resolve_tlsa(DOMAIN, forwarder, topo, now=0)
    schedule_proactive_refresh(sim, forwarder, until=horizon)
    sim.run()

    hits = 0
    queries = 0
    for t in range(TTL // 4, horizon, TTL // 3):
        queries += 1
        _, _, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=t)
        hits += hit
    assert hits == queries
    assert forwarder.background_round_trips >= horizon // TTL


def test_refresh_disabled_leads_to_periodic_misses(topo, rng):
    _, forwarder, _ = make_world(topo, rng, refresh_interval=0)
    forwarder.fetch_from_authority(DOMAIN, 0)
    report = proactive_refresh(forwarder, now=TTL)
    assert report.refreshed == ()
    _, _, hit = resolve_tlsa(DOMAIN, forwarder, topo, now=TTL + 1)
    assert not hit


def test_refresh_never_touches_handshake_duration(topo, rng):
    from satsplit.handshake import run_dane
    authority, forwarder, cert = make_world(topo, rng,
                                            refresh_interval=TTL // 2)
    resolver = DaneResolver(forwarder, cert)
    resolve_tlsa(DOMAIN, forwarder, topo, now=0)

    sim = Simulator(topo)
    schedule_proactive_refresh(sim, forwarder, until=TTL)
    trace = run_dane(topo, None, resolver, sim=sim)
    assert trace.duration == 80 * MS
    assert forwarder.background_round_trips > 0


def test_digest_is_sha256_of_cert_bytes(rng, topo):
    cert = issue_delegated_cert(rng, topo.terminals()[0], DOMAIN, 10 ** 9)
    import hashlib
    assert cert.digest == hashlib.sha256(cert.cert_bytes).digest()
    assert cert_digest(cert.cert_bytes) == cert.digest
