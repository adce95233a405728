"""Broadcast cache: aggregation, single transmission, re-encryption bridge."""

import pytest

from satsplit import ece
from satsplit.cachecast import (
    AggregateOutcome,
    CacheEntry,
    CacheNetwork,
    ContentKeyRing,
    ContentOrigin,
    PendingRequests,
    Resource,
    ResourceId,
    TerminalCache,
    run_page_load,
    page_load,
    serve,
    session_content_key,
)
from satsplit.errors import (
    AuthenticationFailure,
    KeyEpochMismatch,
    SessionExpired,
    UnknownKeyId,
)
from satsplit.handshake import HandshakeVariant, derive_session_keys
from satsplit.sim import MS, SECOND, Simulator
from satsplit.topology import Role, default_topology

from oracles import page_load_oracle_us

RID = ResourceId("video.example", "/movie.bin")
MASTER = b"master-secret-material-32-bytes!"


def make_network(n_terminals=2, n_clients=1, *, seed=0, capacity=None,
                 data=b"d" * 4096, cacheable=True, epoch_len=3600 * SECOND,
                 retention=2):
    topo = default_topology(n_terminals, n_clients)
    sim = Simulator(topo, seed=seed)
    origin = ContentOrigin(topo.server, MASTER, epoch_len=epoch_len)
    origin.add_resource(Resource(RID, data, cacheable=cacheable))
    keyring = ContentKeyRing(MASTER, epoch_len=epoch_len, retention=retention)
    network = CacheNetwork(sim, topo, origin, keyring=keyring)
    return topo, sim, network


def make_session(established_at=0, ttl=3600 * SECOND, tag=b"a"):
    return derive_session_keys(tag * 32, b"b" * 32, b"c" * 48,
                               established_at=established_at, ttl=ttl)


def test_miss_then_hit_on_other_terminal():
    topo, sim, network = make_network()
    session = make_session()
    t0, t1 = topo.terminals()

    first = serve(RID, session, t0, topo, network=network)
    assert not first.hit
    assert first.latency == 540 * MS
    assert first.satellite_bytes > 0
    assert first.plaintext == b"d" * 4096

    second = serve(RID, session, t1, topo, network=network)
    assert second.hit
    assert second.latency == 20 * MS
    assert second.satellite_bytes == 0
    assert network.downlink_transmissions[RID] == 1
    assert network.upstream_fetches[RID] == 1


def test_broadcast_populates_every_footprint_terminal():
    topo, sim, network = make_network(n_terminals=5)
    session = make_session()
    serve(RID, session, topo.terminals()[0], topo, network=network)
    for state in network.terminals.values():
        assert RID in state.cache


def test_aggregate_enum_contract():
    pending = PendingRequests()
    assert pending.aggregate(RID, "t0") is AggregateOutcome.TRIGGERED_FETCH
    assert pending.aggregate(RID, "t1") is AggregateOutcome.ENQUEUED
    assert pending.pop(RID) == ["t0", "t1"]
    assert pending.aggregate(RID, "t2") is AggregateOutcome.TRIGGERED_FETCH


def test_five_concurrent_requests_one_fetch_five_responses():
    topo, sim, network = make_network(n_terminals=5, n_clients=1)
    clients = topo.by_role(Role.CLIENT)
    for i, client in enumerate(clients):
        network.request(client, RID, make_session(), at=i * MS)
    sim.run()
    assert len(network.results) == 5
    assert network.upstream_fetches[RID] == 1
    assert network.downlink_transmissions[RID] == 1
    assert all(r.plaintext == b"d" * 4096 for r in network.results)


def test_two_distinct_resources_two_fetches():
    topo, sim, network = make_network()
    other = ResourceId("video.example", "/other.bin")
    network.origin.add_resource(Resource(other, b"e" * 1024))
    client = topo.by_role(Role.CLIENT)[0]
    network.request(client, RID, make_session())
    network.request(client, other, make_session())
    sim.run()
    assert network.upstream_fetches[RID] == 1
    assert network.upstream_fetches[other] == 1


def test_request_after_delivery_hits_cache():
    topo, sim, network = make_network(n_terminals=1)
    client = topo.by_role(Role.CLIENT)[0]
    network.request(client, RID, make_session())
    sim.run()
    network.request(client, RID, make_session(tag=b"z"))
    sim.run()
    assert [r.hit for r in network.results] == [False, True]
    assert network.upstream_fetches[RID] == 1


def test_fetch_racing_broadcast_is_deduplicated():
    """A second terminal's fetch leaves while the broadcast is in flight;
    the gateway answers with a control notice, not a second copy."""
    topo, sim, network = make_network(n_terminals=2)
    c0, c1 = topo.by_role(Role.CLIENT)
    network.request(c0, RID, make_session())
    # first response is broadcast at t=280ms and lands at t=530ms;
    # this request's fetch reaches the gateway at t=541ms > 280ms
    network.request(c1, RID, make_session(tag=b"y"), at=281 * MS)
    sim.run()
    assert len(network.results) == 2
    assert network.downlink_transmissions[RID] == 1
    assert all(r.plaintext == b"d" * 4096 for r in network.results)


def test_reencryption_fidelity_byte_for_byte():
    data = bytes(range(256)) * 40
    topo, sim, network = make_network(data=data)
    result = serve(RID, make_session(), topo.terminals()[0], topo,
                   network=network)
    assert result.plaintext == data


def test_no_cross_session_leakage():
    """Bytes sealed for one session are junk to every other session."""
    topo, sim, network = make_network()
    session_a = make_session(tag=b"a")
    session_b = make_session(tag=b"b")
    result = serve(RID, session_a, topo.terminals()[0], topo, network=network)
    key_a = session_content_key(session_a)
    key_b = session_content_key(session_b)
    assert key_a.keyid != key_b.keyid and key_a.ikm != key_b.ikm
    body = ece.ece_encrypt(result.plaintext, key_a, rs=4096, salt=bytes(16))
    with pytest.raises(UnknownKeyId):
        ece.ece_decrypt(body, {key_b.keyid: key_b})
    with pytest.raises(AuthenticationFailure):
        ece.ece_decrypt(body, {key_a.keyid: ece.ContentKey(key_a.keyid, key_b.ikm)})


def test_expired_session_refused():
    topo, sim, network = make_network()
    session = make_session(established_at=0, ttl=10 * MS)
    sim.call_at(20 * MS, lambda s: None)
    sim.run_until(20 * MS)
    with pytest.raises(SessionExpired):
        serve(RID, session, topo.terminals()[0], topo, network=network)


def test_stale_epoch_entry_never_served():
    epoch_len = 100 * SECOND
    topo, sim, network = make_network(epoch_len=epoch_len, retention=2)
    session = make_session()
    serve(RID, session, topo.terminals()[0], topo, network=network)

    # jump two full epochs: the sealing key is no longer obtainable
    sim.call_at(2 * epoch_len + 1, lambda s: None)
    sim.run()
    with pytest.raises(KeyEpochMismatch):
        serve(RID, make_session(tag=b"q"), topo.terminals()[0], topo,
              network=network)


def test_fresh_epoch_entry_still_served_within_retention():
    epoch_len = 100 * SECOND
    topo, sim, network = make_network(epoch_len=epoch_len, retention=2)
    serve(RID, make_session(), topo.terminals()[0], topo, network=network)
    sim.call_at(epoch_len + 1, lambda s: None)   # previous epoch: retained
    sim.run()
    result = serve(RID, make_session(tag=b"q"), topo.terminals()[0], topo,
                   network=network)
    assert result.hit


def test_non_cacheable_resources_bypass_cache():
    topo, sim, network = make_network(cacheable=False)
    t0 = topo.terminals()[0]
    serve(RID, make_session(), t0, topo, network=network)
    assert RID not in network.terminals[t0].cache
    serve(RID, make_session(tag=b"z"), t0, topo, network=network)
    assert network.upstream_fetches[RID] == 2


def test_lru_eviction_by_byte_capacity():
    cache = TerminalCache(capacity_bytes=1000)
    body = ece.ece_encrypt(b"x" * 300, ece.rotate_content_key(MASTER, 0),
                           rs=4096, salt=bytes(16))
    wire = body.encode()

    def entry(path):
        rid = ResourceId("video.example", path)
        return CacheEntry(rid=rid, body=body, epoch=0, stored_at=0,
                          size=len(wire))

    a, b, c = entry("/a"), entry("/b"), entry("/c")
    cache.put(a)
    cache.put(b)
    cache.get(a.rid)          # a is now most recently used
    cache.put(c)              # evicts b
    assert a.rid in cache and c.rid in cache
    assert b.rid not in cache


# --- page loads -------------------------------------------------------------------

@pytest.mark.parametrize("variant,ece_hit,expected_ms", [
    (HandshakeVariant.vanilla(), False, 2160),
    (HandshakeVariant.dane(True), True, 100),
    (HandshakeVariant.keyless(), True, 600),
    (HandshakeVariant.dane(False), True, 620),
    (HandshakeVariant.keyless(), False, 1120),
])
def test_page_load_values(variant, ece_hit, expected_ms):
    topo = default_topology(2, 1)
    assert page_load(variant, ece_hit, topo) == expected_ms * MS


def test_page_load_matches_oracle_composition():
    topo = default_topology(1, 1)
    for name, variant in [("vanilla", HandshakeVariant.vanilla()),
                          ("keyless", HandshakeVariant.keyless()),
                          ("dane", HandshakeVariant.dane(True))]:
        for hit in (False, True):
            got = page_load(variant, hit, topo)
            want = page_load_oracle_us(
                name, hit, sat_rtt_us=500 * MS, terr_rtt_us=20 * MS,
                dns_cached=True)
            assert got == want, (name, hit)


def test_page_load_cache_gain_covers_satellite_rtt():
    topo = default_topology(1, 1)
    for variant in (HandshakeVariant.vanilla(), HandshakeVariant.keyless(),
                    HandshakeVariant.dane(True), HandshakeVariant.dane(False)):
        direct = run_page_load(variant, False, topo)
        cached = run_page_load(variant, True, topo)
        assert direct.total - cached.total >= 520 * MS
        assert cached.satellite_bytes == 0
        assert direct.satellite_bytes > 0


def test_keyless_push_primes_cache_during_handshake():
    """Pushed content rides the key-operation response; the page request that
    follows is a terminal hit with no further satellite use."""
    from satsplit.handshake import run_keyless
    from satsplit.keyless import KeylessServer

    topo = default_topology(1, 1)
    sim = Simulator(topo, seed=3)
    data = b"p" * 2048
    origin = ContentOrigin(topo.server, MASTER)
    origin.add_resource(Resource(RID, data))
    network = CacheNetwork(sim, topo, origin)

    def provider(domain):
        body, epoch = origin.encrypt_resource(RID, sim.now, sim.rng)
        return [(RID.path, (body, epoch))]

    ks = KeylessServer(topo.server, push_enabled=True, push_provider=provider)
    terminal = topo.terminals()[0]
    ks.provision(terminal)
    channel = ks.establish_channel(topo, terminal)

    def on_push(term, domain, path, payload):
        body, epoch = payload
        wire = body.encode()
        network.terminals[term].cache.put(CacheEntry(
            rid=ResourceId(domain, path), body=body, epoch=epoch,
            stored_at=sim.now, size=len(wire)))

    trace = run_keyless(topo, None, channel, sim=sim, on_push=on_push)
    assert trace.duration == 580 * MS
    assert RID in network.terminals[terminal].cache

    result = serve(RID, trace.session, terminal, topo, network=network)
    assert result.hit
    assert result.plaintext == data
    assert RID not in network.upstream_fetches
