"""Scenario runner: wires the protocol modules into named experiments.

Two built-in presets reproduce the headline experiments: `fig4` measures
handshake completion time for each session-establishment path, `fig5`
measures whole page views with and without the shared-key broadcast cache.
Every run is deterministic in (scenario, seed) and emits rows with a fixed
CSV schema, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .cachecast import Resource, ResourceId, run_page_load
from .dane import AuthorityDns, ForwarderCache
from .errors import ConfigError, UnknownKnob
from .handshake import HandshakeParams, HandshakeVariant
from .keyless import KxMode
from .sim import MS, SECOND, Rng, SimTime
from .topology import Topology, default_topology, parse_kv_file

VARIANT_NAMES = ("vanilla", "keyless", "dane-uncached", "dane-cached")

CSV_HEADER = ("scenario,variant,run,handshake_ms,page_load_ms,"
              "satellite_round_trips,satellite_bytes,cache_hit_rate,"
              "revocation_window_ms")


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    sat_rtt_ms: int = 500
    terr_rtt_ms: int = 20
    n_terminals: int = 1
    n_clients_per_terminal: int = 1
    serialization_bps: int = 0
    variants: tuple = VARIANT_NAMES
    page_modes: tuple = ()            # empty: handshake experiment; else page views
    handshake_rtts: int = 2
    tcp_connect: bool = True
    kx_mode: str = "rsa-decrypt"
    tlsa_ttl_s: int = 300
    refresh_interval_s: int = 150
    dnssec_valid: bool = True
    replay_attack: bool = False
    keyless_push: bool = False
    pushlist: tuple = ()
    page_size: int = 10 * 1024
    domain: str = "video.example"
    seed: int = 0
    runs: int = 1

    def topology(self) -> Topology:
        return default_topology(
            n_terminals=self.n_terminals,
            n_clients_per_terminal=self.n_clients_per_terminal,
            sat_rtt=self.sat_rtt_ms * MS,
            terr_rtt=self.terr_rtt_ms * MS,
            serialization_bps=self.serialization_bps,
        )

    def handshake_params(self) -> HandshakeParams:
        return HandshakeParams(
            sni=self.domain,
            authorized=frozenset({self.domain}),
            handshake_rtts=self.handshake_rtts,
            tcp_connect=self.tcp_connect,
            kx_mode=KxMode(self.kx_mode),
        )

    def page_resource(self) -> Resource:
        return Resource(
            rid=ResourceId(domain=self.domain, path="/index.html"),
            data=bytes(self.page_size),
            cacheable=True,
        )


@dataclass
class MetricsRow:
    scenario: str
    variant: str
    run: int
    handshake_ms: float
    page_load_ms: float
    satellite_round_trips: int
    satellite_bytes: int
    cache_hit_rate: float
    revocation_window_ms: float

    def csv_line(self) -> str:
        return (f"{self.scenario},{self.variant},{self.run},"
                f"{self.handshake_ms:.3f},{self.page_load_ms:.3f},"
                f"{self.satellite_round_trips},{self.satellite_bytes},"
                f"{self.cache_hit_rate:.3f},{self.revocation_window_ms:.3f}")


def preset_fig4(seed: int = 0) -> Scenario:
    """Handshake time per variant: vanilla, keyless, dane-uncached, dane-cached."""
    return Scenario(
        name="fig4",
        variants=("vanilla", "keyless", "dane-uncached", "dane-cached"),
        seed=seed,
    )


def preset_fig5(seed: int = 0) -> Scenario:
    """Page view time per variant, with and without the broadcast cache."""
    return Scenario(
        name="fig5",
        variants=("vanilla", "keyless", "dane-uncached", "dane-cached"),
        page_modes=("direct", "ece"),
        seed=seed,
    )


PRESETS = {"fig4": preset_fig4, "fig5": preset_fig5}


def variant_by_name(name: str, kx_mode: str = "rsa-decrypt") -> HandshakeVariant:
    if name == "vanilla":
        return HandshakeVariant.vanilla()
    if name == "keyless":
        return HandshakeVariant.keyless(KxMode(kx_mode))
    if name == "dane-cached":
        return HandshakeVariant.dane(dns_cached=True)
    if name == "dane-uncached":
        return HandshakeVariant.dane(dns_cached=False)
    raise ConfigError(f"unknown variant {name!r}", field="variants")


def probe_revocation_window(topo: Topology, ttl: SimTime, seed: int) -> SimTime:
    """Measure how long a rotated-away digest keeps validating.

    A forwarder caches the record at a random time, the authority rotates at
    a random later time inside the ttl, and queries then replay against the
    cache.  The window is the span from rotation to the last moment the old
    digest is still served; it can never exceed the ttl.
    """
    rng = Rng(seed)
    domain = "probe.example"
    authority = AuthorityDns(topo.auth_dns)
    terminal = topo.terminals()[0]
    old_digest = rng.randbytes(32)
    new_digest = rng.randbytes(32)
    authority.publish(domain, old_digest, ttl)
    forwarder = ForwarderCache(terminal=terminal, authority=authority)

    fetched_at = rng.randrange(0, ttl)
    forwarder.fetch_from_authority(domain, fetched_at)
    rotated_at = fetched_at + rng.randrange(0, ttl)
    authority.rotate_record(domain, new_digest)

    last_old_served = rotated_at - 1
    t = rotated_at
    step = max(ttl // 512, 1)
    while t <= fetched_at + ttl + step:
        record = forwarder.lookup_cached(domain, t)
        if record is None:
            record = forwarder.fetch_from_authority(domain, t)
        if record.cert_digest == old_digest:
            last_old_served = t
        t += step
    # exact boundary: the cache refuses entries at age == ttl
    edge = fetched_at + ttl - 1
    if edge >= rotated_at:
        record = forwarder.lookup_cached(domain, edge)
        if record is not None and record.cert_digest == old_digest:
            last_old_served = max(last_old_served, edge)
    window = max(0, last_old_served - rotated_at)
    assert window <= ttl, "revocation window exceeded record ttl"
    return window


def run_scenario(scenario: Scenario) -> list:
    """Execute the scenario deterministically and return its metric rows."""
    topo = scenario.topology()
    params = scenario.handshake_params()
    resource = scenario.page_resource()
    rows = []
    for run_idx in range(scenario.runs):
        run_seed = scenario.seed + run_idx
        for variant_name in scenario.variants:
            variant = variant_by_name(variant_name, scenario.kx_mode)
            revocation_ms = 0.0
            if variant_name.startswith("dane"):
                window = probe_revocation_window(
                    topo, scenario.tlsa_ttl_s * SECOND, run_seed)
                revocation_ms = window / MS
            modes = scenario.page_modes or ("direct",)
            for mode in modes:
                result = run_page_load(
                    variant, mode == "ece", topo,
                    params=replace(params),
                    resource=resource,
                    seed=run_seed,
                    keyless_push=scenario.keyless_push,
                    push_paths=_push_paths(scenario),
                    dnssec_valid=scenario.dnssec_valid,
                    replay_attack=scenario.replay_attack,
                    tlsa_ttl=scenario.tlsa_ttl_s * SECOND,
                    refresh_interval=scenario.refresh_interval_s * SECOND,
                )
                label = (f"{variant_name}/{mode}" if scenario.page_modes
                         else variant_name)
                rows.append(MetricsRow(
                    scenario=scenario.name,
                    variant=label,
                    run=run_idx,
                    handshake_ms=result.handshake / MS,
                    page_load_ms=result.total / MS,
                    satellite_round_trips=result.trace.satellite_round_trips,
                    satellite_bytes=result.satellite_bytes,
                    cache_hit_rate=1.0 if result.hit else 0.0,
                    revocation_window_ms=revocation_ms,
                ))
    return rows


def _push_paths(scenario: Scenario) -> tuple:
    """pushlist entries for the scenario's domain, as "domain/path" strings."""
    prefix = scenario.domain + "/"
    return tuple("/" + entry[len(prefix):] for entry in scenario.pushlist
                 if entry.startswith(prefix))


def reduction_vs_vanilla(rows) -> float:
    """Fractional handshake-time reduction of dane-cached relative to vanilla."""
    by_variant = {r.variant.split("/")[0]: r for r in rows}
    vanilla = by_variant["vanilla"].handshake_ms
    cached = by_variant["dane-cached"].handshake_ms
    return 1.0 - cached / vanilla


_SWEEPABLE = {
    "sat_rtt_ms": int, "terr_rtt_ms": int, "n_terminals": int,
    "n_clients_per_terminal": int, "serialization_bps": int,
    "handshake_rtts": int, "tlsa_ttl_s": int, "refresh_interval_s": int,
    "page_size": int, "seed": int, "runs": int,
    "tcp_connect": lambda v: _parse_bool(str(v)),
    "dnssec_valid": lambda v: _parse_bool(str(v)),
    "replay_attack": lambda v: _parse_bool(str(v)),
    "keyless_push": lambda v: _parse_bool(str(v)),
    "kx_mode": str,
}


def sweep(param: str, values, base: Scenario) -> list:
    """Cross-product run over one knob; rows keep a per-value scenario name."""
    if param not in _SWEEPABLE:
        raise UnknownKnob(f"{param!r} is not a sweepable knob", field=param)
    conv = _SWEEPABLE[param]
    rows = []
    for value in values:
        try:
            typed = conv(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {value!r} for {param}", field=param)
        variant_scenario = replace(base, **{param: typed},
                                   name=f"{base.name}[{param}={value}]")
        rows.extend(run_scenario(variant_scenario))
    return rows


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for row in rows:
        out.write(row.csv_line() + "\n")
    return out.getvalue()


def write_csv(rows, path) -> None:
    Path(path).write_text(rows_to_csv(rows))


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "on": True,
                "false": False, "0": False, "no": False, "off": False}


def _parse_bool(value: str) -> bool:
    try:
        return _BOOL_VALUES[value.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {value!r}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Scenario)}


def load_scenario(path) -> Scenario:
    """Parse a plain-text `key = value` scenario file with diagnostics."""
    values = parse_kv_file(path)
    kwargs = {}
    for key, (value, lineno) in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}", path=str(path), line=lineno)
        try:
            kwargs[key] = _convert_field(key, value)
        except ValueError as exc:
            raise ConfigError(str(exc), path=str(path), line=lineno)
    if "name" not in kwargs:
        kwargs["name"] = Path(path).stem
    return Scenario(**kwargs)


def _convert_field(key: str, value: str):
    blueprint = Scenario()
    current = getattr(blueprint, key)
    if isinstance(current, bool):
        return _parse_bool(value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, tuple):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


def resolve_scenario(name_or_path: str, seed: Optional[int] = None) -> Scenario:
    """A preset name or a config file path; seed override applies last."""
    if name_or_path in PRESETS:
        scenario = PRESETS[name_or_path]()
    elif Path(name_or_path).exists():
        scenario = load_scenario(name_or_path)
    else:
        raise ConfigError(
            f"unknown scenario {name_or_path!r}: not a preset "
            f"({', '.join(sorted(PRESETS))}) and not a file")
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario
