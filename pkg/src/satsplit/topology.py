"""Node/link graph of the client / terminal / satellite / gateway / server plane.

The graph is a tree rooted at the gateway: every client hangs off exactly one
terminal, every terminal reaches the gateway over one satellite link, and the
origin server and authoritative DNS sit behind the gateway on terrestrial
links.  Routing is fixed by role (client -> terminal -> gateway -> server),
never shortest-path: the architecture pins the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ConfigError, InvalidParameter, NoRoute
from .sim import MS, SimTime


class Role(Enum):
    CLIENT = "client"
    TERMINAL = "terminal"
    GATEWAY = "gateway"
    SERVER = "server"
    AUTH_DNS = "authdns"


class LinkKind(Enum):
    TERRESTRIAL = "terrestrial"
    SATELLITE = "satellite"
    LOOPBACK = "loopback"


@dataclass(frozen=True)
class NodeId:
    role: Role
    index: int = 0

    def __str__(self) -> str:
        return f"{self.role.value}{self.index}"


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    one_way_delay: SimTime
    kind: LinkKind = LinkKind.TERRESTRIAL
    broadcast: bool = False

    def __post_init__(self):
        if self.one_way_delay < 0:
            raise InvalidParameter("link delay must be non-negative")
        if self.broadcast and self.kind is not LinkKind.SATELLITE:
            raise InvalidParameter("only satellite downlinks may broadcast")


def _node_sort_key(node: NodeId):
    return (node.role.value, node.index)


@dataclass
class Topology:
    nodes: frozenset
    links: tuple
    footprint: dict = field(default_factory=dict)
    serialization_bps: int = 0
    _up: dict = field(default_factory=dict, repr=False)       # node -> (parent, link)
    _children: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        # Parent pointers toward the gateway root; the role tree has depth <= 2.
        gw = [n for n in self.nodes if n.role is Role.GATEWAY]
        if len(gw) != 1:
            raise InvalidParameter("topology requires exactly one gateway")
        self._root = gw[0]
        for link in self.links:
            hi, lo = link.a, link.b
            if _rank(lo.role) < _rank(hi.role):
                hi, lo = lo, hi
            # hi is closer to the root
            if lo in self._up:
                raise InvalidParameter(f"{lo} has more than one uplink")
            self._up[lo] = (hi, link)
            self._children.setdefault(hi, []).append(lo)

    # -- path queries ------------------------------------------------------

    def path_links(self, src: NodeId, dst: NodeId) -> list:
        """Links along the unique role-path, raising NoRoute when detached."""
        if src not in self.nodes or dst not in self.nodes:
            raise NoRoute(f"unknown node on path {src} -> {dst}")
        if src == dst:
            return []
        up_src = self._chain(src)
        up_dst = self._chain(dst)
        pos = {node: i for i, (node, _) in enumerate(up_src)}
        for j, (node, _) in enumerate(up_dst):
            if node in pos:
                i = pos[node]
                return [l for _, l in up_src[:i]] + [l for _, l in up_dst[:j]]
        raise NoRoute(f"no role-path between {src} and {dst}")

    def _chain(self, node: NodeId) -> list:
        """[(node, uplink), ...] from node to its topmost ancestor."""
        out = []
        cur = node
        while True:
            up = self._up.get(cur)
            out.append((cur, up[1] if up else None))
            if up is None:
                return out
            cur = up[0]

    def one_way_delay(self, src: NodeId, dst: NodeId) -> SimTime:
        return sum(l.one_way_delay for l in self.path_links(src, dst))

    def rtt(self, src: NodeId, dst: NodeId) -> SimTime:
        return 2 * self.one_way_delay(src, dst)

    def crosses_satellite(self, src: NodeId, dst: NodeId) -> bool:
        return any(l.kind is LinkKind.SATELLITE for l in self.path_links(src, dst))

    # -- role lookups ------------------------------------------------------

    def by_role(self, role: Role) -> list:
        return sorted((n for n in self.nodes if n.role is role), key=_node_sort_key)

    @property
    def gateway(self) -> NodeId:
        return self._root

    @property
    def server(self) -> NodeId:
        return self.by_role(Role.SERVER)[0]

    @property
    def auth_dns(self) -> NodeId:
        return self.by_role(Role.AUTH_DNS)[0]

    def terminals(self) -> list:
        return self.by_role(Role.TERMINAL)

    def clients_of(self, terminal: NodeId) -> list:
        return sorted((n for n in self._children.get(terminal, ())), key=_node_sort_key)

    def terminal_of(self, client: NodeId) -> NodeId:
        if client not in self._up:
            raise NoRoute(f"{client} has no terminal")
        return self._up[client][0]

    def broadcast_targets(self, src: NodeId) -> list:
        """Terminals covered by the downlink beam used when src transmits."""
        for link, terminals in self.footprint.items():
            if src in (link.a, link.b):
                return sorted(terminals, key=_node_sort_key)
        raise NoRoute(f"{src} has no broadcast downlink")


def _rank(role: Role) -> int:
    # distance from the gateway root in the role tree
    return {
        Role.GATEWAY: 0,
        Role.TERMINAL: 1, Role.SERVER: 1, Role.AUTH_DNS: 1,
        Role.CLIENT: 2,
    }[role]


def default_topology(n_terminals: int = 1, n_clients_per_terminal: int = 1,
                     sat_rtt: SimTime = 500 * MS, terr_rtt: SimTime = 20 * MS,
                     serialization_bps: int = 0) -> Topology:
    """Build the standard scenario graph.

    Each terrestrial hop (client<->terminal, gateway<->server,
    gateway<->authdns) gets one-way terr_rtt/2; the satellite hop gets
    sat_rtt/2.  All satellite downlinks share one beam whose footprint covers
    every terminal.
    """
    if n_terminals < 1 or n_clients_per_terminal < 1:
        raise InvalidParameter("need at least one terminal and one client per terminal")
    if sat_rtt <= 0 or terr_rtt <= 0:
        raise InvalidParameter("round-trip times must be positive")

    terr_ow = terr_rtt // 2
    sat_ow = sat_rtt // 2

    gateway = NodeId(Role.GATEWAY, 0)
    server = NodeId(Role.SERVER, 0)
    authdns = NodeId(Role.AUTH_DNS, 0)
    nodes = [gateway, server, authdns]
    links = [
        Link(gateway, server, terr_ow, LinkKind.TERRESTRIAL),
        Link(gateway, authdns, terr_ow, LinkKind.TERRESTRIAL),
    ]
    terminals = []
    sat_links = []
    client_index = 0
    for t in range(n_terminals):
        terminal = NodeId(Role.TERMINAL, t)
        terminals.append(terminal)
        nodes.append(terminal)
        sat = Link(terminal, gateway, sat_ow, LinkKind.SATELLITE, broadcast=True)
        sat_links.append(sat)
        links.append(sat)
        for _ in range(n_clients_per_terminal):
            client = NodeId(Role.CLIENT, client_index)
            client_index += 1
            nodes.append(client)
            links.append(Link(client, terminal, terr_ow, LinkKind.TERRESTRIAL))

    footprint = {sat: frozenset(terminals) for sat in sat_links}
    return Topology(
        nodes=frozenset(nodes),
        links=tuple(links),
        footprint=footprint,
        serialization_bps=serialization_bps,
    )


_TOPOLOGY_KEYS = {
    "sat_rtt_ms": int,
    "terr_rtt_ms": int,
    "n_terminals": int,
    "n_clients_per_terminal": int,
    "serialization_bps": int,
}


def parse_kv_file(path) -> dict:
    """Parse a plain-text `key = value` file, '#' comments allowed."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", path=str(path), line=lineno)
        key, _, value = line.partition("=")
        values[key.strip()] = (value.strip(), lineno)
    return values


def load_topology(path) -> Topology:
    values = parse_kv_file(path)
    kwargs = {
        "sat_rtt_ms": 500, "terr_rtt_ms": 20,
        "n_terminals": 1, "n_clients_per_terminal": 1,
        "serialization_bps": 0,
    }
    for key, (value, lineno) in values.items():
        if key not in _TOPOLOGY_KEYS:
            raise ConfigError(f"unknown key {key!r}", path=str(path), line=lineno)
        try:
            kwargs[key] = _TOPOLOGY_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {value!r}", path=str(path), line=lineno)
    return default_topology(
        n_terminals=kwargs["n_terminals"],
        n_clients_per_terminal=kwargs["n_clients_per_terminal"],
        sat_rtt=kwargs["sat_rtt_ms"] * MS,
        terr_rtt=kwargs["terr_rtt_ms"] * MS,
        serialization_bps=kwargs["serialization_bps"],
    )
