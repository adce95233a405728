"""Private-key delegation between a terminal and the origin server.

The origin keeps its private key; an authorized terminal relays every
handshake operation that needs it over a long-lived mutually-authenticated
channel and receives only the result.  Channel setup happens once per
(terminal, server) pair and is amortized over all later handshakes.  The
origin therefore observes — and can refuse — every session establishment;
revoking the channel stops new handshakes while already-established sessions
run out their ttl.

Key operations are symbolic: outputs are fixed-length digests of the inputs,
not real signatures, since only message timing and audit semantics matter
here.  Optional content push rides the response to a key operation, seeded by
the handshake's server-name hint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import ChannelDown, KxMismatch, RevokedChannel, Unauthorized
from .sim import SimTime
from .topology import NodeId, Topology


class KxMode(Enum):
    RSA_DECRYPT = "rsa-decrypt"
    ECDHE_SIGN = "ecdhe-sign"


class KxOp(Enum):
    SIGN = "sign"
    DECRYPT = "decrypt"


# Which private-key operation each key-exchange mode delegates.
OP_FOR_MODE = {
    KxMode.RSA_DECRYPT: KxOp.DECRYPT,
    KxMode.ECDHE_SIGN: KxOp.SIGN,
}

# Symbolic output sizes: premaster secret vs. signature.
_OUTPUT_LEN = {KxOp.DECRYPT: 48, KxOp.SIGN: 64}


class ChannelState(Enum):
    UP = "up"
    REVOKED = "revoked"


@dataclass
class KeylessChannel:
    terminal: NodeId
    server: NodeId
    terminal_cert_id: bytes
    established_at: SimTime
    state: ChannelState = ChannelState.UP
    setup_time: SimTime = 0
    origin: "KeylessServer" = None


@dataclass(frozen=True)
class KeylessRequest:
    op: KxOp
    payload: bytes
    session_id: bytes
    kx_mode: KxMode
    push_hint: Optional[str] = None


@dataclass(frozen=True)
class KeylessResponse:
    output: bytes
    pushed: tuple = ()


@dataclass(frozen=True)
class AuditEntry:
    at: SimTime
    terminal: NodeId
    session_id: bytes
    op: KxOp


class KeylessServer:
    """Origin-side endpoint: channels, key operations, audit log, push."""

    def __init__(self, node: NodeId, *, push_enabled: bool = False,
                 push_provider: Optional[Callable[[str], list]] = None):
        self.node = node
        self.push_enabled = push_enabled
        self.push_provider = push_provider
        self.provisioned: set = set()
        self.channels: dict = {}          # terminal -> KeylessChannel
        self.audit_log: list[AuditEntry] = []

    def provision(self, terminal: NodeId) -> None:
        """Install a client certificate on the terminal (out-of-band step)."""
        self.provisioned.add(terminal)

    def establish_channel(self, topo: Topology, terminal: NodeId,
                          now: SimTime = 0) -> KeylessChannel:
        """Open the delegation channel; one full handshake of terminal<->server
        round trips, paid once — repeat calls return the existing channel."""
        existing = self.channels.get(terminal)
        if existing is not None:
            return existing
        if terminal not in self.provisioned:
            raise Unauthorized(f"{terminal} holds no provisioned certificate")
        setup_time = 3 * topo.rtt(terminal, self.node)
        cert_id = hashlib.sha256(f"channel:{terminal}:{self.node}".encode()).digest()[:16]
        channel = KeylessChannel(
            terminal=terminal,
            server=self.node,
            terminal_cert_id=cert_id,
            established_at=now + setup_time,
            setup_time=setup_time,
            origin=self,
        )
        self.channels[terminal] = channel
        return channel

    def process(self, channel: KeylessChannel, request: KeylessRequest,
                now: SimTime) -> KeylessResponse:
        """Perform one delegated key operation and log it.

        Raises on a revoked or foreign channel and on an operation that does
        not belong to the session's key-exchange mode.
        """
        if channel.state is ChannelState.REVOKED:
            raise RevokedChannel(f"channel for {channel.terminal} was revoked")
        if self.channels.get(channel.terminal) is not channel:
            raise ChannelDown(f"no live channel for {channel.terminal}")
        if OP_FOR_MODE[request.kx_mode] is not request.op:
            raise KxMismatch(
                f"{request.op.value} not valid for {request.kx_mode.value} session")
        self.audit_log.append(AuditEntry(
            at=now, terminal=channel.terminal,
            session_id=request.session_id, op=request.op,
        ))
        output = _key_operation(request.op, request.payload)
        pushed = ()
        if self.push_enabled and self.push_provider and request.push_hint:
            pushed = tuple(self.push_provider(request.push_hint))
        return KeylessResponse(output=output, pushed=pushed)

    def revoke(self, channel: KeylessChannel) -> None:
        """Withdraw the terminal's authorization; idempotent."""
        channel.state = ChannelState.REVOKED


def _key_operation(op: KxOp, payload: bytes) -> bytes:
    out = b""
    counter = 0
    while len(out) < _OUTPUT_LEN[op]:
        out += hashlib.sha256(op.value.encode() + bytes([counter]) + payload).digest()
        counter += 1
    return out[:_OUTPUT_LEN[op]]
