"""Deterministic discrete-event engine.

Virtual time is an integer count of microseconds.  Events are delivered in
(fire_at, insertion-sequence) order, so simultaneous events keep FIFO
semantics and identical runs replay byte-identically.  Messages travel
between nodes with the one-way delay of the topology's role-path plus an
optional per-byte serialization term.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import SchedulingInPast

SimTime = int

# SimTime unit conversions (microseconds).
MS = 1_000
SECOND = 1_000_000


def ms(value: float) -> SimTime:
    """Convert milliseconds to integer SimTime microseconds."""
    return round(value * MS)


def seconds(value: float) -> SimTime:
    return round(value * SECOND)


class Rng(random.Random):
    """Seeded deterministic stream (CPython Mersenne Twister).

    The same seed always yields the same draw sequence; simulation code must
    take all randomness from here, never from the global `random` module.
    """

    algorithm = "mt19937"

    def __init__(self, seed: int):
        super().__init__(seed)
        self.seed_value = seed


@dataclass(frozen=True)
class Message:
    src: Any
    dst: Any
    label: str
    size: int = 0
    data: Any = None


@dataclass
class Event:
    fire_at: SimTime
    seq: int
    target: Any = None
    payload: Optional[Message] = None
    action: Optional[Callable[["Simulator"], None]] = None


class EventHandle:
    """Permits cancelling a scheduled event before it fires."""

    __slots__ = ("event", "cancelled")

    def __init__(self, event: Event):
        self.event = event
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Simulator:
    """Single-threaded event loop owning one virtual clock.

    Instances are independent; nothing is shared between simulations, so
    separate runs may execute in parallel processes.
    """

    def __init__(self, topology=None, *, seed: int = 0):
        self.topology = topology
        self.now: SimTime = 0
        self.rng = Rng(seed)
        self.trace: list[tuple[SimTime, int, str, str, str, int]] = []
        self._heap: list[tuple[SimTime, int, EventHandle]] = []
        self._seq = 0
        self._handlers: dict[Any, Callable[["Simulator", Message], None]] = {}

    # -- scheduling --------------------------------------------------------

    def schedule(self, event: Event) -> EventHandle:
        if event.fire_at < self.now:
            raise SchedulingInPast(
                f"fire_at {event.fire_at} is before current time {self.now}"
            )
        event.seq = self._seq
        self._seq += 1
        handle = EventHandle(event)
        heapq.heappush(self._heap, (event.fire_at, event.seq, handle))
        return handle

    def call_at(self, fire_at: SimTime, action: Callable[["Simulator"], None]) -> EventHandle:
        return self.schedule(Event(fire_at=fire_at, seq=0, action=action))

    def call_in(self, delay: SimTime, action: Callable[["Simulator"], None]) -> EventHandle:
        return self.call_at(self.now + delay, action)

    def attach(self, node, handler: Callable[["Simulator", Message], None]) -> None:
        """Register the delivery handler for a node."""
        self._handlers[node] = handler

    # -- message passing ---------------------------------------------------

    def send(self, src, dst, label: str, *, size: int = 0, data: Any = None,
             deliver: Optional[Callable[["Simulator", Message], None]] = None) -> EventHandle:
        """Schedule delivery of a message over the role-path from src to dst.

        Raises NoRoute if the topology has no path.  `deliver` overrides the
        registered handler of dst for this one message.
        """
        delay = self.topology.one_way_delay(src, dst)
        delay += self._serialization_delay(size)
        msg = Message(src=src, dst=dst, label=label, size=size, data=data)
        return self.schedule(Event(
            fire_at=self.now + delay,
            seq=0,
            target=dst,
            payload=msg,
            action=(lambda sim, m=msg, d=deliver: d(sim, m)) if deliver else None,
        ))

    def broadcast(self, src, label: str, *, size: int = 0, data: Any = None) -> list[EventHandle]:
        """Send one downlink transmission delivered to every terminal in the
        satellite footprint at the same instant."""
        targets = self.topology.broadcast_targets(src)
        handles = []
        for dst in targets:
            delay = self.topology.one_way_delay(src, dst)
            delay += self._serialization_delay(size)
            msg = Message(src=src, dst=dst, label=label, size=size, data=data)
            handles.append(self.schedule(Event(
                fire_at=self.now + delay, seq=0, target=dst, payload=msg,
            )))
        return handles

    def _serialization_delay(self, size: int) -> SimTime:
        bps = getattr(self.topology, "serialization_bps", 0)
        if bps and size:
            return size * 8 * SECOND // bps
        return 0

    # -- execution ---------------------------------------------------------

    def run_until(self, t: SimTime) -> int:
        """Deliver every event with fire_at <= t; returns the delivery count.

        The clock ends at max(last delivered fire_at, previous clock); it does
        not jump to t when the queue runs dry earlier.
        """
        delivered = 0
        while self._heap and self._heap[0][0] <= t:
            fire_at, seq, handle = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = max(self.now, fire_at)
            self._dispatch(handle.event)
            delivered += 1
        return delivered

    def run(self) -> int:
        """Drain the queue completely."""
        delivered = 0
        while self._heap:
            fire_at, seq, handle = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = max(self.now, fire_at)
            self._dispatch(handle.event)
            delivered += 1
        return delivered

    def _dispatch(self, event: Event) -> None:
        msg = event.payload
        if msg is not None:
            self.trace.append((
                self.now, event.seq, _node_label(msg.src), _node_label(msg.dst),
                msg.label, msg.size,
            ))
        if event.action is not None:
            event.action(self)
            return
        if msg is not None:
            handler = self._handlers.get(event.target)
            if handler is not None:
                handler(self, msg)

    # -- determinism -------------------------------------------------------

    def trace_digest(self) -> str:
        """SHA-256 over the canonical delivery trace; equal runs hash equal."""
        h = hashlib.sha256()
        for entry in self.trace:
            h.update(repr(entry).encode())
        return h.hexdigest()


def _node_label(node) -> str:
    return str(node)
