"""Transport: simulated links with deterministic timing, and TCP framing.

The simulator is a discrete-event core. Every deliverable (a frame on a
link, or a plain timer) is an event with an absolute due time in virtual
milliseconds. `advance_clock` pops events in due order; handlers may nest
further `advance_clock`/`schedule` calls, which is what lets node code run
"inline" while replication and write-back proceed as scheduled events.

Determinism: ties on due time break by (link id, sequence number), jitter
comes from a seeded RNG, and per-link delivery times are floored to the
previous delivery so jitter can never reorder frames on one link.

The live path shares only the framing helpers here: every TCP message is a
4-byte big-endian length prefix followed by the payload.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import socket
import struct
import time
from dataclasses import dataclass, field

from .errors import DecodeError, RoutingError

log = logging.getLogger(__name__)

FRAME_OVERHEAD_BYTES = 4  # length prefix charged per frame
MAX_FRAME_BYTES = 64 * 1024 * 1024


# -- clocks ------------------------------------------------------------------

class Clock:
    """Time source a node charges compute and waits against."""

    def now_ms(self) -> float:
        raise NotImplementedError

    def sleep_ms(self, duration: float) -> None:
        raise NotImplementedError


class RealClock(Clock):
    def now_ms(self) -> float:
        return time.monotonic() * 1000.0

    def sleep_ms(self, duration: float) -> None:
        if duration > 0:
            time.sleep(duration / 1000.0)


class SimClock(Clock):
    """Virtual clock owned by a SimNetwork; sleeping delivers due events."""

    def __init__(self, network: "SimNetwork"):
        self._network = network

    def now_ms(self) -> float:
        return self._network.now_ms

    def sleep_ms(self, duration: float) -> None:
        self._network.advance_clock(duration)


# -- simulated network -------------------------------------------------------

@dataclass(frozen=True)
class LinkSpec:
    """One directed link; latency and uniform +/- jitter in milliseconds."""

    src: str
    dst: str
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    partitioned: bool = False

    def __post_init__(self):
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")

    @property
    def link_id(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass
class _LinkState:
    spec: LinkSpec
    bytes_sent: int = 0
    frames_sent: int = 0
    frames_dropped: int = 0
    last_delivery_ms: float = 0.0


@dataclass(order=True)
class _Event:
    due_ms: float
    tiebreak: str
    seq: int
    fn: object = field(compare=False)
    is_frame: bool = field(compare=False, default=False)


class SimNetwork:
    """Deterministic in-process network between named endpoints.

    Handlers are registered per endpoint and receive raw frame bytes.
    `send` charges the frame plus the 4-byte prefix at send time and
    schedules delivery; a partitioned link drops the frame instead (still
    counted in `frames_dropped`, not in bytes).
    """

    def __init__(self, seed: int = 0):
        import random

        self.now_ms: float = 0.0
        self._rng = random.Random(seed)
        self._links: dict[str, _LinkState] = {}
        self._handlers: dict[str, object] = {}
        self._partitioned: set[str] = set()
        self._queue: list[_Event] = []
        self._seq = itertools.count()
        self._frames_delivered = 0

    # -- topology --

    def add_link(self, spec: LinkSpec) -> None:
        if spec.link_id in self._links:
            raise ValueError(f"duplicate link {spec.link_id}")
        self._links[spec.link_id] = _LinkState(spec=spec)
        if spec.partitioned:
            self._partitioned.add(spec.link_id)

    def register(self, endpoint: str, handler) -> None:
        self._handlers[endpoint] = handler

    def partition(self, src: str, dst: str) -> None:
        self._partitioned.add(f"{src}->{dst}")

    def heal(self, src: str, dst: str) -> None:
        self._partitioned.discard(f"{src}->{dst}")

    # -- traffic --

    def send(self, src: str, dst: str, frame: bytes) -> None:
        link_id = f"{src}->{dst}"
        link = self._links.get(link_id)
        if link is None:
            raise RoutingError(f"no link {link_id}")
        if link_id in self._partitioned:
            link.frames_dropped += 1
            return
        link.bytes_sent += len(frame) + FRAME_OVERHEAD_BYTES
        link.frames_sent += 1
        delay = link.spec.latency_ms
        if link.spec.jitter_ms > 0:
            delay += self._rng.uniform(-link.spec.jitter_ms, link.spec.jitter_ms)
        due = self.now_ms + max(delay, 0.0)
        # FIFO per link: jitter must not let a later frame overtake.
        due = max(due, link.last_delivery_ms)
        link.last_delivery_ms = due
        handler = self._handlers.get(dst)
        if handler is None:
            raise RoutingError(f"no handler registered for endpoint {dst!r}")
        self._push(due, link_id, lambda: handler(src, frame), is_frame=True)

    def schedule(self, delay_ms: float, fn) -> None:
        """Run `fn` after `delay_ms` of virtual time (write-back timers)."""
        if delay_ms < 0:
            raise ValueError("delay must be >= 0")
        self._push(self.now_ms + delay_ms, "~timer", fn)

    def _push(self, due: float, tiebreak: str, fn, is_frame: bool = False) -> None:
        heapq.heappush(
            self._queue, _Event(due, tiebreak, next(self._seq), fn, is_frame)
        )

    # -- time --

    def advance_clock(self, duration_ms: float) -> int:
        """Advance virtual time, running every event that falls due.

        Returns the number of frames delivered during this call, nested
        deliveries included. Reentrant: an event handler may advance the
        clock again (a node charging compute time mid-delivery). The nested
        call moves the shared clock forward and drains events due within
        it; when control returns here the deadline check still holds
        because time is monotone.
        """
        if duration_ms < 0:
            raise ValueError("cannot advance by a negative duration")
        delivered_before = self._frames_delivered
        deadline = self.now_ms + duration_ms
        while self._queue and self._queue[0].due_ms <= deadline:
            event = heapq.heappop(self._queue)
            if event.due_ms > self.now_ms:
                self.now_ms = event.due_ms
            if event.is_frame:
                self._frames_delivered += 1
            event.fn()
        if deadline > self.now_ms:
            self.now_ms = deadline
        return self._frames_delivered - delivered_before

    def run_until(self, predicate, max_ms: float = 60_000.0) -> bool:
        """Advance event-to-event until `predicate()` holds.

        Returns False if the queue empties or `max_ms` of virtual time
        passes with the predicate still false. The clock lands exactly on
        event times, never past them.
        """
        start = self.now_ms
        while not predicate():
            if not self._queue or self.now_ms - start >= max_ms:
                return False
            next_due = self._queue[0].due_ms
            self.advance_clock(max(next_due - self.now_ms, 0.0))
        return True

    def drain(self, max_ms: float = 60_000.0) -> None:
        """Run until no events remain pending (bounded)."""
        start = self.now_ms
        while self._queue:
            if self.now_ms - start >= max_ms:
                raise RuntimeError("drain exceeded its time bound")
            next_due = self._queue[0].due_ms
            self.advance_clock(max(next_due - self.now_ms, 0.0))

    @property
    def pending_events(self) -> int:
        return len(self._queue)

    # -- accounting --

    def link_stats(self, src: str, dst: str) -> _LinkState:
        return self._links[f"{src}->{dst}"]

    def total_bytes_sent(self) -> int:
        return sum(l.bytes_sent for l in self._links.values())


# -- TCP framing -------------------------------------------------------------

def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME_BYTES:
        raise ValueError(f"frame of {len(payload)} bytes exceeds the limit")
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes | None:
    """Read one length-prefixed frame; None on clean EOF at a boundary."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise DecodeError(f"frame length {length} exceeds the limit")
    body = _recv_exact(sock, length)
    if body is None:
        raise DecodeError("connection closed mid-frame")
    return body


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    """Read exactly `count` bytes; None on EOF before the first byte."""
    chunks = []
    remaining = count
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == count:
                return None
            raise DecodeError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
