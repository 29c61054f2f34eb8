"""Client SDK: session state, turn counter, and sim/live transports.

A `ClientSession` owns the one piece of state the protocol needs on the
client: the turn counter. It increments only when a completion succeeds,
because a failed turn added no (user, assistant) pair to the session. The
session also keeps the conversation history locally in every mode, but
only client_side mode puts it on the wire.

Transports return (reply dict, round-trip ms). Request and reply sizes are
measured on the encoded frames plus the 4-byte length prefix, so the byte
numbers are identical no matter which transport carried them.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, field

from .context import (
    MODE_CLIENT_SIDE,
    ROLE_ASSISTANT,
    ROLE_USER,
    CompletionRequest,
    CompletionResponse,
    GenerationParams,
)
from .errors import RequestError, RoutingError
from .node import (
    decode_message,
    encode_message,
    request_to_wire,
    response_from_wire,
)
from .transport import FRAME_OVERHEAD_BYTES, SimNetwork, recv_frame, send_frame

log = logging.getLogger(__name__)


@dataclass
class ClientTurnMetrics:
    """One request's measurements, successful or not."""

    turn: int
    node_id: str
    mode: str
    request_bytes: int
    response_bytes: int = 0
    consistency: str = ""
    retries: int = 0
    tokens_generated: int = 0
    tokenize_ms: float = 0.0
    inference_ms: float = 0.0
    total_ms: float = 0.0
    rtt_ms: float = 0.0
    text: str = ""
    error: str = ""

    @property
    def tokens_per_second(self) -> float:
        """Tokens per second of inference time (prefill plus decode)."""
        if self.inference_ms <= 0:
            return 0.0
        return self.tokens_generated / (self.inference_ms / 1000.0)


def node_for_turn(schedule: dict[int, str], turn: int) -> str:
    """Mobility lookup: the schedule entry with the largest key <= turn."""
    best_turn = None
    for start in schedule:
        if start <= turn and (best_turn is None or start > best_turn):
            best_turn = start
    if best_turn is None:
        raise RoutingError(f"mobility schedule has no node for turn {turn}")
    return schedule[best_turn]


class ClientSession:
    """One user's session against the cluster, in one mode."""

    def __init__(
        self,
        model_id: str,
        user_id: str,
        session_id: str,
        mode: str,
        params: GenerationParams,
        transport,
        roam_schedule: dict[int, str] | None = None,
    ):
        self.model_id = model_id
        self.user_id = user_id
        self.session_id = session_id
        self.mode = mode
        self.params = params
        self.transport = transport
        self.roam_schedule = roam_schedule or {}
        self.turn = 1
        self.history: list[tuple[str, str]] = []
        self.metrics: list[ClientTurnMetrics] = []

    def target_node(self) -> str:
        return node_for_turn(self.roam_schedule, self.turn)

    def ask(self, prompt: str, node_id: str | None = None) -> CompletionResponse:
        """Send one turn; raises RequestError on an error reply.

        On failure the turn counter and history are left untouched, so the
        caller may retry or move on; either way the failed attempt is
        recorded in `metrics`.
        """
        node = node_id if node_id is not None else self.target_node()
        req = CompletionRequest(
            model_id=self.model_id,
            user_id=self.user_id,
            session_id=self.session_id,
            turn=self.turn,
            prompt=prompt,
            mode=self.mode,
            params=self.params,
            history=tuple(self.history) if self.mode == MODE_CLIENT_SIDE else None,
        )
        msg = request_to_wire(req)
        request_bytes = len(encode_message(msg)) + FRAME_OVERHEAD_BYTES
        row = ClientTurnMetrics(
            turn=self.turn, node_id=node, mode=self.mode, request_bytes=request_bytes
        )
        reply, rtt_ms = self.transport(node, msg)
        row.response_bytes = len(encode_message(reply)) + FRAME_OVERHEAD_BYTES
        row.rtt_ms = rtt_ms
        if reply.get("type") == "error":
            row.error = reply.get("code", "internal")
            self.metrics.append(row)
            raise RequestError(row.error, reply.get("detail", ""))
        resp = response_from_wire(reply)
        row.consistency = resp.consistency
        row.retries = resp.retries
        row.tokens_generated = resp.tokens_generated
        row.tokenize_ms = resp.tokenize_ms
        row.inference_ms = resp.inference_ms
        row.total_ms = resp.total_ms
        row.text = resp.text
        self.metrics.append(row)
        # History is kept in every mode (it only goes on the wire in
        # client_side mode) so cross-mode runs can be compared turn by turn.
        self.history.append((ROLE_USER, prompt))
        self.history.append((ROLE_ASSISTANT, resp.text))
        self.turn += 1
        return resp

    def delete_session(self, node_id: str | None = None) -> bool:
        node = node_id if node_id is not None else self.target_node()
        reply, _ = self.transport(
            node,
            {
                "type": "delete_session",
                "model": self.model_id,
                "user_id": self.user_id,
                "session_id": self.session_id,
            },
        )
        if reply.get("type") == "error":
            raise RequestError(reply.get("code", "internal"), reply.get("detail", ""))
        return bool(reply.get("existed"))


# -- transports ---------------------------------------------------------------

class SimTransport:
    """Client endpoint on a SimNetwork; blocks by advancing virtual time."""

    def __init__(self, network: SimNetwork, endpoint: str = "client"):
        self.network = network
        self.endpoint = endpoint
        self._inbox: list[bytes] = []
        network.register(endpoint, self._on_frame)

    def _on_frame(self, src: str, frame: bytes) -> None:
        self._inbox.append(frame)

    def __call__(self, node_id: str, msg: dict) -> tuple[dict, float]:
        frame = encode_message(msg)
        t0 = self.network.now_ms
        self.network.send(self.endpoint, node_id, frame)
        if not self.network.run_until(lambda: self._inbox):
            raise RoutingError(f"no reply from {node_id} (request lost?)")
        reply = decode_message(self._inbox.pop(0))
        return reply, self.network.now_ms - t0


class LiveTransport:
    """Persistent TCP connection per node; thread-safe per connection."""

    def __init__(self, endpoints: dict[str, tuple[str, int]], timeout_s: float = 30.0):
        self.endpoints = dict(endpoints)
        self.timeout_s = timeout_s
        self._socks: dict[str, socket.socket] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _conn(self, node_id: str) -> tuple[socket.socket, threading.Lock]:
        with self._guard:
            sock = self._socks.get(node_id)
            if sock is None:
                addr = self.endpoints.get(node_id)
                if addr is None:
                    raise RoutingError(f"no endpoint configured for node {node_id!r}")
                sock = socket.create_connection(addr, timeout=self.timeout_s)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._socks[node_id] = sock
                self._locks[node_id] = threading.Lock()
            return sock, self._locks[node_id]

    def __call__(self, node_id: str, msg: dict) -> tuple[dict, float]:
        sock, lock = self._conn(node_id)
        t0 = time.monotonic()
        with lock:
            send_frame(sock, encode_message(msg))
            frame = recv_frame(sock)
        if frame is None:
            raise RoutingError(f"node {node_id} closed the connection")
        return decode_message(frame), (time.monotonic() - t0) * 1000.0

    def close(self) -> None:
        with self._guard:
            for sock in self._socks.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._socks.clear()
            self._locks.clear()
