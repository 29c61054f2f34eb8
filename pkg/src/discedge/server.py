"""Live node process: TCP listeners for the client API and replica sync.

One process runs one node. It listens on two ports: the client API port
speaks length-prefixed JSON messages, the sync port receives length-
prefixed replica update frames from peers. Outbound sync traffic goes
through one persistent connection per peer, fed by a queue so a slow or
dead peer never blocks a completion. Write-backs run on timer threads,
mirroring the deferred scheduling the simulator uses.

A node config file is YAML:

    node_id: a
    profile: m2
    listen: 127.0.0.1:7001
    sync_listen: 127.0.0.1:7101
    policy: {mode: strong, max_retries: 3, backoff_ms: 10}
    session_ttl_s: 3600
    peers:
      - {node_id: b, sync: 127.0.0.1:7102}
    models:
      - name: Qwen/Qwen1.5-0.5B-Chat
        vocab: default
        keygroup: [a, b]
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import threading
import time

import yaml

from .engine import PROFILES, MockEngine
from .errors import ConfigError, DecodeError
from .node import ContextManagerNode, NodeConfig, ConsistencyPolicy, decode_message, encode_message
from .scenario import resolve_vocab_path
from .store import SYNC_MAGIC, ReplicaUpdate, ReplicatedStore
from .tokenizer import Vocab, load_vocab
from .transport import RealClock, recv_frame, send_frame

log = logging.getLogger(__name__)

_SYNC_RETRY_S = 0.2
_SYNC_MAX_TRIES = 5


def parse_addr(text: str) -> tuple[str, int]:
    host, _, port = str(text).rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"bad address {text!r}, expected host:port")
    return host, int(port)


def load_node_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: node config must be a YAML mapping")
    return raw


class _PeerSender:
    """Queue plus worker thread keeping one sync connection to a peer."""

    def __init__(self, node_id: str, peer_id: str, addr: tuple[str, int]):
        self.node_id = node_id
        self.peer_id = peer_id
        self.addr = addr
        self.queue: queue.Queue = queue.Queue()
        self._sock: socket.socket | None = None
        self._thread = threading.Thread(
            target=self._run, name=f"sync-{node_id}->{peer_id}", daemon=True)
        self._thread.start()

    def send(self, frame: bytes) -> None:
        self.queue.put(frame)

    def stop(self) -> None:
        self.queue.put(None)

    def _connect(self) -> socket.socket:
        sock = socket.create_connection(self.addr, timeout=5.0)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock

    def _run(self) -> None:
        while True:
            frame = self.queue.get()
            if frame is None:
                break
            delivered = False
            for attempt in range(_SYNC_MAX_TRIES):
                try:
                    if self._sock is None:
                        self._sock = self._connect()
                    send_frame(self._sock, frame)
                    delivered = True
                    break
                except OSError:
                    if self._sock is not None:
                        try:
                            self._sock.close()
                        except OSError:
                            pass
                        self._sock = None
                    time.sleep(_SYNC_RETRY_S * (attempt + 1))
            if not delivered:
                log.warning("dropping sync frame to %s after %d tries",
                            self.peer_id, _SYNC_MAX_TRIES)
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


class NodeServer:
    """Wires a ContextManagerNode to real sockets and timers."""

    def __init__(self, raw_config: dict, config_dir: str = "."):
        node_id = str(raw_config["node_id"])
        policy_raw = raw_config.get("policy") or {}
        policy = ConsistencyPolicy(
            mode=str(policy_raw.get("mode", "strong")),
            max_retries=int(policy_raw.get("max_retries", 3)),
            backoff_ms=float(policy_raw.get("backoff_ms", 10.0)),
        )
        profile_name = str(raw_config.get("profile", "m2"))
        profile = PROFILES.get(profile_name)
        if profile is None:
            raise ConfigError(f"unknown hardware profile {profile_name!r}")

        self.listen_addr = parse_addr(raw_config["listen"])
        self.sync_addr = parse_addr(raw_config["sync_listen"])
        peers_raw = raw_config.get("peers") or []
        self.peer_addrs = {
            str(p["node_id"]): parse_addr(p["sync"]) for p in peers_raw
        }

        self.clock = RealClock()
        self.engine = MockEngine(profile, self.clock)
        self.store = ReplicatedStore(node_id, now_ms=self.clock.now_ms)
        self.store.on_send = self._queue_sync

        models_raw = raw_config.get("models") or []
        model_ids = []
        self._model_setup = []
        for m in models_raw:
            name = str(m["name"])
            model_id = name.replace("/", "_")
            vocab_path = resolve_vocab_path(str(m.get("vocab", "default")), config_dir)
            keygroup = tuple(str(n) for n in (m.get("keygroup") or (node_id,)))
            model_ids.append(model_id)
            self._model_setup.append((model_id, vocab_path, keygroup))

        self.node = ContextManagerNode(
            NodeConfig(
                node_id=node_id,
                profile=profile_name,
                policy=policy,
                session_ttl_s=float(raw_config.get("session_ttl_s", 3600.0)),
                models=tuple(model_ids),
                listen=str(raw_config.get("listen", "")),
                sync_listen=str(raw_config.get("sync_listen", "")),
                peers=tuple((p, f"{a[0]}:{a[1]}") for p, a in self.peer_addrs.items()),
            ),
            self.engine,
            self.store,
            self.clock,
            defer=self._defer,
        )
        for model_id, vocab_path, keygroup in self._model_setup:
            vocab = load_vocab(vocab_path)
            self.node.serve_model(
                model_id, Vocab(model_id=model_id, entries=vocab.entries), keygroup)

        self._senders: dict[str, _PeerSender] = {}
        self._stop = threading.Event()
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []

    # -- plumbing the node expects --

    def _defer(self, delay_ms: float, fn) -> None:
        timer = threading.Timer(max(delay_ms, 0.0) / 1000.0, fn)
        timer.daemon = True
        timer.start()

    def _queue_sync(self, peer: str, frame: bytes) -> None:
        sender = self._senders.get(peer)
        if sender is None:
            addr = self.peer_addrs.get(peer)
            if addr is None:
                log.warning("no sync address for peer %s; dropping frame", peer)
                return
            sender = self._senders[peer] = _PeerSender(
                self.node.config.node_id, peer, addr)
        sender.send(frame)

    # -- serving --

    def start(self) -> None:
        self._listeners = [
            self._listen(self.listen_addr, self._client_conn, "api"),
            self._listen(self.sync_addr, self._sync_conn, "sync"),
        ]
        log.info("node %s serving api on %s:%d, sync on %s:%d",
                 self.node.config.node_id, *self.listen_addr, *self.sync_addr)

    def _listen(self, addr: tuple[str, int], conn_handler, label: str) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(addr)
        sock.listen(32)
        thread = threading.Thread(
            target=self._accept_loop, args=(sock, conn_handler),
            name=f"accept-{label}", daemon=True)
        thread.start()
        self._threads.append(thread)
        return sock

    def _accept_loop(self, listener: socket.socket, conn_handler) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            thread = threading.Thread(
                target=conn_handler, args=(conn,), daemon=True)
            thread.start()

    def _client_conn(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                try:
                    frame = recv_frame(conn)
                except (OSError, DecodeError):
                    return
                if frame is None:
                    return
                try:
                    msg = decode_message(frame)
                except Exception:
                    reply = {"type": "error", "code": "bad_request",
                             "detail": "undecodable frame"}
                else:
                    reply = self.node.handle_message(msg)
                try:
                    send_frame(conn, encode_message(reply))
                except OSError:
                    return
                if reply.get("type") == "shutdown_ok":
                    self._stop.set()
                    return

    def _sync_conn(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                try:
                    frame = recv_frame(conn)
                except (OSError, DecodeError):
                    return
                if frame is None:
                    return
                if frame[:4] != SYNC_MAGIC:
                    log.warning("ignoring non-sync frame on sync port")
                    continue
                try:
                    update = ReplicaUpdate.decode(frame)
                except Exception:
                    log.exception("bad sync frame")
                    continue
                self.store.apply_update(
                    update, from_node=update.origin_node, frame_len=len(frame))

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(0.1):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.close()

    def close(self) -> None:
        self._stop.set()
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass
        for sender in self._senders.values():
            sender.stop()
        log.info("node %s stopped", self.node.config.node_id)


def run_node(config_path: str) -> None:
    """Entry point for `discedge node --config <file>`."""
    raw = load_node_file(config_path)
    server = NodeServer(raw, config_dir=os.path.dirname(os.path.abspath(config_path)))
    server.serve_forever()
