"""Replicated key-value store with last-writer-wins convergence.

Replication scope is the keygroup: one per model, holding every session
context of that model, replicated only to the nodes that serve it. Writes
apply locally and enqueue a sync frame to every other member. A replica
applies an update iff its (version, origin_node) pair is lexicographically
greater than what it holds, so concurrent writers at the same version
resolve identically everywhere and replicas converge regardless of
delivery order.

Deletes are tombstones at version local+1: they win over the deleted value
on every replica and keep losing writers from resurrecting it. Expiry is
lazy: a read at or past `expires_at` purges the entry and reports a miss.

Sync frame layout (integers LEB128 unless noted):

    magic        4 bytes "DCE1"
    op           1 byte (0 = put, 1 = delete)
    model_id     uvarint length + UTF-8 (the keygroup)
    key          uvarint length + UTF-8
    version      uvarint
    origin_node  uvarint length + UTF-8
    expires_at   uvarint, absolute ms epoch (0 = never)
    value        uvarint length + bytes (empty for deletes)

Sync-byte counters charge the encoded frame plus the 4-byte length prefix
per peer send, which is exactly what the frame costs on a stream transport.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

from .errors import ConfigError, DecodeError, NoKeygroupError
from .varint import decode_bytes, decode_uvarint, encode_bytes, encode_uvarint

log = logging.getLogger(__name__)

SYNC_MAGIC = b"DCE1"
OP_PUT = 0
OP_DELETE = 1
FRAME_PREFIX_BYTES = 4


@dataclass(frozen=True)
class ReplicaUpdate:
    """One replication message; the unit both of sync and of byte accounting."""

    op: int
    model_id: str
    key: str
    version: int
    origin_node: str
    expires_at: int
    value: bytes

    def encode(self) -> bytes:
        out = bytearray(SYNC_MAGIC)
        out.append(self.op)
        out.extend(encode_bytes(self.model_id.encode("utf-8")))
        out.extend(encode_bytes(self.key.encode("utf-8")))
        out.extend(encode_uvarint(self.version))
        out.extend(encode_bytes(self.origin_node.encode("utf-8")))
        out.extend(encode_uvarint(int(self.expires_at)))
        out.extend(encode_bytes(self.value))
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "ReplicaUpdate":
        if data[:4] != SYNC_MAGIC:
            raise DecodeError(f"bad sync magic {data[:4]!r}")
        if len(data) < 5:
            raise DecodeError("sync frame too short")
        op = data[4]
        if op not in (OP_PUT, OP_DELETE):
            raise DecodeError(f"unknown sync op {op}")
        pos = 5
        model_raw, pos = decode_bytes(data, pos)
        key_raw, pos = decode_bytes(data, pos)
        version, pos = decode_uvarint(data, pos)
        origin_raw, pos = decode_bytes(data, pos)
        expires_at, pos = decode_uvarint(data, pos)
        value, pos = decode_bytes(data, pos)
        if pos != len(data):
            raise DecodeError(f"{len(data) - pos} trailing bytes in sync frame")
        return cls(
            op=op,
            model_id=model_raw.decode("utf-8"),
            key=key_raw.decode("utf-8"),
            version=version,
            origin_node=origin_raw.decode("utf-8"),
            expires_at=expires_at,
            value=value,
        )


@dataclass
class VersionedValue:
    value: bytes
    version: int
    origin_node: str
    expires_at: int  # absolute ms epoch; 0 = never
    deleted: bool = False

    def ordering(self) -> tuple[int, str]:
        return (self.version, self.origin_node)


def _wins(version: int, origin: str, incumbent: VersionedValue | None) -> bool:
    if incumbent is None:
        return True
    return (version, origin) > incumbent.ordering()


class ReplicatedStore:
    """One node's replica set; thread-safe, transport-agnostic.

    The owner wires `on_send(peer_node_id, frame_bytes)` to its transport.
    Every local put/delete broadcasts to the other keygroup members, even
    when the local apply loses to a newer entry: the losing writer's peers
    may not have seen the winner yet, and re-sending costs one frame while
    guaranteeing the merge rule alone decides the outcome everywhere.
    """

    def __init__(self, node_id: str, now_ms=None):
        self.node_id = node_id
        self._now_ms = now_ms if now_ms is not None else (lambda: 0.0)
        self._groups: dict[str, dict[str, VersionedValue]] = {}
        self._members: dict[str, frozenset[str]] = {}
        self._lock = threading.RLock()
        self.on_send = None
        self.sync_bytes_sent: dict[str, int] = {}
        self.sync_bytes_received: dict[str, int] = {}
        self.sync_frames_sent = 0
        self.updates_applied = 0
        self.updates_ignored = 0

    # -- keygroups --

    def create_keygroup(self, model_id: str, members) -> None:
        """Register a keygroup; must be called identically on every member."""
        member_set = frozenset(members)
        if self.node_id not in member_set:
            raise ConfigError(
                f"node {self.node_id} is not a member of keygroup {model_id!r}"
            )
        with self._lock:
            existing = self._members.get(model_id)
            if existing is not None:
                if existing != member_set:
                    raise ConfigError(
                        f"keygroup {model_id!r} already exists with members "
                        f"{sorted(existing)}, got {sorted(member_set)}"
                    )
                return
            self._members[model_id] = member_set
            self._groups[model_id] = {}

    def has_keygroup(self, model_id: str) -> bool:
        with self._lock:
            return model_id in self._groups

    def keygroups(self) -> list[str]:
        with self._lock:
            return sorted(self._groups)

    def members(self, model_id: str) -> frozenset[str]:
        with self._lock:
            self._group(model_id)
            return self._members[model_id]

    def _group(self, model_id: str) -> dict[str, VersionedValue]:
        group = self._groups.get(model_id)
        if group is None:
            raise NoKeygroupError(f"node {self.node_id} holds no keygroup {model_id!r}")
        return group

    # -- local operations --

    def put(
        self,
        model_id: str,
        key: str,
        value: bytes,
        version: int,
        expires_at: int = 0,
    ) -> bool:
        """Write locally (if it wins) and replicate; True if applied locally."""
        with self._lock:
            group = self._group(model_id)
            entry = group.get(key)
            applied = _wins(version, self.node_id, entry)
            if applied:
                group[key] = VersionedValue(
                    value=value,
                    version=version,
                    origin_node=self.node_id,
                    expires_at=expires_at,
                )
        self._replicate(
            ReplicaUpdate(
                op=OP_PUT,
                model_id=model_id,
                key=key,
                version=version,
                origin_node=self.node_id,
                expires_at=expires_at,
                value=value,
            )
        )
        return applied

    def get(self, model_id: str, key: str) -> VersionedValue | None:
        """Current live entry, or None on miss, tombstone, or expiry."""
        with self._lock:
            group = self._group(model_id)
            entry = group.get(key)
            if entry is None:
                return None
            if entry.expires_at and self._now_ms() >= entry.expires_at:
                del group[key]
                return None
            if entry.deleted:
                return None
            return entry

    def delete(self, model_id: str, key: str, tombstone_ttl_ms: int = 0) -> bool:
        """Tombstone the key one version past the local entry and replicate."""
        with self._lock:
            group = self._group(model_id)
            entry = group.get(key)
            version = (entry.version + 1) if entry else 1
            expires_at = (
                int(self._now_ms()) + tombstone_ttl_ms if tombstone_ttl_ms > 0 else 0
            )
            group[key] = VersionedValue(
                value=b"",
                version=version,
                origin_node=self.node_id,
                expires_at=expires_at,
                deleted=True,
            )
            existed = entry is not None and not entry.deleted
        self._replicate(
            ReplicaUpdate(
                op=OP_DELETE,
                model_id=model_id,
                key=key,
                version=version,
                origin_node=self.node_id,
                expires_at=expires_at,
                value=b"",
            )
        )
        return existed

    # -- replication --

    def apply_update(self, update: ReplicaUpdate, from_node: str = "", frame_len: int = 0) -> bool:
        """Merge a remote update under LWW; True if it replaced local state."""
        if from_node and frame_len:
            with self._lock:
                self.sync_bytes_received[from_node] = (
                    self.sync_bytes_received.get(from_node, 0)
                    + frame_len
                    + FRAME_PREFIX_BYTES
                )
        with self._lock:
            group = self._groups.get(update.model_id)
            if group is None:
                # This replica does not serve the keygroup; nothing to hold.
                self.updates_ignored += 1
                return False
            entry = group.get(update.key)
            if not _wins(update.version, update.origin_node, entry):
                self.updates_ignored += 1
                return False
            group[update.key] = VersionedValue(
                value=update.value,
                version=update.version,
                origin_node=update.origin_node,
                expires_at=update.expires_at,
                deleted=update.op == OP_DELETE,
            )
            self.updates_applied += 1
            return True

    def _replicate(self, update: ReplicaUpdate) -> None:
        with self._lock:
            peers = sorted(self._members[update.model_id] - {self.node_id})
        if not peers:
            return
        frame = update.encode()
        for peer in peers:
            with self._lock:
                self.sync_bytes_sent[peer] = (
                    self.sync_bytes_sent.get(peer, 0)
                    + len(frame)
                    + FRAME_PREFIX_BYTES
                )
                self.sync_frames_sent += 1
            if self.on_send is not None:
                self.on_send(peer, frame)

    # -- introspection --

    def total_sync_bytes_sent(self) -> int:
        with self._lock:
            return sum(self.sync_bytes_sent.values())

    def snapshot(self, model_id: str) -> dict[str, tuple[bytes, int, str, bool]]:
        """Raw replica state for convergence checks (includes tombstones)."""
        with self._lock:
            group = self._group(model_id)
            return {
                k: (v.value, v.version, v.origin_node, v.deleted)
                for k, v in group.items()
            }

    def reset_counters(self) -> None:
        with self._lock:
            self.sync_bytes_sent = {}
            self.sync_bytes_received = {}
            self.sync_frames_sent = 0
            self.updates_applied = 0
            self.updates_ignored = 0
