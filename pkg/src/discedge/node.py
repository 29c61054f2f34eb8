"""Context manager node: freshness protocol, completion paths, write-back.

The node is transport-agnostic. `handle_message` speaks dicts (the JSON
codec at the bottom turns them into wire frames); the simulator calls it
inline and the live server calls it from socket threads. Time comes from
the injected clock and deferred work goes through the injected `defer`
callable, so the same logic runs under virtual and wall-clock time.

Freshness: a client's turn counter says how many (user, assistant) pairs
its session already holds, so the node expects a stored context at version
turn - 1 exactly. A lower version means replication has not caught up yet
(poll with backoff); a higher one means another writer moved the session
past this client (conflict, never served).

Write-back is asynchronous: the response returns first, then a deferred
task canonicalizes the new pair (tokenizing it in tokenized mode), bumps
the version to the request's turn and puts it to the replicated store. The
deferral delay models that tokenization cost on the node's own hardware;
none of it lands in the client-observable response time.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
from dataclasses import dataclass, field, replace

from .context import (
    MODE_CLIENT_SIDE,
    MODE_RAW,
    ROLE_ASSISTANT,
    ROLE_USER,
    ContextKey,
    CompletionRequest,
    CompletionResponse,
    GenerationParams,
    SessionContext,
    append_turn,
    deserialize_context,
    empty_context,
    mark_turn_text,
    render_history_text,
    render_history_tokens,
    serialize_context,
)
from .engine import CompletionInput, MockEngine
from .errors import (
    DisCEdgeError,
    ModeError,
    ModelNotServedError,
    NoKeygroupError,
    StaleContextError,
    TurnConflictError,
)
from .store import ReplicatedStore
from .tokenizer import Vocab, tokenize
from .transport import Clock

log = logging.getLogger(__name__)

POLICY_STRONG = "strong"
POLICY_AVAILABLE = "available"

CONSISTENCY_CREATED = "created"
CONSISTENCY_FRESH = "fresh"
CONSISTENCY_STALE = "stale_served"


@dataclass(frozen=True)
class ConsistencyPolicy:
    mode: str = POLICY_STRONG
    max_retries: int = 3
    backoff_ms: float = 10.0

    def __post_init__(self):
        if self.mode not in (POLICY_STRONG, POLICY_AVAILABLE):
            raise ValueError(f"unknown consistency policy {self.mode!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_ms < 0:
            raise ValueError("backoff_ms must be >= 0")


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    profile: str = "m2"
    policy: ConsistencyPolicy = field(default_factory=ConsistencyPolicy)
    session_ttl_s: float = 3600.0
    models: tuple[str, ...] = ()
    # socket mode only
    listen: str = ""
    sync_listen: str = ""
    peers: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.node_id:
            raise ValueError("node_id must be non-empty")


class ContextManagerNode:
    """One edge node: an engine, a store replica, and the protocol glue."""

    def __init__(
        self,
        config: NodeConfig,
        engine: MockEngine,
        store: ReplicatedStore,
        clock: Clock,
        defer=None,
    ):
        self.config = config
        self.engine = engine
        self.store = store
        self.clock = clock
        # defer(delay_ms, fn) runs fn after the response has been returned.
        # The synchronous fallback keeps a bare node usable in tests.
        self.defer = defer if defer is not None else (lambda delay_ms, fn: fn())
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.completions_served = 0
        self.writebacks_done = 0

    # -- model lifecycle --

    def serve_model(self, model_id: str, vocab: Vocab, keygroup_members) -> None:
        """Load the model and join its keygroup (same members everywhere)."""
        self.engine.load_model(model_id, vocab)
        self.store.create_keygroup(model_id, keygroup_members)

    def _session_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._session_locks.get(key)
            if lock is None:
                lock = self._session_locks[key] = threading.Lock()
            return lock

    # -- completion --

    def handle_completion(self, req: CompletionRequest) -> CompletionResponse:
        if not self.engine.has_model(req.model_id):
            raise ModelNotServedError(
                f"node {self.config.node_id} does not serve {req.model_id!r}"
            )
        if req.mode == MODE_CLIENT_SIDE:
            return self._complete_client_side(req)
        key = ContextKey(req.model_id, req.user_id, req.session_id)
        lock = self._session_lock(key.storage_key())
        # Overlapping requests for one session are a client protocol error,
        # not a queueing problem: reject instead of serializing.
        if not lock.acquire(blocking=False):
            raise TurnConflictError(
                f"session {key.storage_key()} already has a request in flight"
            )
        try:
            return self._complete_stateful(req, key)
        finally:
            lock.release()

    def _complete_client_side(self, req: CompletionRequest) -> CompletionResponse:
        """Stateless path: the request carries the whole history as text."""
        full_text = render_history_text(req.history) + mark_turn_text(
            ROLE_USER, req.prompt
        )
        out = self._run(req, context=(), prompt=full_text)
        self.completions_served += 1
        return self._response(req, out, CONSISTENCY_FRESH, retries=0)

    def _complete_stateful(
        self, req: CompletionRequest, key: ContextKey
    ) -> CompletionResponse:
        base, consistency, retries = self.ensure_fresh_context(key, req)
        if req.mode == MODE_RAW:
            # Raw storage: the whole rendered history is prompt text and is
            # re-tokenized (and re-charged) on every turn.
            full_text = render_history_text(base) + mark_turn_text(
                ROLE_USER, req.prompt
            )
            out = self._run(req, context=(), prompt=full_text)
        else:
            # Tokenized storage: stored ids are prepended as-is; only the
            # role-marked new prompt is tokenized on the request path.
            vocab = self.engine.vocab(req.model_id)
            context_ids = tuple(render_history_tokens(base, vocab))
            out = self._run(
                req, context=context_ids, prompt=mark_turn_text(ROLE_USER, req.prompt)
            )
        self.completions_served += 1
        self._schedule_writeback(req, base, out.text)
        return self._response(req, out, consistency, retries)

    def _run(self, req: CompletionRequest, context, prompt: str):
        return self.engine.complete(
            CompletionInput(
                model_id=req.model_id,
                prompt=prompt,
                context=tuple(context),
                params=req.params,
            )
        )

    def _response(self, req, out, consistency: str, retries: int) -> CompletionResponse:
        return CompletionResponse(
            text=out.text,
            tokens_generated=len(out.tokens),
            turn=req.turn,
            consistency=consistency,
            tokenize_ms=out.tokenize_ms,
            inference_ms=out.inference_ms,
            total_ms=out.total_ms,
            retries=retries,
            user_id=req.user_id,
            session_id=req.session_id,
        )

    # -- freshness --

    def ensure_fresh_context(self, key: ContextKey, req: CompletionRequest):
        """Resolve the base context for this turn, polling replication.

        Returns (context, consistency_label, retries_used). Raises
        TurnConflictError when the stored version has moved past the
        client, and StaleContextError when a strong-policy node exhausts
        its retries without seeing the expected version.
        """
        expected = req.turn - 1
        policy = self.config.policy
        storage_key = key.storage_key()
        retries = 0
        while True:
            entry = self.store.get(req.model_id, storage_key)
            version = entry.version if entry is not None else 0
            if version > expected:
                raise TurnConflictError(
                    f"session {storage_key} is at version {version}, "
                    f"client expected {expected}"
                )
            if version == expected:
                if entry is None:
                    return self._new_context(key, req.mode), CONSISTENCY_CREATED, retries
                return self._load(entry.value, key, req.mode), CONSISTENCY_FRESH, retries
            if retries >= policy.max_retries:
                break
            retries += 1
            self.clock.sleep_ms(policy.backoff_ms)
        if policy.mode == POLICY_STRONG:
            raise StaleContextError(
                local_version=version, expected_version=expected, retries=retries
            )
        entry = self.store.get(req.model_id, storage_key)
        if entry is None:
            ctx = self._new_context(key, req.mode)
        else:
            ctx = self._load(entry.value, key, req.mode)
        return ctx, CONSISTENCY_STALE, retries

    def _new_context(self, key: ContextKey, mode: str) -> SessionContext:
        return empty_context(
            key, mode, expires_at=self._expiry(), origin_node=self.config.node_id
        )

    def _load(self, value: bytes, key: ContextKey, mode: str) -> SessionContext:
        ctx = deserialize_context(value, key)
        if ctx.mode != mode:
            raise ModeError(
                f"session {key.storage_key()} is stored in {ctx.mode} mode, "
                f"request uses {mode}"
            )
        return ctx

    def _ttl_ms(self) -> int:
        return int(self.config.session_ttl_s * 1000)

    def _expiry(self) -> int:
        ttl_ms = self._ttl_ms()
        if ttl_ms <= 0:
            return 0
        return int(self.clock.now_ms()) + ttl_ms

    # -- write-back --

    def _schedule_writeback(
        self, req: CompletionRequest, base: SessionContext, assistant_text: str
    ) -> None:
        pair_chars = len(mark_turn_text(ROLE_USER, req.prompt)) + len(
            mark_turn_text(ROLE_ASSISTANT, assistant_text)
        )
        delay_ms = pair_chars * self.engine.profile.tokenize_us_per_char / 1000.0

        def writeback(attempt: int = 0) -> None:
            try:
                self._do_writeback(req, base, assistant_text)
            except Exception:
                log.exception(
                    "write-back failed for %s turn %d (attempt %d)",
                    req.session_id,
                    req.turn,
                    attempt,
                )
                if attempt == 0:
                    self.defer(delay_ms, lambda: writeback(attempt=1))

        self.defer(delay_ms, writeback)

    def _do_writeback(
        self, req: CompletionRequest, base: SessionContext, assistant_text: str
    ) -> None:
        if base.mode == MODE_RAW:
            user_payload = req.prompt
            assistant_payload = assistant_text
        else:
            vocab = self.engine.vocab(req.model_id)
            user_payload = tokenize_canonical(vocab, req.prompt)
            assistant_payload = tokenize_canonical(vocab, assistant_text)
        new_ctx = append_turn(base, user_payload, assistant_payload)
        # A stale-served base sits below turn - 1; the stored version must
        # still state how many pairs this client has completed.
        new_ctx = replace(new_ctx, version=req.turn, expires_at=self._expiry())
        self.store.put(
            req.model_id,
            base.key.storage_key(),
            serialize_context(new_ctx),
            version=new_ctx.version,
            expires_at=new_ctx.expires_at,
        )
        self.writebacks_done += 1

    # -- session admin --

    def delete_session(self, model_id: str, user_id: str, session_id: str) -> bool:
        key = ContextKey(model_id, user_id, session_id)
        return self.store.delete(
            model_id, key.storage_key(), tombstone_ttl_ms=self._ttl_ms()
        )

    def counters(self) -> dict:
        return {
            "sync_bytes_sent": dict(self.store.sync_bytes_sent),
            "sync_bytes_received": dict(self.store.sync_bytes_received),
            "sync_bytes_sent_total": self.store.total_sync_bytes_sent(),
            "sync_frames_sent": self.store.sync_frames_sent,
            "updates_applied": self.store.updates_applied,
            "updates_ignored": self.store.updates_ignored,
            "completions_served": self.completions_served,
            "writebacks_done": self.writebacks_done,
        }

    # -- wire-level entry point --

    def handle_message(self, msg: dict) -> dict:
        try:
            return self._dispatch(msg)
        except DisCEdgeError as exc:
            return _error_reply(exc)
        except (KeyError, TypeError, ValueError) as exc:
            return {"type": "error", "code": "bad_request", "detail": str(exc)}
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("internal error handling %s", msg.get("type"))
            return {"type": "error", "code": "internal", "detail": str(exc)}

    def _dispatch(self, msg: dict) -> dict:
        kind = msg.get("type")
        if kind == "completion":
            req = request_from_wire(msg)
            resp = self.handle_completion(req)
            return response_to_wire(resp)
        if kind == "delete_session":
            existed = self.delete_session(
                msg["model"], msg["user_id"], msg["session_id"]
            )
            return {"type": "delete_ok", "existed": existed}
        if kind == "health":
            return {
                "type": "health_ok",
                "node_id": self.config.node_id,
                "models": self.store.keygroups(),
            }
        if kind == "counters":
            reply = {"type": "counters_ok"}
            reply.update(self.counters())
            return reply
        if kind == "reset_counters":
            self.store.reset_counters()
            self.completions_served = 0
            self.writebacks_done = 0
            return {"type": "reset_ok"}
        if kind == "shutdown":
            return {"type": "shutdown_ok"}
        return {
            "type": "error",
            "code": "bad_request",
            "detail": f"unknown message type {kind!r}",
        }


def tokenize_canonical(vocab: Vocab, text: str) -> list[int]:
    """Storage form of a payload: the greedy tokenization of its text.

    Write-back stores canonical ids (not the engine's emitted ids), so a
    raw-mode node re-tokenizing the same text later produces the exact same
    sequence and the model input is independent of the storage mode.
    """
    return tokenize(vocab, text)


def _error_reply(exc: DisCEdgeError) -> dict:
    code = "internal"
    if isinstance(exc, StaleContextError):
        code = "stale_context"
    elif isinstance(exc, TurnConflictError):
        code = "turn_conflict"
    elif isinstance(exc, ModeError):
        code = "mode_conflict"
    elif isinstance(exc, (ModelNotServedError, NoKeygroupError)):
        # NoKeygroupError surfaces when an admin message names a model this
        # node never served; to the client that is the same condition.
        code = "model_not_served"
    return {"type": "error", "code": code, "detail": str(exc)}


# -- JSON wire codec ----------------------------------------------------------
# Compact, key-sorted JSON so a given message always encodes to the same
# bytes; request sizes are part of what the experiments measure.

def encode_message(msg: dict) -> bytes:
    return json.dumps(msg, separators=(",", ":"), sort_keys=True).encode("utf-8")


def decode_message(frame: bytes) -> dict:
    msg = json.loads(frame.decode("utf-8"))
    if not isinstance(msg, dict):
        raise ValueError("wire message must be a JSON object")
    return msg


def request_to_wire(req: CompletionRequest) -> dict:
    msg = {
        "type": "completion",
        "model": req.model_id,
        "user_id": req.user_id,
        "session_id": req.session_id,
        "turn": req.turn,
        "prompt": req.prompt,
        "mode": req.mode,
        "params": {
            "seed": req.params.seed,
            "temperature": req.params.temperature,
            "n_predict": req.params.max_tokens,
        },
    }
    if req.history is not None:
        msg["history"] = [{"role": role, "text": text} for role, text in req.history]
    return msg


def request_from_wire(msg: dict) -> CompletionRequest:
    params = msg.get("params") or {}
    history = msg.get("history")
    user_id = msg.get("user_id") or ""
    session_id = msg.get("session_id") or ""
    turn = int(msg["turn"]) if "turn" in msg else 1
    # A request without identifiers starts a new session: assign ids and
    # treat it as turn 1 regardless of what the client guessed.
    if not user_id or not session_id:
        user_id = user_id or secrets.token_hex(16)
        session_id = session_id or secrets.token_hex(16)
        turn = 1
    return CompletionRequest(
        model_id=msg["model"],
        user_id=user_id,
        session_id=session_id,
        turn=turn,
        prompt=msg["prompt"],
        mode=msg["mode"],
        params=GenerationParams(
            seed=int(params.get("seed", 123)),
            temperature=float(params.get("temperature", 0.0)),
            max_tokens=int(params.get("n_predict", 128)),
        ),
        history=tuple((h["role"], h["text"]) for h in history)
        if history is not None
        else None,
    )


def response_to_wire(resp: CompletionResponse) -> dict:
    return {
        "type": "completion_ok",
        "text": resp.text,
        "tokens_generated": resp.tokens_generated,
        "turn": resp.turn,
        "consistency": resp.consistency,
        "timings": {
            "tokenize_ms": resp.tokenize_ms,
            "inference_ms": resp.inference_ms,
            "total_ms": resp.total_ms,
        },
        "retries": resp.retries,
        "user_id": resp.user_id,
        "session_id": resp.session_id,
    }


def response_from_wire(msg: dict) -> CompletionResponse:
    timings = msg.get("timings") or {}
    return CompletionResponse(
        text=msg["text"],
        tokens_generated=int(msg["tokens_generated"]),
        turn=int(msg["turn"]),
        consistency=msg["consistency"],
        tokenize_ms=float(timings.get("tokenize_ms", 0.0)),
        inference_ms=float(timings.get("inference_ms", 0.0)),
        total_ms=float(timings.get("total_ms", 0.0)),
        retries=int(msg.get("retries", 0)),
        user_id=msg.get("user_id", ""),
        session_id=msg.get("session_id", ""),
    )
