"""Versioned session context: data model, binary serialization, rendering.

A session context is an immutable value. `append_turn` returns a new context
with the completed (user, assistant) pair added and the version bumped, so an
in-flight response can never race the asynchronous write-back that persists
it.

The binary frame produced by `serialize_context` is canonical: equal contexts
serialize to identical bytes on every node, and the frame doubles as the
replication payload. Layout (all integers LEB128 unless noted):

    format version   1 byte (0x01)
    mode             1 byte (0 = raw, 1 = tokenized)
    context version  uvarint
    expires_at       uvarint, absolute ms epoch
    origin_node      uvarint length + UTF-8 bytes
    turn count       uvarint
    per turn:        role byte (0 system / 1 user / 2 assistant),
                     uvarint payload length, payload bytes
                     (UTF-8 text in raw mode, LEB128 token ids in tokenized)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import DecodeError, ModeError, SerializationError, VersionError
from .tokenizer import Vocab, decode_tokens, encode_tokens, tokenize
from .varint import decode_bytes as _read_bytes
from .varint import decode_uvarint, encode_bytes, encode_uvarint

FORMAT_VERSION = 0x01

MODE_RAW = "raw"
MODE_TOKENIZED = "tokenized"
MODE_CLIENT_SIDE = "client_side"
STORED_MODES = (MODE_RAW, MODE_TOKENIZED)
REQUEST_MODES = (MODE_RAW, MODE_TOKENIZED, MODE_CLIENT_SIDE)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLE_TO_BYTE = {ROLE_SYSTEM: 0, ROLE_USER: 1, ROLE_ASSISTANT: 2}
_BYTE_TO_ROLE = {v: k for k, v in _ROLE_TO_BYTE.items()}

# Role markers are plain text so the tokenized fast path can be checked
# against tokenizing the raw render. Template: marker, newline, payload,
# newline.
ROLE_MARKERS = {
    ROLE_SYSTEM: "<|system|>",
    ROLE_USER: "<|user|>",
    ROLE_ASSISTANT: "<|assistant|>",
}
_NEWLINE_ID = 10  # byte-fallback id of "\n"; never a vocab entry


@dataclass(frozen=True)
class ContextKey:
    """Identifies one session's context; the model id selects the keygroup."""

    model_id: str
    user_id: str
    session_id: str

    def __post_init__(self):
        for name, value in (
            ("model_id", self.model_id),
            ("user_id", self.user_id),
            ("session_id", self.session_id),
        ):
            if not value:
                raise ValueError(f"ContextKey.{name} must be non-empty")
            if "/" in value:
                raise ValueError(f"ContextKey.{name} must not contain '/': {value!r}")

    def storage_key(self) -> str:
        return f"{self.model_id}/{self.user_id}/{self.session_id}"


@dataclass(frozen=True)
class Turn:
    """One message in the history; payload form matches the session mode."""

    role: str
    text: str | None = None
    tokens: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.role not in _ROLE_TO_BYTE:
            raise ValueError(f"unknown role {self.role!r}")
        if (self.text is None) == (self.tokens is None):
            raise ValueError("turn payload must be exactly one of text or tokens")


@dataclass(frozen=True)
class SessionContext:
    key: ContextKey
    mode: str
    version: int
    turns: tuple[Turn, ...]
    expires_at: int
    origin_node: str

    def __post_init__(self):
        if self.mode not in STORED_MODES:
            raise ValueError(f"stored context mode must be raw|tokenized, got {self.mode!r}")
        if self.version < 0:
            raise ValueError("version must be >= 0")


@dataclass(frozen=True)
class GenerationParams:
    seed: int = 123
    temperature: float = 0.0
    max_tokens: int = 128

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionRequest:
    """Client-to-node request carrying the consistency turn counter."""

    model_id: str
    user_id: str
    session_id: str
    turn: int
    prompt: str
    mode: str
    params: GenerationParams = field(default_factory=GenerationParams)
    history: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        if self.mode not in REQUEST_MODES:
            raise ValueError(f"unknown request mode {self.mode!r}")
        if self.turn < 1:
            raise ValueError("turn counter is 1-based")
        if self.mode == MODE_CLIENT_SIDE:
            if self.history is None:
                raise ValueError("client_side request must carry history")
            if len(self.history) != 2 * (self.turn - 1):
                raise ValueError(
                    f"client_side history must hold 2*(turn-1) entries, "
                    f"got {len(self.history)} for turn {self.turn}"
                )
        elif self.history is not None:
            raise ValueError("history is only allowed in client_side mode")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    tokens_generated: int
    turn: int
    consistency: str  # fresh | stale_served | created
    tokenize_ms: float
    inference_ms: float
    total_ms: float
    retries: int = 0
    user_id: str = ""
    session_id: str = ""


def empty_context(
    key: ContextKey, mode: str, expires_at: int, origin_node: str
) -> SessionContext:
    return SessionContext(
        key=key,
        mode=mode,
        version=0,
        turns=(),
        expires_at=expires_at,
        origin_node=origin_node,
    )


def append_turn(ctx: SessionContext, user_payload, assistant_payload) -> SessionContext:
    """Return a new context with the completed pair appended and version + 1."""
    user_turn = _make_turn(ctx.mode, ROLE_USER, user_payload)
    assistant_turn = _make_turn(ctx.mode, ROLE_ASSISTANT, assistant_payload)
    return replace(
        ctx,
        version=ctx.version + 1,
        turns=ctx.turns + (user_turn, assistant_turn),
    )


def _make_turn(mode: str, role: str, payload) -> Turn:
    if mode == MODE_RAW:
        if not isinstance(payload, str):
            raise ModeError(f"raw context takes text payloads, got {type(payload).__name__}")
        return Turn(role=role, text=payload)
    if isinstance(payload, str):
        raise ModeError("tokenized context takes token payloads, got text")
    return Turn(role=role, tokens=tuple(int(t) for t in payload))


# -- rendering ---------------------------------------------------------------

def mark_turn_text(role: str, text: str) -> str:
    return f"{ROLE_MARKERS[role]}\n{text}\n"


def render_history_text(ctx_or_pairs) -> str:
    """Raw render: role-marked turns concatenated in order.

    Accepts a SessionContext in raw mode or an iterable of (role, text)
    pairs (the client_side history shape).
    """
    if isinstance(ctx_or_pairs, SessionContext):
        if ctx_or_pairs.mode != MODE_RAW:
            raise ModeError("text render requires a raw-mode context")
        pairs = ((t.role, t.text) for t in ctx_or_pairs.turns)
    else:
        pairs = ctx_or_pairs
    return "".join(mark_turn_text(role, text) for role, text in pairs)


def render_history_tokens(ctx: SessionContext, vocab: Vocab) -> list[int]:
    """Tokenized render: stored payload tokens are concatenated as-is.

    Only the role markers are tokenized (once per role); the turn payloads
    are never re-tokenized. Because no vocabulary entry contains a newline,
    the result is identical to tokenizing the raw text render.
    """
    if ctx.mode != MODE_TOKENIZED:
        raise ModeError("token render requires a tokenized-mode context")
    marker_ids = {
        role: tokenize(vocab, marker) for role, marker in ROLE_MARKERS.items()
    }
    ids: list[int] = []
    for turn in ctx.turns:
        ids.extend(marker_ids[turn.role])
        ids.append(_NEWLINE_ID)
        ids.extend(turn.tokens)
        ids.append(_NEWLINE_ID)
    return ids


def render_history(ctx: SessionContext, vocab: Vocab | None = None):
    """Mode dispatch: raw contexts render to text, tokenized to token ids."""
    if ctx.mode == MODE_RAW:
        return render_history_text(ctx)
    if vocab is None:
        raise ValueError("token render requires the model vocabulary")
    return render_history_tokens(ctx, vocab)


# -- serialization -----------------------------------------------------------

def serialize_context(ctx: SessionContext) -> bytes:
    out = bytearray()
    out.append(FORMAT_VERSION)
    out.append(0 if ctx.mode == MODE_RAW else 1)
    out.extend(encode_uvarint(ctx.version))
    out.extend(encode_uvarint(int(ctx.expires_at)))
    out.extend(encode_bytes(ctx.origin_node.encode("utf-8")))
    out.extend(encode_uvarint(len(ctx.turns)))
    for turn in ctx.turns:
        if ctx.mode == MODE_RAW:
            if turn.text is None:
                raise SerializationError("raw context holds a token payload")
            payload = turn.text.encode("utf-8")
        else:
            if turn.tokens is None:
                raise SerializationError("tokenized context holds a text payload")
            payload = encode_tokens(list(turn.tokens))
        out.append(_ROLE_TO_BYTE[turn.role])
        out.extend(encode_bytes(payload))
    return bytes(out)


def deserialize_context(data: bytes, key: ContextKey) -> SessionContext:
    """Inverse of :func:`serialize_context`.

    The storage key is not part of the frame (it is the lookup key), so the
    caller supplies it.
    """
    if len(data) < 2:
        raise DecodeError("frame too short for header")
    if data[0] != FORMAT_VERSION:
        raise VersionError(f"unsupported context frame version {data[0]}")
    mode = MODE_RAW if data[1] == 0 else MODE_TOKENIZED
    if data[1] not in (0, 1):
        raise DecodeError(f"unknown mode byte {data[1]}")
    pos = 2
    version, pos = decode_uvarint(data, pos)
    expires_at, pos = decode_uvarint(data, pos)
    origin_raw, pos = _read_bytes(data, pos)
    turn_count, pos = decode_uvarint(data, pos)
    turns = []
    for _ in range(turn_count):
        if pos >= len(data):
            raise DecodeError("truncated turn record")
        role = _BYTE_TO_ROLE.get(data[pos])
        if role is None:
            raise DecodeError(f"unknown role byte {data[pos]}")
        pos += 1
        payload, pos = _read_bytes(data, pos)
        if mode == MODE_RAW:
            try:
                turns.append(Turn(role=role, text=payload.decode("utf-8")))
            except UnicodeDecodeError as exc:
                raise DecodeError(f"turn payload is not UTF-8: {exc}") from None
        else:
            turns.append(Turn(role=role, tokens=tuple(decode_tokens(payload))))
    if pos != len(data):
        raise DecodeError(f"{len(data) - pos} trailing bytes after last turn")
    return SessionContext(
        key=key,
        mode=mode,
        version=version,
        turns=tuple(turns),
        expires_at=expires_at,
        origin_node=origin_raw.decode("utf-8"),
    )
