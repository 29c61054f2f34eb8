"""Deterministic, invertible, model-scoped tokenizer.

Every node serving a model must map the same text to the same token ids, so
the tokenizer is a pure function of the vocabulary file bytes and the input
text bytes. Matching is greedy longest-match over UTF-8 bytes: at each scan
position the longest vocabulary entry wins; any byte that starts no entry is
emitted as its own value (byte fallback, ids 0-255). Entry k of the
vocabulary file gets id 256 + k.

Because the vocabulary file is one entry per line, no entry can ever contain
a newline. A consequence worth relying on: tokenization never matches across
a newline, so ``tokenize(a + "\\n" + b) == tokenize(a) + [10] + tokenize(b)``
for any strings a and b. The context renderer builds its token fast path on
exactly this property.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import EncodingError, UnknownTokenError, VocabError
from .varint import decode_uvarint, encode_uvarint

BYTE_FALLBACK_SIZE = 256

# Trie node layout: {byte: child_node, _LEAF: token_id}
_LEAF = -1


@dataclass(frozen=True)
class Vocab:
    """Immutable id mapping loaded from a ``<model_id>.vocab`` file."""

    model_id: str
    entries: tuple[str, ...]
    _trie: dict = field(repr=False, compare=False, default_factory=dict)
    _entry_bytes: tuple[bytes, ...] = field(repr=False, compare=False, default=())

    def __post_init__(self):
        seen = set()
        entry_bytes = []
        trie: dict = {}
        for index, entry in enumerate(self.entries):
            if not entry:
                raise VocabError(f"entry {index} is empty")
            if "\n" in entry:
                raise VocabError(f"entry {index} contains a newline")
            if entry in seen:
                raise VocabError(f"duplicate entry {entry!r}")
            seen.add(entry)
            raw = entry.encode("utf-8")
            entry_bytes.append(raw)
            node = trie
            for byte in raw:
                node = node.setdefault(byte, {})
            node[_LEAF] = BYTE_FALLBACK_SIZE + index
        object.__setattr__(self, "_trie", trie)
        object.__setattr__(self, "_entry_bytes", tuple(entry_bytes))

    @property
    def size(self) -> int:
        """Total id space: byte fallback plus entries."""
        return BYTE_FALLBACK_SIZE + len(self.entries)


def load_vocab(path: str | os.PathLike) -> Vocab:
    """Load a vocabulary file: UTF-8, LF-separated, one entry per line.

    The model id is taken from the file name stem; callers that serve the
    vocabulary under a different model id bind it explicitly at load time.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise VocabError(f"{path}: not valid UTF-8: {exc}") from None
    if text.endswith("\n"):
        text = text[:-1]
    lines = text.split("\n") if text else []
    for lineno, line in enumerate(lines):
        if not line:
            raise VocabError(f"{path}: empty entry on line {lineno}")
    model_id = os.path.splitext(os.path.basename(str(path)))[0]
    try:
        return Vocab(model_id=model_id, entries=tuple(lines))
    except VocabError as exc:
        raise VocabError(f"{path}: {exc}") from None


def tokenize(vocab: Vocab, text: str) -> list[int]:
    """Greedy longest-match tokenization with total byte fallback."""
    data = text.encode("utf-8")
    trie = vocab._trie
    ids: list[int] = []
    pos = 0
    size = len(data)
    while pos < size:
        node = trie
        best_id = -1
        best_end = pos
        scan = pos
        while scan < size:
            node = node.get(data[scan])
            if node is None:
                break
            scan += 1
            leaf = node.get(_LEAF)
            if leaf is not None:
                best_id = leaf
                best_end = scan
        if best_id >= 0:
            ids.append(best_id)
            pos = best_end
        else:
            ids.append(data[pos])
            pos += 1
    return ids


def detokenize(vocab: Vocab, ids: list[int]) -> str:
    """Inverse of :func:`tokenize`; raises on ids outside the vocabulary."""
    limit = vocab.size
    parts = bytearray()
    for token in ids:
        if 0 <= token < BYTE_FALLBACK_SIZE:
            parts.append(token)
        elif token < limit:
            parts.extend(vocab._entry_bytes[token - BYTE_FALLBACK_SIZE])
        else:
            raise UnknownTokenError(
                f"token id {token} outside vocabulary of size {limit}"
            )
    try:
        return parts.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"token sequence is not valid UTF-8: {exc}") from None


def encode_tokens(ids: list[int]) -> bytes:
    """Serialize token ids as concatenated LEB128 varints.

    This is the stored and replicated form of tokenized context; compactness
    relative to raw UTF-8 is what makes tokenized replication cheaper.
    """
    out = bytearray()
    for token in ids:
        if token < 0:
            raise ValueError(f"negative token id {token}")
        out.extend(encode_uvarint(token))
    return bytes(out)


def decode_tokens(data: bytes) -> list[int]:
    """Inverse of :func:`encode_tokens`."""
    ids: list[int] = []
    pos = 0
    while pos < len(data):
        token, pos = decode_uvarint(data, pos)
        ids.append(token)
    return ids
