"""Mock inference engine: deterministic completions plus a timing model.

The engine stands in for a real LLM runtime. Its only obligations are the
ones the experiments measure: identical token input must give identical
output regardless of how the input was assembled, and compute cost must
scale with input length the way tokenization, prefill and decode do on
real hardware.

A completion takes an optional pre-tokenized context plus a prompt string.
Only the prompt is tokenized here; the context tokens are prepended as
given, never re-tokenized. Callers that want raw-text behavior pass an
empty context and the full text as the prompt, and pay tokenization for
all of it.

Generation is a seeded hash stream. The stream state is a 64-bit hash of
(seed, model id, full input ids); each step advances a splitmix64 state
and emits vocabulary entry `z mod |entries|` (never a byte-fallback token,
so output text is always valid UTF-8). Temperature selects no alternate
stream: at zero the step values are the deterministic choices, above zero
they act as the uniform sampler, and both are the same pure function of
the seed material, which keeps runs comparable across settings.

Timing (all microsecond rates come from the hardware profile):

    tokenize_ms = chars(prompt) * tokenize_us_per_char / 1000
    prefill_ms  = input_tokens * prefill_us_per_token / 1000
    decode_ms   = max_tokens * (decode_base_us_per_token
                  + decode_us_per_context_token * input_tokens) / 1000

Decode cost grows with input length, which is what makes generation
throughput fall as sessions lengthen.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

from .context import GenerationParams
from .errors import ModelNotLoadedError
from .tokenizer import BYTE_FALLBACK_SIZE, Vocab, detokenize, tokenize
from .transport import Clock
from .varint import encode_uvarint

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    tokenize_us_per_char: float
    prefill_us_per_token: float
    decode_base_us_per_token: float
    decode_us_per_context_token: float

    def __post_init__(self):
        for f in (
            self.tokenize_us_per_char,
            self.prefill_us_per_token,
            self.decode_base_us_per_token,
            self.decode_us_per_context_token,
        ):
            if f < 0:
                raise ValueError("profile rates must be non-negative")


# Invented desk-scale stand-ins; tx2 is roughly an order of magnitude
# slower than m2, nothing more is claimed.
PROFILES = {
    "m2": HardwareProfile(
        name="m2",
        tokenize_us_per_char=0.2,
        prefill_us_per_token=3.0,
        decode_base_us_per_token=700.0,
        decode_us_per_context_token=0.5,
    ),
    "tx2": HardwareProfile(
        name="tx2",
        tokenize_us_per_char=2.0,
        prefill_us_per_token=30.0,
        decode_base_us_per_token=7000.0,
        decode_us_per_context_token=5.0,
    ),
}


@dataclass(frozen=True)
class CompletionInput:
    model_id: str
    prompt: str
    context: tuple[int, ...] = ()
    params: GenerationParams = field(default_factory=GenerationParams)


@dataclass(frozen=True)
class CompletionOutput:
    tokens: tuple[int, ...]
    text: str
    input_token_count: int
    tokenize_ms: float
    prefill_ms: float
    decode_ms: float

    @property
    def inference_ms(self) -> float:
        return self.prefill_ms + self.decode_ms

    @property
    def total_ms(self) -> float:
        return self.tokenize_ms + self.inference_ms

    @property
    def tokens_per_second(self) -> float:
        """Tokens per second of inference time (prefill plus decode)."""
        return len(self.tokens) / (self.inference_ms / 1000.0)


def _splitmix64(state: int) -> tuple[int, int]:
    """Advance one splitmix64 step; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def hash64(seed: int, model_id: str, input_ids) -> int:
    """FNV-1a over (seed, model id, token ids), finalized with splitmix64.

    The token ids are fed as their LEB128 encoding, so the hash depends on
    the exact id sequence, not on any text rendering of it. The layout is
    documented byte-for-byte in the repo docs.
    """
    h = 0xCBF29CE484222325
    prime = 0x100000001B3

    def mix(data: bytes) -> None:
        nonlocal h
        for b in data:
            h = ((h ^ b) * prime) & _MASK64

    mix(seed.to_bytes(8, "little", signed=False))
    mix(model_id.encode("utf-8"))
    mix(b"\x00")
    for tid in input_ids:
        mix(encode_uvarint(tid))
    _, out = _splitmix64(h)
    return out


class MockEngine:
    """Per-node engine; serves the models whose vocabularies are loaded.

    One completion runs at a time (the node has a single engine); callers
    queue on the internal lock.
    """

    def __init__(self, profile: HardwareProfile, clock: Clock):
        self.profile = profile
        self.clock = clock
        self._models: dict[str, Vocab] = {}
        self._busy = threading.Lock()

    def load_model(self, model_id: str, vocab: Vocab) -> None:
        if not vocab.entries:
            raise ModelNotLoadedError(
                f"model {model_id!r} needs a non-degenerate vocabulary"
            )
        self._models[model_id] = vocab

    def has_model(self, model_id: str) -> bool:
        return model_id in self._models

    def vocab(self, model_id: str) -> Vocab:
        vocab = self._models.get(model_id)
        if vocab is None:
            raise ModelNotLoadedError(f"model {model_id!r} is not loaded")
        return vocab

    def tokenize_text(self, model_id: str, text: str) -> list[int]:
        """The tokenize endpoint: storage-side tokenization for the node."""
        return tokenize(self.vocab(model_id), text)

    def complete(self, inp: CompletionInput) -> CompletionOutput:
        """Run one completion, charging simulated compute time to the clock."""
        vocab = self.vocab(inp.model_id)
        with self._busy:
            prompt_ids = tokenize(vocab, inp.prompt)
            input_ids = tuple(inp.context) + tuple(prompt_ids)
            n_input = len(input_ids)
            p = self.profile
            tokenize_ms = len(inp.prompt) * p.tokenize_us_per_char / 1000.0
            prefill_ms = n_input * p.prefill_us_per_token / 1000.0
            decode_ms = (
                inp.params.max_tokens
                * (p.decode_base_us_per_token + p.decode_us_per_context_token * n_input)
                / 1000.0
            )

            state = hash64(inp.params.seed, inp.model_id, input_ids)
            n_entries = len(vocab.entries)
            tokens = []
            for _ in range(inp.params.max_tokens):
                state, z = _splitmix64(state)
                tokens.append(BYTE_FALLBACK_SIZE + z % n_entries)
            text = detokenize(vocab, tokens)

            self.clock.sleep_ms(tokenize_ms + prefill_ms + decode_ms)
        return CompletionOutput(
            tokens=tuple(tokens),
            text=text,
            input_token_count=n_input,
            tokenize_ms=tokenize_ms,
            prefill_ms=prefill_ms,
            decode_ms=decode_ms,
        )
