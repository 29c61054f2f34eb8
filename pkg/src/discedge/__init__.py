"""DisCEdge: distributed context management for stateless edge inference.

Inference servers at the edge keep no session state; this package moves the
conversational context into a replicated key-value layer next to them, keeps
clients honest with a turn counter, and ships the context between nodes in
tokenized form so roaming clients pay neither re-upload nor re-tokenization.
"""

from .context import (
    MODE_CLIENT_SIDE,
    MODE_RAW,
    MODE_TOKENIZED,
    CompletionRequest,
    CompletionResponse,
    ContextKey,
    GenerationParams,
    SessionContext,
    Turn,
    append_turn,
    deserialize_context,
    empty_context,
    render_history,
    serialize_context,
)
from .engine import PROFILES, HardwareProfile, MockEngine
from .errors import (
    DisCEdgeError,
    RequestError,
    StaleContextError,
    TurnConflictError,
)
from .node import ContextManagerNode, NodeConfig
from .store import ReplicatedStore
from .tokenizer import Vocab, detokenize, load_vocab, tokenize
from .transport import LinkSpec, RealClock, SimClock, SimNetwork

__version__ = "0.1.0"

__all__ = [
    "MODE_CLIENT_SIDE",
    "MODE_RAW",
    "MODE_TOKENIZED",
    "PROFILES",
    "CompletionRequest",
    "CompletionResponse",
    "ContextKey",
    "ContextManagerNode",
    "DisCEdgeError",
    "GenerationParams",
    "HardwareProfile",
    "LinkSpec",
    "MockEngine",
    "NodeConfig",
    "RealClock",
    "ReplicatedStore",
    "RequestError",
    "SessionContext",
    "SimClock",
    "SimNetwork",
    "StaleContextError",
    "Turn",
    "TurnConflictError",
    "Vocab",
    "append_turn",
    "deserialize_context",
    "detokenize",
    "empty_context",
    "load_vocab",
    "render_history",
    "serialize_context",
    "tokenize",
    "__version__",
]
