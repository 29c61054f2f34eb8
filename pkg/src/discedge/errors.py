"""Exception hierarchy shared by all discedge components."""


class DisCEdgeError(Exception):
    """Base class for every error raised by this package."""


# -- tokenizer ---------------------------------------------------------------

class VocabError(DisCEdgeError):
    """Vocabulary file is malformed (duplicate or empty entry, bad encoding)."""


class UnknownTokenError(DisCEdgeError):
    """Token id is outside the byte-fallback range and the vocabulary."""


class EncodingError(DisCEdgeError):
    """Fallback bytes in a token sequence do not form valid UTF-8."""


# -- context serialization ---------------------------------------------------

class SerializationError(DisCEdgeError):
    """Context violates an invariant that the binary layout cannot express."""


class DecodeError(DisCEdgeError):
    """A binary frame is truncated or structurally invalid."""


class VersionError(DecodeError):
    """A frame declares an unsupported format version."""


class ModeError(DisCEdgeError):
    """Operation payload or transport call does not match the configured mode."""


# -- replicated store --------------------------------------------------------

class ConfigError(DisCEdgeError):
    """Static configuration is inconsistent (e.g. conflicting keygroups)."""


class NoKeygroupError(DisCEdgeError):
    """Key refers to a model for which no keygroup was created."""


# -- transport ---------------------------------------------------------------

class RoutingError(DisCEdgeError):
    """No link exists between the given endpoints."""


class RequestError(DisCEdgeError):
    """A node answered a request with an error reply."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.detail = message


# -- inference engine --------------------------------------------------------

class ModelNotLoadedError(DisCEdgeError):
    """No vocabulary is loaded for the requested model."""


# -- context manager ---------------------------------------------------------

class StaleContextError(DisCEdgeError):
    """Local replica is behind the client's turn counter after all retries."""

    def __init__(self, local_version: int, expected_version: int, retries: int):
        self.local_version = local_version
        self.expected_version = expected_version
        self.retries = retries
        super().__init__(
            f"stale context: local version {local_version}, "
            f"expected {expected_version} after {retries} retries"
        )


class TurnConflictError(DisCEdgeError):
    """Client turn counter is not ahead of the stored context version."""


class ModelNotServedError(DisCEdgeError):
    """This node does not serve the requested model."""


# -- harness -----------------------------------------------------------------

class HarnessError(DisCEdgeError):
    """Scenario could not be run (bad config, node startup failure)."""


class ComparisonError(DisCEdgeError):
    """Report does not contain the modes required for a comparison."""
