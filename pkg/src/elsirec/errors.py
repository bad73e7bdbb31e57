"""Exception hierarchy shared across the engine."""


class ElsirecError(Exception):
    """Base class for all engine errors."""


class CorpusError(ElsirecError):
    """Unreadable, malformed, or empty corpus input."""


class ConfigError(ElsirecError):
    """Invalid configuration or degenerate parameter combination."""


class FormatError(ElsirecError):
    """Persisted artifact violates its file format or invariants."""


class UnclassifiableDocumentError(ElsirecError):
    """Document has no in-vocabulary tokens and cannot be placed on a topic."""


class EmptyPartitionError(ElsirecError):
    """The predicted topic has no candidate articles to recommend from."""

    def __init__(self, topic: int, message: str | None = None):
        self.topic = topic
        super().__init__(message or f"no candidate articles in topic {topic}")
