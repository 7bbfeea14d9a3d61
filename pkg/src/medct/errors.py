"""Exception types shared across the medct package."""

from __future__ import annotations


class MedctError(Exception):
    """Base class for all medct errors."""


class ReleaseParseError(MedctError):
    """A release file is malformed.

    Carries the offending file and 1-based line number when known.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)
        self.path = path
        self.line = line


class UnknownConceptError(MedctError):
    """An operation referenced a concept id absent from the graph."""

    def __init__(self, concept_id: str):
        super().__init__(f"unknown concept id: {concept_id}")
        self.concept_id = concept_id


class AnnotationError(MedctError):
    """Annotation data violates the gold-span contract."""


class EmbeddingTransportError(MedctError):
    """The remote embedding service could not be reached."""


class EmbeddingProtocolError(MedctError):
    """The remote embedding service replied with an invalid payload."""


class FingerprintMismatchError(MedctError):
    """A concept index was built with a different embedder configuration."""


class LlmTransportError(MedctError):
    """A chat-completion request failed at the transport level."""
