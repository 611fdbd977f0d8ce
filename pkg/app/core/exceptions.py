"""
Domain exception hierarchy.

Every failure the runtime can report on purpose derives from `HopSearchError`, so the
CLI and the HTTP layer can catch one base class and turn it into an exit code or an
HTTP error.

Purpose:
- Give each module a named error carrying the context its callers need
  (file and line for loading, offset for parsing, provider kind for retrieval).
- Keep `except Exception` out of the service layer.
"""


class HopSearchError(Exception):
    """Base class for all runtime errors raised on purpose."""


class KnowledgeStoreLoadError(HopSearchError):
    """
    A triple or alias file could not be loaded.

    Attributes:
        path (str): File being read.
        line (int | None): 1-based line number, when the error is tied to a line.
    """

    def __init__(self, message: str, path: str, line: int | None = None):
        self.path = path
        self.line = line
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")


class IndexingError(HopSearchError):
    """The document corpus could not be indexed (e.g. duplicate doc_id)."""


class RetrievalError(HopSearchError):
    """
    A document provider failed to answer a query.

    Attributes:
        kind (str): Provider kind (`local-lexical`, `remote-dense`, `web`).
        cause (str): Short description of the underlying failure.
    """

    def __init__(self, kind: str, cause: str):
        self.kind = kind
        self.cause = cause
        super().__init__(f"{kind} retrieval failed: {cause}")


class ProtocolParseError(HopSearchError):
    """
    A serialized trajectory violates the delimiter protocol.

    Attributes:
        offset (int): Character offset of the offending delimiter.
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class SearchRequestError(HopSearchError):
    """The JSON payload of a `<search>` block is not a valid search request."""


class BoxedAnswerError(HopSearchError):
    """An answer does not contain a balanced `\\boxed{...}` group."""


class LlmError(HopSearchError):
    """The language model endpoint failed or a scripted model ran out of chunks."""


class DatasetLoadError(HopSearchError):
    """A gold dataset or trajectory dump yielded no usable records."""


class ManifestError(HopSearchError):
    """A run manifest is missing, malformed, or references missing paths."""
