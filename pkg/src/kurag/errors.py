"""Exception hierarchy shared across the engine.

Store, index, and transport failures each get their own branch so the CLI
and the HTTP service can map them to exit codes / status codes without
string matching.
"""


class KuragError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KuragError):
    """Invalid or unparseable configuration."""


# --- store ----------------------------------------------------------------

class StoreError(KuragError):
    pass


class DuplicateDocumentError(StoreError):
    """A document with this doc_id was already ingested."""


class NotFoundError(StoreError):
    """A chunk, knowledge unit, or image id does not resolve."""


class IntegrityError(StoreError):
    """Referential integrity between chunks, units, and indexes is broken."""


class CorpusFormatError(StoreError):
    """A JSON-lines corpus or dataset file has a malformed line."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# --- vector index ----------------------------------------------------------

class VectorIndexError(KuragError):
    pass


class DimensionMismatchError(VectorIndexError):
    pass


class DuplicateEntryError(VectorIndexError):
    pass


class EntryNotFoundError(VectorIndexError):
    pass


class BlobFormatError(VectorIndexError):
    """Persisted vector blob is corrupt; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# --- model backends ---------------------------------------------------------

class TransportError(KuragError):
    """Base class for failures talking to a model backend over HTTP."""


class TransportTimeout(TransportError):
    pass


class TransportStatusError(TransportError):
    def __init__(self, status_code: int, detail: str = ""):
        super().__init__(f"backend returned HTTP {status_code}: {detail}")
        self.status_code = status_code


class TransportFormatError(TransportError):
    """Backend responded with a body the client cannot interpret."""
