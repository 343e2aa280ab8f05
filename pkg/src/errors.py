"""
Exception hierarchy shared by every sparseforge module
"""

from pathlib import Path
from typing import Optional, Union


class SparseForgeError(Exception):
    """Base class for all errors raised by sparseforge"""


class InvalidInputError(SparseForgeError, ValueError):
    """Input violates an operation's precondition"""


class OverlappingSpansError(InvalidInputError):
    """Mask target spans overlap"""


class InvariantViolationError(SparseForgeError):
    """A data structure invariant does not hold"""


class FormatError(SparseForgeError):
    """Artefact file has an unexpected header, magic or layout"""


class VocabularyMismatchError(SparseForgeError):
    """Index and query were produced with different vocabularies"""


class DuplicateDocumentError(SparseForgeError):
    """The same document id was supplied twice"""

    def __init__(self, doc_id: str):
        super().__init__(f"duplicate document id: {doc_id!r}")
        self.doc_id = doc_id


class RecordReadError(SparseForgeError):
    """A record in an input stream could not be read or decoded"""

    def __init__(self, record_index: int, reason: str,
                 source: Optional[Union[str, Path]] = None):
        where = f" in {source}" if source is not None else ""
        super().__init__(f"record {record_index}{where}: {reason}")
        self.record_index = record_index
        self.reason = reason
        self.source = source
