"""
Index Retrieval Module - Inverted index over document sparse vectors,
term-at-a-time dot-product search, Boolean term-overlap-threshold matching
and postings-list statistics
"""

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from errors import (DuplicateDocumentError, FormatError, InvalidInputError,
                    InvariantViolationError, VocabularyMismatchError)
from pruning import prune
from sparse_encode import SparseVector

logger = structlog.get_logger(__name__)

INDEX_MAGIC = b"SFIX"
INDEX_VERSION = 1
POSTING_DTYPE = np.dtype([("doc", "<u8"), ("weight", "<f4")])

Postings = Tuple[np.ndarray, np.ndarray]


class SearchMode(BaseModel):
    """dot: score every matched document; overlap: drop documents whose
    matched distinct-query-term ratio is below theta first"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["dot", "overlap"] = "dot"
    theta: float = Field(default=0.0, ge=0.0, le=1.0)


@dataclass
class SearchResult:
    """Ranked (doc_id, score) pairs, score descending then doc_id ascending"""
    query_id: str
    hits: List[Tuple[str, float]] = field(default_factory=list)
    matched_count: int = 0

    @property
    def doc_ids(self) -> List[str]:
        return [doc_id for doc_id, _ in self.hits]


@dataclass
class PostingsStats:
    """Population statistics of non-empty postings list lengths"""
    count: int
    mean: float
    variance: float
    std: float


class InvertedIndex:
    """
    term_id -> (doc ordinals ascending, weights)

    Documents are numbered by ascending doc_id, so ordinal order and doc_id
    order agree for every tie rule.
    """

    def __init__(self, doc_ids: Sequence[str], postings: Dict[int, Postings],
                 dk: int = 0, vocab_hash: Optional[str] = None,
                 vocab_size: Optional[int] = None):
        self.doc_ids = list(doc_ids)
        self.postings = dict(sorted(postings.items()))
        self.dk = dk
        self.vocab_hash = vocab_hash
        self.vocab_size = vocab_size
        self._doc_l0: Optional[np.ndarray] = None

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def manifest(self) -> dict:
        return {
            "dk": self.dk,
            "vocab_hash": self.vocab_hash,
            "vocab_size": self.vocab_size,
            "doc_ids": self.doc_ids,
        }

    @property
    def doc_l0(self) -> np.ndarray:
        """Per-document term count after pruning"""
        if self._doc_l0 is None:
            counts = np.zeros(self.doc_count, dtype=np.int64)
            for docs, _ in self.postings.values():
                counts[docs] += 1
            self._doc_l0 = counts
        return self._doc_l0

    def postings_length(self, term_id: int) -> int:
        entry = self.postings.get(term_id)
        return 0 if entry is None else len(entry[0])

    @property
    def total_postings(self) -> int:
        return sum(len(docs) for docs, _ in self.postings.values())

    def save(self, path: Union[str, Path]) -> None:
        """Write the SFIX binary index"""
        manifest = json.dumps(self.manifest, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(INDEX_MAGIC)
            f.write(struct.pack("<IQ", INDEX_VERSION, self.doc_count))
            f.write(struct.pack("<Q", len(manifest)))
            f.write(manifest)
            for term_id, (docs, weights) in self.postings.items():
                pairs = np.empty(len(docs), dtype=POSTING_DTYPE)
                pairs["doc"] = docs
                pairs["weight"] = weights
                f.write(struct.pack("<IQ", term_id, len(docs)))
                f.write(pairs.tobytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "InvertedIndex":
        """
        Read an SFIX binary index; weights come back f32-rounded

        Raises:
            FormatError: if the file is truncated or its header or manifest is malformed
        """
        data = Path(path).read_bytes()
        if data[:4] != INDEX_MAGIC:
            raise FormatError(f"{path}: not an index file")
        if len(data) < 24:
            raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
        version, doc_count = struct.unpack_from("<IQ", data, 4)
        if version != INDEX_VERSION:
            raise FormatError(f"{path}: unsupported index version {version}")
        (manifest_len,) = struct.unpack_from("<Q", data, 16)
        offset = 24
        if offset + manifest_len > len(data):
            raise FormatError(f"{path}: truncated manifest")
        try:
            manifest = json.loads(data[offset:offset + manifest_len].decode("utf-8"))
            doc_ids = [str(doc_id) for doc_id in manifest["doc_ids"]]
            dk = int(manifest["dk"])
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}: malformed manifest: {e}") from e
        offset += manifest_len
        if len(doc_ids) != doc_count:
            raise FormatError(f"{path}: manifest lists {len(doc_ids)} documents, "
                              f"header says {doc_count}")

        postings: Dict[int, Postings] = {}
        while offset < len(data):
            if offset + 12 > len(data):
                raise FormatError(f"{path}: truncated postings header at byte {offset}")
            term_id, length = struct.unpack_from("<IQ", data, offset)
            offset += 12
            size = length * POSTING_DTYPE.itemsize
            if offset + size > len(data):
                raise FormatError(f"{path}: postings for term {term_id} truncated")
            pairs = np.frombuffer(data, dtype=POSTING_DTYPE, count=length, offset=offset)
            offset += size
            if length and int(pairs["doc"].max()) >= doc_count:
                raise FormatError(f"{path}: term {term_id} points past the last document")
            postings[term_id] = (pairs["doc"].astype(np.int64),
                                 pairs["weight"].astype(np.float64))
        return cls(doc_ids, postings, dk=dk,
                   vocab_hash=manifest.get("vocab_hash"), vocab_size=manifest.get("vocab_size"))


def build_index(docs: Iterable[SparseVector], dk: int = 0, vocab_hash: Optional[str] = None,
                vocab_size: Optional[int] = None, workers: int = 1) -> InvertedIndex:
    """
    Prune documents at dk and insert every (term, doc, weight)

    Raises:
        DuplicateDocumentError: if two documents share an id
        InvariantViolationError: if postings and pruned L0 totals disagree
    """
    docs = list(docs)
    seen = set()
    for doc in docs:
        if doc.source_id in seen:
            raise DuplicateDocumentError(doc.source_id)
        seen.add(doc.source_id)
        if vocab_size is not None:
            doc.validate_dim(vocab_size)

    # Ordinals follow sorted doc_id
    ordered = sorted(docs, key=lambda doc: doc.source_id)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pruned = list(pool.map(lambda doc: prune(doc, dk), ordered))

    lists: Dict[int, Tuple[List[int], List[float]]] = {}
    for ordinal, doc in enumerate(pruned):
        for term_id, weight in doc.entries.items():
            doc_list, weight_list = lists.setdefault(term_id, ([], []))
            doc_list.append(ordinal)
            weight_list.append(weight)

    postings = {term_id: (np.asarray(doc_list, dtype=np.int64),
                          np.asarray(weight_list, dtype=np.float64))
                for term_id, (doc_list, weight_list) in sorted(lists.items())}
    index = InvertedIndex([doc.source_id for doc in ordered], postings, dk=dk,
                          vocab_hash=vocab_hash, vocab_size=vocab_size)

    # Every surviving document term must land in exactly one postings list
    expected = sum(doc.l0 for doc in pruned)
    if index.total_postings != expected:
        raise InvariantViolationError(
            f"postings total {index.total_postings} != pruned L0 total {expected}"
        )
    logger.info("index_built", docs=index.doc_count, terms=len(postings),
                postings=index.total_postings, dk=dk)
    return index


def check_vocabulary(index: InvertedIndex, query: SparseVector,
                     query_vocab_hash: Optional[str] = None) -> None:
    if query_vocab_hash is not None and index.vocab_hash is not None \
            and query_vocab_hash != index.vocab_hash:
        raise VocabularyMismatchError(
            f"query vocabulary {query_vocab_hash} does not match index vocabulary {index.vocab_hash}"
        )
    if index.vocab_size is not None and query.entries and max(query.entries) >= index.vocab_size:
        raise VocabularyMismatchError(
            f"query {query.source_id!r} uses term {max(query.entries)} outside the index "
            f"vocabulary of {index.vocab_size}"
        )


def search(index: InvertedIndex, query: SparseVector, qk: int = 0, top_n: int = 10,
           mode: Optional[SearchMode] = None,
           query_vocab_hash: Optional[str] = None) -> SearchResult:
    """
    Term-at-a-time retrieval in ascending term id order

    The fixed accumulation order makes scores bit-identical to a dense
    brute-force dot product summed over ascending term ids.
    """
    if top_n < 1:
        raise InvalidInputError(f"top_n must be >= 1, got {top_n}")
    mode = mode or SearchMode()
    check_vocabulary(index, query, query_vocab_hash)

    pruned = prune(query, qk)
    # Dense accumulators indexed by document ordinal
    scores = np.zeros(index.doc_count, dtype=np.float64)
    matched = np.zeros(index.doc_count, dtype=np.int64)
    for term_id, q_weight in pruned.entries.items():
        entry = index.postings.get(term_id)
        if entry is None:
            # Query term absent from the index contributes nothing
            continue
        docs, weights = entry
        scores[docs] += q_weight * weights
        matched[docs] += 1

    # Only documents sharing at least one term are candidates
    touched = matched > 0
    matched_count = int(touched.sum())
    if mode.kind == "overlap" and pruned.l0:
        survivors = touched & (matched / pruned.l0 >= mode.theta)
    else:
        survivors = touched

    candidates = np.flatnonzero(survivors)
    # Score descending, then ordinal (= doc_id) ascending
    order = np.lexsort((candidates, -scores[candidates]))[:top_n]
    hits = [(index.doc_ids[candidates[i]], float(scores[candidates[i]])) for i in order]
    return SearchResult(query_id=query.source_id, hits=hits, matched_count=matched_count)


def search_many(index: InvertedIndex, queries: Sequence[SparseVector], qk: int = 0,
                top_n: int = 10, mode: Optional[SearchMode] = None,
                query_vocab_hash: Optional[str] = None, workers: int = 1) -> List[SearchResult]:
    """Evaluate queries independently; results keep the input order"""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda query: search(index, query, qk, top_n, mode, query_vocab_hash), queries
        ))


def postings_stats(index: InvertedIndex) -> Optional[PostingsStats]:
    """Mean / population variance / std of non-empty postings list lengths"""
    lengths = np.asarray([len(docs) for docs, _ in index.postings.values() if len(docs)],
                         dtype=np.float64)
    if lengths.size == 0:
        return None
    variance = float(lengths.var())
    return PostingsStats(count=int(lengths.size), mean=float(lengths.mean()),
                         variance=variance, std=float(np.sqrt(variance)))
