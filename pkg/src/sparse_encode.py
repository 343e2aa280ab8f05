"""
Sparse Encoding Module - Turns per-token logit matrices into sparse term
vectors (log-saturated ReLU, max pooling, top-K masking) and provides a
deterministic mock encoder standing in for the neural model
"""

import hashlib
import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from errors import InvalidInputError
from vocab_expansion import ExpandedVocabulary, HeadMatrix, iter_unigrams

logger = structlog.get_logger(__name__)


@dataclass
class LogitMatrix:
    """Per-token scores over the expanded vocabulary"""
    rows: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise InvalidInputError(
                f"logit matrix must have shape T x |U| with T >= 1, got {self.rows.shape}"
            )
        if not np.isfinite(self.rows).all():
            raise InvalidInputError(f"logit matrix {self.source_id!r} contains non-finite values")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows.shape


@dataclass
class SparseVector:
    """Encoded query or document: term id -> strictly positive weight"""
    entries: Dict[int, float] = field(default_factory=dict)
    source_id: str = ""

    def __post_init__(self):
        clean: Dict[int, float] = {}
        for term_id, weight in self.entries.items():
            term_id = int(term_id)
            weight = float(weight)
            if term_id < 0:
                raise InvalidInputError(f"negative term id {term_id} in {self.source_id!r}")
            if not np.isfinite(weight) or weight <= 0.0:
                raise InvalidInputError(
                    f"weight {weight} for term {term_id} in {self.source_id!r} must be positive"
                )
            clean[term_id] = weight
        self.entries = dict(sorted(clean.items()))

    @property
    def l0(self) -> int:
        return len(self.entries)

    def validate_dim(self, dim: int) -> None:
        if self.entries and max(self.entries) >= dim:
            raise InvalidInputError(
                f"term id {max(self.entries)} in {self.source_id!r} outside vocabulary of {dim}"
            )

    def to_dense(self, dim: int) -> np.ndarray:
        self.validate_dim(dim)
        dense = np.zeros(dim, dtype=np.float64)
        for term_id, weight in self.entries.items():
            dense[term_id] = weight
        return dense

    @classmethod
    def from_dense(cls, values: np.ndarray, source_id: str = "") -> "SparseVector":
        values = np.asarray(values, dtype=np.float64)
        nonzero = np.flatnonzero(values > 0)
        return cls({int(i): float(values[i]) for i in nonzero}, source_id)


class EncoderStyle(str, Enum):
    HASH_PROJECTION = "hash-projection"
    HEAD_PRODUCT = "head-product"


def top_k_entries(entries: Mapping[int, float], k: int) -> Dict[int, float]:
    """The k highest weights; ties go to the lower term id"""
    if len(entries) <= k:
        return dict(entries)
    kept = heapq.nsmallest(k, entries.items(), key=lambda item: (-item[1], item[0]))
    return dict(sorted(kept))


def pool(matrix: LogitMatrix) -> SparseVector:
    """weight_j = max_i log(1 + relu(score_ij)); zero weights are omitted"""
    if not np.isfinite(matrix.rows).all():
        raise InvalidInputError(f"logit matrix {matrix.source_id!r} contains non-finite values")
    weights = np.log1p(np.maximum(matrix.rows, 0.0)).max(axis=0)
    return SparseVector.from_dense(weights, matrix.source_id)


def topk_mask(vector: SparseVector, k: int) -> SparseVector:
    """Training-time top-K masking of a pooled vector"""
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")
    if vector.l0 <= k:
        return vector
    return SparseVector(top_k_entries(vector.entries, k), vector.source_id)


def _token_seed(token: str, style: EncoderStyle) -> int:
    digest = hashlib.blake2b(f"{style.value}\x00{token}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def token_features(token: str, hidden: int, style: EncoderStyle) -> np.ndarray:
    """
    Seed-stable hidden vector for a token

    hash-projection: standard normal vector seeded by the token hash.
    head-product: one-hot vector at the token's hash bucket.
    """
    style = EncoderStyle(style)
    seed = _token_seed(token, style)
    if style is EncoderStyle.HASH_PROJECTION:
        return np.random.default_rng(seed).standard_normal(hidden)
    features = np.zeros(hidden, dtype=np.float64)
    features[seed % hidden] = 1.0
    return features


def mock_encode(text: str, vocab: ExpandedVocabulary, head: HeadMatrix,
                style: EncoderStyle = EncoderStyle.HASH_PROJECTION,
                case_fold: bool = False, source_id: str = "") -> LogitMatrix:
    """
    Deterministic stand-in for the neural encoder

    Each whitespace token becomes a feature vector (see token_features)
    that is multiplied by the expanded head, giving a T x |U| matrix.
    """
    if head.rows != len(vocab):
        raise InvalidInputError(f"head has {head.rows} rows, vocabulary has {len(vocab)} terms")
    tokens = list(iter_unigrams(text, case_fold))
    if not tokens:
        raise InvalidInputError(f"text {source_id!r} has no tokens")
    features = np.stack([token_features(token, head.hidden, style) for token in tokens])
    logits = features @ head.weights.T + head.bias
    return LogitMatrix(rows=logits, source_id=source_id)


def encode_texts(texts: Sequence[Tuple[str, str]], vocab: ExpandedVocabulary,
                 head: HeadMatrix, style: EncoderStyle = EncoderStyle.HASH_PROJECTION,
                 top_k: Optional[int] = None, case_fold: bool = False,
                 workers: int = 1) -> List[SparseVector]:
    """
    Encode (id, text) pairs into sparse vectors, preserving input order

    Args:
        top_k: optional training-time top-K mask (q_K / d_K)
    """
    def work(item: Tuple[str, str]) -> SparseVector:
        source_id, text = item
        vector = pool(mock_encode(text, vocab, head, style, case_fold, source_id))
        return topk_mask(vector, top_k) if top_k is not None else vector

    with ThreadPoolExecutor(max_workers=workers) as executor:
        vectors = list(executor.map(work, texts))
    logger.info("texts_encoded", count=len(vectors), style=EncoderStyle(style).value,
                top_k=top_k)
    return vectors


def encode_logits(matrices: Iterable[LogitMatrix], top_k: Optional[int] = None) -> List[SparseVector]:
    """Pool externally produced logit matrices"""
    vectors = [pool(matrix) for matrix in matrices]
    if top_k is not None:
        vectors = [topk_mask(vector, top_k) for vector in vectors]
    return vectors
