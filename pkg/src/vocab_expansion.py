"""
Vocabulary Expansion Module - Builds the expanded unigram vocabulary U and
synthesizes the expanded MLM head from a subword head by mean pooling
"""

import hashlib
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from errors import FormatError, InvalidInputError, InvariantViolationError, RecordReadError

logger = structlog.get_logger(__name__)

CONTINUATION_PREFIX = "##"
VOCAB_HEADER_PREFIX = "#sparseforge-vocab v1"
HEAD_MAGIC = b"SFHD"


@dataclass
class SubwordVocabulary:
    """WordPiece subword vocabulary of the base model"""
    pieces: List[str]
    mask_id: int
    unk_id: int
    piece_id: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.piece_id = {}
        for index, piece in enumerate(self.pieces):
            if piece in self.piece_id:
                raise InvalidInputError(f"duplicate subword piece: {piece!r}")
            self.piece_id[piece] = index
        for name, value in (("mask_id", self.mask_id), ("unk_id", self.unk_id)):
            if not 0 <= value < len(self.pieces):
                raise InvalidInputError(f"{name}={value} outside 0..{len(self.pieces) - 1}")

    def __len__(self) -> int:
        return len(self.pieces)

    @classmethod
    def from_pieces(cls, pieces: Sequence[str], mask_token: str = "[MASK]",
                    unk_token: str = "[UNK]") -> "SubwordVocabulary":
        """Create a vocabulary, locating the special tokens by name"""
        pieces = list(pieces)
        try:
            mask_id = pieces.index(mask_token)
            unk_id = pieces.index(unk_token)
        except ValueError as e:
            raise InvalidInputError(f"special token missing from subword vocabulary: {e}") from e
        return cls(pieces=pieces, mask_id=mask_id, unk_id=unk_id)

    @classmethod
    def from_file(cls, path: Union[str, Path], mask_token: str = "[MASK]",
                  unk_token: str = "[UNK]") -> "SubwordVocabulary":
        """Read a one-piece-per-line vocab file (BERT vocab.txt layout)"""
        try:
            with open(path, "r", encoding="utf-8") as f:
                pieces = [line.rstrip("\n") for line in f]
        except UnicodeDecodeError as e:
            raise FormatError(f"{path}: subword vocab is not UTF-8: {e}") from e
        while pieces and pieces[-1] == "":
            pieces.pop()
        return cls.from_pieces(pieces, mask_token=mask_token, unk_token=unk_token)


@dataclass
class ExpandedVocabulary:
    """Expanded unigram vocabulary U, most frequent term first"""
    terms: List[str]
    subwords_of: List[Tuple[int, ...]]
    frequency: List[int]
    term_id: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if not (len(self.terms) == len(self.subwords_of) == len(self.frequency)):
            raise InvariantViolationError("terms, subwords_of and frequency lengths differ")
        self.term_id = {}
        for index, term in enumerate(self.terms):
            if term in self.term_id:
                raise InvariantViolationError(f"duplicate term in vocabulary: {term!r}")
            self.term_id[term] = index
        for index, pieces in enumerate(self.subwords_of):
            if not pieces:
                raise InvariantViolationError(f"term {self.terms[index]!r} has no subwords")
        for index in range(1, len(self.frequency)):
            if self.frequency[index] > self.frequency[index - 1]:
                raise InvariantViolationError("frequencies must be non-increasing in id order")

    def __len__(self) -> int:
        return len(self.terms)

    def fingerprint(self) -> str:
        """Stable hash of terms and their subword decompositions"""
        digest = hashlib.sha256()
        for term, pieces in zip(self.terms, self.subwords_of):
            digest.update(term.encode("utf-8"))
            digest.update(b"\t")
            digest.update(" ".join(map(str, pieces)).encode("ascii"))
            digest.update(b"\n")
        return digest.hexdigest()[:16]

    def save(self, path: Union[str, Path]) -> None:
        """Write the vocab TSV file"""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{VOCAB_HEADER_PREFIX} |U|={len(self.terms)}\n")
            for index, term in enumerate(self.terms):
                pieces = " ".join(str(piece) for piece in self.subwords_of[index])
                f.write(f"{term}\t{index}\t{self.frequency[index]}\t{pieces}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExpandedVocabulary":
        """Read a vocab TSV file written by save()"""
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except UnicodeDecodeError as e:
            raise FormatError(f"{path}: vocab file is not UTF-8: {e}") from e
        header = lines[0] if lines else ""
        if not header.startswith(VOCAB_HEADER_PREFIX):
            raise FormatError(f"{path}: missing vocab header")
        try:
            expected = int(header.rsplit("=", 1)[1])
        except (IndexError, ValueError) as e:
            raise FormatError(f"{path}: malformed vocab header {header!r}") from e

        terms: List[str] = []
        subwords: List[Tuple[int, ...]] = []
        frequency: List[int] = []
        for line_no, line in enumerate(lines[1:]):
            parts = line.split("\t")
            if len(parts) != 4:
                raise RecordReadError(line_no, "expected 4 tab-separated fields", path)
            term, term_id, freq, pieces = parts
            try:
                parsed_id = int(term_id)
                parsed_freq = int(freq)
                parsed_pieces = tuple(int(piece) for piece in pieces.split())
            except ValueError as e:
                raise RecordReadError(line_no, f"non-integer field: {e}", path) from e
            if parsed_id != len(terms):
                raise FormatError(f"{path}: term ids must be dense, got {term_id}")
            terms.append(term)
            frequency.append(parsed_freq)
            subwords.append(parsed_pieces)
        if len(terms) != expected:
            raise FormatError(f"{path}: header declares {expected} terms, found {len(terms)}")
        return cls(terms=terms, subwords_of=subwords, frequency=frequency)


@dataclass
class HeadMatrix:
    """Output head: one weight row and one bias per vocabulary entry"""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise InvalidInputError(f"head weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise InvalidInputError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} rows"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise InvalidInputError("head contains non-finite values")

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def hidden(self) -> int:
        return self.weights.shape[1]

    def save(self, path: Union[str, Path]) -> None:
        """Write the SFHD binary: magic, u32 rows, u32 cols, f32 weights, f32 bias"""
        with open(path, "wb") as f:
            f.write(HEAD_MAGIC)
            f.write(struct.pack("<II", self.rows, self.hidden))
            f.write(self.weights.astype("<f4").tobytes(order="C"))
            f.write(self.bias.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "HeadMatrix":
        """Read a SFHD binary head file"""
        data = Path(path).read_bytes()
        if data[:4] != HEAD_MAGIC:
            raise FormatError(f"{path}: not a head matrix file")
        if len(data) < 12:
            raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
        rows, cols = struct.unpack_from("<II", data, 4)
        expected = 12 + 4 * (rows * cols + rows)
        if len(data) != expected:
            raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
        weights = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=12)
        bias = np.frombuffer(data, dtype="<f4", count=rows, offset=12 + 4 * rows * cols)
        return cls(weights=weights.reshape(rows, cols), bias=bias)


def normalize(token: str, case_fold: bool = False) -> str:
    """Normalization shared by vocabulary construction and span matching"""
    return token.lower() if case_fold else token


def iter_unigrams(title: str, case_fold: bool = False) -> Iterator[str]:
    """Whitespace-split a title into normalized unigrams"""
    for token in title.split():
        yield normalize(token, case_fold)


def count_unigrams(corpus: Iterable[str], case_fold: bool = False) -> Counter:
    """
    Count distinct unigrams over a stream of titles

    Args:
        corpus: iterable of title strings (e.g. an open text file)
        case_fold: lower-case tokens before counting

    Returns:
        Counter mapping term to count

    Raises:
        RecordReadError: if the stream fails while reading a record
    """
    counts: Counter = Counter()
    iterator = iter(corpus)
    index = 0
    while True:
        try:
            title = next(iterator)
        except StopIteration:
            break
        except (OSError, UnicodeDecodeError) as e:
            raise RecordReadError(index, str(e)) from e
        counts.update(iter_unigrams(title, case_fold))
        index += 1
    return counts


def merge_counts(parts: Iterable[Mapping[str, int]]) -> Counter:
    """Merge partial counts; the result does not depend on part order"""
    merged: Counter = Counter()
    for part in parts:
        merged.update(part)
    return merged


def count_unigrams_sharded(titles: Sequence[str], shards: int, case_fold: bool = False,
                           workers: int = 1) -> Counter:
    """Count unigrams over contiguous shards of an in-memory corpus"""
    if shards < 1:
        raise InvalidInputError("shards must be >= 1")
    bounds = np.linspace(0, len(titles), shards + 1).astype(int)
    chunks = [titles[bounds[i]:bounds[i + 1]] for i in range(shards)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda chunk: count_unigrams(chunk, case_fold), chunks))
    return merge_counts(parts)


def split_train_validation(titles: Sequence[str], validation_ratio: float,
                           seed: int) -> Tuple[List[str], List[str]]:
    """Split records into mutually exclusive train and validation sets"""
    if not 0.0 <= validation_ratio < 1.0:
        raise InvalidInputError("validation_ratio must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(len(titles))
    n_valid = int(Fraction(str(validation_ratio)) * len(titles))
    valid_idx = set(order[:n_valid].tolist())
    train = [title for i, title in enumerate(titles) if i not in valid_idx]
    valid = [title for i, title in enumerate(titles) if i in valid_idx]
    return train, valid


def tokenize_wordpiece(term: str, subvocab: SubwordVocabulary,
                       max_chars_per_word: int = 100) -> List[int]:
    """
    Greedy longest-match-first WordPiece decomposition of one term

    The first piece is matched as-is, later pieces with the continuation
    prefix. If any position cannot be covered the whole term is [unk_id].
    """
    if not term:
        raise InvalidInputError("cannot tokenize an empty term")
    if len(term) > max_chars_per_word:
        return [subvocab.unk_id]

    ids: List[int] = []
    start = 0
    while start < len(term):
        end = len(term)
        match: Optional[int] = None
        while start < end:
            piece = term[start:end]
            # Continuation pieces carry the ## prefix
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in subvocab.piece_id:
                match = subvocab.piece_id[piece]
                break
            end -= 1
        if match is None:
            return [subvocab.unk_id]
        ids.append(match)
        start = end
    return ids


def build_expanded_vocab(counts: Mapping[str, int], subvocab: SubwordVocabulary,
                         target_size: int, max_chars_per_word: int = 100) -> ExpandedVocabulary:
    """
    Keep the target_size most frequent terms that tokenize to something
    other than unk; equal counts are ordered by term string ascending
    """
    if target_size < 1:
        raise InvalidInputError(f"target_size must be >= 1, got {target_size}")

    # Count descending, ties by term string
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    terms: List[str] = []
    subwords: List[Tuple[int, ...]] = []
    frequency: List[int] = []
    dropped_unk = 0
    for term, count in ranked:
        if len(terms) == target_size:
            break
        pieces = tokenize_wordpiece(term, subvocab, max_chars_per_word)
        # Unrepresentable terms do not use up a slot
        if all(piece == subvocab.unk_id for piece in pieces):
            dropped_unk += 1
            continue
        terms.append(term)
        subwords.append(tuple(pieces))
        frequency.append(int(count))

    logger.info("expanded_vocab_built", size=len(terms), target=target_size,
                candidates=len(counts), dropped_unk=dropped_unk)
    return ExpandedVocabulary(terms=terms, subwords_of=subwords, frequency=frequency)


def expand_head(base: HeadMatrix, expanded: ExpandedVocabulary,
                subvocab_size: Optional[int] = None) -> HeadMatrix:
    """
    Mean-pool base head rows and biases over each U term's subwords

    Args:
        base: head over the subword vocabulary
        expanded: vocabulary whose subwords_of index base rows
        subvocab_size: when given, must equal the base row count

    Returns:
        HeadMatrix with one row per U term, computed in float64
    """
    if subvocab_size is not None and base.rows != subvocab_size:
        raise InvalidInputError(
            f"base head has {base.rows} rows, subword vocabulary has {subvocab_size}"
        )

    # Each U row is the mean of its subword rows
    weights = np.empty((len(expanded), base.hidden), dtype=np.float64)
    bias = np.empty(len(expanded), dtype=np.float64)
    for term_id, pieces in enumerate(expanded.subwords_of):
        if not pieces:
            raise InvariantViolationError(f"term {expanded.terms[term_id]!r} has no subwords")
        rows = np.asarray(pieces, dtype=np.int64)
        if rows.max() >= base.rows or rows.min() < 0:
            raise InvalidInputError(
                f"term {expanded.terms[term_id]!r} references a subword outside the base head"
            )
        weights[term_id] = base.weights[rows].sum(axis=0) / len(rows)
        bias[term_id] = base.bias[rows].sum() / len(rows)

    logger.info("head_expanded", rows=len(expanded), hidden=base.hidden)
    return HeadMatrix(weights=weights, bias=bias)


def vocabulary_overlap(first: ExpandedVocabulary,
                       second: ExpandedVocabulary) -> Tuple[int, float]:
    """Shared term count and its ratio to the larger vocabulary size"""
    shared = len(set(first.terms) & set(second.terms))
    denominator = max(len(first), len(second))
    return shared, (shared / denominator if denominator else 0.0)
