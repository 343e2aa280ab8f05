"""
Diagnostics Module - Logit-vector and representation statistics:
logit-score-std (with term occurrence threshold), doc-score avg/std at top-k,
non-negative term counts, L0 std and postings-list length std
"""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from errors import InvalidInputError
from sparse_encode import LogitMatrix, SparseVector, pool

logger = structlog.get_logger(__name__)

TopK = Union[int, Literal["all"]]
Row = Union[np.ndarray, Sequence[float], SparseVector, Mapping[int, float]]


class ScoreAccumulator:
    """
    Per-index count / mean / M2 (Chan et al. parallel update)

    Dense rows update every index, sparse rows only their present entries.
    Two accumulators merge into the same state regardless of split points.
    """

    def __init__(self, dim: int = 0):
        self.count = np.zeros(dim, dtype=np.int64)
        self.mean = np.zeros(dim, dtype=np.float64)
        self.m2 = np.zeros(dim, dtype=np.float64)
        self.rows = 0

    def _grow(self, dim: int) -> None:
        if dim <= self.count.size:
            return
        extra = dim - self.count.size
        self.count = np.concatenate([self.count, np.zeros(extra, dtype=np.int64)])
        self.mean = np.concatenate([self.mean, np.zeros(extra)])
        self.m2 = np.concatenate([self.m2, np.zeros(extra)])

    def _combine(self, idx: np.ndarray, n_b: np.ndarray, mean_b: np.ndarray,
                 m2_b: np.ndarray) -> None:
        # Pairwise merge of (n, mean, M2) at the given indices
        n_a = self.count[idx]
        total = n_a + n_b
        delta = mean_b - self.mean[idx]
        self.mean[idx] = self.mean[idx] + delta * (n_b / total)
        self.m2[idx] = self.m2[idx] + m2_b + delta * delta * (n_a * n_b / total)
        self.count[idx] = total

    def add_dense(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if not np.isfinite(rows).all():
            raise InvalidInputError("score rows contain non-finite values")
        self._grow(rows.shape[1])
        idx = np.arange(rows.shape[1])
        n_b = np.full(rows.shape[1], rows.shape[0], dtype=np.int64)
        mean_b = rows.mean(axis=0)
        m2_b = ((rows - mean_b) ** 2).sum(axis=0)
        self._combine(idx, n_b, mean_b, m2_b)
        self.rows += rows.shape[0]

    def add_sparse(self, entries: Mapping[int, float]) -> None:
        if entries:
            idx = np.fromiter(entries.keys(), dtype=np.int64, count=len(entries))
            values = np.fromiter(entries.values(), dtype=np.float64, count=len(entries))
            self._grow(int(idx.max()) + 1)
            self._combine(idx, np.ones(idx.size, dtype=np.int64), values, np.zeros(idx.size))
        self.rows += 1

    def merge(self, other: "ScoreAccumulator") -> "ScoreAccumulator":
        merged = ScoreAccumulator(max(self.count.size, other.count.size))
        for part in (self, other):
            present = np.flatnonzero(part.count > 0)
            merged._combine(present, part.count[present], part.mean[present], part.m2[present])
            merged.rows += part.rows
        return merged

    def std_over_threshold(self, threshold: int, ddof: int = 0) -> Tuple[Optional[float], int]:
        """Unweighted mean of per-index std for indices seen >= threshold times"""
        # Sample std needs at least two observations
        kept = self.count >= max(threshold, ddof + 1, 1)
        logit_cnt = int(kept.sum())
        if logit_cnt == 0:
            return None, 0
        stds = np.sqrt(self.m2[kept] / (self.count[kept] - ddof))
        return float(stds.mean()), logit_cnt


@dataclass
class LogitScoreStd:
    std: float
    logit_cnt: int
    threshold: int


def logit_score_std(rows: Iterable[Row], threshold: int = 1, ddof: int = 0,
                    dense: Optional[bool] = None) -> Optional[LogitScoreStd]:
    """
    Mean over logit indices of each index's score std across rows

    Dense rows (arrays, lists) count every index as appearing; sparse rows
    (SparseVector, mappings) only their stored entries.

    Returns:
        None when no index reaches the occurrence threshold
    """
    accumulator = ScoreAccumulator()
    for row in rows:
        is_sparse = isinstance(row, (SparseVector, Mapping)) if dense is None else not dense
        if is_sparse:
            accumulator.add_sparse(row.entries if isinstance(row, SparseVector) else row)
        else:
            accumulator.add_dense(np.asarray(row, dtype=np.float64))
    if accumulator.rows == 0:
        raise InvalidInputError("logit_score_std needs at least one row")
    std, logit_cnt = accumulator.std_over_threshold(threshold, ddof)
    if std is None:
        return None
    return LogitScoreStd(std=std, logit_cnt=logit_cnt, threshold=threshold)


def _mean_std(values: np.ndarray, ddof: int) -> Tuple[float, float]:
    if values.size - ddof <= 0:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=ddof))


def doc_score_stats(rows: Iterable[Sequence[float]], topk: TopK = "all",
                    ddof: int = 0) -> Optional[Tuple[float, float]]:
    """
    Average of per-document top-k score means, and of per-document top-k stds

    Returns:
        (avg, std) or None for an empty document list
    """
    if topk != "all" and (not isinstance(topk, int) or topk < 1):
        raise InvalidInputError(f"topk must be a positive int or 'all', got {topk!r}")
    means: List[float] = []
    stds: List[float] = []
    for row in rows:
        scores = np.asarray(row, dtype=np.float64)
        if scores.size == 0:
            raise InvalidInputError("every document needs at least one score")
        if topk != "all":
            scores = np.sort(scores)[::-1][:topk]
        mean, std = _mean_std(scores, ddof)
        means.append(mean)
        stds.append(std)
    if not means:
        return None
    return float(np.mean(means)), float(np.mean(stds))


def non_neg_terms_stats(rows: Iterable[Sequence[float]],
                        ddof: int = 0) -> Optional[Tuple[float, float]]:
    """Mean and std over token rows of the count of entries >= 0"""
    counts = [int((np.asarray(row, dtype=np.float64) >= 0.0).sum()) for row in rows]
    if not counts:
        return None
    return _mean_std(np.asarray(counts, dtype=np.float64), ddof)


def l0_std(vectors: Iterable[SparseVector], ddof: int = 0) -> Optional[float]:
    """Std of term counts of individual vectors"""
    values = np.asarray([vector.l0 for vector in vectors], dtype=np.float64)
    if values.size == 0:
        return None
    return _mean_std(values, ddof)[1]


def posting_length_std(vectors: Iterable[SparseVector], ddof: int = 0) -> Optional[float]:
    """Std of per-term occurrence counts (postings list lengths) over a vector stream"""
    lengths: Counter = Counter()
    for vector in vectors:
        lengths.update(vector.entries.keys())
    if not lengths:
        return None
    return _mean_std(np.asarray(list(lengths.values()), dtype=np.float64), ddof)[1]


class DiagnosticsReport(BaseModel):
    """Statistics row; aliases follow the result-table labels"""
    model_config = ConfigDict(populate_by_name=True)

    kind: Literal["logit", "sparse"]
    appearance: Literal["dense", "sparse"]
    std_convention: Literal["population", "sample"] = "population"
    term_occ_threshold: int = Field(ge=0)
    logit_score_std: Optional[float] = Field(default=None, alias="logit-score-std", ge=0.0)
    logit_cnt: int = Field(default=0, alias="logit-cnt", ge=0)
    doc_score_avg: Dict[str, Optional[float]] = Field(default_factory=dict, alias="doc-score-avg")
    doc_score_std: Dict[str, Optional[float]] = Field(default_factory=dict, alias="doc-score-std")
    non_neg_terms_avg: Optional[float] = Field(default=None, alias="non-neg-terms-avg")
    non_neg_terms_std: Optional[float] = Field(default=None, alias="non-neg-terms-std", ge=0.0)
    l0_std: Optional[float] = Field(default=None, alias="L0-std", ge=0.0)
    pos_ls_len_std: Optional[float] = Field(default=None, alias="pos-ls-len-std", ge=0.0)

    def table_row(self) -> dict:
        return self.model_dump(by_alias=True)


DOC_SCORE_TOPKS: Tuple[TopK, ...] = (10, 100, "all")


def collect_diagnostics(records: Iterable[Union[LogitMatrix, SparseVector]],
                        kind: Literal["logit", "sparse"], threshold: int = 1,
                        std_convention: Literal["population", "sample"] = "population"
                        ) -> DiagnosticsReport:
    """
    Compute every statistic in one pass over the input records

    logit: per-document LogitMatrix; token rows are dense logit vectors,
        documents are represented by their pooled vectors
    sparse: SparseVector records; logit-score-std uses sparse appearance
    """
    ddof = 0 if std_convention == "population" else 1
    accumulator = ScoreAccumulator()
    vectors: List[SparseVector] = []
    non_neg_counts: List[int] = []
    for record in records:
        if kind == "logit":
            accumulator.add_dense(record.rows)
            # Non-negative logits per token row
            non_neg_counts.extend(int(c) for c in (record.rows >= 0.0).sum(axis=1))
            vectors.append(pool(record))
        else:
            accumulator.add_sparse(record.entries)
            vectors.append(record)
    if accumulator.rows == 0:
        raise InvalidInputError("no records to compute statistics over")

    std, logit_cnt = accumulator.std_over_threshold(threshold, ddof)
    doc_avg: Dict[str, Optional[float]] = {}
    doc_std: Dict[str, Optional[float]] = {}
    # Empty documents have no scores to rank
    scored = [list(vector.entries.values()) for vector in vectors if vector.l0]
    for topk in DOC_SCORE_TOPKS:
        stats = doc_score_stats(scored, topk, ddof)
        doc_avg[str(topk)] = stats[0] if stats else None
        doc_std[str(topk)] = stats[1] if stats else None

    non_neg = _mean_std(np.asarray(non_neg_counts, dtype=np.float64), ddof) \
        if non_neg_counts else (None, None)

    report = DiagnosticsReport(
        kind=kind,
        appearance="dense" if kind == "logit" else "sparse",
        std_convention=std_convention,
        term_occ_threshold=threshold,
        logit_score_std=std,
        logit_cnt=logit_cnt,
        doc_score_avg=doc_avg,
        doc_score_std=doc_std,
        non_neg_terms_avg=non_neg[0],
        non_neg_terms_std=non_neg[1],
        l0_std=l0_std(vectors, ddof),
        pos_ls_len_std=posting_length_std(vectors, ddof),
    )
    logger.info("diagnostics_collected", kind=kind, threshold=threshold,
                records=len(vectors), logit_cnt=logit_cnt)
    return report
