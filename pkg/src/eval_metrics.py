"""
Evaluation Metrics Module - FLOPS efficiency metric, MRR@k, recall@k,
average L0 and matched-term-ratio bucketing
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field

from errors import InvalidInputError
from index_retrieval import InvertedIndex, SearchMode, SearchResult, search_many
from pruning import prune
from sparse_encode import SparseVector
from sparse_io import read_qrels_frame

logger = structlog.get_logger(__name__)

Ranking = Union[SearchResult, Sequence[str]]


@dataclass
class QrelSet:
    """Per-query positive doc ids and optional labeled negatives"""
    positives: Dict[str, Set[str]] = field(default_factory=dict)
    negatives: Dict[str, Set[str]] = field(default_factory=dict)

    def __post_init__(self):
        for qid, docs in self.positives.items():
            clash = docs & self.negatives.get(qid, set())
            if clash:
                raise InvalidInputError(
                    f"query {qid!r} lists {sorted(clash)} as both positive and negative"
                )

    def evaluated_queries(self) -> List[str]:
        """Queries with at least one positive, in sorted order"""
        return sorted(qid for qid, docs in self.positives.items() if docs)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "QrelSet":
        positives: Dict[str, Set[str]] = {}
        negatives: Dict[str, Set[str]] = {}
        for qid, doc_id, rel in frame[["qid", "docid", "rel"]].itertuples(index=False):
            target = positives if rel == 1 else negatives
            target.setdefault(qid, set()).add(doc_id)
        return cls(positives=positives, negatives=negatives)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QrelSet":
        return cls.from_frame(read_qrels_frame(path))


class QueryBreakdown(BaseModel):
    qid: str
    l0_q: int
    matched_count: int
    rr_at_10: float
    r_at_10: float
    r_at_100: float


class EvalReport(BaseModel):
    """Effectiveness and efficiency columns of one (qk, dk) setting"""
    model_config = ConfigDict(populate_by_name=True)

    qk: int = Field(ge=0)
    dk: int = Field(ge=0)
    avg_l0_q: float = Field(alias="L0_q", ge=0.0)
    avg_l0_d: float = Field(alias="L0_d", ge=0.0)
    flops: float = Field(alias="FLOPS", ge=0.0)
    mrr_at_10: float = Field(alias="MRR@10", ge=0.0, le=1.0)
    r_at_10: float = Field(alias="R@10", ge=0.0, le=1.0)
    r_at_100: float = Field(alias="R@100", ge=0.0, le=1.0)
    per_query: List[QueryBreakdown] = Field(default_factory=list, exclude=True)

    def table_row(self) -> dict:
        """Report JSON keyed like the results-table columns"""
        return self.model_dump(by_alias=True)

    def per_query_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.per_query])


def flops_metric(index: InvertedIndex, queries: Sequence[SparseVector]) -> float:
    """
    sum_q sum_{t in q} |P_t| / (|Q| * |D|)

    Queries are expected to be pruned already; unindexed terms add 0 and
    queries with no indexed term still count in |Q|.
    """
    if not queries:
        raise InvalidInputError("FLOPS metric needs at least one query")
    if index.doc_count == 0:
        raise InvalidInputError("FLOPS metric needs a non-empty corpus")
    # Entries are distinct term ids, so each term counts once per query
    touched = sum(index.postings_length(term_id) for query in queries for term_id in query.entries)
    return touched / (len(queries) * index.doc_count)


def _ranked_ids(run: Mapping[str, Ranking], qid: str) -> Optional[List[str]]:
    ranking = run.get(qid)
    if ranking is None:
        return None
    if isinstance(ranking, SearchResult):
        return ranking.doc_ids
    return [doc if isinstance(doc, str) else doc[0] for doc in ranking]


def reciprocal_rank(ranked: Sequence[str], positives: Set[str], k: int) -> float:
    for rank, doc_id in enumerate(ranked[:k], start=1):
        if doc_id in positives:
            return 1.0 / rank
    return 0.0


def recall(ranked: Sequence[str], positives: Set[str], k: int) -> float:
    return len(positives.intersection(ranked[:k])) / len(positives)


def _mean_over_queries(run: Mapping[str, Ranking], qrels: QrelSet, k: int, metric) -> float:
    queries = qrels.evaluated_queries()
    if not queries:
        raise InvalidInputError("qrels contain no query with a positive document")
    total = 0.0
    for qid in queries:
        ranked = _ranked_ids(run, qid)
        if ranked is None:
            logger.warning("query_missing_from_run", qid=qid)
            # Still counted in the denominator
            continue
        total += metric(ranked, qrels.positives[qid], k)
    return total / len(queries)


def mrr_at_k(run: Mapping[str, Ranking], qrels: QrelSet, k: int = 10) -> float:
    """Mean reciprocal rank of the first positive within the top k"""
    return _mean_over_queries(run, qrels, k, reciprocal_rank)


def recall_at_k(run: Mapping[str, Ranking], qrels: QrelSet, k: int = 10) -> float:
    """Mean fraction of positives retrieved within the top k"""
    return _mean_over_queries(run, qrels, k, recall)


def matched_term_ratio(query_tokens: Sequence[str], title_tokens: Sequence[str]) -> float:
    """Share of distinct query tokens that also occur in the title"""
    distinct = set(query_tokens)
    if not distinct:
        raise InvalidInputError("query has no tokens")
    return len(distinct & set(title_tokens)) / len(distinct)


def bucket_by_ratio(ratios: Mapping[str, float],
                    labels: Sequence[str] = ("low", "middle", "high")) -> Dict[str, List[str]]:
    """
    Split queries into equal-count buckets by ascending ratio

    Ties are ordered by query id; bucket sizes differ by at most one.
    """
    ordered = sorted(ratios, key=lambda qid: (ratios[qid], qid))
    chunks = np.array_split(np.asarray(ordered, dtype=object), len(labels))
    return {label: list(chunk) for label, chunk in zip(labels, chunks)}


def evaluate(index: InvertedIndex, queries: Sequence[SparseVector], qrels: QrelSet,
             qk: int = 0, mode: Optional[SearchMode] = None, depth: int = 100,
             workers: int = 1) -> EvalReport:
    """Prune queries at qk, retrieve, and compute the full report"""
    if not queries:
        raise InvalidInputError("no queries to evaluate")
    pruned = [prune(query, qk) for query in queries]
    # Queries are already pruned, search must not prune again
    results = search_many(index, pruned, qk=0, top_n=depth, mode=mode, workers=workers)
    run = {result.query_id: result for result in results}

    per_query: List[QueryBreakdown] = []
    for query, result in zip(pruned, results):
        positives = qrels.positives.get(query.source_id)
        if not positives:
            # Unjudged query
            continue
        ranked = result.doc_ids
        per_query.append(QueryBreakdown(
            qid=query.source_id,
            l0_q=query.l0,
            matched_count=result.matched_count,
            rr_at_10=reciprocal_rank(ranked, positives, 10),
            r_at_10=recall(ranked, positives, 10),
            r_at_100=recall(ranked, positives, 100),
        ))

    avg_l0_d = index.total_postings / index.doc_count if index.doc_count else 0.0
    report = EvalReport(
        qk=qk,
        dk=index.dk,
        L0_q=float(np.mean([query.l0 for query in pruned])),
        L0_d=avg_l0_d,
        FLOPS=flops_metric(index, pruned),
        **{"MRR@10": mrr_at_k(run, qrels, 10),
           "R@10": recall_at_k(run, qrels, 10),
           "R@100": recall_at_k(run, qrels, 100)},
        per_query=per_query,
    )
    logger.info("evaluation_done", queries=len(queries), **report.table_row())
    return report
