"""
Pruning Module - Test-time static top-k pruning of query and document vectors
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Tuple

import structlog
from pydantic import BaseModel, ConfigDict, NonNegativeInt

from errors import InvalidInputError
from sparse_encode import SparseVector, top_k_entries

logger = structlog.get_logger(__name__)


class PruneConfig(BaseModel):
    """Static pruning budgets; 0 means unpruned"""
    model_config = ConfigDict(frozen=True)

    qk: NonNegativeInt = 0
    dk: NonNegativeInt = 0


def prune(vector: SparseVector, k: int) -> SparseVector:
    """Keep the k highest-weight terms (ties to the lower term id); k = 0 is identity"""
    if k < 0:
        raise InvalidInputError(f"k must be non-negative, got {k}")
    if k == 0 or vector.l0 <= k:
        return vector
    return SparseVector(top_k_entries(vector.entries, k), vector.source_id)


@dataclass
class PruneSummary:
    """Running L0 totals; averages are None until a vector has been seen"""
    k: int = 0
    count: int = 0
    total_before: int = 0
    total_after: int = 0

    def add(self, before: SparseVector, after: SparseVector) -> None:
        self.count += 1
        self.total_before += before.l0
        self.total_after += after.l0

    def merge(self, other: "PruneSummary") -> "PruneSummary":
        return PruneSummary(
            k=self.k,
            count=self.count + other.count,
            total_before=self.total_before + other.total_before,
            total_after=self.total_after + other.total_after,
        )

    @property
    def avg_l0_before(self) -> Optional[float]:
        return self.total_before / self.count if self.count else None

    @property
    def avg_l0_after(self) -> Optional[float]:
        return self.total_after / self.count if self.count else None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "count": self.count,
            "avg_l0_before": self.avg_l0_before,
            "avg_l0_after": self.avg_l0_after,
        }


def iter_pruned(vectors: Iterable[SparseVector], k: int,
                summary: PruneSummary) -> Iterator[SparseVector]:
    """Stream pruned vectors, updating summary as each one passes"""
    for vector in vectors:
        pruned = prune(vector, k)
        summary.add(vector, pruned)
        yield pruned


def prune_corpus(vectors: Iterable[SparseVector], k: int) -> Tuple[List[SparseVector], PruneSummary]:
    """Prune every vector and report average L0 before and after"""
    summary = PruneSummary(k=k)
    pruned = list(iter_pruned(vectors, k, summary))
    logger.info("corpus_pruned", **summary.to_dict())
    return pruned, summary
