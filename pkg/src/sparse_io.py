"""
Record I/O - sparse vector JSONL, logit matrix JSONL, title files,
qrels TSV and TREC run files
"""

import json
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

import pandas as pd
import structlog

from errors import RecordReadError, SparseForgeError
from sparse_encode import LogitMatrix, SparseVector

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def round_weight(weight: float, digits: int = 6) -> float:
    """Round to the given number of significant digits"""
    return float(f"{weight:.{digits}g}")


def vector_to_json(vector: SparseVector, digits: int = 6) -> str:
    payload = {
        "id": vector.source_id,
        "v": {str(term_id): round_weight(weight, digits)
              for term_id, weight in vector.entries.items()},
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def write_vectors(vectors: Iterable[SparseVector], path: PathLike, digits: int = 6) -> int:
    """Write vectors as JSONL with weights at `digits` significant digits"""
    written = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for vector in vectors:
            f.write(vector_to_json(vector, digits))
            f.write("\n")
            written += 1
    return written


def _iter_json_lines(path: PathLike) -> Iterator[Tuple[int, dict]]:
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise RecordReadError(0, str(e), path) from e
    with f:
        index = 0
        while True:
            try:
                line = f.readline()
            except (OSError, UnicodeDecodeError) as e:
                raise RecordReadError(index, str(e), path) from e
            if not line:
                break
            if line.strip():
                try:
                    yield index, json.loads(line)
                except json.JSONDecodeError as e:
                    raise RecordReadError(index, f"invalid JSON: {e}", path) from e
                index += 1


def read_vectors(path: PathLike) -> Iterator[SparseVector]:
    """Stream SparseVectors from a JSONL file"""
    for index, record in _iter_json_lines(path):
        try:
            yield SparseVector({int(term): weight for term, weight in record["v"].items()},
                               str(record["id"]))
        except (KeyError, TypeError, ValueError, SparseForgeError) as e:
            raise RecordReadError(index, f"bad sparse vector record: {e}", path) from e


def logit_matrix_to_json(matrix: LogitMatrix) -> str:
    return json.dumps({"id": matrix.source_id, "rows": matrix.rows.tolist()},
                      separators=(",", ":"))


def write_logit_matrices(matrices: Iterable[LogitMatrix], path: PathLike) -> int:
    written = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for matrix in matrices:
            f.write(logit_matrix_to_json(matrix))
            f.write("\n")
            written += 1
    return written


def read_logit_matrices(path: PathLike) -> Iterator[LogitMatrix]:
    """Stream LogitMatrix records ({"id": ..., "rows": [[...], ...]})"""
    for index, record in _iter_json_lines(path):
        try:
            yield LogitMatrix(rows=record["rows"], source_id=str(record["id"]))
        except (KeyError, TypeError, ValueError, SparseForgeError) as e:
            raise RecordReadError(index, f"bad logit matrix record: {e}", path) from e


def read_lines(path: PathLike) -> Iterator[str]:
    """Stream lines of a UTF-8 text file without trailing newlines"""
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise RecordReadError(0, str(e), path) from e
    with f:
        index = 0
        while True:
            try:
                line = f.readline()
            except (OSError, UnicodeDecodeError) as e:
                raise RecordReadError(index, str(e), path) from e
            if not line:
                break
            yield line.rstrip("\n")
            index += 1


def read_qrels_frame(path: PathLike) -> pd.DataFrame:
    """Load a qrels TSV (qid, docid, rel with 1 = positive, -1 = labeled negative)"""
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=["qid", "docid", "rel"],
                            dtype={"qid": str, "docid": str, "rel": int}, comment="#")
    except (OSError, ValueError) as e:
        raise RecordReadError(0, f"cannot parse qrels: {e}", path) from e
    bad = ~frame["rel"].isin([1, -1])
    if bad.any():
        row = int(bad.idxmax())
        raise RecordReadError(row, f"relevance must be 1 or -1, got {frame.loc[row, 'rel']}", path)
    return frame


def format_score(score: float, digits: int = 6) -> str:
    return f"{score:.{digits}g}"


def write_trec_run(rankings: Mapping[str, Sequence[Tuple[str, float]]], path: PathLike,
                   tag: str = "sparseforge", digits: int = 6) -> int:
    """Write `qid Q0 docid rank score tag` lines, queries in the mapping's order"""
    lines = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for qid, hits in rankings.items():
            for rank, (doc_id, score) in enumerate(hits, start=1):
                f.write(f"{qid} Q0 {doc_id} {rank} {format_score(score, digits)} {tag}\n")
                lines += 1
    return lines


def read_trec_run(path: PathLike) -> Dict[str, List[Tuple[str, float]]]:
    """Read a TREC run into qid -> [(docid, score)] ordered by rank"""
    ranked: Dict[str, List[Tuple[int, str, float]]] = {}
    for index, line in enumerate(read_lines(path)):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise RecordReadError(index, "expected 6 whitespace-separated fields", path)
        qid, _, doc_id, rank, score, _ = parts
        try:
            ranked.setdefault(qid, []).append((int(rank), doc_id, float(score)))
        except ValueError as e:
            raise RecordReadError(index, str(e), path) from e
    return {qid: [(doc_id, score) for _, doc_id, score in sorted(rows)]
            for qid, rows in ranked.items()}


def write_json_report(payload: Mapping, path: PathLike) -> None:
    """JSON report with keys in insertion order and a fixed indent"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)
        f.write("\n")
