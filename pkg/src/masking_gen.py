"""
Masking Generation Module - Builds EMLM pre-training examples by masking
whole U terms of each title with the 80/10/10 replacement rule
"""

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from errors import InvalidInputError, OverlappingSpansError
from vocab_expansion import ExpandedVocabulary, SubwordVocabulary, normalize, tokenize_wordpiece

logger = structlog.get_logger(__name__)

NO_LABEL = -100
WINDOW_PER_WORKER = 64


class MaskAction(str, Enum):
    """Replacement applied to every subword of a selected U term"""
    MASK = "MASK"
    RANDOM = "RANDOM"
    KEEP = "KEEP"


class LabelMode(str, Enum):
    """Which subwords of a selected U term are replaced and labeled

    all: every subword. first: only the first subword. rest: only the
    second and later subwords, so single-subword terms are never selected.
    """
    ALL = "all"
    FIRST = "first"
    REST = "rest"


@dataclass(frozen=True)
class USpan:
    """A U term occurrence covering subword positions [start, stop)"""
    term_id: int
    start: int
    stop: int


@dataclass(frozen=True)
class ActionProbabilities:
    mask: float = 0.8
    random: float = 0.1
    keep: float = 0.1

    def __post_init__(self):
        if min(self.mask, self.random, self.keep) < 0:
            raise InvalidInputError("action probabilities must be non-negative")
        if abs(self.mask + self.random + self.keep - 1.0) > 1e-9:
            raise InvalidInputError("action probabilities must sum to 1")


@dataclass
class MaskedExample:
    """One masked title ready for EMLM pre-training"""
    token_ids: List[int]
    labels: Dict[int, int]
    actions: List[MaskAction]
    record: int
    seed: int

    @property
    def has_targets(self) -> bool:
        return bool(self.labels)

    def label_array(self, no_label: int = NO_LABEL) -> List[int]:
        """Per-position labels with no_label at unmasked positions"""
        out = [no_label] * len(self.token_ids)
        for position, term_id in self.labels.items():
            out[position] = term_id
        return out

    def to_json_line(self) -> str:
        payload = {
            "tokens": self.token_ids,
            "labels": {str(pos): self.labels[pos] for pos in sorted(self.labels)},
            "actions": [action.value for action in self.actions],
            "record": self.record,
        }
        if not self.has_targets:
            payload["empty"] = True
        return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


@dataclass
class MaskingSummary:
    """Counters over a generation run; merge() is order-independent"""
    records: int = 0
    empty_records: int = 0
    selected_terms: int = 0
    action_counts: Dict[str, int] = field(
        default_factory=lambda: {action.value: 0 for action in MaskAction}
    )

    def add(self, example: MaskedExample) -> None:
        self.records += 1
        if not example.has_targets:
            self.empty_records += 1
        self.selected_terms += len(example.actions)
        for action in example.actions:
            self.action_counts[action.value] += 1

    def merge(self, other: "MaskingSummary") -> "MaskingSummary":
        counts = {key: self.action_counts[key] + other.action_counts[key]
                  for key in self.action_counts}
        return MaskingSummary(
            records=self.records + other.records,
            empty_records=self.empty_records + other.empty_records,
            selected_terms=self.selected_terms + other.selected_terms,
            action_counts=counts,
        )

    def action_frequencies(self) -> Dict[str, float]:
        if self.selected_terms == 0:
            return {key: 0.0 for key in self.action_counts}
        return {key: count / self.selected_terms for key, count in self.action_counts.items()}


def record_rng(seed: int, record_index: int) -> np.random.Generator:
    """Independent random stream for one record"""
    return np.random.default_rng([seed, record_index])


def segment_title(title: str, vocab: ExpandedVocabulary, subvocab: SubwordVocabulary,
                  case_fold: bool = False,
                  max_length: Optional[int] = None) -> Tuple[List[int], List[USpan]]:
    """
    Tokenize a title into subword ids and locate U term spans

    Tokens that are U terms use their stored decomposition, all others are
    WordPiece-tokenized. When max_length is given the sequence is truncated
    and spans that do not fit entirely are dropped.
    """
    token_ids: List[int] = []
    spans: List[USpan] = []
    for raw in title.split():
        token = normalize(raw, case_fold)
        term_id = vocab.term_id.get(token)
        if term_id is not None:
            pieces = list(vocab.subwords_of[term_id])
            spans.append(USpan(term_id, len(token_ids), len(token_ids) + len(pieces)))
        else:
            pieces = tokenize_wordpiece(token, subvocab)
        token_ids.extend(pieces)

    if max_length is not None and len(token_ids) > max_length:
        token_ids = token_ids[:max_length]
        # A span cut by the window is not a maskable term
        spans = [span for span in spans if span.stop <= max_length]
    return token_ids, spans


def find_u_spans(title: str, vocab: ExpandedVocabulary, subvocab: SubwordVocabulary,
                 case_fold: bool = False) -> List[USpan]:
    """U term occurrences of a title with their subword position ranges"""
    return segment_title(title, vocab, subvocab, case_fold)[1]


def target_count(n_spans: int, ratio: float = 0.15) -> int:
    """max(1, floor(ratio * n)) for n >= 1, else 0; exact rational arithmetic"""
    if n_spans <= 0:
        return 0
    return max(1, math.floor(Fraction(str(ratio)) * n_spans))


def select_mask_targets(spans: Sequence[USpan], rng: np.random.Generator,
                        ratio: float = 0.15) -> List[USpan]:
    """Choose an exact-count subset of spans uniformly without replacement"""
    count = target_count(len(spans), ratio)
    if count == 0:
        return []
    chosen = rng.choice(len(spans), size=count, replace=False)
    # Keep left-to-right order of the selected spans
    return [spans[i] for i in sorted(chosen.tolist())]


def draw_action(rng: np.random.Generator, probs: ActionProbabilities) -> MaskAction:
    u = rng.random()
    if u < probs.mask:
        return MaskAction.MASK
    if u < probs.mask + probs.random:
        return MaskAction.RANDOM
    return MaskAction.KEEP


def target_positions(span: USpan, label_mode: LabelMode = LabelMode.ALL) -> range:
    if label_mode is LabelMode.FIRST:
        return range(span.start, span.start + 1)
    if label_mode is LabelMode.REST:
        return range(span.start + 1, span.stop)
    return range(span.start, span.stop)


def apply_replacements(tokens: Sequence[int], selected: Sequence[USpan],
                       rng: np.random.Generator, subvocab: SubwordVocabulary,
                       probs: Optional[ActionProbabilities] = None,
                       record: int = 0, seed: int = 0,
                       label_mode: Union[LabelMode, str] = LabelMode.ALL) -> MaskedExample:
    """
    Apply one drawn action per selected U term to its target subwords

    RANDOM replaces each subword independently with a uniform subword id
    other than mask_id. Target subwords (all of them unless label_mode
    says otherwise) are labeled with the term id.

    Raises:
        OverlappingSpansError: if two selected spans share a position
    """
    probs = probs or ActionProbabilities()
    label_mode = LabelMode(label_mode)
    ordered = sorted(selected, key=lambda span: (span.start, span.stop))
    for previous, current in zip(ordered, ordered[1:]):
        if current.start < previous.stop:
            raise OverlappingSpansError(
                f"spans [{previous.start},{previous.stop}) and "
                f"[{current.start},{current.stop}) overlap"
            )
    for span in ordered:
        if span.start < 0 or span.stop > len(tokens) or span.start >= span.stop:
            raise InvalidInputError(f"span [{span.start},{span.stop}) outside the token sequence")

    token_ids = list(tokens)
    labels: Dict[int, int] = {}
    actions: List[MaskAction] = []
    vocab_size = len(subvocab)
    for span in ordered:
        action = draw_action(rng, probs)
        actions.append(action)
        for position in target_positions(span, label_mode):
            labels[position] = span.term_id
            if action is MaskAction.MASK:
                token_ids[position] = subvocab.mask_id
            elif action is MaskAction.RANDOM:
                # Draw from |V| - 1 ids and shift past mask_id
                replacement = int(rng.integers(0, vocab_size - 1))
                if replacement >= subvocab.mask_id:
                    replacement += 1
                token_ids[position] = replacement

    return MaskedExample(token_ids=token_ids, labels=labels, actions=actions,
                         record=record, seed=seed)


def mask_title(title: str, record_index: int, vocab: ExpandedVocabulary,
               subvocab: SubwordVocabulary, seed: int, ratio: float = 0.15,
               probs: Optional[ActionProbabilities] = None, case_fold: bool = False,
               max_length: Optional[int] = 64,
               label_mode: Union[LabelMode, str] = LabelMode.ALL) -> MaskedExample:
    """Full masking pipeline for one record"""
    label_mode = LabelMode(label_mode)
    rng = record_rng(seed, record_index)
    token_ids, spans = segment_title(title, vocab, subvocab, case_fold, max_length)
    if label_mode is LabelMode.REST:
        spans = [span for span in spans if span.stop - span.start > 1]
    selected = select_mask_targets(spans, rng, ratio)
    return apply_replacements(token_ids, selected, rng, subvocab, probs,
                              record=record_index, seed=seed, label_mode=label_mode)


def generate_examples(titles: Iterable[str], vocab: ExpandedVocabulary,
                      subvocab: SubwordVocabulary, seed: int, ratio: float = 0.15,
                      probs: Optional[ActionProbabilities] = None, case_fold: bool = False,
                      max_length: Optional[int] = 64, workers: int = 1,
                      drop_empty: bool = False,
                      summary: Optional[MaskingSummary] = None,
                      label_mode: Union[LabelMode, str] = LabelMode.ALL,
                      window: Optional[int] = None) -> Iterator[MaskedExample]:
    """
    Mask a stream of titles; output order follows input order

    Record indices are the 0-based line positions of the input, so the
    output is the same for any number of workers. Titles are pulled from
    the stream `window` at a time (default WINDOW_PER_WORKER per worker).
    """
    label_mode = LabelMode(label_mode)
    window = window or WINDOW_PER_WORKER * workers

    def work(item: Tuple[int, str]) -> MaskedExample:
        index, title = item
        return mask_title(title, index, vocab, subvocab, seed, ratio, probs,
                          case_fold, max_length, label_mode)

    # Index before chunking so record numbers stay global
    records = enumerate(titles)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            chunk = list(itertools.islice(records, window))
            if not chunk:
                break
            for example in pool.map(work, chunk):
                if summary is not None:
                    summary.add(example)
                if not example.has_targets:
                    logger.debug("title_without_u_terms", record=example.record)
                    if drop_empty:
                        continue
                yield example


def write_examples(examples: Iterable[MaskedExample], path: Union[str, Path]) -> int:
    """Write examples as JSONL; returns the number of lines written"""
    written = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for example in examples:
            f.write(example.to_json_line())
            f.write("\n")
            written += 1
    return written
