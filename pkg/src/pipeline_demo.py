#!/usr/bin/env python
"""
Demo script running the whole pipeline on synthetic data: vocabulary
expansion, head pooling, masking, encoding, pruning sweeps, retrieval
evaluation and diagnostics
"""

from typing import List, Tuple

import numpy as np
import structlog
from rich.console import Console
from rich.rule import Rule

from diagnostics import collect_diagnostics
from eval_metrics import QrelSet, evaluate
from index_retrieval import build_index, postings_stats
from masking_gen import MaskingSummary, generate_examples
from pruning import prune_corpus
from sparse_encode import encode_texts
from synthetic import character_subword_vocabulary, make_words, random_head, zipf_titles
from training_math import gradient_check
from ui.panels import DiagnosticsPanel, EvalPanel, GradCheckPanel, IndexPanel
from vocab_expansion import build_expanded_vocab, count_unigrams, expand_head

logger = structlog.get_logger(__name__)

PRUNE_SETTINGS = ((0, 0), (10, 0), (10, 50), (5, 20))


def _queries_from_docs(docs: List[Tuple[str, str]], count: int,
                       seed: int) -> Tuple[List[Tuple[str, str]], QrelSet]:
    """Each query is a few words of one document, which is its positive"""
    rng = np.random.default_rng(seed)
    queries = []
    positives = {}
    picks = rng.choice(len(docs), size=min(count, len(docs)), replace=False)
    for n, doc_index in enumerate(sorted(picks.tolist())):
        doc_id, text = docs[doc_index]
        words = text.split()
        size = int(rng.integers(1, min(4, len(words)) + 1))
        chosen = rng.choice(len(words), size=size, replace=False)
        qid = f"q{n:04d}"
        queries.append((qid, " ".join(words[i] for i in sorted(chosen.tolist()))))
        positives[qid] = {doc_id}
    return queries, QrelSet(positives=positives)


def run_demo(console: Console, seed: int = 0, docs: int = 2000, queries: int = 100,
             query_top_k: int = 1000, doc_top_k: int = 2000) -> None:
    rng = np.random.default_rng(seed)
    words = make_words(3000, rng)
    titles = zipf_titles(docs, words, seed)

    console.print(Rule("vocabulary expansion"))
    subvocab = character_subword_vocabulary()
    vocab = build_expanded_vocab(count_unigrams(titles), subvocab, target_size=1000)
    base_head = random_head(len(subvocab), 32, seed)
    head = expand_head(base_head, vocab, len(subvocab))
    console.print(f"|U| = {len(vocab):,}, head {head.rows} x {head.hidden}, "
                  f"fingerprint {vocab.fingerprint()}")

    console.print(Rule("masking"))
    summary = MaskingSummary()
    for _ in generate_examples(titles, vocab, subvocab, seed=seed, summary=summary):
        pass
    frequencies = ", ".join(f"{key} {value:.3f}"
                            for key, value in summary.action_frequencies().items())
    console.print(f"{summary.records:,} titles, {summary.selected_terms:,} targets, "
                  f"{summary.empty_records:,} without U terms; {frequencies}")

    console.print(Rule("encoding"))
    doc_texts = [(f"d{i:05d}", title) for i, title in enumerate(titles)]
    query_texts, qrels = _queries_from_docs(doc_texts, queries, seed)
    doc_vectors = encode_texts(doc_texts, vocab, head, top_k=doc_top_k)
    query_vectors = encode_texts(query_texts, vocab, head, top_k=query_top_k)

    console.print(Rule("pruning / retrieval"))
    reports = []
    for qk, dk in PRUNE_SETTINGS:
        _, prune_summary = prune_corpus(doc_vectors, dk)
        index = build_index(doc_vectors, dk=dk, vocab_hash=vocab.fingerprint(),
                            vocab_size=len(vocab))
        if (qk, dk) == PRUNE_SETTINGS[-1]:
            console.print(IndexPanel().render(summary=prune_summary, stats=postings_stats(index)))
        reports.append(evaluate(index, query_vectors, qrels, qk=qk))
    console.print(EvalPanel().render(reports))

    console.print(Rule("diagnostics"))
    console.print(DiagnosticsPanel().render(collect_diagnostics(doc_vectors, "sparse")))

    console.print(Rule("gradient check"))
    console.print(GradCheckPanel().render(
        gradient_check("combined", seed, batch_sizes=(1, 4), widths=(8,))
    ))
    logger.info("demo_done", docs=docs, queries=len(query_texts))


if __name__ == "__main__":
    from log_setup import configure_logging

    configure_logging("WARNING")
    run_demo(Console())
