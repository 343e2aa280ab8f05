#!/usr/bin/env python
"""
Main entry point for the sparseforge command-line tools
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import structlog
from rich.console import Console

from diagnostics import collect_diagnostics
from errors import InvalidInputError, RecordReadError, SparseForgeError
from eval_metrics import QrelSet, evaluate
from index_retrieval import InvertedIndex, SearchMode, build_index, postings_stats, search_many
from log_setup import configure_logging
from masking_gen import (ActionProbabilities, LabelMode, MaskingSummary, generate_examples,
                         write_examples)
from pruning import PruneSummary, iter_pruned
from settings import SparseForgeSettings, load_settings
from sparse_encode import EncoderStyle, encode_texts, mock_encode
from sparse_io import (read_lines, read_logit_matrices, read_vectors, write_json_report,
                       write_logit_matrices, write_trec_run, write_vectors)
from training_math import LOSS_NAMES, gradient_check
from ui.panels import DiagnosticsPanel, EvalPanel, GradCheckPanel, IndexPanel
from vocab_expansion import (ExpandedVocabulary, HeadMatrix, SubwordVocabulary,
                             build_expanded_vocab, count_unigrams, expand_head,
                             split_train_validation)

logger = structlog.get_logger(__name__)
console = Console()


def _read_id_texts(path: Path) -> List[tuple]:
    """Read `id \\t text` lines"""
    pairs = []
    for index, line in enumerate(read_lines(path)):
        if not line.strip():
            continue
        if "\t" not in line:
            raise RecordReadError(index, "expected `id<TAB>text`", path)
        source_id, text = line.split("\t", 1)
        pairs.append((source_id, text))
    return pairs


def cmd_vocab_build(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    subvocab = SubwordVocabulary.from_file(args.subvocab)
    titles = list(read_lines(args.corpus))
    if args.validation_out:
        titles, validation = split_train_validation(titles, args.validation_ratio, settings.seed)
        with open(args.validation_out, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(title + "\n" for title in validation)
        logger.info("corpus_split", train=len(titles), validation=len(validation))
    counts = count_unigrams(titles, settings.case_fold)
    vocab = build_expanded_vocab(counts, subvocab, args.size or settings.vocab_size,
                                 settings.max_chars_per_word)
    vocab.save(args.out)
    console.print(f"[green]wrote {len(vocab):,} terms to {args.out}[/green]")
    return 0


def cmd_head_expand(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    vocab = ExpandedVocabulary.load(args.vocab)
    base = HeadMatrix.load(args.base_head)
    subvocab_size = len(SubwordVocabulary.from_file(args.subvocab)) if args.subvocab else None
    expand_head(base, vocab, subvocab_size).save(args.out)
    console.print(f"[green]wrote {len(vocab):,} x {base.hidden} head to {args.out}[/green]")
    return 0


def cmd_mask_gen(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    vocab = ExpandedVocabulary.load(args.vocab)
    subvocab = SubwordVocabulary.from_file(args.subvocab)
    probs = ActionProbabilities(settings.mask_token_prob, settings.random_token_prob,
                                settings.keep_token_prob)
    summary = MaskingSummary()
    examples = generate_examples(
        read_lines(args.input), vocab, subvocab, seed=args.seed, ratio=settings.mask_ratio,
        probs=probs, case_fold=settings.case_fold, max_length=settings.max_length,
        workers=settings.workers, drop_empty=args.drop_empty, summary=summary,
        label_mode=args.label_mode,
    )
    written = write_examples(examples, args.out)
    if summary.empty_records:
        logger.warning("titles_without_u_terms", count=summary.empty_records,
                       dropped=args.drop_empty)
    logger.info("masking_done", written=written, records=summary.records,
                selected_terms=summary.selected_terms, **summary.action_frequencies())
    console.print(f"[green]wrote {written:,} examples to {args.out}[/green]")
    return 0


def cmd_encode(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    vocab = ExpandedVocabulary.load(args.vocab)
    head = HeadMatrix.load(args.head)
    texts = _read_id_texts(args.input)
    style = EncoderStyle(args.style)
    top_k = args.top_k
    if top_k is None and args.side is not None:
        top_k = settings.query_top_k if args.side == "query" else settings.doc_top_k
    vectors = encode_texts(texts, vocab, head, style, top_k=top_k,
                           case_fold=settings.case_fold, workers=settings.workers)
    write_vectors(vectors, args.out, settings.weight_digits)
    if args.logits_out:
        write_logit_matrices(
            (mock_encode(text, vocab, head, style, settings.case_fold, source_id)
             for source_id, text in texts),
            args.logits_out,
        )
    console.print(f"[green]wrote {len(vectors):,} vectors to {args.out}[/green]")
    return 0


def cmd_gradcheck(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    report = gradient_check(args.loss, args.seed, repeats=args.repeats,
                            lambda_j=settings.lambda_j, step=settings.gradcheck_step,
                            tolerance=settings.gradcheck_tolerance,
                            error_floor=settings.gradcheck_error_floor)
    console.print(GradCheckPanel().render(report))
    print(f"{report.max_relative_error:.6e}")
    return 0 if report.passed else 1


def cmd_prune(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    if args.k < 0:
        raise InvalidInputError("--k must be non-negative")
    summary = PruneSummary(k=args.k)
    write_vectors(iter_pruned(read_vectors(args.input), args.k, summary), args.out,
                  settings.weight_digits)
    if args.summary:
        write_json_report(summary.to_dict(), args.summary)
    console.print(IndexPanel().render(summary=summary))
    return 0


def _vocab_identity(vocab_path: Optional[Path]) -> tuple:
    if vocab_path is None:
        return None, None
    vocab = ExpandedVocabulary.load(vocab_path)
    return vocab.fingerprint(), len(vocab)


def cmd_index_build(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    vocab_hash, vocab_size = _vocab_identity(args.vocab)
    index = build_index(read_vectors(args.input), dk=args.dk, vocab_hash=vocab_hash,
                        vocab_size=vocab_size, workers=settings.workers)
    index.save(args.out)
    console.print(IndexPanel().render(stats=postings_stats(index)))
    return 0


def _search_mode(args: argparse.Namespace) -> SearchMode:
    try:
        return SearchMode(kind=args.mode, theta=args.theta if args.mode == "overlap" else 0.0)
    except ValueError as e:
        raise InvalidInputError(f"--theta must be in [0, 1], got {args.theta}") from e


def cmd_search(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    index = InvertedIndex.load(args.index)
    vocab_hash, _ = _vocab_identity(args.vocab)
    queries = list(read_vectors(args.queries))
    results = search_many(index, queries, qk=args.qk, top_n=args.top, mode=_search_mode(args),
                          query_vocab_hash=vocab_hash, workers=settings.workers)
    write_trec_run({result.query_id: result.hits for result in results}, args.out,
                   tag=args.tag, digits=settings.weight_digits)
    console.print(f"[green]wrote run for {len(results):,} queries to {args.out}[/green]")
    return 0


def cmd_eval(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    index = InvertedIndex.load(args.index)
    queries = list(read_vectors(args.queries))
    qrels = QrelSet.load(args.qrels)
    report = evaluate(index, queries, qrels, qk=args.qk, mode=_search_mode(args),
                      workers=settings.workers)
    write_json_report(report.table_row(), args.report)
    if args.per_query:
        report.per_query_frame().to_csv(args.per_query, index=False, lineterminator="\n")
    console.print(EvalPanel().render([report]))
    return 0


def cmd_stats(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    records = read_logit_matrices(args.input) if args.kind == "logit" else read_vectors(args.input)
    report = collect_diagnostics(records, args.kind, args.threshold, settings.std_convention)
    write_json_report(report.table_row(), args.report)
    console.print(DiagnosticsPanel().render(report))
    return 0


def cmd_demo(args: argparse.Namespace, settings: SparseForgeSettings) -> int:
    from pipeline_demo import run_demo

    run_demo(console, seed=settings.seed, docs=args.docs, queries=args.queries,
             query_top_k=settings.query_top_k, doc_top_k=settings.doc_top_k)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseforge",
        description="Expanded-vocabulary learned sparse retrieval toolkit",
    )
    parser.add_argument("--config", type=Path, help="YAML settings file")
    parser.add_argument("--log-level", default=None, help="logging level (default INFO)")
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab-build", help="build the expanded unigram vocabulary")
    p.add_argument("--corpus", type=Path, required=True, help="titles, one per line")
    p.add_argument("--subvocab", type=Path, required=True, help="subword vocab file")
    p.add_argument("--size", type=int, default=None, help="target |U|")
    p.add_argument("--validation-out", type=Path, help="write held-out titles here")
    p.add_argument("--validation-ratio", type=float, default=0.01)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_vocab_build)

    p = sub.add_parser("head-expand", help="mean-pool a subword head into a U head")
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--base-head", type=Path, required=True)
    p.add_argument("--subvocab", type=Path, help="check base rows against this vocab")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_head_expand)

    p = sub.add_parser("mask-gen", help="generate masked pre-training examples")
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--subvocab", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--drop-empty", action="store_true", help="skip titles without U terms")
    p.add_argument("--label-mode", choices=[mode.value for mode in LabelMode],
                   default=LabelMode.ALL.value,
                   help="label every subword, only the first, or only the second and later")
    p.set_defaults(func=cmd_mask_gen)

    p = sub.add_parser("encode", help="encode texts with the mock encoder")
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--head", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True, help="id<TAB>text lines")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--style", choices=[style.value for style in EncoderStyle],
                   default=EncoderStyle.HASH_PROJECTION.value)
    p.add_argument("--side", choices=["query", "doc"],
                   help="apply the query_top_k or doc_top_k setting as the top-K mask")
    p.add_argument("--top-k", type=int, default=None,
                   help="training-time top-K mask (overrides --side)")
    p.add_argument("--logits-out", type=Path, help="also dump logit matrices (JSONL)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser(
        "gradcheck", help="finite-difference gradient check",
        description="Relative error is |a - n| / max(|a|, |n|, floor) with floor from "
                    "the gradcheck_error_floor setting (default 1e-3), so gradients smaller "
                    "than the floor are held to an absolute bound of tolerance * floor.",
    )
    p.add_argument("--loss", choices=LOSS_NAMES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3, help="random batches per |B| x width cell")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("prune", help="static top-k pruning of sparse vectors")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--summary", type=Path)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("index-build", help="build an inverted index")
    p.add_argument("--dk", type=int, default=0)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--vocab", type=Path, help="record this vocabulary in the manifest")
    p.set_defaults(func=cmd_index_build)

    for name, func in (("search", cmd_search), ("eval", cmd_eval)):
        p = sub.add_parser(name, help="retrieve with an index" if name == "search"
                           else "evaluate retrieval against qrels")
        p.add_argument("--index", type=Path, required=True)
        p.add_argument("--queries", type=Path, required=True)
        p.add_argument("--qk", type=int, default=0)
        p.add_argument("--mode", choices=["dot", "overlap"], default="dot")
        p.add_argument("--theta", type=float, default=0.0)
        if name == "search":
            p.add_argument("--top", type=int, default=100)
            p.add_argument("--out", type=Path, required=True)
            p.add_argument("--tag", default="sparseforge")
            p.add_argument("--vocab", type=Path, help="refuse if it differs from the index's")
        else:
            p.add_argument("--qrels", type=Path, required=True)
            p.add_argument("--report", type=Path, required=True)
            p.add_argument("--per-query", type=Path, help="per-query breakdown CSV")
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="logit / representation diagnostics")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--kind", choices=["logit", "sparse"], required=True)
    p.add_argument("--threshold", type=int, default=1)
    p.add_argument("--report", type=Path, required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("demo", help="run the synthetic end-to-end pipeline")
    p.add_argument("--docs", type=int, default=2000)
    p.add_argument("--queries", type=int, default=100)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, log_level=args.log_level, workers=args.workers)
    except (SparseForgeError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2

    configure_logging(settings.log_level, settings.log_json, settings.log_file)
    try:
        return args.func(args, settings)
    except (SparseForgeError, OSError) as e:
        logger.error("command_failed", command=args.command, error=str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
