"""
Unit tests for expanded vocabulary construction and head expansion
"""

import random
import sys
import tempfile
import unittest
from collections import Counter
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from errors import FormatError, InvalidInputError, RecordReadError
from synthetic import character_subword_vocabulary, make_words, random_head, zipf_titles
from vocab_expansion import (ExpandedVocabulary, HeadMatrix, SubwordVocabulary,
                             build_expanded_vocab, count_unigrams, count_unigrams_sharded,
                             expand_head, merge_counts, split_train_validation,
                             tokenize_wordpiece, vocabulary_overlap)


def _strip(piece: str) -> str:
    return piece[2:] if piece.startswith("##") else piece


class TestTokenizeWordpiece(unittest.TestCase):
    """Greedy longest-match WordPiece decomposition"""

    def setUp(self):
        self.subvocab = character_subword_vocabulary(["ab", "abc", "##cd", "##d"])

    def test_longest_match_first(self):
        ids = tokenize_wordpiece("abcd", self.subvocab)
        self.assertEqual([self.subvocab.pieces[i] for i in ids], ["abc", "##d"])

    def test_single_characters(self):
        ids = tokenize_wordpiece("xyz", self.subvocab)
        self.assertEqual([self.subvocab.pieces[i] for i in ids], ["x", "##y", "##z"])

    def test_uncoverable_term_is_unk(self):
        self.assertEqual(tokenize_wordpiece("aB", self.subvocab), [self.subvocab.unk_id])
        self.assertEqual(tokenize_wordpiece("é", self.subvocab), [self.subvocab.unk_id])

    def test_too_long_term_is_unk(self):
        self.assertEqual(tokenize_wordpiece("a" * 11, self.subvocab, max_chars_per_word=10),
                         [self.subvocab.unk_id])
        self.assertNotEqual(tokenize_wordpiece("a" * 10, self.subvocab, max_chars_per_word=10),
                            [self.subvocab.unk_id])

    def test_empty_term_rejected(self):
        with self.assertRaises(InvalidInputError):
            tokenize_wordpiece("", self.subvocab)

    def test_pieces_reproduce_term(self):
        words = make_words(300, np.random.default_rng(3))
        for word in words:
            ids = tokenize_wordpiece(word, self.subvocab)
            self.assertNotEqual(ids, [self.subvocab.unk_id])
            self.assertEqual("".join(_strip(self.subvocab.pieces[i]) for i in ids), word)


class TestSubwordVocabulary(unittest.TestCase):

    def test_missing_mask_token(self):
        with self.assertRaises(InvalidInputError):
            SubwordVocabulary.from_pieces(["[UNK]", "a"])

    def test_duplicate_piece(self):
        with self.assertRaises(InvalidInputError):
            SubwordVocabulary.from_pieces(["[UNK]", "[MASK]", "a", "a"])

    def test_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.txt"
            path.write_text("[PAD]\n[UNK]\n[MASK]\nhello\n##s\n", encoding="utf-8")
            subvocab = SubwordVocabulary.from_file(path)
        self.assertEqual(len(subvocab), 5)
        self.assertEqual(subvocab.mask_id, 2)
        self.assertEqual(subvocab.unk_id, 1)


class TestCountUnigrams(unittest.TestCase):

    def setUp(self):
        self.words = make_words(500, np.random.default_rng(1))
        self.titles = zipf_titles(10_000, self.words, seed=1)

    def test_matches_naive_count(self):
        oracle = {}
        for title in self.titles:
            for token in title.split():
                oracle[token] = oracle.get(token, 0) + 1
        self.assertEqual(dict(count_unigrams(self.titles)), oracle)

    def test_case_fold(self):
        counts = count_unigrams(["Apple apple", "APPLE pie"], case_fold=True)
        self.assertEqual(counts, Counter({"apple": 3, "pie": 1}))
        self.assertEqual(count_unigrams(["Apple apple"])["Apple"], 1)

    def test_sharded_counts_match(self):
        single = count_unigrams(self.titles)
        for shards in (1, 3, 7):
            self.assertEqual(count_unigrams_sharded(self.titles, shards, workers=3), single)

    def test_merge_order_independent(self):
        parts = [Counter({"a": 1, "b": 2}), Counter({"b": 1}), Counter({"c": 4})]
        self.assertEqual(merge_counts(parts), merge_counts(reversed(parts)))

    def test_read_failure_reports_record(self):
        def broken():
            yield "a b"
            yield "c"
            raise UnicodeDecodeError("utf-8", b"\xff", 0, 1, "invalid start byte")

        with self.assertRaises(RecordReadError) as ctx:
            count_unigrams(broken())
        self.assertEqual(ctx.exception.record_index, 2)


class TestBuildExpandedVocab(unittest.TestCase):

    def setUp(self):
        self.subvocab = character_subword_vocabulary()
        rng = np.random.default_rng(5)
        words = make_words(1000, rng)
        self.counts = {word: int(count) for word, count in
                       zip(words, rng.integers(1, 50, size=len(words)))}

    def test_matches_sort_then_truncate(self):
        vocab = build_expanded_vocab(self.counts, self.subvocab, target_size=100)
        oracle = sorted(self.counts.items(), key=lambda item: (-item[1], item[0]))[:100]
        self.assertEqual(vocab.terms, [term for term, _ in oracle])
        self.assertEqual(vocab.frequency, [count for _, count in oracle])

    def test_invariant_under_input_order(self):
        items = list(self.counts.items())
        random.Random(9).shuffle(items)
        shuffled = dict(items)
        self.assertEqual(build_expanded_vocab(self.counts, self.subvocab, 100).terms,
                         build_expanded_vocab(shuffled, self.subvocab, 100).terms)

    def test_unk_terms_skipped(self):
        counts = {"ÄÖ": 100, "Big": 90, "cat": 10, "dog": 10}
        vocab = build_expanded_vocab(counts, self.subvocab, target_size=5)
        self.assertEqual(vocab.terms, ["cat", "dog"])

    def test_small_corpus_gives_fewer_terms(self):
        vocab = build_expanded_vocab({"cat": 2, "dog": 1}, self.subvocab, target_size=10)
        self.assertEqual(len(vocab), 2)

    def test_target_size_must_be_positive(self):
        with self.assertRaises(InvalidInputError):
            build_expanded_vocab(self.counts, self.subvocab, target_size=0)

    def test_vocab_file_round_trip(self):
        vocab = build_expanded_vocab(self.counts, self.subvocab, target_size=50)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.tsv"
            vocab.save(path)
            first_line = path.read_text(encoding="utf-8").splitlines()[0]
            loaded = ExpandedVocabulary.load(path)
        self.assertEqual(first_line, "#sparseforge-vocab v1 |U|=50")
        self.assertEqual(loaded.terms, vocab.terms)
        self.assertEqual(loaded.subwords_of, vocab.subwords_of)
        self.assertEqual(loaded.fingerprint(), vocab.fingerprint())

    def test_vocab_file_without_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.tsv"
            path.write_text("cat\t0\t1\t5\n", encoding="utf-8")
            with self.assertRaises(FormatError):
                ExpandedVocabulary.load(path)

    def test_vocab_file_with_bad_fields(self):
        header = "#sparseforge-vocab v1 |U|=1\n"
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.tsv"
            for body in ("cat\tzero\t5\t1 2\n", "cat\t0\tmany\t1 2\n", "cat\t0\t5\t1 x\n"):
                path.write_text(header + body, encoding="utf-8")
                with self.assertRaises(RecordReadError) as ctx:
                    ExpandedVocabulary.load(path)
                self.assertEqual(ctx.exception.record_index, 0)
            path.write_bytes(header.encode("utf-8") + b"\xff\xfe\t0\t5\t1\n")
            with self.assertRaises(FormatError):
                ExpandedVocabulary.load(path)

    def test_overlap(self):
        first = build_expanded_vocab({"cat": 3, "dog": 2, "cow": 1}, self.subvocab, 3)
        second = build_expanded_vocab({"cat": 3, "dog": 2}, self.subvocab, 3)
        self.assertEqual(vocabulary_overlap(first, second), (2, 2 / 3))


class TestExpandHead(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(11)
        self.base = HeadMatrix(weights=rng.standard_normal((50, 8)),
                               bias=rng.standard_normal(50))
        subwords = [tuple(rng.choice(50, size=int(rng.integers(1, 5))).tolist())
                    for _ in range(20)]
        self.vocab = ExpandedVocabulary(terms=[f"t{i}" for i in range(20)],
                                        subwords_of=subwords, frequency=[1] * 20)

    def test_matches_accumulate_then_divide(self):
        expanded = expand_head(self.base, self.vocab)
        for row, pieces in enumerate(self.vocab.subwords_of):
            acc = np.zeros(8)
            bias = 0.0
            for piece in pieces:
                acc += self.base.weights[piece]
                bias += self.base.bias[piece]
            np.testing.assert_allclose(expanded.weights[row], acc / len(pieces),
                                       rtol=0, atol=1e-12)
            self.assertAlmostEqual(expanded.bias[row], bias / len(pieces), delta=1e-12)

    def test_single_piece_term_copies_row(self):
        vocab = ExpandedVocabulary(terms=["x"], subwords_of=[(7,)], frequency=[1])
        expanded = expand_head(self.base, vocab)
        np.testing.assert_array_equal(expanded.weights[0], self.base.weights[7])
        self.assertEqual(expanded.bias[0], self.base.bias[7])

    def test_linear(self):
        other = random_head(50, 8, seed=12)
        alpha, beta = 1.7, -0.3
        combined = HeadMatrix(weights=alpha * self.base.weights + beta * other.weights,
                              bias=alpha * self.base.bias + beta * other.bias)
        left = expand_head(combined, self.vocab)
        right_w = alpha * expand_head(self.base, self.vocab).weights \
            + beta * expand_head(other, self.vocab).weights
        np.testing.assert_allclose(left.weights, right_w, rtol=1e-10, atol=1e-12)

    def test_unrelated_rows_do_not_matter(self):
        used = {piece for pieces in self.vocab.subwords_of[:1] for piece in pieces}
        weights = self.base.weights.copy()
        for row in range(50):
            if row not in used:
                weights[row] = 1000.0
        changed = HeadMatrix(weights=weights, bias=self.base.bias)
        np.testing.assert_array_equal(expand_head(changed, self.vocab).weights[0],
                                      expand_head(self.base, self.vocab).weights[0])

    def test_base_row_count_checked(self):
        with self.assertRaises(InvalidInputError):
            expand_head(self.base, self.vocab, subvocab_size=51)

    def test_out_of_range_subword(self):
        vocab = ExpandedVocabulary(terms=["x"], subwords_of=[(50,)], frequency=[1])
        with self.assertRaises(InvalidInputError):
            expand_head(self.base, vocab)

    def test_head_file_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "head.bin"
            self.base.save(path)
            self.assertEqual(path.stat().st_size, 12 + 4 * (50 * 8 + 50))
            loaded = HeadMatrix.load(path)
        np.testing.assert_allclose(loaded.weights, self.base.weights, rtol=1e-6)
        np.testing.assert_allclose(loaded.bias, self.base.bias, rtol=1e-6)

    def test_truncated_head_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "head.bin"
            self.base.save(path)
            data = path.read_bytes()
            for payload in (data[:7], data[:-3]):
                path.write_bytes(payload)
                with self.assertRaises(FormatError):
                    HeadMatrix.load(path)


class TestSplitTrainValidation(unittest.TestCase):

    def test_disjoint_and_complete(self):
        titles = [f"title {i}" for i in range(1000)]
        train, valid = split_train_validation(titles, 0.1, seed=4)
        self.assertEqual(len(valid), 100)
        self.assertEqual(sorted(train + valid), sorted(titles))
        self.assertFalse(set(train) & set(valid))
        self.assertEqual(split_train_validation(titles, 0.1, seed=4), (train, valid))


if __name__ == "__main__":
    unittest.main()
