"""
Unit tests for logit and representation statistics
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from diagnostics import (ScoreAccumulator, collect_diagnostics, doc_score_stats, l0_std,
                         logit_score_std, non_neg_terms_stats, posting_length_std)
from errors import InvalidInputError
from sparse_encode import LogitMatrix, SparseVector, pool
from synthetic import random_sparse_vectors


def dense_oracle(rows, threshold, dim, ddof=0):
    """Two-pass per-index std over the indices present at least threshold times"""
    values = [[] for _ in range(dim)]
    for row in rows:
        for term_id, weight in row.entries.items():
            values[term_id].append(weight)
    stds = [np.std(v, ddof=ddof) for v in values if len(v) >= max(threshold, 1)]
    return (float(np.mean(stds)) if stds else None), len(stds)


class TestLogitScoreStd(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.rows = random_sparse_vectors(1000, dim=300, mean_l0=15, seed=1,
                                         term_distribution="zipf")

    def test_sparse_rows_match_dense_oracle(self):
        for threshold in (1, 5, 50):
            expected, count = dense_oracle(self.rows, threshold, 300)
            result = logit_score_std(self.rows, threshold=threshold)
            self.assertEqual(result.logit_cnt, count)
            self.assertAlmostEqual(result.std / expected, 1.0, delta=1e-9)

    def test_higher_threshold_keeps_fewer_indices(self):
        counts = [logit_score_std(self.rows, threshold=t).logit_cnt for t in (1, 5, 50)]
        self.assertEqual(counts, sorted(counts, reverse=True))

    def test_threshold_above_every_count(self):
        self.assertIsNone(logit_score_std(self.rows, threshold=10_000))

    def test_dense_rows_count_every_index(self):
        rows = np.random.default_rng(2).normal(size=(50, 12))
        result = logit_score_std(rows, threshold=1)
        self.assertEqual(result.logit_cnt, 12)
        self.assertAlmostEqual(result.std, float(rows.std(axis=0).mean()), delta=1e-12)

    def test_sample_convention(self):
        expected, _ = dense_oracle(self.rows, 5, 300, ddof=1)
        result = logit_score_std(self.rows, threshold=5, ddof=1)
        self.assertAlmostEqual(result.std / expected, 1.0, delta=1e-9)

    def test_empty_stream(self):
        with self.assertRaises(InvalidInputError):
            logit_score_std([])

    def test_merge_matches_single_pass(self):
        whole = ScoreAccumulator()
        first, second = ScoreAccumulator(), ScoreAccumulator()
        for i, row in enumerate(self.rows):
            whole.add_sparse(row.entries)
            (first if i < 400 else second).add_sparse(row.entries)
        merged = first.merge(second)
        np.testing.assert_array_equal(merged.count, whole.count)
        np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-12)
        np.testing.assert_allclose(merged.m2, whole.m2, rtol=1e-9, atol=1e-12)


class TestDocScoreStats(unittest.TestCase):

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(3)
        docs = [rng.uniform(0.0, 3.0, size=int(rng.integers(1, 300))) for _ in range(500)]
        for topk in (10, 100, "all"):
            means, stds = [], []
            for scores in docs:
                top = sorted(scores, reverse=True)
                top = top if topk == "all" else top[:topk]
                means.append(np.mean(top))
                stds.append(np.std(top))
            avg, std = doc_score_stats(docs, topk)
            self.assertAlmostEqual(avg, float(np.mean(means)), delta=1e-9)
            self.assertAlmostEqual(std, float(np.mean(stds)), delta=1e-9)

    def test_short_document_uses_all_scores(self):
        self.assertEqual(doc_score_stats([[1.0, 3.0]], 10), (2.0, 1.0))

    def test_empty_document_rejected(self):
        with self.assertRaises(InvalidInputError):
            doc_score_stats([[]], 10)

    def test_bad_topk(self):
        with self.assertRaises(InvalidInputError):
            doc_score_stats([[1.0]], 0)

    def test_no_documents(self):
        self.assertIsNone(doc_score_stats([], 10))


class TestCountStatistics(unittest.TestCase):

    def test_non_negative_terms(self):
        rows = np.random.default_rng(4).normal(size=(200, 40))
        counts = (rows >= 0).sum(axis=1)
        avg, std = non_neg_terms_stats(rows)
        self.assertAlmostEqual(avg, counts.mean())
        self.assertAlmostEqual(std, counts.std())

    def test_l0_std(self):
        vectors = [SparseVector({1: 1.0}), SparseVector({1: 1.0, 2: 1.0, 3: 1.0})]
        self.assertEqual(l0_std(vectors), 1.0)
        self.assertIsNone(l0_std([]))

    def test_posting_length_std(self):
        vectors = [SparseVector({1: 1.0, 2: 1.0}), SparseVector({1: 1.0}),
                   SparseVector({1: 1.0})]
        # lengths: term 1 -> 3, term 2 -> 1
        self.assertEqual(posting_length_std(vectors), 1.0)


class TestCollectDiagnostics(unittest.TestCase):

    def test_sparse_report(self):
        rows = random_sparse_vectors(300, dim=200, mean_l0=12, seed=5)
        report = collect_diagnostics(rows, "sparse", threshold=5)
        expected, count = dense_oracle(rows, 5, 200)
        self.assertEqual(report.logit_cnt, count)
        self.assertAlmostEqual(report.logit_score_std, expected, delta=1e-9)
        self.assertAlmostEqual(report.l0_std, l0_std(rows))
        self.assertIsNone(report.non_neg_terms_avg)
        row = report.table_row()
        self.assertIn("logit-score-std", row)
        self.assertEqual(set(row["doc-score-avg"]), {"10", "100", "all"})

    def test_logit_report(self):
        rng = np.random.default_rng(6)
        matrices = [LogitMatrix(rng.normal(size=(int(rng.integers(1, 6)), 30)), f"d{i}")
                    for i in range(40)]
        report = collect_diagnostics(matrices, "logit", threshold=1)
        stacked = np.concatenate([m.rows for m in matrices])
        self.assertEqual(report.appearance, "dense")
        self.assertEqual(report.logit_cnt, 30)
        self.assertAlmostEqual(report.logit_score_std, float(stacked.std(axis=0).mean()),
                               delta=1e-9)
        counts = (stacked >= 0).sum(axis=1)
        self.assertAlmostEqual(report.non_neg_terms_avg, counts.mean())
        self.assertAlmostEqual(report.l0_std, l0_std([pool(m) for m in matrices]))

    def test_empty_input(self):
        with self.assertRaises(InvalidInputError):
            collect_diagnostics([], "sparse")


if __name__ == "__main__":
    unittest.main()
