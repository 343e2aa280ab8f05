"""
Tests for settings loading, logging setup and record I/O
"""

import json
import logging
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from pydantic import ValidationError

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from errors import InvalidInputError, RecordReadError
from log_setup import configure_logging
from settings import SparseForgeSettings, load_settings
from sparse_encode import LogitMatrix, SparseVector
from sparse_io import (read_logit_matrices, read_trec_run, read_vectors, round_weight,
                       vector_to_json, write_json_report, write_logit_matrices, write_trec_run,
                       write_vectors)


class TestSettings(unittest.TestCase):

    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=True):
            settings = SparseForgeSettings(_env_file=None)
        self.assertEqual(settings.mask_ratio, 0.15)
        self.assertEqual(settings.query_top_k, 1000)
        self.assertEqual(settings.doc_top_k, 2000)
        self.assertEqual(settings.lambda_j, 5.0)
        self.assertEqual(settings.std_convention, "population")

    def test_environment_override(self):
        with patch.dict(os.environ, {"SPARSEFORGE_SEED": "7",
                                     "SPARSEFORGE_STD_CONVENTION": "sample"}):
            settings = load_settings()
        self.assertEqual(settings.seed, 7)
        self.assertEqual(settings.std_convention, "sample")

    def test_yaml_file_and_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.yaml"
            path.write_text("workers: 3\nlog_level: DEBUG\ncase_fold: true\n", encoding="utf-8")
            settings = load_settings(path, workers=5, log_level=None)
        self.assertEqual(settings.workers, 5)
        self.assertEqual(settings.log_level, "DEBUG")
        self.assertTrue(settings.case_fold)

    def test_bad_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.yaml"
            path.write_text("- just\n- a list\n", encoding="utf-8")
            with self.assertRaises(InvalidInputError):
                load_settings(path)
        with self.assertRaises(InvalidInputError):
            load_settings(Path("/nonexistent/config.yaml"))

    def test_probabilities_must_sum_to_one(self):
        with self.assertRaises(ValidationError):
            load_settings(mask_token_prob=0.5)


class TestLogging(unittest.TestCase):

    def test_file_handler(self):
        with tempfile.TemporaryDirectory() as tmp:
            log_file = Path(tmp) / "logs" / "run.log"
            configure_logging("INFO", json_logs=True, log_file=log_file)
            try:
                import structlog
                structlog.get_logger("test").info("hello_event", answer=42)
                for handler in logging.getLogger().handlers:
                    handler.flush()
                record = json.loads(log_file.read_text(encoding="utf-8").splitlines()[-1])
                self.assertEqual(record["event"], "hello_event")
                self.assertEqual(record["answer"], 42)
            finally:
                for handler in list(logging.getLogger().handlers):
                    handler.close()
                configure_logging("WARNING")


class TestRecordIO(unittest.TestCase):

    def test_significant_digits(self):
        self.assertEqual(round_weight(1.23456789), 1.23457)
        self.assertEqual(round_weight(0.000123456789), 0.000123457)
        line = vector_to_json(SparseVector({3: 2.0, 1: 0.5}, "d1"))
        self.assertEqual(line, '{"id":"d1","v":{"1":0.5,"3":2.0}}')

    def test_vectors_round_trip(self):
        vectors = [SparseVector({1: 0.25, 7: 3.5}, "a"), SparseVector({}, "b")]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vectors.jsonl"
            self.assertEqual(write_vectors(vectors, path), 2)
            reread = list(read_vectors(path))
        self.assertEqual([(v.source_id, v.entries) for v in reread],
                         [(v.source_id, v.entries) for v in vectors])

    def test_bad_record_reports_index(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vectors.jsonl"
            path.write_text('{"id":"a","v":{"1":1.0}}\n{"id":"b","v":{"2":-1.0}}\n',
                            encoding="utf-8")
            with self.assertRaises(RecordReadError) as ctx:
                list(read_vectors(path))
        self.assertEqual(ctx.exception.record_index, 1)

    def test_missing_file(self):
        with self.assertRaises(RecordReadError):
            list(read_vectors("/nonexistent/vectors.jsonl"))

    def test_logit_matrices(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "logits.jsonl"
            write_logit_matrices([LogitMatrix([[1.0, -2.0], [0.5, 0.0]], "d1")], path)
            (matrix,) = list(read_logit_matrices(path))
        self.assertEqual(matrix.source_id, "d1")
        self.assertEqual(matrix.rows.tolist(), [[1.0, -2.0], [0.5, 0.0]])

    def test_trec_run(self):
        run = {"q2": [("d9", 3.25), ("d1", 1.0)], "q1": [("d4", 0.5)]}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.trec"
            self.assertEqual(write_trec_run(run, path, tag="t"), 3)
            lines = path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(read_trec_run(path), run)
        self.assertEqual(lines[0], "q2 Q0 d9 1 3.25 t")

    def test_json_report_keeps_key_order(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.json"
            write_json_report({"qk": 5, "dk": 10, "FLOPS": 0.5}, path)
            text = path.read_text(encoding="utf-8")
        self.assertEqual(list(json.loads(text)), ["qk", "dk", "FLOPS"])
        self.assertTrue(text.endswith("}\n"))


if __name__ == "__main__":
    unittest.main()
