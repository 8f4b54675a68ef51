import json
import shutil

import jsonschema
import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from affect.emotion import NormalizedEmotion
from commons.exceptions import DegenerateInputError, EvaluationError, NumericError, ShapeError
from commons.testing import WorkspaceMixin, make_corpus
from corpus.estimator import PlantedEstimator
from corpus.manifest import MANIFEST_NAME, META_NAME
from metrics.evaluation import (
    MetricsReport,
    evaluate_system,
    load_report,
    write_comparison,
    write_report,
)
from metrics.schemas import COMPARISON_COLUMNS, SCATTER_COLUMNS
from metrics.statistics import frechet_distance, gaussian_fit, pearson_r, r_squared


def brute_force_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = (sum((a - mx) ** 2 for a in x) / n) ** 0.5
    sy = (sum((b - my) ** 2 for b in y) / n) ** 0.5
    return cov / (sx * sy)


class PearsonTests(SimpleTestCase):
    def test_examples(self):
        self.assertAlmostEqual(pearson_r([1, 2, 3], [2, 4, 6]), 1.0, delta=1e-12)
        self.assertAlmostEqual(pearson_r([1, 2, 3], [3, 2, 1]), -1.0, delta=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            x, y = rng.normal(size=50), rng.normal(size=50)
            self.assertAlmostEqual(pearson_r(x, y), brute_force_pearson(list(x), list(y)), delta=1e-10)

    def test_degenerate_and_malformed_input(self):
        with self.assertRaises(DegenerateInputError):
            pearson_r([1, 1, 1], [1, 2, 3])
        with self.assertRaises(ShapeError):
            pearson_r([1, 2, 3], [1, 2])
        with self.assertRaises(ShapeError):
            pearson_r([1], [1])

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        y_true, y_pred = rng.normal(size=40), rng.normal(size=40)
        self.assertAlmostEqual(pearson_r(y_true, 2.5 * y_pred + 3.0), pearson_r(y_true, y_pred), delta=1e-10)
        self.assertAlmostEqual(pearson_r(0.1 * y_true - 7.0, y_pred), pearson_r(y_true, y_pred), delta=1e-10)
        self.assertNotAlmostEqual(r_squared(y_true, 2.5 * y_pred + 3.0), r_squared(y_true, y_pred), delta=1e-3)

    def test_estimates_gaussian_correlation(self):
        rho, n = 0.6, 10_000
        rng = np.random.default_rng(2)
        x = rng.normal(size=n)
        y = rho * x + np.sqrt(1 - rho**2) * rng.normal(size=n)
        standard_error = (1 - rho**2) / np.sqrt(n)
        self.assertLess(abs(pearson_r(x, y) - rho), 3 * standard_error)


class RSquaredTests(SimpleTestCase):
    def test_examples(self):
        y = np.array([1.0, 2.0, 3.0])
        self.assertEqual(r_squared(y, y), 1.0)
        self.assertAlmostEqual(r_squared(y, np.full(3, y.mean())), 0.0, delta=1e-12)
        self.assertAlmostEqual(r_squared([1, 2, 3], [3, 3, 3]), -1.5, delta=1e-12)

    def test_never_above_one(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 20))
            self.assertLessEqual(r_squared(rng.normal(size=n), rng.normal(size=n)), 1.0)

    def test_constant_truth(self):
        with self.assertRaises(DegenerateInputError):
            r_squared([2, 2, 2], [1, 2, 3])


class FrechetDistanceTests(SimpleTestCase):
    def test_identical_sets(self):
        X = np.random.default_rng(4).normal(size=(40, 6))
        self.assertAlmostEqual(frechet_distance(X, X), 0.0, delta=1e-8)

    def test_univariate_closed_forms(self):
        # Population moments: [-1, 1] fits (0, 1), [0, 2] fits (1, 1), [-3, 3] fits (0, 3).
        self.assertAlmostEqual(frechet_distance([-1.0, 1.0], [0.0, 2.0], eps=0.0), 1.0, delta=1e-6)
        self.assertAlmostEqual(frechet_distance([-1.0, 1.0], [-3.0, 3.0], eps=0.0), 4.0, delta=1e-6)

    def test_symmetric_and_non_negative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            X = rng.normal(size=(30, 4))
            Y = rng.normal(loc=0.3, scale=1.5, size=(25, 4))
            forward = frechet_distance(X, Y)
            self.assertAlmostEqual(forward, frechet_distance(Y, X), delta=1e-8)
            self.assertGreaterEqual(forward, 0.0)

    def test_rank_deficient_sets(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 8))
        self.assertTrue(np.isfinite(frechet_distance(X, X + 0.1)))

    def test_errors(self):
        with self.assertRaises(ShapeError):
            frechet_distance(np.zeros((1, 3)), np.zeros((4, 3)))
        with self.assertRaises(ShapeError):
            frechet_distance(np.ones((4, 3)), np.ones((4, 2)))
        bad = np.ones((4, 3))
        bad[2, 1] = np.nan
        with self.assertRaises(NumericError):
            frechet_distance(bad, np.ones((4, 3)))

    def test_gaussian_fit_regularises(self):
        mu, sigma = gaussian_fit(np.ones((3, 2)), eps=1e-3)
        np.testing.assert_array_equal(mu, [1.0, 1.0])
        np.testing.assert_allclose(sigma, 1e-3 * np.eye(2))


def a_report(name="system", **overrides):
    values = {
        "system_name": name,
        "fd": 0.25,
        "r_a": 0.5,
        "r_v": 0.75,
        "r2_a": -0.04,
        "r2_v": 0.5,
        "ccc_a": 0.4,
        "ccc_v": 0.7,
        "n_clips": 10,
        "seed": 0,
        **overrides,
    }
    return MetricsReport(**values)


class ReportTests(WorkspaceMixin, SimpleTestCase):
    def test_json_round_trip(self):
        report = a_report(fd=1.0 / 3.0)
        path = write_report(self.workdir / "r.json", report)
        self.assertEqual(load_report(path), report)
        self.assertEqual(sorted(json.loads(path.read_text())), sorted(report.to_json()))

    def test_schema_rejects_out_of_range_and_unknown_fields(self):
        with self.assertRaises(jsonschema.ValidationError):
            MetricsReport.from_json({**a_report().to_json(), "r_a": 1.5})
        with self.assertRaises(jsonschema.ValidationError):
            MetricsReport.from_json({**a_report().to_json(), "ovl": 3.0})
        with self.assertRaises(jsonschema.ValidationError):
            write_report(self.workdir / "r.json", a_report(fd=-1.0))
        self.assertFalse((self.workdir / "r.json").exists())

    def test_load_report_errors(self):
        path = self.workdir / "bad.json"
        path.write_text("{not json")
        with self.assertRaisesRegex(EvaluationError, "Cannot read report"):
            load_report(path)
        path.write_text(json.dumps({"system_name": "x"}))
        with self.assertRaisesRegex(EvaluationError, "schema"):
            load_report(path)

    def test_comparison_outputs(self):
        reports = [a_report("vanilla"), a_report("lara", fd=0.1)]
        table, written = write_comparison(reports, self.workdir / "t.csv", self.workdir / "t.pdf", title="Runs")
        self.assertEqual(len(written), 2)
        frame = pd.read_csv(self.workdir / "t.csv")
        self.assertEqual(list(frame.columns), COMPARISON_COLUMNS)
        self.assertEqual(list(frame["system_name"]), ["vanilla", "lara"])
        self.assertEqual(list(frame["fd"]), [0.25, 0.1])
        self.assertTrue((self.workdir / "t.pdf").read_bytes().startswith(b"%PDF"))
        self.assertEqual(table["title"], "Runs")

    def test_nothing_to_compare(self):
        with self.assertRaises(EvaluationError):
            write_comparison([], self.workdir / "t.csv")


class FixedPredictor:
    extractor_seed = 7

    def predict_tokens(self, tokens):
        return NormalizedEmotion(0.0, 0.0)


class EvaluateSystemTests(WorkspaceMixin, SimpleTestCase):
    def _set_meta(self, root, **changes):
        path = root / META_NAME
        path.write_text(json.dumps({**json.loads(path.read_text()), **changes}))

    def test_oracle_on_the_reference_set(self):
        root = self.workdir / "ref"
        make_corpus(root, vocab_size=256, clip_len=256, n_clips=200, seed=5)
        report, scatter = evaluate_system(
            root,
            PlantedEstimator(256),
            root,
            report_path=self.workdir / "report.json",
            scatter_path=self.workdir / "scatter.csv",
        )
        self.assertAlmostEqual(report.fd, 0.0, delta=1e-8)
        self.assertGreaterEqual(report.r_v, 0.95)
        self.assertGreaterEqual(report.r_a, 0.95)
        self.assertEqual(report.n_clips, 200)
        self.assertEqual(report.seed, 5)
        self.assertEqual(report.system_name, "ref")
        self.assertEqual(load_report(self.workdir / "report.json"), report)

        frame = pd.read_csv(self.workdir / "scatter.csv")
        self.assertEqual(list(frame.columns), SCATTER_COLUMNS)
        self.assertEqual(len(frame), len(scatter))
        np.testing.assert_array_equal(frame["v_pred"].to_numpy(), scatter.column("v_pred"))

    def test_empty_generated_dir(self):
        reference = self.workdir / "ref"
        make_corpus(reference)
        empty = self.workdir / "empty"
        empty.mkdir()
        shutil.copy(reference / META_NAME, empty / META_NAME)
        (empty / MANIFEST_NAME).write_text("")
        with self.assertRaisesRegex(EvaluationError, "No evaluable clips"):
            evaluate_system(empty, PlantedEstimator(16), reference, report_path=self.workdir / "r.json")
        self.assertFalse((self.workdir / "r.json").exists())

    def test_unreadable_clips_are_excluded_and_counted(self):
        root = self.workdir / "gen"
        manifest = make_corpus(root, n_clips=24)
        records = list(manifest)
        records[0].token_path.unlink()
        records[1].token_path.unlink()
        with open(root / MANIFEST_NAME, "a") as fh:
            fh.write(json.dumps({"clip_id": "bad", "valence": 12.0, "arousal": 5.0, "tokens": "x", "seed": 0}) + "\n")
            fh.write("5\n")
        with self.assertLogs("metrics.evaluation", "WARNING") as logs:
            report, scatter = evaluate_system(root, PlantedEstimator(16), make_corpus(self.workdir / "ref"))
        self.assertEqual(report.n_clips, 22)
        self.assertEqual(len(scatter), 22)
        self.assertTrue(any("4 clip(s) excluded" in line for line in logs.output))

    def test_extractor_seed_mismatch(self):
        root = self.workdir / "gen"
        make_corpus(root)
        self._set_meta(root, extractor_seed=42)
        with self.assertRaisesRegex(EvaluationError, "seed mismatch"):
            evaluate_system(root, FixedPredictor(), root)

    def test_vocabulary_mismatch(self):
        root = self.workdir / "gen"
        make_corpus(root)
        reference = make_corpus(self.workdir / "ref", vocab_size=32)
        with self.assertRaisesRegex(EvaluationError, "Vocabulary sizes differ"):
            evaluate_system(root, PlantedEstimator(16), reference)

    def test_constant_predictions_cannot_be_scored(self):
        root = self.workdir / "gen"
        make_corpus(root)
        self._set_meta(root, extractor_seed=7)
        with self.assertRaisesRegex(EvaluationError, "valence"):
            evaluate_system(root, FixedPredictor(), root)
