import json

import numpy as np
import torch
from django.test import SimpleTestCase
from rest_framework import serializers
from torch.autograd import gradcheck

from affect.emotion import normalize_av
from commons.exceptions import DegenerateInputError, NumericError, WindowError
from commons.testing import WorkspaceMixin, make_corpus, slow
from corpus.manifest import MANIFEST_NAME, read_manifest
from extractor.features import FeatureSequence, WindowConfig
from metrics.statistics import pearson_r
from predictor.head import RegressionHead, aggregate, pool_window, predict_clip, predict_window
from predictor.losses import ccc, ccc_loss
from predictor.training import PredictorConfig, load_predictor, save_predictor, train_predictor


class PoolWindowTests(SimpleTestCase):
    def test_examples(self):
        np.testing.assert_array_equal(pool_window(np.full((4, 3), 2.5)), [2.5, 2.5, 2.5])
        np.testing.assert_array_equal(pool_window([[0, 0], [2, 2]]), [1.0, 1.0])

    def test_matches_column_means(self):
        segment = np.random.default_rng(0).normal(size=(3, 4))
        expected = [sum(segment[i, j] for i in range(3)) / 3 for j in range(4)]
        np.testing.assert_allclose(pool_window(segment), expected, atol=1e-12)

    def test_empty_segment(self):
        with self.assertRaises(WindowError):
            pool_window(np.zeros((0, 4)))


class RegressionHeadTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_zero_weights_predict_the_centre(self):
        head = RegressionHead(32)
        for param in head.parameters():
            torch.nn.init.zeros_(param)
        self.assertEqual(predict_window(np.ones(32), head), (0.0, 0.0))

    def test_output_has_two_values(self):
        head = RegressionHead(8)
        self.assertEqual(len(predict_window(np.random.default_rng(1).normal(size=8), head)), 2)

    def test_non_finite_parameters(self):
        head = RegressionHead(8)
        with torch.no_grad():
            head.mlp[0].bias[3] = float("inf")
        with self.assertRaisesRegex(NumericError, "mlp.0.bias"):
            predict_window(np.zeros(8), head)

    def test_gradcheck(self):
        head = RegressionHead(6, hidden_dims=(5, 4, 3)).double()
        x = torch.randn(2, 6, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(lambda v: head(v).sum(), (x,), eps=1e-5, atol=1e-8, rtol=1e-4))

    def test_weight_gradients_match_finite_differences(self):
        head = RegressionHead(6, hidden_dims=(5, 4, 3)).double()
        x = torch.randn(3, 6, dtype=torch.float64)
        head(x).sum().backward()
        for name, param in head.named_parameters():
            flat, grad = param.data.view(-1), param.grad.view(-1)
            index = int(torch.argmax(grad.abs()))
            original = float(flat[index])
            flat[index] = original + 1e-5
            plus = float(head(x).sum())
            flat[index] = original - 1e-5
            minus = float(head(x).sum())
            flat[index] = original
            numeric = (plus - minus) / 2e-5
            analytic = float(grad[index])
            self.assertLess(abs(numeric - analytic), 1e-4 * max(abs(analytic), 1e-6) + 1e-9, name)


class AggregateTests(SimpleTestCase):
    def test_constant_windows(self):
        prediction = aggregate([(0.2, 0.4)] * 5)
        self.assertAlmostEqual(prediction.final.v_n, 0.2, delta=1e-12)
        self.assertAlmostEqual(prediction.final.a_n, 0.4, delta=1e-12)

    def test_mean_of_two_windows(self):
        prediction = aggregate([(0.2, 0.4), (0.4, 0.8)])
        self.assertAlmostEqual(prediction.final.v_n, 0.3, delta=1e-12)
        self.assertAlmostEqual(prediction.final.a_n, 0.6, delta=1e-12)
        self.assertAlmostEqual(prediction.final_raw.valence, 6.2, delta=1e-12)
        self.assertAlmostEqual(prediction.final_raw.arousal, 7.4, delta=1e-12)

    def test_single_window(self):
        prediction = aggregate([(-0.5, 0.25)])
        self.assertEqual(prediction.final.as_tuple(), (-0.5, 0.25))

    def test_final_is_the_clamped_mean(self):
        prediction = aggregate([(1.5, -0.2), (1.3, -3.0)])
        self.assertAlmostEqual(prediction.mean[0], 1.4, delta=1e-12)
        self.assertEqual(prediction.final.v_n, 1.0)
        self.assertEqual(prediction.final.a_n, -1.0)
        self.assertEqual(prediction.final_raw.valence, 9.0)

    def test_no_windows(self):
        with self.assertRaises(WindowError):
            aggregate(np.zeros((0, 2)))

    def test_duplicated_windows_leave_the_prediction_unchanged(self):
        torch.manual_seed(2)
        head = RegressionHead(32)
        features = np.random.default_rng(3).normal(size=(4, 32))
        once = predict_clip(FeatureSequence(features, WindowConfig(), 42), head)
        twice = predict_clip(FeatureSequence(np.repeat(features, 2, axis=0), WindowConfig(), 42), head)
        np.testing.assert_allclose(once.mean, twice.mean, atol=1e-7)
        np.testing.assert_allclose(once.mean, np.mean(once.windows, axis=0), atol=1e-12)


class ConcordanceTests(SimpleTestCase):
    def test_examples(self):
        x = np.array([0.3, -1.2, 2.0, 0.7])
        self.assertAlmostEqual(ccc(x, x), 1.0, delta=1e-12)
        self.assertAlmostEqual(ccc([1, 2, 3], [3, 2, 1]), -1.0, delta=1e-12)

    def test_constant_sequence(self):
        with self.assertRaises(DegenerateInputError):
            ccc([2, 2, 2], [1, 2, 3])
        with self.assertRaises(DegenerateInputError):
            ccc([1, 2, 3], [0, 0, 0])

    def test_bounded_by_pearson_and_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 30))
            x = rng.normal(size=n)
            y = rng.normal(loc=rng.normal(), scale=rng.uniform(0.1, 3.0), size=n) + rng.uniform(-1, 1) * x
            value = ccc(x, y)
            self.assertLessEqual(abs(value), abs(pearson_r(x, y)) + 1e-12)
            self.assertAlmostEqual(value, ccc(y, x), delta=1e-12)

    def test_loss_matches_the_coefficient(self):
        rng = np.random.default_rng(1)
        pred, target = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
        expected = 1.0 - (ccc(pred[:, 0], target[:, 0]) + ccc(pred[:, 1], target[:, 1])) / 2.0
        got = ccc_loss(torch.tensor(pred), torch.tensor(target))
        self.assertAlmostEqual(float(got), expected, delta=1e-12)

    def test_loss_gradcheck(self):
        torch.manual_seed(4)
        pred = torch.randn(8, 2, dtype=torch.float64, requires_grad=True)
        target = torch.randn(8, 2, dtype=torch.float64)
        self.assertTrue(gradcheck(lambda p: ccc_loss(p, target), (pred,), eps=1e-5, atol=1e-8, rtol=1e-4))

    def test_loss_rejects_constant_targets(self):
        target = torch.tensor([[0.5, 0.5], [0.5, -0.5], [0.5, 0.0]])
        with self.assertRaises(DegenerateInputError):
            ccc_loss(torch.randn(3, 2), target)


class PredictorTrainingTests(WorkspaceMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.manifest = make_corpus(self.workdir / "c", n_clips=120)
        self.cfg = PredictorConfig(lr=1e-3, batch_size=16, max_steps=60, eval_every=20, val_clips=20)

    def test_log_and_metadata(self):
        predictor, log = train_predictor(self.manifest, self.cfg)
        self.assertEqual(log.values("step"), [20, 40, 60])
        self.assertIn(predictor.meta["best_step"], (20, 40, 60))
        self.assertEqual(predictor.extractor_seed, 42)
        for value in log.values("loss"):
            self.assertTrue(np.isfinite(value))

    def test_identical_seeds_give_identical_parameters(self):
        first, _ = train_predictor(self.manifest, self.cfg)
        second, _ = train_predictor(self.manifest, self.cfg)
        for (name, a), (_, b) in zip(first.head.named_parameters(), second.head.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

    def test_mse_variant(self):
        cfg = PredictorConfig(loss="mse", lr=1e-3, batch_size=16, max_steps=20, eval_every=10, val_clips=20)
        predictor, log = train_predictor(self.manifest, cfg)
        self.assertEqual(predictor.meta["config"]["loss"], "mse")
        self.assertEqual(len(log.values("step")), 2)

    def test_save_and_load(self):
        predictor, log = train_predictor(self.manifest, self.cfg)
        path = save_predictor(self.workdir / "predictor.ckpt", predictor, log)
        loaded = load_predictor(path)
        self.assertEqual(loaded.meta, predictor.meta)
        for record in list(self.manifest)[:5]:
            tokens = self.manifest.load_tokens(record)
            self.assertEqual(loaded.predict_tokens(tokens), predictor.predict_tokens(tokens))

    def test_constant_targets_skip_every_batch(self):
        path = self.workdir / "c" / MANIFEST_NAME
        lines = []
        for line in path.read_text().splitlines():
            record = json.loads(line)
            record["valence"], record["arousal"] = 5.0, 5.0
            lines.append(json.dumps(record))
        path.write_text("".join(line + "\n" for line in lines))
        cfg = PredictorConfig(batch_size=16, max_steps=5, eval_every=5, val_clips=20)
        with self.assertLogs("predictor.training", "WARNING") as logs:
            predictor, log = train_predictor(read_manifest(self.workdir / "c"), cfg)
        self.assertEqual(len(logs.records), 5)
        self.assertEqual(log.records, [])
        self.assertEqual(predictor.meta["best_step"], 0)

    def test_holdout_must_leave_training_clips(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            train_predictor(self.manifest, PredictorConfig(val_clips=120))
        self.assertIn("val_clips", ctx.exception.detail)

    def test_config_validation(self):
        with self.assertRaises(serializers.ValidationError):
            PredictorConfig(loss="huber")
        with self.assertRaises(serializers.ValidationError):
            PredictorConfig(lr=0.0)


class PredictorAcceptanceTests(WorkspaceMixin, SimpleTestCase):
    def held_out_predictions(self, cfg, seed):
        manifest = make_corpus(self.workdir / f"train-{seed}", vocab_size=256, clip_len=256, n_clips=2000, seed=seed)
        held_out = make_corpus(self.workdir / f"test-{seed}", vocab_size=256, clip_len=256, n_clips=400, seed=seed + 100)
        predictor, _ = train_predictor(manifest, cfg)
        truth = np.array([normalize_av(r.emotion).as_tuple() for r in held_out])
        pred = np.array([predictor.predict_tokens(held_out.load_tokens(r)).as_tuple() for r in held_out])
        return truth, pred

    @slow
    def test_held_out_concordance_on_three_seeds(self):
        for seed in range(3):
            truth, pred = self.held_out_predictions(PredictorConfig(val_clips=200, seed=seed), seed)
            self.assertGreaterEqual(ccc(truth[:, 0], pred[:, 0]), 0.8, seed)
            self.assertGreaterEqual(ccc(truth[:, 1], pred[:, 1]), 0.8, seed)

    @slow
    def test_mean_squared_error_variant_correlates(self):
        truth, pred = self.held_out_predictions(PredictorConfig(loss="mse", val_clips=200), 0)
        self.assertGreaterEqual(pearson_r(truth[:, 0], pred[:, 0]), 0.8)
        self.assertGreaterEqual(pearson_r(truth[:, 1], pred[:, 1]), 0.8)
