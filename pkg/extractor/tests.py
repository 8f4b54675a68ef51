import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from affect.emotion import EmotionPoint, normalize_av
from commons.exceptions import ManifestError, WindowError
from commons.testing import WorkspaceMixin
from corpus.generator import CorpusSpec, sample_clip
from extractor.cache import cached_features, read_feature_cache, write_feature_cache
from extractor.features import (
    FEATURE_DIM,
    HIST_BINS,
    RAW_DIM,
    FeatureStandardizer,
    PseudoExtractor,
    WindowConfig,
    extract_features,
    projection_matrix,
    raw_window_stats,
    window_bounds,
    window_count,
)
from metrics.statistics import pearson_r


def reference_stats(window, vocab_size):
    """Loop-based restatement of the per-window statistics."""
    n = len(window)
    half = vocab_size // 2
    high = sum(1 for token in window if token >= half) / n
    switches = sum(1 for i in range(1, n) if window[i] != window[i - 1]) / (n - 1) if n > 1 else 0.0
    mean_id = sum(window) / n / (vocab_size - 1)
    histogram = [0.0] * HIST_BINS
    for token in window:
        histogram[min(int(token) * HIST_BINS // vocab_size, HIST_BINS - 1)] += 1.0 / n
    return np.array([high, switches, mean_id] + histogram)


class WindowCountTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(window_count(2250, 375, 375), 6)
        self.assertEqual(window_count(40, 40, 40), 1)
        self.assertEqual(window_count(256, 32, 32), 8)

    def test_clip_shorter_than_window(self):
        with self.assertRaisesRegex(WindowError, "clip shorter than one window"):
            window_count(31, 32, 32)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            W = int(rng.integers(1, 64))
            S = int(rng.integers(W, 2 * W + 1))
            T = int(rng.integers(W, 600))
            starts = [start for start in range(0, T) if start % S == 0 and start + W <= T]
            self.assertEqual(window_count(T, W, S), len(starts))
            bounds = window_bounds(T, WindowConfig(window_tokens=W, stride_tokens=S))
            self.assertEqual([start for start, _ in bounds], starts)

    def test_overlapping_windows_are_rejected(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            WindowConfig(window_tokens=32, stride_tokens=16)
        self.assertIn("stride_tokens", ctx.exception.detail)


class ExtractorTests(SimpleTestCase):
    def setUp(self):
        self.extractor = PseudoExtractor(256)

    def test_projection_shape_and_rank(self):
        P = self.extractor.projection
        self.assertEqual(P.shape, (FEATURE_DIM, RAW_DIM))
        np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-12)
        self.assertEqual(np.linalg.matrix_rank(P), RAW_DIM)
        self.assertEqual(self.extractor.seed, 42)
        with self.assertRaises(ValueError):
            P[0, 0] = 1.0

    def test_projection_is_seeded(self):
        np.testing.assert_array_equal(projection_matrix(42)[0], self.extractor.projection)
        self.assertFalse(np.array_equal(projection_matrix(43)[0], self.extractor.projection))

    def test_constant_clip_has_no_switches(self):
        stats = self.extractor.raw_stats(np.full(256, 17))
        self.assertEqual(stats.shape, (8, RAW_DIM))
        np.testing.assert_array_equal(stats[:, 1], 0.0)

    def test_deterministic(self):
        tokens = sample_clip(EmotionPoint(4, 6), CorpusSpec(), 1)
        first = extract_features(tokens, WindowConfig())
        second = extract_features(tokens, WindowConfig())
        np.testing.assert_array_equal(first.features, second.features)
        self.assertEqual(first.n_windows, 8)
        self.assertEqual(first.extractor_seed, 42)

    def test_full_valence_windows(self):
        tokens = sample_clip(EmotionPoint(9, 9), CorpusSpec(), 5)
        stats = self.extractor.raw_stats(tokens)
        np.testing.assert_array_equal(stats[:, 0], 1.0)
        features = self.extractor.extract(tokens).features
        np.testing.assert_allclose(features, stats @ self.extractor.projection.T, atol=1e-12)

    def test_linear_in_independent_statistics(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            tokens = rng.integers(0, 256, size=256)
            expected = np.stack(
                [reference_stats(list(tokens[s:e]), 256) for s, e in window_bounds(256, WindowConfig())]
            )
            np.testing.assert_allclose(self.extractor.raw_stats(tokens), expected, atol=1e-12)
            np.testing.assert_allclose(
                self.extractor.extract(tokens).features,
                expected @ self.extractor.projection.T,
                atol=1e-10,
            )

    def test_raw_window_stats_single_token(self):
        stats = raw_window_stats(np.array([255]), 256)
        self.assertEqual(stats[0], 1.0)
        self.assertEqual(stats[1], 0.0)
        self.assertEqual(stats[2], 1.0)
        self.assertEqual(stats[3 + HIST_BINS - 1], 1.0)

    def test_affect_is_linearly_recoverable(self):
        rng = np.random.default_rng(9)
        spec = CorpusSpec()
        planted, rows = [], []
        for seed, (valence, arousal) in enumerate(rng.uniform(1, 9, size=(500, 2))):
            emotion = EmotionPoint(valence, arousal)
            planted.append(normalize_av(emotion).as_tuple())
            rows.append(self.extractor.extract(sample_clip(emotion, spec, seed)).features.mean(axis=0))
        planted = np.array(planted)
        design = np.column_stack([np.stack(rows), np.ones(len(rows))])
        coef, *_ = np.linalg.lstsq(design, planted, rcond=None)
        fitted = design @ coef
        self.assertGreaterEqual(pearson_r(planted[:, 0], fitted[:, 0]), 0.95)
        self.assertGreaterEqual(pearson_r(planted[:, 1], fitted[:, 1]), 0.95)

    def test_clip_too_short(self):
        with self.assertRaises(WindowError):
            self.extractor.extract(np.zeros(16, dtype=np.int64))


class StandardizerTests(SimpleTestCase):
    def test_fit_transform(self):
        rng = np.random.default_rng(4)
        features = rng.normal(3.0, 2.0, size=(50, 8, 32))
        standardizer = FeatureStandardizer.fit(features)
        flat = standardizer.transform(features).reshape(-1, 32)
        np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=1e-12)
        again = FeatureStandardizer.from_json(standardizer.to_json())
        np.testing.assert_array_equal(again.transform(features), standardizer.transform(features))

    def test_constant_dimension_is_left_centred(self):
        features = np.zeros((4, 2, 3))
        features[..., 0] = 7.0
        standardizer = FeatureStandardizer.fit(features)
        self.assertEqual(standardizer.std[0], 1.0)
        np.testing.assert_array_equal(standardizer.transform(features)[..., 0], 0.0)


class FeatureCacheTests(WorkspaceMixin, SimpleTestCase):
    def test_cache_round_trip(self):
        extractor = PseudoExtractor(256)
        tokens = sample_clip(EmotionPoint(2, 8), CorpusSpec(), 3)
        first = cached_features(self.workdir, "clip-a", extractor, tokens)
        second = cached_features(self.workdir, "clip-a", extractor, tokens)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(first, extractor.extract(tokens).features, rtol=1e-6, atol=1e-6)

    def test_truncated_cache(self):
        path = self.workdir / "x.f32"
        write_feature_cache(path, np.ones((8, 32)))
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaisesRegex(ManifestError, "8x32"):
            read_feature_cache(path)
