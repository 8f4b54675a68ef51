import json
from collections import Counter
from itertools import product

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from affect.emotion import GRID_VALUES, EmotionPoint, normalize_av
from commons.exceptions import ManifestError
from commons.testing import WorkspaceMixin, make_corpus
from corpus.estimator import PlantedEstimator, estimate_emotion, high_fraction, switch_rate
from corpus.generator import CorpusGenerator, CorpusSpec, generate_corpus, sample_clip
from corpus.manifest import MANIFEST_NAME, read_manifest, write_tokens
from metrics.statistics import pearson_r


class SampleClipTests(SimpleTestCase):
    spec = CorpusSpec(vocab_size=256, clip_len=256, n_clips=1)

    def test_full_valence_only_uses_the_high_half(self):
        for seed in range(5):
            tokens = sample_clip(EmotionPoint(9, 9), self.spec, seed)
            self.assertEqual(high_fraction(tokens, 256), 1.0)
            self.assertTrue(np.all(tokens < 256))

    def test_low_valence_only_uses_the_low_half(self):
        tokens = sample_clip(EmotionPoint(1, 5), self.spec, 7)
        self.assertEqual(high_fraction(tokens, 256), 0.0)

    def test_deterministic(self):
        first = sample_clip(EmotionPoint(3.3, 6.1), self.spec, 42)
        second = sample_clip(EmotionPoint(3.3, 6.1), self.spec, 42)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(first.shape, (256,))
        self.assertEqual(first.dtype, np.int64)

    def test_switch_count_matches_binomial_expectation(self):
        # Arousal 1 -> p_switch = 0.05. With valence 5 a fresh draw repeats the
        # previous token with probability 0.5 / half, which hides that switch.
        T = self.spec.clip_len
        p_switch = 0.05
        p_repeat = 0.5 / self.spec.half
        counts = np.array(
            [np.sum(np.diff(sample_clip(EmotionPoint(5, 1), self.spec, seed)) != 0) for seed in range(1000)]
        )
        p_visible = p_switch * (1.0 - p_repeat)
        expected = p_visible * (T - 1)
        standard_error = np.sqrt((T - 1) * p_visible * (1 - p_visible) / len(counts))
        self.assertLess(abs(counts.mean() - expected), 3 * standard_error)


class GenerateCorpusTests(WorkspaceMixin, SimpleTestCase):
    def test_counts(self):
        manifest = make_corpus(self.workdir / "c", n_clips=10)
        self.assertEqual(len(manifest), 10)
        self.assertEqual(len(list((self.workdir / "c" / "tokens").iterdir())), 10)
        for record in manifest:
            tokens = manifest.load_tokens(record)
            self.assertEqual(tokens.shape, (32,))
            self.assertTrue(np.all((tokens >= 0) & (tokens < 16)))

    def test_same_spec_same_bytes(self):
        spec = CorpusSpec(vocab_size=16, clip_len=32, n_clips=8, seed=3)
        generate_corpus(spec, self.workdir / "a")
        generate_corpus(spec, self.workdir / "b")
        a, b = self.workdir / "a", self.workdir / "b"
        self.assertEqual((a / MANIFEST_NAME).read_text(), (b / MANIFEST_NAME).read_text())
        for path in (a / "tokens").iterdir():
            self.assertEqual(path.read_bytes(), (b / "tokens" / path.name).read_bytes())

    def test_different_seeds_differ(self):
        one = make_corpus(self.workdir / "a", seed=1)
        two = make_corpus(self.workdir / "b", seed=2)
        self.assertNotEqual(
            [r.emotion for r in one],
            [r.emotion for r in two],
        )

    def test_uniform_grid_covers_every_point_once(self):
        manifest = make_corpus(self.workdir / "g", n_clips=81, emotion_sampling="uniform_grid")
        seen = Counter((r.emotion.valence, r.emotion.arousal) for r in manifest)
        self.assertEqual(set(seen), {(float(v), float(a)) for v, a in product(GRID_VALUES, GRID_VALUES)})
        self.assertEqual(set(seen.values()), {1})

    def test_clip_ids_are_unique(self):
        records = CorpusGenerator(CorpusSpec(n_clips=50)).generate_records(self.workdir)
        self.assertEqual(len({r.clip_id for r in records}), 50)

    def test_spec_validation(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            CorpusSpec(vocab_size=15)
        self.assertIn("vocab_size", ctx.exception.detail)
        with self.assertRaises(serializers.ValidationError):
            CorpusSpec(clip_len=1)
        with self.assertRaises(serializers.ValidationError):
            CorpusSpec(emotion_sampling="gaussian")


class ManifestTests(WorkspaceMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.root = self.workdir / "c"
        self.manifest = make_corpus(self.root, n_clips=4)

    def _records(self):
        return [json.loads(line) for line in (self.root / MANIFEST_NAME).read_text().splitlines()]

    def _rewrite(self, records):
        (self.root / MANIFEST_NAME).write_text("".join(json.dumps(r) + "\n" for r in records))

    def test_records_round_trip(self):
        again = read_manifest(self.root / MANIFEST_NAME)
        self.assertEqual([r.clip_id for r in again], [r.clip_id for r in self.manifest])
        self.assertEqual(again.vocab_size, 16)
        self.assertEqual(again.clip_len, 32)

    def test_duplicate_clip_id(self):
        records = self._records()
        records[1]["clip_id"] = records[0]["clip_id"]
        self._rewrite(records)
        with self.assertRaisesRegex(ManifestError, "repeats clip id"):
            read_manifest(self.root)

    def test_missing_token_file(self):
        (self.root / self._records()[2]["tokens"]).unlink()
        with self.assertRaisesRegex(ManifestError, "does not exist"):
            read_manifest(self.root)

    def test_short_token_file(self):
        write_tokens(self.root / self._records()[0]["tokens"], np.zeros(31, dtype=np.int64))
        with self.assertRaisesRegex(ManifestError, "expected 32"):
            read_manifest(self.root)

    def test_out_of_vocabulary_token(self):
        write_tokens(self.root / self._records()[0]["tokens"], np.full(32, 16))
        with self.assertRaisesRegex(ManifestError, "outside the vocabulary"):
            read_manifest(self.root)

    def test_lenient_read_collects_bad_records(self):
        records = self._records()
        records[3]["valence"] = 12.0
        del records[1]["seed"]
        self._rewrite(records)
        with self.assertRaises(ManifestError):
            read_manifest(self.root)
        lenient = read_manifest(self.root, strict=False)
        self.assertEqual(len(lenient), 2)
        self.assertEqual([line for line, _ in lenient.rejected], [2, 4])

    def test_json_lines_that_are_not_objects(self):
        with open(self.root / MANIFEST_NAME, "a") as fh:
            fh.write("5\nnull\n[1, 2]\n")
        with self.assertRaisesRegex(ManifestError, "not a valid clip record"):
            read_manifest(self.root)
        lenient = read_manifest(self.root, strict=False)
        self.assertEqual(len(lenient), len(self.manifest))
        self.assertEqual([line for line, _ in lenient.rejected], [5, 6, 7])

    def test_missing_directory(self):
        with self.assertRaisesRegex(ManifestError, "nowhere"):
            read_manifest(self.workdir / "nowhere")


class EstimatorTests(SimpleTestCase):
    def test_rates(self):
        tokens = np.array([1, 1, 9, 9, 9, 2])
        self.assertEqual(switch_rate(tokens), 2 / 5)
        self.assertEqual(high_fraction(tokens, 16), 3 / 6)

    def test_planted_emotion_is_recoverable(self):
        spec = CorpusSpec(vocab_size=256, clip_len=256, n_clips=1)
        rng = np.random.default_rng(0)
        planted, estimated = [], []
        for seed, (valence, arousal) in enumerate(rng.uniform(1, 9, size=(500, 2))):
            emotion = EmotionPoint(valence, arousal)
            planted.append(normalize_av(emotion).as_tuple())
            estimated.append(estimate_emotion(sample_clip(emotion, spec, seed), 256).as_tuple())
        planted, estimated = np.array(planted), np.array(estimated)
        self.assertGreaterEqual(pearson_r(planted[:, 0], estimated[:, 0]), 0.95)
        self.assertGreaterEqual(pearson_r(planted[:, 1], estimated[:, 1]), 0.95)

    def test_planted_estimator_interface(self):
        estimator = PlantedEstimator(16)
        self.assertIsNone(estimator.extractor_seed)
        prediction = estimator.predict_tokens(np.full(32, 15))
        self.assertEqual(prediction.v_n, 1.0)
        self.assertEqual(prediction.a_n, -1.0)
