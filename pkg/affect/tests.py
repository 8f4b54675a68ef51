import math
from itertools import product

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from affect.emotion import (
    GRID_VALUES,
    EmotionPoint,
    GridPoint,
    NormalizedEmotion,
    clamp_normalized,
    denormalize_av,
    normalize_av,
    quantize_to_grid,
)


class NormalizeTests(SimpleTestCase):
    def test_known_points(self):
        self.assertEqual(normalize_av(EmotionPoint(1, 1)).as_tuple(), (-1.0, -1.0))
        self.assertEqual(normalize_av(EmotionPoint(5, 5)).as_tuple(), (0.0, 0.0))
        self.assertEqual(normalize_av(EmotionPoint(9, 3)).as_tuple(), (1.0, -0.5))

    def test_denormalize_known_points(self):
        self.assertEqual(denormalize_av(NormalizedEmotion(0, 0)), EmotionPoint(5.0, 5.0))
        self.assertEqual(denormalize_av(NormalizedEmotion(-1, -1)), EmotionPoint(1.0, 1.0))

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for v_n, a_n in rng.uniform(-1, 1, size=(200, 2)):
            back = normalize_av(denormalize_av(NormalizedEmotion(v_n, a_n)))
            self.assertAlmostEqual(back.v_n, v_n, delta=1e-12)
            self.assertAlmostEqual(back.a_n, a_n, delta=1e-12)
        for valence, arousal in rng.uniform(1, 9, size=(200, 2)):
            back = denormalize_av(normalize_av(EmotionPoint(valence, arousal)))
            self.assertAlmostEqual(back.valence, valence, delta=1e-12)
            self.assertAlmostEqual(back.arousal, arousal, delta=1e-12)

    def test_out_of_range_names_the_field(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            EmotionPoint(5.0, 9.5)
        self.assertIn("arousal", ctx.exception.detail)

        with self.assertRaises(serializers.ValidationError) as ctx:
            EmotionPoint(0.0, 5.0)
        self.assertIn("valence", ctx.exception.detail)

        with self.assertRaises(serializers.ValidationError) as ctx:
            NormalizedEmotion(1.5, 0.0)
        self.assertIn("v_n", ctx.exception.detail)

    def test_non_finite_is_rejected(self):
        with self.assertRaises(serializers.ValidationError):
            EmotionPoint(math.nan, 5.0)
        with self.assertRaises(serializers.ValidationError):
            EmotionPoint("5", 5.0)

    def test_clamp(self):
        self.assertEqual(clamp_normalized(1.7, -3.0).as_tuple(), (1.0, -1.0))
        self.assertEqual(clamp_normalized(0.25, -0.5).as_tuple(), (0.25, -0.5))


class QuantizeTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(quantize_to_grid(EmotionPoint(6.0, 3.0)), GridPoint(6, 3))
        self.assertEqual(quantize_to_grid(EmotionPoint(5.6, 3.2)), GridPoint(6, 3))
        self.assertEqual(quantize_to_grid(EmotionPoint(1.5, 8.5)), GridPoint(2, 9))

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for valence, arousal in rng.uniform(1, 9, size=(100, 2)):
            once = quantize_to_grid(EmotionPoint(valence, arousal))
            self.assertEqual(quantize_to_grid(once.as_emotion()), once)

    def test_nearest_grid_point_by_brute_force(self):
        grid = list(product(GRID_VALUES, GRID_VALUES))
        rng = np.random.default_rng(11)
        for valence, arousal in rng.uniform(1, 9, size=(300, 2)):
            chosen = quantize_to_grid(EmotionPoint(valence, arousal))
            distance = math.dist((valence, arousal), (chosen.valence, chosen.arousal))
            best = min(math.dist((valence, arousal), point) for point in grid)
            self.assertAlmostEqual(distance, best, delta=1e-12)

    def test_grid_point_rejects_off_grid(self):
        with self.assertRaises(serializers.ValidationError):
            GridPoint(0, 5)
        with self.assertRaises(serializers.ValidationError):
            GridPoint(5, 10)
