"""
Valence-arousal value types.

Annotations live on the 1..9 rating scale; models consume the normalized
[-1, 1] scale. `quantize_to_grid` snaps a rating onto the 81 integer
coordinates used by the grid-conditioned baseline.
"""

import math
import numbers
from dataclasses import dataclass

from rest_framework import serializers

RAW_MIN, RAW_MAX, RAW_MID = 1.0, 9.0, 5.0
RAW_HALF_RANGE = 4.0
GRID_VALUES = tuple(range(1, 10))


def _check_range(name, value, low, high):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise serializers.ValidationError({name: f"Expected a real number, got {value!r}."})
    if not math.isfinite(value) or not low <= value <= high:
        raise serializers.ValidationError(
            {name: f"Must be a finite value within [{low:g}, {high:g}], got {value!r}."}
        )


@dataclass(frozen=True)
class EmotionPoint:
    valence: float
    arousal: float

    def __post_init__(self):
        _check_range("valence", self.valence, RAW_MIN, RAW_MAX)
        _check_range("arousal", self.arousal, RAW_MIN, RAW_MAX)


@dataclass(frozen=True)
class NormalizedEmotion:
    v_n: float
    a_n: float

    def __post_init__(self):
        _check_range("v_n", self.v_n, -1.0, 1.0)
        _check_range("a_n", self.a_n, -1.0, 1.0)

    def as_tuple(self):
        return (self.v_n, self.a_n)


@dataclass(frozen=True)
class GridPoint:
    valence: int
    arousal: int

    def __post_init__(self):
        for name in ("valence", "arousal"):
            value = getattr(self, name)
            if value not in GRID_VALUES:
                raise serializers.ValidationError(
                    {name: f"Grid coordinates are integers in 1..9, got {value!r}."}
                )

    def as_emotion(self):
        return EmotionPoint(float(self.valence), float(self.arousal))


def normalize_av(point):
    return NormalizedEmotion(
        v_n=(point.valence - RAW_MID) / RAW_HALF_RANGE,
        a_n=(point.arousal - RAW_MID) / RAW_HALF_RANGE,
    )


def denormalize_av(normalized):
    return EmotionPoint(
        valence=normalized.v_n * RAW_HALF_RANGE + RAW_MID,
        arousal=normalized.a_n * RAW_HALF_RANGE + RAW_MID,
    )


def _round_half_up(value):
    return min(max(int(math.floor(value + 0.5)), GRID_VALUES[0]), GRID_VALUES[-1])


def quantize_to_grid(point):
    """Nearest of the 81 integer grid points; exact halves round up."""
    return GridPoint(_round_half_up(point.valence), _round_half_up(point.arousal))


def clamp_normalized(v_n, a_n):
    return NormalizedEmotion(
        v_n=float(min(max(v_n, -1.0), 1.0)),
        a_n=float(min(max(a_n, -1.0), 1.0)),
    )
