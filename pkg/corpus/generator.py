"""
Synthetic token corpus with a planted emotion -> statistics mapping.

Arousal sets how often the stream switches to a freshly drawn token and
valence sets how often a fresh draw comes from the high half of the
vocabulary, so both can be read back from any clip.
"""

import logging
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numpy as np
from faker import Faker

from affect.emotion import GRID_VALUES, EmotionPoint, normalize_av
from commons.seeding import numpy_rng
from commons.timing import timed
from corpus.manifest import ClipRecord, tokens_relpath, write_manifest, write_tokens
from corpus.serializers import CorpusSpecSerializer
from helpers.unique_id import UniqueId

logger = logging.getLogger(__name__)

SWITCH_FLOOR = 0.05
SWITCH_SPAN = 0.45


@dataclass(frozen=True)
class CorpusSpec:
    vocab_size: int = 256
    clip_len: int = 256
    n_clips: int = 2400
    seed: int = 0
    emotion_sampling: str = "uniform_continuous"

    def __post_init__(self):
        CorpusSpecSerializer(data=asdict(self)).is_valid(raise_exception=True)

    @property
    def half(self):
        return self.vocab_size // 2


def switch_probability(a_n):
    return SWITCH_FLOOR + SWITCH_SPAN * (a_n + 1.0) / 2.0


def high_probability(v_n):
    return (v_n + 1.0) / 2.0


def sample_clip(emotion, spec, seed):
    """Draw one clip of `spec.clip_len` tokens for `emotion`, fully determined by `seed`."""
    normalized = normalize_av(emotion)
    p_switch = switch_probability(normalized.a_n)
    p_high = high_probability(normalized.v_n)

    rng = numpy_rng(seed)
    length = spec.clip_len
    switches = rng.random(length - 1) < p_switch
    high = rng.random(length) < p_high
    offsets = rng.integers(0, spec.half, size=length)
    fresh_tokens = offsets + spec.half * high

    # Position of the most recent fresh draw at every step; token 1 is always fresh.
    is_fresh = np.concatenate(([True], switches))
    last_fresh = np.maximum.accumulate(np.where(is_fresh, np.arange(length), 0))
    return fresh_tokens[last_fresh].astype(np.int64)


class CorpusGenerator:
    """
    Builds a corpus from a `CorpusSpec`.

    Corpus-level draws (emotions and per-clip seeds) come from a Faker instance
    seeded with `spec.seed`; token streams come from each clip's own seed.
    """

    def __init__(self, spec):
        self.spec = spec
        self.fake = Faker()
        self.fake.seed_instance(spec.seed)

    def generate_grid_emotion(self, index):
        grid = list(product(GRID_VALUES, GRID_VALUES))
        valence, arousal = grid[index % len(grid)]
        return EmotionPoint(float(valence), float(arousal))

    def generate_continuous_emotion(self, index):
        return EmotionPoint(
            self.fake.random.uniform(1.0, 9.0),
            self.fake.random.uniform(1.0, 9.0),
        )

    def generate_clip_seed(self):
        return self.fake.random_int(min=0, max=2**31 - 1)

    def generate_records(self, out_dir):
        emotion_methods = {
            "uniform_grid": self.generate_grid_emotion,
            "uniform_continuous": self.generate_continuous_emotion,
        }
        emotion_method = emotion_methods[self.spec.emotion_sampling]

        records = []
        for index in range(self.spec.n_clips):
            clip_id = UniqueId.clip_id("clip", self.spec.seed, index)
            records.append(
                ClipRecord(
                    clip_id=clip_id,
                    emotion=emotion_method(index),
                    token_path=out_dir / tokens_relpath(clip_id),
                    seed=self.generate_clip_seed(),
                )
            )
        return records

    def write(self, out_dir):
        records = self.generate_records(out_dir)
        for record in records:
            tokens = sample_clip(record.emotion, self.spec, record.seed)
            write_tokens(record.token_path, tokens)
        meta = {
            "vocab_size": self.spec.vocab_size,
            "clip_len": self.spec.clip_len,
            "seed": self.spec.seed,
            "corpus": asdict(self.spec),
        }
        return write_manifest(out_dir, records, meta)


def generate_corpus(spec, out_dir):
    out_dir = Path(out_dir)
    with timed(f"Corpus of {spec.n_clips} clips"):
        manifest_path = CorpusGenerator(spec).write(out_dir)
    logger.info(f"Wrote {spec.n_clips} clips to {out_dir}")
    return manifest_path
