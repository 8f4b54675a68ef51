"""
Conditioned generation over an evenly spaced valence-arousal grid.
"""

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from affect.emotion import RAW_MAX, RAW_MID, RAW_MIN, EmotionPoint, normalize_av, quantize_to_grid
from commons.timing import timed
from corpus.manifest import ClipRecord, tokens_relpath, write_manifest, write_tokens
from helpers.unique_id import UniqueId
from pipeline.serializers import GenerationJobSerializer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationJob:
    grid: int = 5
    per_point: int = 8
    length: int = 256
    quantize: bool = False

    def __post_init__(self):
        GenerationJobSerializer(data=asdict(self)).is_valid(raise_exception=True)

    @property
    def n_clips(self):
        return self.grid * self.grid * self.per_point


def grid_values(n):
    if n == 1:
        return np.array([RAW_MID])
    return np.linspace(RAW_MIN, RAW_MAX, n)


def grid_emotions(n):
    """Row-major (valence outer, arousal inner) grid of n x n emotion points."""
    values = grid_values(n)
    return [EmotionPoint(float(v), float(a)) for v in values for a in values]


def generate_set(generator, job, sampling, out_dir, meta=None):
    """
    Sample `job.per_point` clips for every grid emotion and write them as a corpus.

    Each clip's manifest record carries the grid emotion it was requested for.
    With `job.quantize` the model is conditioned on the nearest integer grid
    point instead of the exact coordinate.
    """
    out_dir = Path(out_dir)
    records = []
    with timed(f"Generating {job.n_clips} clips"):
        for point_index, emotion in enumerate(grid_emotions(job.grid)):
            conditioned_on = quantize_to_grid(emotion).as_emotion() if job.quantize else emotion
            point_seed = UniqueId.derived_seed(sampling.seed, point_index)
            clips = generator.generate(
                [normalize_av(conditioned_on)] * job.per_point,
                job.length,
                replace(sampling, seed=point_seed),
            )
            for offset, tokens in enumerate(clips):
                index = point_index * job.per_point + offset
                clip_id = UniqueId.clip_id("gen", sampling.seed, index)
                record = ClipRecord(
                    clip_id=clip_id,
                    emotion=emotion,
                    token_path=out_dir / tokens_relpath(clip_id),
                    seed=point_seed,
                )
                write_tokens(record.token_path, tokens)
                records.append(record)
            logger.debug(f"Grid point {point_index} ({emotion.valence:.2f}, {emotion.arousal:.2f}) done")

    meta = {
        **(meta or {}),
        "vocab_size": generator.backbone_config.vocab_size,
        "clip_len": job.length,
        "seed": sampling.seed,
        "generation": asdict(job),
        "sampling": asdict(sampling),
    }
    manifest_path = write_manifest(out_dir, records, meta)
    logger.info(f"Wrote {len(records)} generated clips to {out_dir}")
    return manifest_path
