"""
Frozen pseudo-extractor.

Each window of a clip is summarised by 19 raw statistics (high-half fraction,
switch rate, scaled mean token id and a 16-bin coarse histogram) and mapped to
`d_feat` dimensions by a fixed random projection. There is no nonlinearity,
so anything linear in the raw statistics is linear in the features.
"""

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from django.conf import settings

from commons.exceptions import WindowError
from commons.seeding import numpy_rng
from extractor.serializers import WindowConfigSerializer

logger = logging.getLogger(__name__)

HIST_BINS = 16
RAW_DIM = 3 + HIST_BINS
FEATURE_DIM = 32


@dataclass(frozen=True)
class WindowConfig:
    window_tokens: int = 32
    stride_tokens: int = 32

    def __post_init__(self):
        WindowConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)


@dataclass(frozen=True)
class FeatureSequence:
    features: np.ndarray
    window_config: WindowConfig
    extractor_seed: int

    def __post_init__(self):
        if self.features.ndim != 2 or not np.isfinite(self.features).all():
            raise WindowError("Feature sequences are finite N x D matrices.")

    @property
    def n_windows(self):
        return self.features.shape[0]


def window_count(T, W_tok, S_tok):
    if T < W_tok:
        raise WindowError(
            f"clip shorter than one window: {T} tokens, window of {W_tok}."
        )
    return (T - W_tok) // S_tok + 1


def window_bounds(T, cfg):
    n_windows = window_count(T, cfg.window_tokens, cfg.stride_tokens)
    return [
        (i * cfg.stride_tokens, i * cfg.stride_tokens + cfg.window_tokens)
        for i in range(n_windows)
    ]


def raw_window_stats(window, vocab_size):
    window = np.asarray(window)
    size = window.shape[0]
    high = np.mean(window >= vocab_size // 2)
    switches = np.mean(window[1:] != window[:-1]) if size > 1 else 0.0
    mean_id = np.mean(window) / (vocab_size - 1)
    bins = np.minimum(window * HIST_BINS // vocab_size, HIST_BINS - 1)
    histogram = np.bincount(bins, minlength=HIST_BINS) / size
    return np.concatenate(([high, switches, mean_id], histogram)).astype(np.float64)


def projection_matrix(seed, d_feat=FEATURE_DIM):
    """
    Standard-normal projection with unit-norm rows.

    Returns the matrix and the seed that produced it; a rank-deficient draw
    moves on to the next seed.
    """
    while True:
        matrix = numpy_rng(seed).standard_normal((d_feat, RAW_DIM))
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.linalg.matrix_rank(matrix) == RAW_DIM:
            return matrix, seed
        logger.warning(f"Projection from seed {seed} is rank-deficient, trying {seed + 1}")
        seed += 1


class PseudoExtractor:
    """Maps token clips to per-window affect features. Owns no trainable state."""

    def __init__(self, vocab_size, window_config=None, seed=None, d_feat=FEATURE_DIM):
        requested = settings.LARAGEN["EXTRACTOR_SEED"] if seed is None else seed
        self.vocab_size = vocab_size
        self.window_config = window_config or WindowConfig()
        self.d_feat = d_feat
        self.projection, self.seed = projection_matrix(requested, d_feat)
        self.projection.flags.writeable = False

    def n_windows(self, clip_len):
        cfg = self.window_config
        return window_count(clip_len, cfg.window_tokens, cfg.stride_tokens)

    def raw_stats(self, tokens):
        tokens = np.asarray(tokens)
        return np.stack(
            [
                raw_window_stats(tokens[start:stop], self.vocab_size)
                for start, stop in window_bounds(tokens.shape[0], self.window_config)
            ]
        )

    def extract(self, tokens):
        features = self.raw_stats(tokens) @ self.projection.T
        return FeatureSequence(features, self.window_config, self.seed)

    def extract_batch(self, clips):
        return np.stack([self.extract(tokens).features for tokens in clips])


@lru_cache(maxsize=16)
def get_extractor(vocab_size, window_config=None, seed=None, d_feat=FEATURE_DIM):
    return PseudoExtractor(vocab_size, window_config, seed, d_feat)


def extract_features(tokens, cfg, vocab_size=256, seed=None):
    return get_extractor(vocab_size, cfg, seed).extract(tokens)


class FeatureStandardizer:
    """Per-dimension standardisation of feature windows, fitted on a training corpus."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, features):
        """`features`: (clips, N, d_feat). Statistics pool clips and windows."""
        features = np.asarray(features, dtype=np.float64)
        flat = features.reshape(-1, features.shape[-1])
        std = flat.std(axis=0)
        return cls(flat.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, data):
        return cls(data["mean"], data["std"])
