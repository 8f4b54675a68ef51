import numpy as np

from affect.emotion import clamp_normalized
from corpus.generator import SWITCH_FLOOR, SWITCH_SPAN


def switch_rate(tokens):
    tokens = np.asarray(tokens)
    if tokens.size < 2:
        return 0.0
    return float(np.mean(tokens[1:] != tokens[:-1]))


def high_fraction(tokens, vocab_size):
    return float(np.mean(np.asarray(tokens) >= vocab_size // 2))


def estimate_emotion(tokens, vocab_size):
    """Read the planted emotion back from a clip's token statistics."""
    a_n = 2.0 * (switch_rate(tokens) - SWITCH_FLOOR) / SWITCH_SPAN - 1.0
    v_n = 2.0 * high_fraction(tokens, vocab_size) - 1.0
    return clamp_normalized(v_n, a_n)


class PlantedEstimator:
    """Oracle predictor that knows the planted mapping; needs no features."""

    extractor_seed = None

    def __init__(self, vocab_size):
        self.vocab_size = vocab_size

    def predict_tokens(self, tokens):
        return estimate_emotion(tokens, self.vocab_size)
