"""
Emotion predictor: frozen pseudo-extractor, then a regression head applied to
every feature window, then the mean over windows.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from affect.emotion import EmotionPoint, NormalizedEmotion, clamp_normalized, denormalize_av
from commons.exceptions import NumericError, WindowError

HIDDEN_DIMS = (512, 256, 128)


class RegressionHead(nn.Module):
    def __init__(self, d_feat, hidden_dims=HIDDEN_DIMS):
        super().__init__()
        layers = []
        width = d_feat
        for hidden in hidden_dims:
            layers += [nn.Linear(width, hidden), nn.ReLU()]
            width = hidden
        layers.append(nn.Linear(width, 2))
        self.mlp = nn.Sequential(*layers)

    def forward(self, windows):
        return self.mlp(windows)


@dataclass(frozen=True)
class EmotionPrediction:
    windows: list
    mean: tuple
    final: NormalizedEmotion
    final_raw: EmotionPoint


def pool_window(segment):
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 2 or segment.shape[0] == 0:
        raise WindowError("Cannot pool an empty segment.")
    return segment.mean(axis=0)


def _check_finite(head):
    for name, param in head.named_parameters():
        if not torch.isfinite(param).all():
            raise NumericError(f"Regression head parameter '{name}' is not finite.")


@torch.no_grad()
def predict_windows(features, head):
    _check_finite(head)
    dtype = next(head.parameters()).dtype
    return head(torch.as_tensor(np.asarray(features), dtype=dtype)).double().numpy()


def predict_window(m_bar, head):
    v_n, a_n = predict_windows(np.asarray(m_bar)[None, :], head)[0]
    return float(v_n), float(a_n)


def aggregate(window_predictions):
    window_predictions = np.asarray(window_predictions, dtype=np.float64)
    if window_predictions.shape[0] == 0:
        raise WindowError("A clip needs at least one window to be predicted.")
    mean = window_predictions.mean(axis=0)
    final = clamp_normalized(mean[0], mean[1])
    return EmotionPrediction(
        windows=[tuple(map(float, row)) for row in window_predictions],
        mean=(float(mean[0]), float(mean[1])),
        final=final,
        final_raw=denormalize_av(final),
    )


def predict_clip(features, head, standardizer=None):
    matrix = features.features
    if matrix.shape[0] == 0:
        raise WindowError("A clip needs at least one window to be predicted.")
    if standardizer is not None:
        matrix = standardizer.transform(matrix)
    return aggregate(predict_windows(matrix, head))


class EmotionPredictor:
    """Regression head bound to the extractor and input statistics it was trained with."""

    def __init__(self, head, extractor, standardizer, meta=None):
        self.head = head
        self.extractor = extractor
        self.standardizer = standardizer
        self.meta = meta or {}

    @property
    def extractor_seed(self):
        return self.extractor.seed

    def predict_clip(self, features):
        return predict_clip(features, self.head, self.standardizer)

    def predict_tokens(self, tokens):
        return self.predict_clip(self.extractor.extract(tokens)).final
