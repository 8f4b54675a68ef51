"""
Conditioning embedding.

The text branch is a learned constant of `text_tokens` rows because the text
prompt never changes; the emotion branch is a two-layer MLP over the
normalized (valence, arousal) pair. The emotion row is appended last.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from commons.exceptions import NumericError, ShapeError
from conditioning.serializers import ConditioningConfigSerializer


@dataclass(frozen=True)
class ConditioningConfig:
    text_tokens: int = 4
    av_hidden: int = 64

    def __post_init__(self):
        ConditioningConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)


class AVEncoder(nn.Module):
    def __init__(self, d_model, hidden=64):
        super().__init__()
        self.fc_in = nn.Linear(2, hidden)
        self.act = nn.Tanh()
        self.fc_out = nn.Linear(hidden, d_model)

    def forward(self, emotion):
        return self.fc_out(self.act(self.fc_in(emotion)))


class EmotionConditioner(nn.Module):
    def __init__(self, d_model, config=None):
        super().__init__()
        config = config or ConditioningConfig()
        self.config = config
        self.d_model = d_model
        self.text_stub = nn.Parameter(torch.randn(config.text_tokens, d_model) * 0.02)
        self.av_encoder = AVEncoder(d_model, config.av_hidden)

    @property
    def n_rows(self):
        return self.config.text_tokens + 1

    def forward(self, emotions):
        """(B, 2) normalized emotions -> (B, text_tokens + 1, d_model)."""
        emotion_rows = self.av_encoder(emotions).unsqueeze(1)
        text_rows = self.text_stub.unsqueeze(0).expand(emotions.shape[0], -1, -1)
        return torch.cat([text_rows, emotion_rows], dim=1)


def emotion_tensor(emotions, dtype=torch.float32):
    return torch.tensor([[e.v_n, e.a_n] for e in emotions], dtype=dtype)


def _check_finite(module):
    for name, param in module.named_parameters():
        if not torch.isfinite(param).all():
            raise NumericError(f"Parameter '{name}' of the emotion encoder is not finite.")


def encode_emotion(normalized, encoder):
    _check_finite(encoder)
    dtype = next(encoder.parameters()).dtype
    return encoder(emotion_tensor([normalized], dtype))[0]


def build_conditioning(normalized, text_stub, encoder):
    emotion_row = encode_emotion(normalized, encoder)
    if text_stub.ndim != 2 or text_stub.shape[1] != emotion_row.shape[0]:
        raise ShapeError(
            f"Text stub of shape {tuple(text_stub.shape)} does not match "
            f"emotion embedding width {emotion_row.shape[0]}."
        )
    return torch.cat([text_stub, emotion_row.unsqueeze(0)], dim=0)
