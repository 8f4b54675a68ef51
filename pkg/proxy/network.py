"""
Proxy network and alignment losses.

N learned queries read the backbone hidden states through a stack of
transformer decoder blocks and are projected to the extractor's feature
width, one query per feature window.
"""

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
from torch.nn import functional as F

from commons.exceptions import NumericError, ShapeError
from proxy.serializers import AlignmentWeightsSerializer, ProxyConfigSerializer


@dataclass(frozen=True)
class ProxyConfig:
    n_queries: int | None = 8
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_feat: int = 32

    def __post_init__(self):
        ProxyConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)


@dataclass(frozen=True)
class AlignmentWeights:
    alpha: float = 100.0

    def __post_init__(self):
        AlignmentWeightsSerializer(data=asdict(self)).is_valid(raise_exception=True)


class ProxyNetwork(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.queries = nn.Parameter(torch.randn(config.n_queries, config.d_model) * 0.02)
        self.layers = nn.ModuleList(
            [
                nn.TransformerDecoderLayer(
                    d_model=config.d_model,
                    nhead=config.n_heads,
                    dim_feedforward=4 * config.d_model,
                    dropout=0.0,
                    activation="gelu",
                    batch_first=True,
                    norm_first=True,
                )
                for _ in range(config.n_layers)
            ]
        )
        self.ln_f = nn.LayerNorm(config.d_model)
        self.out = nn.Linear(config.d_model, config.d_feat)

    def forward(self, hidden):
        """(B, T, d_model) hidden states -> (B, n_queries, d_feat) predicted features."""
        if hidden.ndim != 3 or hidden.size(-1) != self.config.d_model:
            raise ShapeError(
                f"Hidden states of shape {tuple(hidden.shape)} do not match proxy width "
                f"{self.config.d_model}."
            )
        x = self.queries.unsqueeze(0).expand(hidden.size(0), -1, -1)
        for layer in self.layers:
            x = layer(x, hidden)
        return self.out(self.ln_f(x))


def predict_features(hidden, proxy):
    """Unbatched form: (T, d_model) -> (N, d_feat)."""
    return proxy(hidden.unsqueeze(0))[0]


def lara_loss(m_hat, m_bar):
    if m_hat.shape != m_bar.shape:
        raise ShapeError(
            f"Predicted features {tuple(m_hat.shape)} do not match targets {tuple(m_bar.shape)}."
        )
    return F.mse_loss(m_hat, m_bar)


def _as_float(value):
    return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)


def total_loss(ce, lara, weights):
    for name, value in (("ce", ce), ("lara", lara)):
        if not math.isfinite(_as_float(value)):
            raise NumericError(f"Loss component '{name}' is not finite ({_as_float(value)}).")
    return ce + weights.alpha * lara
