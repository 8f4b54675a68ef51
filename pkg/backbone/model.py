"""
Causal token language model with cross-attention conditioning.

Pre-norm blocks: causal self-attention, cross-attention over the conditioning
rows, then a 4x feed-forward. Learned absolute positions. Index `vocab_size`
is the start token; it is never predicted.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
from rest_framework import serializers
from torch.nn import functional as F

from backbone.serializers import BackboneConfigSerializer, SamplingConfigSerializer
from commons.exceptions import ShapeError
from commons.seeding import torch_generator


@dataclass(frozen=True)
class BackboneConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 4
    vocab_size: int = 256
    max_len: int = 256
    lara_layer: int | None = None

    def __post_init__(self):
        BackboneConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)

    @property
    def capture_layer(self):
        return self.n_layers if self.lara_layer is None else self.lara_layer

    @property
    def bos_token(self):
        return self.vocab_size


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 1.0
    top_k: int = 64
    seed: int = 0

    def __post_init__(self):
        SamplingConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)


class CausalSelfAttention(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.n_heads = config.n_heads
        self.d_model = config.d_model
        self.c_attn = nn.Linear(config.d_model, 3 * config.d_model)
        self.c_proj = nn.Linear(config.d_model, config.d_model)
        mask = torch.tril(torch.ones(config.max_len, config.max_len, dtype=torch.bool))
        self.register_buffer("mask", mask.view(1, 1, config.max_len, config.max_len), persistent=False)

    def forward(self, x):
        B, T, C = x.size()
        q, k, v = self.c_attn(x).split(self.d_model, dim=2)
        k = k.view(B, T, self.n_heads, C // self.n_heads).transpose(1, 2)
        q = q.view(B, T, self.n_heads, C // self.n_heads).transpose(1, 2)
        v = v.view(B, T, self.n_heads, C // self.n_heads).transpose(1, 2)

        att = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(k.size(-1)))
        att = att.masked_fill(~self.mask[:, :, :T, :T], float("-inf"))
        att = F.softmax(att, dim=-1)
        y = att @ v
        y = y.transpose(1, 2).contiguous().view(B, T, C)
        return self.c_proj(y)


class CrossAttention(nn.Module):
    """Queries from the token stream, keys and values from the conditioning rows."""

    def __init__(self, config):
        super().__init__()
        self.n_heads = config.n_heads
        self.d_model = config.d_model
        self.q_proj = nn.Linear(config.d_model, config.d_model)
        self.kv_proj = nn.Linear(config.d_model, 2 * config.d_model)
        self.c_proj = nn.Linear(config.d_model, config.d_model)

    def forward(self, x, cond):
        B, T, C = x.size()
        R = cond.size(1)
        hs = C // self.n_heads
        q = self.q_proj(x).view(B, T, self.n_heads, hs).transpose(1, 2)
        k, v = self.kv_proj(cond).split(self.d_model, dim=2)
        k = k.view(B, R, self.n_heads, hs).transpose(1, 2)
        v = v.view(B, R, self.n_heads, hs).transpose(1, 2)

        att = F.softmax((q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(hs)), dim=-1)
        y = (att @ v).transpose(1, 2).contiguous().view(B, T, C)
        return self.c_proj(y)


class MLP(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.c_fc = nn.Linear(config.d_model, 4 * config.d_model)
        self.gelu = nn.GELU()
        self.c_proj = nn.Linear(4 * config.d_model, config.d_model)

    def forward(self, x):
        return self.c_proj(self.gelu(self.c_fc(x)))


class Block(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.d_model)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.d_model)
        self.cross = CrossAttention(config)
        self.ln_3 = nn.LayerNorm(config.d_model)
        self.mlp = MLP(config)

    def forward(self, x, cond):
        x = x + self.attn(self.ln_1(x))
        x = x + self.cross(self.ln_2(x), cond)
        x = x + self.mlp(self.ln_3(x))
        return x


class TokenLM(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size + 1, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.blocks = nn.ModuleList([Block(config) for _ in range(config.n_layers)])
        self.ln_f = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, config.vocab_size)
        self.apply(self._init_weights)

    def _init_weights(self, module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if isinstance(module, nn.Linear) and module.bias is not None:
            nn.init.zeros_(module.bias)

    def _check_input(self, idx):
        if idx.size(1) > self.config.max_len:
            raise serializers.ValidationError(
                {"tokens": f"Sequence of {idx.size(1)} exceeds max_len {self.config.max_len}."}
            )
        if idx.numel() and (idx.min() < 0 or idx.max() > self.config.bos_token):
            raise serializers.ValidationError(
                {"tokens": f"Token ids must lie in [0, {self.config.vocab_size}]."}
            )

    def forward(self, idx, cond):
        """
        idx: (B, T) token ids, start token allowed; cond: (B, R, d_model).
        Returns logits (B, T, vocab_size) and the hidden states (B, T, d_model)
        leaving block `capture_layer`.
        """
        self._check_input(idx)
        T = idx.size(1)
        pos = torch.arange(T, device=idx.device)
        x = self.tok_emb(idx) + self.pos_emb(pos)
        hidden = None
        for layer, block in enumerate(self.blocks, start=1):
            x = block(x, cond)
            if layer == self.config.capture_layer:
                hidden = x
        logits = self.head(self.ln_f(x))
        return logits, hidden


def teacher_forcing_pair(tokens, bos_token):
    """
    Split (B, T) clips into model input and targets.

    Input is the start token followed by c_1..c_{T-1}; targets are c_1..c_T,
    so position t >= 1 (token c_t) is scored against c_{t+1}.
    """
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    start = torch.full((tokens.size(0), 1), bos_token, dtype=torch.long)
    return torch.cat([start, tokens[:, :-1]], dim=1), tokens


def ce_loss(logits, targets):
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(
            f"Logits of shape {tuple(logits.shape)} do not match targets {tuple(targets.shape)}."
        )
    return F.cross_entropy(logits.reshape(-1, logits.size(-1)), targets.reshape(-1))


@torch.no_grad()
def sample(model, cond, length, sampling):
    """
    Autoregressively draw `length` tokens per conditioning row set.

    cond: (B, R, d_model). Returns a (B, length) int64 array.
    """
    config = model.config
    if length > config.max_len:
        raise serializers.ValidationError(
            {"length": f"Requested {length} tokens, max_len is {config.max_len}."}
        )
    if sampling.top_k > config.vocab_size:
        raise serializers.ValidationError(
            {"top_k": f"top_k {sampling.top_k} exceeds the vocabulary ({config.vocab_size})."}
        )
    was_training = model.training
    model.eval()
    generator = torch_generator(sampling.seed)
    idx = torch.full((cond.size(0), 1), config.bos_token, dtype=torch.long)
    for _ in range(length):
        logits, _ = model(idx, cond)
        logits = logits[:, -1, :] / sampling.temperature
        if sampling.top_k == 1:
            next_token = torch.argmax(logits, dim=-1, keepdim=True)
        else:
            kth, _ = torch.topk(logits, sampling.top_k)
            logits = logits.masked_fill(logits < kth[:, [-1]], float("-inf"))
            probs = F.softmax(logits, dim=-1)
            next_token = torch.multinomial(probs, num_samples=1, generator=generator)
        idx = torch.cat((idx, next_token), dim=1)
    model.train(was_training)
    return idx[:, 1:].numpy().astype(np.int64)
