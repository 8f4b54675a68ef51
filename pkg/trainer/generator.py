"""
The trainable generator: emotion conditioner, token LM and (optionally) the
proxy network that reads the LM's hidden states.
"""

import logging
from dataclasses import asdict, replace

import torch
import torch.nn as nn
from rest_framework import serializers

from backbone.model import BackboneConfig, TokenLM, ce_loss, sample, teacher_forcing_pair
from commons.checkpoint import load_module_tensors, read_container
from conditioning.encoder import ConditioningConfig, EmotionConditioner, emotion_tensor
from proxy.network import ProxyConfig, ProxyNetwork

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "generator"


def resolve_proxy_config(proxy_config, backbone_config, n_windows, d_feat):
    """Tie the proxy to the backbone width, the extractor width and the window count."""
    if proxy_config.n_queries is not None and proxy_config.n_queries != n_windows:
        raise serializers.ValidationError(
            {"n_queries": f"The proxy needs one query per feature window ({n_windows}), got {proxy_config.n_queries}."}
        )
    return replace(
        proxy_config,
        n_queries=n_windows,
        d_model=backbone_config.d_model,
        d_feat=d_feat,
    )


class LaraGenerator(nn.Module):
    def __init__(self, backbone_config, conditioning_config=None, proxy_config=None):
        super().__init__()
        self.backbone_config = backbone_config
        self.conditioning_config = conditioning_config or ConditioningConfig()
        self.proxy_config = proxy_config
        # Construction order fixes the parameter initialisation stream: the
        # proxy comes last so enabling it leaves the other modules unchanged.
        self.conditioner = EmotionConditioner(backbone_config.d_model, self.conditioning_config)
        self.backbone = TokenLM(backbone_config)
        self.proxy = ProxyNetwork(proxy_config) if proxy_config is not None else None

    def condition(self, emotions):
        """`emotions`: (B, 2) tensor or a sequence of NormalizedEmotion."""
        if not isinstance(emotions, torch.Tensor):
            emotions = emotion_tensor(emotions)
        return self.conditioner(emotions)

    def forward(self, tokens, emotions):
        """Teacher-forced pass over (B, T) clips: returns logits, targets and captured hidden states."""
        idx, targets = teacher_forcing_pair(tokens, self.backbone_config.bos_token)
        logits, hidden = self.backbone(idx, self.condition(emotions))
        return logits, targets, hidden

    def ce(self, tokens, emotions):
        logits, targets, hidden = self(tokens, emotions)
        return ce_loss(logits, targets), hidden

    def generate(self, emotions, length, sampling):
        with torch.no_grad():
            cond = self.condition(emotions)
        return sample(self.backbone, cond, length, sampling)

    def configs(self):
        return {
            "backbone": asdict(self.backbone_config),
            "conditioning": asdict(self.conditioning_config),
            "proxy": asdict(self.proxy_config) if self.proxy_config is not None else None,
        }

    @classmethod
    def from_configs(cls, configs):
        proxy = configs.get("proxy")
        return cls(
            BackboneConfig(**configs["backbone"]),
            ConditioningConfig(**configs["conditioning"]),
            ProxyConfig(**proxy) if proxy is not None else None,
        )


def build_generator(seed, backbone_config, conditioning_config=None, proxy_config=None):
    torch.manual_seed(seed)
    generator = LaraGenerator(backbone_config, conditioning_config, proxy_config)
    n_params = sum(p.numel() for p in generator.parameters())
    logger.info(f"Built generator with {n_params} parameters (proxy {'on' if proxy_config else 'off'})")
    return generator


def load_generator(path):
    """Rebuild a generator from a checkpoint for inference. Returns (generator, header)."""
    header, tensors = read_container(path, kind=CHECKPOINT_KIND)
    generator = LaraGenerator.from_configs(header["configs"])
    load_module_tensors(generator, tensors, source=str(path))
    generator.eval()
    return generator, header
