"""
Run configuration read from an INI file.

Every section maps to one config dataclass and is validated by that app's
strict serializer; omitted sections and keys keep their defaults.
"""

import configparser
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from rest_framework import serializers

from backbone.model import BackboneConfig, SamplingConfig
from backbone.serializers import BackboneConfigSerializer, SamplingConfigSerializer
from commons.serializers import load_section
from conditioning.encoder import ConditioningConfig
from conditioning.serializers import ConditioningConfigSerializer
from corpus.generator import CorpusSpec
from corpus.serializers import CorpusSpecSerializer
from extractor.features import WindowConfig
from extractor.serializers import WindowConfigSerializer
from pipeline.generation import GenerationJob
from pipeline.serializers import GenerationJobSerializer
from predictor.serializers import PredictorConfigSerializer
from predictor.training import PredictorConfig
from proxy.network import ProxyConfig
from proxy.serializers import ProxyConfigSerializer
from trainer.serializers import TrainConfigSerializer
from trainer.training import TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = {
    "corpus": (CorpusSpecSerializer, CorpusSpec),
    "window": (WindowConfigSerializer, WindowConfig),
    "conditioning": (ConditioningConfigSerializer, ConditioningConfig),
    "backbone": (BackboneConfigSerializer, BackboneConfig),
    "proxy": (ProxyConfigSerializer, ProxyConfig),
    "train": (TrainConfigSerializer, TrainConfig),
    "sampling": (SamplingConfigSerializer, SamplingConfig),
    "predictor": (PredictorConfigSerializer, PredictorConfig),
    "generation": (GenerationJobSerializer, GenerationJob),
}

SEEDED_SECTIONS = ("corpus", "train", "sampling", "predictor")

NULL_VALUES = ("", "none", "null")


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    window: WindowConfig = field(default_factory=WindowConfig)
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    generation: GenerationJob = field(default_factory=GenerationJob)

    def with_seed(self, seed):
        """Apply a global seed to every seeded section."""
        return replace(self, **{name: replace(getattr(self, name), seed=seed) for name in SEEDED_SECTIONS})


def _section_data(parser, name):
    return {
        key: None if value.strip().lower() in NULL_VALUES else value.strip()
        for key, value in parser.items(name)
    }


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise serializers.ValidationError({"config": f"{source} is not a valid INI file: {exc}"}) from exc

    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise serializers.ValidationError({name: "Unknown configuration section." for name in unknown})

    sections = {}
    for name in parser.sections():
        serializer_class, target = SECTIONS[name]
        try:
            sections[name] = load_section(serializer_class, _section_data(parser, name), target)
        except serializers.ValidationError as exc:
            raise serializers.ValidationError({name: exc.detail}) from exc
    return RunConfig(**sections)


def load_config(path=None, seed=None):
    if path is None:
        config = RunConfig()
    else:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise serializers.ValidationError(
                {"config": f"Cannot read configuration file {path}: {exc.strerror or exc}"}
            ) from exc
        config = parse_config(text, source=str(path))
        logger.info(f"Loaded configuration from {path}")
    return config if seed is None else config.with_seed(seed)
