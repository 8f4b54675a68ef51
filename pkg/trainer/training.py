"""
Generator training under `ce + alpha * lara`.

Batches are drawn from a numpy PCG64 stream whose state is saved with every
checkpoint together with the AdamW moments, so training N steps, saving and
resuming for M steps gives the same parameters as training N + M steps.

The log holds one step record per optimisation step and, after every
`eval_every` boundary, a validation record keyed `val_ce` and `val_lara`.
"""

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch
from rest_framework import serializers

from affect.emotion import normalize_av
from backbone.model import BackboneConfig
from commons.checkpoint import load_module_tensors, module_tensors, read_container, write_container
from commons.exceptions import CheckpointError, LaraGenError, NumericError
from commons.logs import TrainingLog
from commons.seeding import numpy_rng
from commons.timing import timed
from conditioning.encoder import ConditioningConfig
from extractor.cache import cached_features
from extractor.features import FeatureStandardizer, WindowConfig, get_extractor
from helpers.unique_id import UniqueId
from proxy.network import AlignmentWeights, ProxyConfig, lara_loss, total_loss
from trainer.generator import CHECKPOINT_KIND, LaraGenerator, build_generator, resolve_proxy_config
from trainer.serializers import TrainConfigSerializer

logger = logging.getLogger(__name__)

LAST_CHECKPOINT = "last.ckpt"
OPTIM_PREFIX = "optim/"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 100.0
    steps: int = 3000
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-5
    grad_clip: float = 1.0
    seed: int = 0
    lara_layer: int | None = None
    eval_every: int = 100
    val_fraction: float = 0.1
    save_every: int | None = None
    feature_cache: str | None = None
    proxy: bool = True

    def __post_init__(self):
        TrainConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)

    @property
    def weights(self):
        return AlignmentWeights(alpha=self.alpha)


def split_indices(n_clips, val_fraction, seed):
    """Seeded (train, validation) split of clip indices, both sorted."""
    order = numpy_rng(UniqueId.derived_seed(seed, "split")).permutation(n_clips)
    n_val = int(round(n_clips * val_fraction))
    if val_fraction > 0 and n_val == 0:
        raise serializers.ValidationError(
            {"val_fraction": f"A fraction of {val_fraction} holds out no clips from {n_clips}; use 0 to skip validation."}
        )
    if n_clips - n_val < 1:
        raise serializers.ValidationError(
            {"val_fraction": f"Holding out {n_val} of {n_clips} clips leaves nothing to train on."}
        )
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def corpus_features(manifest, extractor, cache_dir=None):
    clips = []
    for record in manifest:
        tokens = manifest.load_tokens(record)
        if cache_dir:
            clips.append(cached_features(cache_dir, record.clip_id, extractor, tokens))
        else:
            clips.append(extractor.extract(tokens).features)
    return np.stack(clips)


class GeneratorTrainer:
    """Holds the generator, its optimiser, the data tensors and the run position."""

    def __init__(self, manifest, cfg, generator, window_config, standardizer=None, log=None, out_dir=None):
        self.manifest = manifest
        self.cfg = cfg
        self.generator = generator
        self.window_config = window_config
        self.out_dir = Path(out_dir) if out_dir else None
        self.log = log if log is not None else TrainingLog()
        self.step = 0
        self.extractor = get_extractor(manifest.vocab_size, window_config)

        self.train_idx, self.val_idx = split_indices(len(manifest), cfg.val_fraction, cfg.seed)
        self.batch_rng = numpy_rng(UniqueId.derived_seed(cfg.seed, "batches"))
        self.batch_size = min(cfg.batch_size, len(self.train_idx))

        with timed("Generator data preparation"):
            self.tokens = torch.from_numpy(manifest.load_all())
            self.emotions = torch.tensor(
                [normalize_av(record.emotion).as_tuple() for record in manifest], dtype=torch.float32
            )
            self.targets = None
            self.standardizer = standardizer
            if generator.proxy is not None:
                features = corpus_features(manifest, self.extractor, cfg.feature_cache)
                if self.standardizer is None:
                    self.standardizer = FeatureStandardizer.fit(features[self.train_idx])
                self.targets = torch.tensor(self.standardizer.transform(features), dtype=torch.float32)

        self.param_names = [name for name, _ in generator.named_parameters()]
        self.optimizer = torch.optim.AdamW(
            [param for _, param in generator.named_parameters()],
            lr=cfg.lr,
            weight_decay=cfg.weight_decay,
        )
        self._check_inventory()

    @property
    def save_every(self):
        """Steps between `last.ckpt` writes; unset follows `eval_every`, 0 disables."""
        return self.cfg.eval_every if self.cfg.save_every is None else self.cfg.save_every

    def _check_inventory(self):
        optimized = {id(p) for group in self.optimizer.param_groups for p in group["params"]}
        registered = {id(p) for p in self.generator.parameters()}
        if optimized != registered:
            raise LaraGenError("Optimizer parameters differ from the generator's registered parameters.")

    def _losses(self, idx):
        ce, hidden = self.generator.ce(self.tokens[idx], self.emotions[idx])
        if self.generator.proxy is None:
            return ce, None
        if self.cfg.alpha > 0:
            return ce, lara_loss(self.generator.proxy(hidden), self.targets[idx])
        # Unweighted: measured for the log only, outside the autograd graph.
        with torch.no_grad():
            return ce, lara_loss(self.generator.proxy(hidden.detach()), self.targets[idx])

    def _objective(self, ce, lara):
        try:
            total = total_loss(ce, 0.0 if lara is None else lara, self.cfg.weights)
        except NumericError as exc:
            raise NumericError(f"Step {self.step}: {exc}") from exc
        return ce if self.cfg.alpha == 0 else total

    def train_step(self):
        self.step += 1
        idx = torch.from_numpy(self.batch_rng.choice(self.train_idx, size=self.batch_size, replace=False))
        ce, lara = self._losses(idx)
        total = self._objective(ce, lara)

        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        if self.cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.generator.parameters(), self.cfg.grad_clip)
        self.optimizer.step()

        return self.log.add(
            step=self.step,
            ce=float(ce.detach()),
            lara=float(lara) if lara is not None else None,
            total=float(total.detach()),
            lara_weight=self.cfg.alpha,
        )

    @torch.no_grad()
    def validate(self):
        if not len(self.val_idx):
            return None
        self.generator.eval()
        ce_sum, lara_sum = 0.0, 0.0
        for start in range(0, len(self.val_idx), self.batch_size):
            idx = torch.from_numpy(self.val_idx[start : start + self.batch_size])
            ce, lara = self._losses(idx)
            ce_sum += float(ce) * len(idx)
            lara_sum += float(lara) * len(idx) if lara is not None else 0.0
        self.generator.train()
        n_val = len(self.val_idx)
        return self.log.add(
            step=self.step,
            val_ce=ce_sum / n_val,
            val_lara=lara_sum / n_val if self.generator.proxy is not None else None,
        )

    def run(self, steps):
        self.generator.train()
        end = self.step + steps
        with timed(f"Generator training for {steps} steps"):
            while self.step < end:
                record = self.train_step()
                if self.step % self.cfg.eval_every == 0:
                    val = self.validate()
                    lara = "off" if record["lara"] is None else f"{record['lara']:.4f}"
                    logger.info(
                        f"step {self.step}: ce={record['ce']:.4f} lara={lara} "
                        f"total={record['total']:.4f}"
                        + (f" val_ce={val['val_ce']:.4f}" if val else "")
                    )
                if self.out_dir and self.save_every and self.step % self.save_every == 0:
                    self.save(self.out_dir / LAST_CHECKPOINT)
        return self

    def _optimizer_tensors(self):
        tensors, steps = {}, {}
        for name, param in zip(self.param_names, self.generator.parameters()):
            state = self.optimizer.state.get(param)
            if not state:
                continue
            tensors[f"{OPTIM_PREFIX}{name}/exp_avg"] = state["exp_avg"].detach().numpy()
            tensors[f"{OPTIM_PREFIX}{name}/exp_avg_sq"] = state["exp_avg_sq"].detach().numpy()
            steps[name] = int(state["step"])
        return tensors, steps

    def _restore_optimizer(self, tensors, steps, source):
        state_dict = self.optimizer.state_dict()
        state = {}
        for index, name in enumerate(self.param_names):
            if name not in steps:
                continue
            moments = {}
            for moment in ("exp_avg", "exp_avg_sq"):
                key = f"{OPTIM_PREFIX}{name}/{moment}"
                if key not in tensors:
                    raise CheckpointError(f"Tensor '{key}' is missing from {source}.")
                moments[moment] = torch.from_numpy(tensors[key])
            state[index] = {"step": torch.tensor(float(steps[name])), **moments}
        state_dict["state"] = state
        self.optimizer.load_state_dict(state_dict)

    def header(self):
        return {
            "kind": CHECKPOINT_KIND,
            "configs": self.generator.configs(),
            "train": asdict(self.cfg),
            "window": asdict(self.window_config),
            "vocab_size": self.manifest.vocab_size,
            "clip_len": self.manifest.clip_len,
            "extractor_seed": self.extractor.seed,
            "standardizer": self.standardizer.to_json() if self.standardizer else None,
            "step": self.step,
            "log_digest": self.log.digest(),
            "batch_rng": self.batch_rng.bit_generator.state,
        }

    def save(self, path):
        optim_tensors, optim_steps = self._optimizer_tensors()
        header = {**self.header(), "optim_steps": optim_steps}
        return write_container(path, header, {**module_tensors(self.generator), **optim_tensors})

    @classmethod
    def from_checkpoint(cls, path, manifest, log_path=None, out_dir=None):
        header, tensors = read_container(path, kind=CHECKPOINT_KIND)
        for key in ("vocab_size", "clip_len"):
            if header[key] != getattr(manifest, key):
                raise CheckpointError(
                    f"{path} was trained with {key}={header[key]}, the corpus has {getattr(manifest, key)}."
                )
        generator = LaraGenerator.from_configs(header["configs"])
        load_module_tensors(generator, tensors, source=str(path))
        standardizer = (
            FeatureStandardizer.from_json(header["standardizer"]) if header["standardizer"] else None
        )
        window_config = WindowConfig(**header["window"])
        log = TrainingLog(log_path, append=True, chain=header["log_digest"])
        trainer = cls(manifest, TrainConfig(**header["train"]), generator, window_config, standardizer, log, out_dir)
        if trainer.extractor.seed != header["extractor_seed"]:
            raise CheckpointError(
                f"{path} was trained against extractor seed {header['extractor_seed']}, "
                f"this installation uses {trainer.extractor.seed}."
            )
        trainer._restore_optimizer(tensors, header.get("optim_steps", {}), str(path))
        trainer.batch_rng.bit_generator.state = header["batch_rng"]
        trainer.step = header["step"]
        return trainer


def train_generator(
    manifest,
    cfg=None,
    backbone_config=None,
    conditioning_config=None,
    proxy_config=None,
    window_config=None,
    log_path=None,
    out_dir=None,
):
    """Train a generator from scratch on `manifest`. Returns the trainer and its log."""
    cfg = cfg or TrainConfig()
    backbone_config = backbone_config or BackboneConfig()
    window_config = window_config or WindowConfig()

    if backbone_config.vocab_size != manifest.vocab_size:
        logger.info(f"Using the corpus vocabulary size {manifest.vocab_size}")
        backbone_config = replace(backbone_config, vocab_size=manifest.vocab_size)
    if manifest.clip_len > backbone_config.max_len:
        raise serializers.ValidationError(
            {"max_len": f"Clips of {manifest.clip_len} tokens exceed max_len {backbone_config.max_len}."}
        )
    if cfg.lara_layer is not None:
        backbone_config = replace(backbone_config, lara_layer=cfg.lara_layer)

    if cfg.proxy:
        extractor = get_extractor(manifest.vocab_size, window_config)
        proxy_config = resolve_proxy_config(
            proxy_config or ProxyConfig(),
            backbone_config,
            extractor.n_windows(manifest.clip_len),
            extractor.d_feat,
        )
    else:
        proxy_config = None

    generator = build_generator(cfg.seed, backbone_config, conditioning_config or ConditioningConfig(), proxy_config)
    trainer = GeneratorTrainer(manifest, cfg, generator, window_config, log=TrainingLog(log_path), out_dir=out_dir)
    trainer.run(cfg.steps)
    return trainer, trainer.log


def resume(checkpoint, manifest, extra_steps, log_path=None, out_dir=None):
    """Continue a saved run for `extra_steps` more steps. Returns the trainer and its log."""
    trainer = GeneratorTrainer.from_checkpoint(checkpoint, manifest, log_path, out_dir)
    logger.info(f"Resuming {checkpoint} at step {trainer.step} for {extra_steps} steps")
    if extra_steps:
        trainer.run(extra_steps)
    return trainer, trainer.log
