import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from rest_framework import serializers
from torch.nn import functional as F

from affect.emotion import normalize_av
from commons.checkpoint import load_module_tensors, module_tensors, read_container, write_container
from commons.exceptions import DegenerateInputError
from commons.logs import TrainingLog
from commons.seeding import numpy_rng
from commons.timing import timed
from extractor.features import FeatureStandardizer, WindowConfig, get_extractor
from predictor.head import EmotionPredictor, RegressionHead
from predictor.losses import ccc, ccc_loss
from predictor.serializers import PredictorConfigSerializer

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "predictor"


@dataclass(frozen=True)
class PredictorConfig:
    loss: str = "ccc"
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 64
    max_steps: int = 5000
    eval_every: int = 50
    patience: int = 10
    val_clips: int = 400
    seed: int = 0

    def __post_init__(self):
        PredictorConfigSerializer(data=asdict(self)).is_valid(raise_exception=True)


def manifest_arrays(manifest, extractor):
    """Feature windows (clips, N, d_feat) and normalized targets (clips, 2) of a manifest."""
    features = extractor.extract_batch(manifest.load_tokens(r) for r in manifest)
    targets = np.array(
        [normalize_av(record.emotion).as_tuple() for record in manifest], dtype=np.float64
    )
    return features, targets


def validation_ccc(head, features, targets):
    with torch.no_grad():
        preds = head(features).mean(dim=1).clamp(-1.0, 1.0).double().numpy()
    try:
        return ccc(preds[:, 0], targets[:, 0]), ccc(preds[:, 1], targets[:, 1])
    except DegenerateInputError:
        # A constant head output (e.g. at initialisation) has no concordance.
        return 0.0, 0.0


def train_predictor(manifest, cfg, window_config=None, val_manifest=None, log_path=None):
    """
    Fit the regression head on clip-level predictions (mean over windows).

    Without `val_manifest`, `cfg.val_clips` clips of `manifest` are held out.
    Returns the trained `EmotionPredictor` (best validation CCC) and its log.
    """
    window_config = window_config or WindowConfig()
    torch.manual_seed(cfg.seed)
    rng = numpy_rng(cfg.seed)
    extractor = get_extractor(manifest.vocab_size, window_config)

    with timed("Predictor feature extraction"):
        features, targets = manifest_arrays(manifest, extractor)
        if val_manifest is not None:
            train_x, train_y = features, targets
            val_x, val_y = manifest_arrays(val_manifest, extractor)
        else:
            if cfg.val_clips >= len(manifest):
                raise serializers.ValidationError(
                    {"val_clips": f"Holding out {cfg.val_clips} of {len(manifest)} clips leaves nothing to train on."}
                )
            order = rng.permutation(len(manifest))
            val_idx, train_idx = order[: cfg.val_clips], order[cfg.val_clips :]
            train_x, train_y = features[train_idx], targets[train_idx]
            val_x, val_y = features[val_idx], targets[val_idx]

    standardizer = FeatureStandardizer.fit(train_x)
    train_x = torch.tensor(standardizer.transform(train_x), dtype=torch.float32)
    train_y = torch.tensor(train_y, dtype=torch.float32)
    val_x = torch.tensor(standardizer.transform(val_x), dtype=torch.float32)

    head = RegressionHead(extractor.d_feat)
    optimizer = torch.optim.Adam(head.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    log = TrainingLog(log_path)

    best_score, best_state, best_step = -np.inf, copy.deepcopy(head.state_dict()), 0
    stale = 0
    batch_size = min(cfg.batch_size, train_x.shape[0])
    with timed("Predictor training"):
        for step in range(1, cfg.max_steps + 1):
            idx = torch.from_numpy(rng.choice(train_x.shape[0], size=batch_size, replace=False))
            preds = head(train_x[idx]).mean(dim=1)
            target = train_y[idx]
            if cfg.loss == "ccc":
                try:
                    loss = ccc_loss(preds, target)
                except DegenerateInputError:
                    logger.warning(f"Skipping predictor batch at step {step}: constant targets.")
                    continue
            else:
                loss = F.mse_loss(preds, target)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            if step % cfg.eval_every == 0 or step == cfg.max_steps:
                ccc_v, ccc_a = validation_ccc(head, val_x, val_y)
                log.add(step=step, loss=float(loss), val_ccc_v=ccc_v, val_ccc_a=ccc_a)
                logger.info(
                    f"predictor step {step}: loss={float(loss):.4f} "
                    f"val_ccc_v={ccc_v:.3f} val_ccc_a={ccc_a:.3f}"
                )
                score = (ccc_v + ccc_a) / 2.0
                if score > best_score:
                    best_score, best_state, best_step = score, copy.deepcopy(head.state_dict()), step
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        logger.info(f"Early stopping at step {step}; best step {best_step}.")
                        break

    head.load_state_dict(best_state)
    meta = {
        "config": asdict(cfg),
        "window_config": asdict(window_config),
        "vocab_size": manifest.vocab_size,
        "best_step": best_step,
        "best_val_ccc": float(best_score),
    }
    return EmotionPredictor(head, extractor, standardizer, meta), log


def save_predictor(path, predictor, log=None):
    header = {
        "kind": CHECKPOINT_KIND,
        **predictor.meta,
        "extractor_seed": predictor.extractor_seed,
        "d_feat": predictor.extractor.d_feat,
        "standardizer": predictor.standardizer.to_json(),
        "log_digest": log.digest() if log else None,
    }
    return write_container(path, header, module_tensors(predictor.head))


def load_predictor(path):
    header, tensors = read_container(path, kind=CHECKPOINT_KIND)
    window_config = WindowConfig(**header["window_config"])
    extractor = get_extractor(header["vocab_size"], window_config, header["extractor_seed"], header["d_feat"])
    head = RegressionHead(header["d_feat"])
    load_module_tensors(head, tensors, source=str(path))
    head.eval()
    meta = {k: header[k] for k in ("config", "window_config", "vocab_size", "best_step", "best_val_ccc")}
    return EmotionPredictor(head, extractor, FeatureStandardizer.from_json(header["standardizer"]), meta)
