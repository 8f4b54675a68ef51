"""
Corpus manifests and token files.

A corpus directory holds ``manifest.jsonl`` (one record per clip),
``corpus.json`` (vocabulary size, clip length and producer metadata) and a
``tokens/`` directory of headerless little-endian u16 token files.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from rest_framework import serializers

from affect.emotion import EmotionPoint
from commons.exceptions import ManifestError
from corpus.serializers import ClipRecordSerializer

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
META_NAME = "corpus.json"
TOKEN_DTYPE = np.dtype("<u2")


def tokens_relpath(clip_id):
    return Path("tokens") / f"{clip_id}.u16"


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    emotion: EmotionPoint
    token_path: Path
    seed: int

    def to_json(self, root):
        return {
            "clip_id": self.clip_id,
            "valence": float(self.emotion.valence),
            "arousal": float(self.emotion.arousal),
            "tokens": Path(self.token_path).relative_to(root).as_posix(),
            "seed": int(self.seed),
        }


def validate_tokens(tokens, clip_len, vocab_size, source="token sequence"):
    tokens = np.asarray(tokens)
    if tokens.ndim != 1 or tokens.shape[0] != clip_len:
        raise ManifestError(
            f"{source} has {tokens.size} tokens in shape {tokens.shape}, expected {clip_len}."
        )
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise ManifestError(
            f"{source} has tokens outside the vocabulary [0, {vocab_size})."
        )
    return tokens.astype(np.int64)


def write_tokens(path, tokens):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.asarray(tokens, dtype=TOKEN_DTYPE).tofile(path)
    except OSError as exc:
        raise ManifestError(f"Cannot write token file {path}: {exc}") from exc


def read_tokens(path):
    path = Path(path)
    try:
        return np.fromfile(path, dtype=TOKEN_DTYPE).astype(np.int64)
    except OSError as exc:
        raise ManifestError(f"Cannot read token file {path}: {exc}") from exc


def write_manifest(out_dir, records, meta):
    out_dir = Path(out_dir)
    manifest_path = out_dir / MANIFEST_NAME
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / META_NAME, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        with open(manifest_path, "w") as fh:
            for record in records:
                fh.write(json.dumps(record.to_json(out_dir), sort_keys=True) + "\n")
    except OSError as exc:
        raise ManifestError(f"Cannot write manifest {manifest_path}: {exc}") from exc
    return manifest_path


class Manifest:
    """Records of a corpus directory together with its vocabulary and clip length."""

    def __init__(self, root, meta, records, rejected=None):
        self.root = Path(root)
        self.meta = meta
        self.records = records
        self.rejected = rejected or []

    @property
    def vocab_size(self):
        return int(self.meta["vocab_size"])

    @property
    def clip_len(self):
        return int(self.meta["clip_len"])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def load_tokens(self, record):
        return validate_tokens(
            read_tokens(record.token_path),
            self.clip_len,
            self.vocab_size,
            source=str(record.token_path),
        )

    def load_all(self):
        return np.stack([self.load_tokens(record) for record in self.records])


def read_manifest(path, check_files=True, strict=True):
    """
    Load and validate a corpus directory (or its manifest file).

    With `strict=False` invalid records are collected in `Manifest.rejected`
    as (line number, reason) pairs instead of aborting the load.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    root = manifest_path.parent
    try:
        with open(root / META_NAME) as fh:
            meta = json.load(fh)
        lines = manifest_path.read_text().splitlines()
    except (OSError, ValueError) as exc:
        raise ManifestError(f"Cannot read manifest {manifest_path}: {exc}") from exc

    records = []
    rejected = []
    seen = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            serializer = ClipRecordSerializer(data=json.loads(line))
            serializer.is_valid(raise_exception=True)
        except ValueError as exc:
            if not strict:
                rejected.append((line_no, f"not JSON: {exc}"))
                continue
            raise ManifestError(f"{manifest_path}:{line_no} is not JSON: {exc}") from exc
        except serializers.ValidationError as exc:
            if not strict:
                rejected.append((line_no, str(exc.detail)))
                continue
            raise ManifestError(
                f"{manifest_path}:{line_no} is not a valid clip record: {exc.detail}"
            ) from exc
        data = serializer.validated_data
        if data["clip_id"] in seen:
            raise ManifestError(f"{manifest_path}:{line_no} repeats clip id {data['clip_id']}.")
        seen.add(data["clip_id"])
        records.append(
            ClipRecord(
                clip_id=data["clip_id"],
                emotion=EmotionPoint(data["valence"], data["arousal"]),
                token_path=root / data["tokens"],
                seed=data["seed"],
            )
        )

    manifest = Manifest(root, meta, records, rejected)
    if check_files:
        for record in records:
            if not record.token_path.exists():
                raise ManifestError(f"Token file {record.token_path} does not exist.")
            manifest.load_tokens(record)
    logger.info(f"Loaded {len(records)} records from {manifest_path}")
    return manifest
