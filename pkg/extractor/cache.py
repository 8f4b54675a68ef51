"""Per-clip feature cache: u32 N, u32 D, then N*D little-endian float32."""

import struct
from pathlib import Path

import numpy as np

from commons.exceptions import ManifestError

HEADER = struct.Struct("<II")
DTYPE = np.dtype("<f4")


def write_feature_cache(path, features):
    path = Path(path)
    features = np.asarray(features, dtype=DTYPE)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(*features.shape))
        fh.write(features.tobytes())


def read_feature_cache(path):
    raw = Path(path).read_bytes()
    n_windows, d_feat = HEADER.unpack(raw[: HEADER.size])
    body = raw[HEADER.size :]
    if len(body) != n_windows * d_feat * DTYPE.itemsize:
        raise ManifestError(
            f"Feature cache {path} holds {len(body)} bytes, expected a {n_windows}x{d_feat} matrix."
        )
    return np.frombuffer(body, dtype=DTYPE).reshape(n_windows, d_feat).astype(np.float64)


def cached_features(cache_dir, clip_id, extractor, tokens):
    """Features for one clip, read from `cache_dir` when present and written otherwise."""
    path = Path(cache_dir) / f"{clip_id}.s{extractor.seed}.f32"
    if path.exists():
        return read_feature_cache(path)
    features = extractor.extract(tokens).features
    write_feature_cache(path, features)
    # Same float32 rounding as a cache hit, so reruns see identical targets.
    return features.astype(DTYPE).astype(np.float64)
