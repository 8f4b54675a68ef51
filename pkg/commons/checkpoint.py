"""
Checkpoint container shared by the generator and the emotion predictor.

Layout: the 4-byte magic ``LARA``, a little-endian u32 header length, a UTF-8
JSON header, then every tensor as little-endian float32 back to back. The
header's ``tensors`` table lists name, shape and byte offset (relative to the
first tensor byte) for each entry.
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np
import torch

from commons.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"LARA"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f4")


def write_container(path, header, tensors):
    path = Path(path)
    table = []
    offset = 0
    blobs = []
    for name, array in tensors.items():
        data = np.ascontiguousarray(np.asarray(array, dtype=DTYPE))
        table.append({"name": name, "shape": list(data.shape), "offset": offset})
        blob = data.tobytes()
        blobs.append(blob)
        offset += len(blob)

    header = {**header, "format_version": FORMAT_VERSION, "tensors": table}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    # Atomic swap so an interrupted run never leaves a half-written checkpoint.
    tmp_path.replace(path)
    logger.info(f"Wrote checkpoint {path} ({len(table)} tensors, {offset} bytes)")
    return path


def read_container(path, kind=None):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc

    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic).")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise CheckpointError(f"{path} is truncated inside its {header_len}-byte header.")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path} has an unreadable header: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(header.get("tensors"), list):
        raise CheckpointError(f"{path} has no tensor table in its header.")

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}; supported version is {FORMAT_VERSION}."
        )
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(
            f"{path} holds a '{header.get('kind')}' checkpoint, expected '{kind}'."
        )

    data = memoryview(raw)[8 + header_len :]
    tensors = {}
    for entry in header["tensors"]:
        try:
            name, shape, start = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path} has a malformed tensor table entry {entry!r}.") from exc
        stop = start + int(np.prod(shape, dtype=np.int64)) * DTYPE.itemsize
        if stop > len(data):
            raise CheckpointError(
                f"Tensor '{name}' in {path} is truncated: expected {stop - start} bytes, "
                f"found {max(len(data) - start, 0)}."
            )
        tensors[name] = np.frombuffer(data[start:stop], dtype=DTYPE).reshape(shape).copy()

    expected_end = max(
        (
            e["offset"] + int(np.prod(e["shape"], dtype=np.int64)) * DTYPE.itemsize
            for e in header["tensors"]
        ),
        default=0,
    )
    if expected_end != len(data):
        raise CheckpointError(
            f"{path} has {len(data) - expected_end} trailing bytes after the last tensor."
        )
    return header, tensors


def module_tensors(module, prefix=""):
    return {
        f"{prefix}{name}": param.detach().cpu().numpy()
        for name, param in module.state_dict().items()
    }


def load_module_tensors(module, tensors, prefix="", source="checkpoint"):
    """Copy `tensors` into `module`, checking that every entry is present and shaped right."""
    state = module.state_dict()
    restored = {}
    for name, current in state.items():
        key = f"{prefix}{name}"
        if key not in tensors:
            raise CheckpointError(f"Tensor '{key}' is missing from {source}.")
        array = tensors[key]
        if tuple(array.shape) != tuple(current.shape):
            raise CheckpointError(
                f"Tensor '{key}' in {source} has shape {tuple(array.shape)}, "
                f"expected {tuple(current.shape)}."
            )
        restored[name] = torch.from_numpy(array).to(current.dtype)
    module.load_state_dict(restored)
