"""
Tensor Container - checkpoints, datasets and sample files

Layout:
    magic    8 bytes  b"FLOWALN1"
    version  u32 LE
    length   u32 LE   manifest byte length
    manifest UTF-8 JSON {"meta": ..., "payload_length": n, "tensors": [...]}
    payload  little-endian float32 blobs in manifest order

Each tensor entry records name, shape, byte offset (relative to the payload),
byte length and CRC32. Files are written to a sibling temporary file and
renamed into place, so a crash never leaves a partial file under the target
name.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import torch

from flowalign.config import RunConfig
from flowalign.errors import CheckpointError
from flowalign.network import parameter_store
from flowalign.objective import FlowAlignModel
from flowalign.synthdata import ToyDataset

logger = logging.getLogger(__name__)

MAGIC = b"FLOWALN1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")

PathLike = Union[str, Path]


def _manifest_bytes(manifest: Mapping[str, Any]) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_container(
    path: PathLike, tensors: Mapping[str, np.ndarray], meta: Optional[Mapping[str, Any]] = None
) -> None:
    """
    Write named arrays and JSON metadata atomically.

    Arrays are stored as little-endian float32 in the order given. Equal inputs
    produce byte-identical files.
    """
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name, array in tensors.items():
        blob = np.ascontiguousarray(np.asarray(array, dtype="<f4")).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(np.shape(array)),
                "offset": offset,
                "length": len(blob),
                "crc32": zlib.crc32(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = _manifest_bytes(
        {"meta": dict(meta or {}), "payload_length": offset, "tensors": entries}
    )

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        with open(tmp_path, "wb") as handle:
            handle.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)))
            handle.write(manifest)
            for blob in blobs:
                handle.write(blob)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, path)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()
    logger.debug("Wrote %d tensors (%d payload bytes) to %s", len(entries), offset, path)


def load_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read and verify a container.

    Returns:
        Tuple[Dict[str, np.ndarray], Dict[str, Any]]: Arrays (float32, manifest
        order) and the metadata.

    Raises:
        CheckpointError: On a bad magic or version, truncation, an invalid
            manifest, out-of-bounds or overlapping tensors, or a checksum mismatch.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad_magic", {"path": str(path)})
    if len(raw) < _HEADER.size:
        raise CheckpointError("truncated_file", {"path": str(path)})
    _, version, manifest_length = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise CheckpointError("unsupported_version", {"version": version})
    payload_start = _HEADER.size + manifest_length
    if len(raw) < payload_start:
        raise CheckpointError("truncated_file", {"path": str(path)})
    try:
        manifest = json.loads(raw[_HEADER.size : payload_start].decode("utf-8"))
        entries = manifest["tensors"]
        payload_length = int(manifest["payload_length"])
        meta = manifest.get("meta", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as error:
        raise CheckpointError("invalid_manifest", {"reason": error}) from error
    payload = memoryview(raw)[payload_start:]
    if len(payload) < payload_length:
        raise CheckpointError("truncated_file", {"path": str(path)})

    tensors: Dict[str, np.ndarray] = {}
    end = 0
    for entry in entries:
        try:
            name = str(entry["name"])
            shape = tuple(int(d) for d in entry["shape"])
            offset, length, crc = int(entry["offset"]), int(entry["length"]), int(entry["crc32"])
        except (KeyError, TypeError, ValueError) as error:
            raise CheckpointError("invalid_manifest", {"reason": error}) from error
        if name in tensors:
            raise CheckpointError("invalid_manifest", {"reason": f"duplicate tensor {name}"})
        if length != 4 * int(np.prod(shape, dtype=np.int64)) or offset < 0:
            raise CheckpointError("invalid_manifest", {"reason": f"bad extent for {name}"})
        if offset < end:
            raise CheckpointError("tensor_overlap", {"name": name})
        if offset + length > payload_length:
            raise CheckpointError("tensor_out_of_bounds", {"name": name})
        blob = bytes(payload[offset : offset + length])
        if zlib.crc32(blob) != crc:
            raise CheckpointError("checksum_mismatch", {"name": name})
        tensors[name] = np.frombuffer(blob, dtype="<f4").astype(np.float32).reshape(shape)
        end = offset + length
    return tensors, meta


def save_checkpoint(
    path: PathLike, model: FlowAlignModel, config: RunConfig, step: int = 0
) -> None:
    """Write the trainable parameters and the run configuration."""
    meta = {"kind": "checkpoint", "step": int(step), "config": config.to_dict()}
    save_container(path, parameter_store(model), meta)


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], RunConfig, int]:
    """
    Read a checkpoint.

    Returns:
        Tuple: (parameters, run configuration, step).
    """
    params, meta = load_container(path)
    if meta.get("kind") != "checkpoint" or "config" not in meta:
        raise CheckpointError("invalid_manifest", {"reason": "not a checkpoint"})
    return params, RunConfig.from_dict(meta["config"]), int(meta.get("step", 0))


def restore_parameters(model: torch.nn.Module, params: Mapping[str, np.ndarray]) -> None:
    """
    Copy stored arrays into a model, requiring an exact name and shape match.

    Raises:
        CheckpointError: On missing, unexpected or mis-shaped parameters.
    """
    own = dict(model.named_parameters())
    missing = sorted(set(own) - set(params))
    if missing:
        raise CheckpointError("missing_parameters", {"names": ", ".join(missing)})
    unexpected = sorted(set(params) - set(own))
    if unexpected:
        raise CheckpointError("unexpected_parameters", {"names": ", ".join(unexpected)})
    for name, param in own.items():
        array = params[name]
        if tuple(array.shape) != tuple(param.shape):
            raise CheckpointError(
                "parameter_mismatch",
                {"name": name, "actual": tuple(array.shape), "expected": tuple(param.shape)},
            )
    with torch.no_grad():
        for name, param in own.items():
            param.copy_(torch.from_numpy(np.array(params[name])).to(param.dtype))


def load_model(path: PathLike) -> Tuple[FlowAlignModel, RunConfig, int]:
    """Rebuild the model described by a checkpoint and restore its parameters."""
    params, config, step = load_checkpoint(path)
    model = FlowAlignModel(
        config.model, use_oac=config.switches.use_oac, use_tra=config.switches.use_tra
    )
    restore_parameters(model, params)
    return model, config, step


def save_dataset(path: PathLike, dataset: ToyDataset) -> None:
    save_container(path, dataset.arrays(), {"kind": "dataset", "dataset": dataset.meta})


def load_dataset(path: PathLike) -> ToyDataset:
    arrays, meta = load_container(path)
    if meta.get("kind") != "dataset":
        raise CheckpointError("invalid_manifest", {"reason": "not a dataset"})
    try:
        return ToyDataset.from_arrays(arrays, meta.get("dataset", {}))
    except KeyError as error:
        raise CheckpointError("invalid_manifest", {"reason": f"missing column {error}"}) from error


def save_samples(
    path: PathLike,
    samples: np.ndarray,
    config: RunConfig,
    reference_onsets: Optional[np.ndarray] = None,
) -> None:
    """Write generated latents with the configuration that produced them."""
    tensors = {"samples": samples}
    if reference_onsets is not None:
        tensors["reference_onsets"] = reference_onsets
    save_container(path, tensors, {"kind": "samples", "config": config.to_dict()})


def load_samples(path: PathLike) -> Tuple[Dict[str, np.ndarray], RunConfig]:
    arrays, meta = load_container(path)
    if meta.get("kind") != "samples" or "samples" not in arrays:
        raise CheckpointError("invalid_manifest", {"reason": "not a sample file"})
    return arrays, RunConfig.from_dict(meta["config"])
