"""
Checkpoint Module for the Symmetry Toolkit

Binary container for trained models. Layout (all integers little-endian):

    offset 0   4 bytes   magic b"SYMC"
    offset 4   uint32    format version
    offset 8   uint32    header length H
    offset 12  H bytes   UTF-8 JSON header (config, vocabulary, seed,
                         frozen names, parameter table, extra metadata)
    offset 12+H          float64 parameter blobs in parameter-table order

Each parameter-table entry holds the name, shape, byte offset (relative to
the start of the blob section) and element count.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from learning.ga_model import GaModel, ModelConfig, Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"SYMC"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: GaModel, extra: Optional[Dict[str, object]] = None) -> bytes:
    blobs = []
    table = []
    offset = 0
    for name, value in model.params.items():
        blob = np.ascontiguousarray(value, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(value.shape), "offset": offset, "count": int(value.size)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "vocabulary": list(model.vocabulary.tokens),
        "frozen": sorted(model.frozen),
        "parameters": table,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)


def decode_checkpoint(payload: bytes) -> Tuple[GaModel, Dict[str, object]]:
    """
    Rebuild a model from checkpoint bytes.

    Returns:
        (model, extra metadata)

    Raises:
        CheckpointError: on a bad magic, unknown version or truncated data
    """
    if len(payload) < _PREAMBLE.size:
        raise CheckpointError("checkpoint is truncated")
    magic, version, header_length = _PREAMBLE.unpack_from(payload)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREAMBLE.size + header_length
    try:
        header = json.loads(payload[_PREAMBLE.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e

    params = {}
    for entry in header["parameters"]:
        begin = start + entry["offset"]
        end = begin + 8 * entry["count"]
        if end > len(payload):
            raise CheckpointError(f"parameter {entry['name']} runs past the end of the file")
        params[entry["name"]] = np.frombuffer(payload[begin:end], dtype="<f8").reshape(entry["shape"]).astype(np.float64)

    config = ModelConfig.from_dict(header["config"])
    model = GaModel(config, params, Vocabulary(header["vocabulary"]), header.get("frozen", ()))
    return model, header.get("extra", {})


def save_checkpoint(path: Union[str, Path], model: GaModel, extra: Optional[Dict[str, object]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model, extra))
    logger.info(f"💾 Saved checkpoint to {path} ({model.parameter_count} parameters)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[GaModel, Dict[str, object]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    logger.info(f"📂 Loading checkpoint {path}")
    return decode_checkpoint(path.read_bytes())
