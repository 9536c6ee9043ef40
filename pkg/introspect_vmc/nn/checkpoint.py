"""
Versioned binary checkpoint container.

Layout (little-endian)::

    8 bytes   magic b"IVMCCKPT"
    uint32    format_version
    uint32    header length in bytes
    header    UTF-8 JSON: {"architecture": {...}, "parameters": [{"path", "shape"}, ...]}
    payload   float64 arrays concatenated in declaration order
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from introspect_vmc.exceptions import CheckpointError
from introspect_vmc.nn.layers import Module

logger = logging.getLogger(__name__)

MAGIC = b"IVMCCKPT"
FORMAT_VERSION = 1


def dumps_checkpoint(module: Module, architecture: Dict[str, Any]) -> bytes:
    entries = []
    payload = []
    for path, param, _ in module.named_parameters():
        entries.append({"path": path, "shape": list(param.shape)})
        payload.append(np.ascontiguousarray(param, dtype="<f8").tobytes())

    header = json.dumps(
        {"architecture": architecture, "parameters": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header + b"".join(payload)


def save_checkpoint(path: Union[str, Path], module: Module, architecture: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(module, architecture))
    logger.info("Saved checkpoint with %d parameters to %s", module.parameter_count(), path)
    return path


def read_header(blob: bytes) -> Tuple[Dict[str, Any], int]:
    """Return the decoded header and the payload offset."""
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    version, header_len = struct.unpack_from("<II", blob, offset)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint format version {version}")
    offset += 8
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"Corrupt checkpoint header: {exc}") from exc
    return header, offset + header_len


def read_architecture(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = read_header(Path(path).read_bytes())
    return header["architecture"]


def loads_checkpoint(blob: bytes, module: Module, architecture: Dict[str, Any]) -> None:
    """Fill ``module`` in place; the stored architecture must match exactly."""
    header, offset = read_header(blob)
    if header["architecture"] != architecture:
        raise CheckpointError(
            f"Architecture mismatch: checkpoint {header['architecture']} vs model {architecture}"
        )

    params = list(module.named_parameters())
    if len(params) != len(header["parameters"]):
        raise CheckpointError("Parameter count differs between checkpoint and model")

    for (path, param, _), entry in zip(params, header["parameters"]):
        if entry["path"] != path or tuple(entry["shape"]) != param.shape:
            raise CheckpointError(f"Parameter {entry['path']} {entry['shape']} does not match {path} {param.shape}")
        nbytes = param.size * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"Truncated checkpoint while reading {path}")
        param[...] = np.frombuffer(chunk, dtype="<f8").reshape(param.shape)
        offset += nbytes

    if offset != len(blob):
        raise CheckpointError("Trailing bytes after checkpoint payload")


def load_checkpoint(path: Union[str, Path], module: Module, architecture: Dict[str, Any]) -> None:
    loads_checkpoint(Path(path).read_bytes(), module, architecture)
    logger.info("Loaded checkpoint %s", path)
