"""Bit-exact parameter persistence in the `WFCK` container format.

Layout (all integers little-endian):

    magic  b"WFCK"
    u32    format version (currently 1)
    u32    tensor count
    per tensor:
        u16   name length, then UTF-8 name
        u8    dtype code (0 = 32-bit float)
        u8    rank
        u32   extent per axis
        raw   little-endian payload, C order
    u32    metadata length, then UTF-8 JSON metadata

Saving is deterministic (same tensors + metadata give byte-identical files)
and atomic (temp file in the target directory, then rename). Loading
validates the entire container before exposing a single tensor, raising
FormatError with the byte offset of the violation; no model object is ever
constructed from a malformed file.
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, StorageError, TransferError, ValidationError

MAGIC = b"WFCK"
FORMAT_VERSION = 1
DTYPE_F32 = 0

REQUIRED_METADATA = ("model_id", "epoch", "seed", "config_digest")


def _params_of(model) -> dict:
    if hasattr(model, "params"):
        return model.params()
    return dict(model)


def _validate_metadata(metadata: dict) -> None:
    missing = [k for k in REQUIRED_METADATA if k not in metadata]
    if missing:
        raise ValidationError(f"checkpoint metadata missing keys: {missing}")
    if not isinstance(metadata["model_id"], str):
        raise ValidationError("checkpoint metadata model_id must be a string")
    for key in ("epoch", "seed"):
        if not isinstance(metadata[key], int) or isinstance(metadata[key], bool):
            raise ValidationError(f"checkpoint metadata {key} must be an integer")
    if not isinstance(metadata["config_digest"], str):
        raise ValidationError("checkpoint metadata config_digest must be a string")


def encode(model, metadata: dict) -> bytes:
    """Serialize parameters + metadata to WFCK bytes (deterministic)."""
    params = _params_of(model)
    _validate_metadata(metadata)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(params))
    for name, arr in params.items():
        if arr.dtype != np.float32:
            raise ValidationError(
                f"checkpoint tensors must be float32, {name!r} is {arr.dtype}"
            )
        if arr.ndim == 0:
            raise ValidationError(f"checkpoint tensor {name!r} must have rank >= 1")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<BB", DTYPE_F32, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    meta_blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    return bytes(out)


def save(model, metadata: dict, path) -> None:
    """Write the model's parameters atomically to `path`."""
    path = Path(path)
    data = encode(model, metadata)
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp_name, path)
        except BaseException:
            os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated checkpoint: need {n} bytes for {what}, "
                f"have {len(self.data) - self.pos}",
                offset=self.pos,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def loads(data: bytes) -> tuple[dict, dict]:
    """Parse WFCK bytes into ({name: float32 array}, metadata dict)."""
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version_offset = r.pos
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}",
            offset=version_offset,
        )
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name_offset = r.pos
        name_len = r.u16(f"name length of tensor {i}")
        raw_name = r.take(name_len, f"name of tensor {i}")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor {i} name is not UTF-8", offset=name_offset + 2) from exc
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}", offset=name_offset)
        dtype_offset = r.pos
        dtype_code = r.u8(f"dtype of {name!r}")
        if dtype_code != DTYPE_F32:
            raise FormatError(
                f"unsupported dtype code {dtype_code} for {name!r}", offset=dtype_offset
            )
        rank = r.u8(f"rank of {name!r}")
        if rank == 0:
            raise FormatError(f"tensor {name!r} has rank 0", offset=dtype_offset + 1)
        shape_offset = r.pos
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"shape of {name!r}"))
        if any(extent == 0 for extent in shape):
            raise FormatError(f"tensor {name!r} has a zero extent", offset=shape_offset)
        n_elems = 1
        for extent in shape:
            n_elems *= extent
        payload = r.take(4 * n_elems, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    meta_offset = r.pos
    meta_len = r.u32("metadata length")
    meta_blob = r.take(meta_len, "metadata")
    try:
        metadata = json.loads(meta_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata is not valid JSON: {exc}", offset=meta_offset + 4) from exc
    if not isinstance(metadata, dict):
        raise FormatError("metadata JSON must be an object", offset=meta_offset + 4)
    if r.pos != len(data):
        raise FormatError(
            f"{len(data) - r.pos} trailing bytes after metadata", offset=r.pos
        )
    return tensors, metadata


def load(path) -> tuple[dict, dict]:
    """Read and fully validate a checkpoint file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)


def load_into(model, path, scope: str = "all"):
    """Copy checkpoint tensors into `model` parameters.

    scope "all" requires the file's tensor names to exactly cover the model's
    parameters. scope "backbone_only" copies just the backbone parameters
    (head tensors in the file, if any, are ignored; the model's head is left
    bit-untouched). Returns the model.
    """
    if scope not in ("all", "backbone_only"):
        raise ValidationError(f"unknown load scope {scope!r}")
    tensors, _ = load(path)
    params = model.params()
    if scope == "all":
        wanted = list(params)
        extra = sorted(set(tensors) - set(params))
        if extra:
            raise TransferError(f"checkpoint has tensors the model lacks: {extra}")
    else:
        try:
            wanted = model.backbone_param_names()
        except ValidationError as exc:
            raise TransferError(str(exc)) from exc
    missing = sorted(set(wanted) - set(tensors))
    if missing:
        raise TransferError(f"checkpoint is missing tensors: {missing}")
    for name in wanted:
        arr = tensors[name]
        if arr.shape != params[name].shape:
            raise TransferError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, "
                f"model expects {params[name].shape}"
            )
    for name in wanted:
        model.set_param(name, tensors[name])
    return model
