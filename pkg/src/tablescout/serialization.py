"""Binary container files: model checkpoints and encoded-table sidecars.

Both share one framing: a magic string, an 8-byte little-endian header
length, a canonical-JSON header, then concatenated little-endian float32
tensor payloads in header order. Canonical JSON (sorted keys, no spaces)
makes write -> read -> write byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SerializationError
from .model import Alphabet, ModelConfig, ModelParams

CHECKPOINT_MAGIC = b"TSCKPT1\n"
VECTORS_MAGIC = b"TSVEC1\n"


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: str | Path) -> str:
    return sha256_hex(Path(path).read_bytes())


@dataclass
class Checkpoint:
    params: ModelParams
    corpus_fingerprint: str = ""


def _write_container(path: str | Path, magic: bytes, header: dict, payload: bytes) -> None:
    header_bytes = canonical_json_bytes(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def _read_container(path: str | Path, magic: bytes) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise SerializationError(f"{path}: bad magic, expected {magic!r}")
    pos = len(magic)
    if len(data) < pos + 8:
        raise SerializationError(f"{path}: truncated header length")
    (header_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + header_len:
        raise SerializationError(f"{path}: truncated header")
    try:
        header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializationError(f"{path}: malformed header: {exc}") from exc
    return header, data[pos + header_len :]


def _tensor_entries(tensors: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    return entries, b"".join(blobs)


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    params = checkpoint.params
    entries, payload = _tensor_entries(params.tensors)
    header = {
        "config": params.config.to_dict(),
        "alphabet": params.alphabet.to_dict(),
        "tensors": entries,
        "corpus_fingerprint": checkpoint.corpus_fingerprint,
    }
    _write_container(path, CHECKPOINT_MAGIC, header, payload)


def _read_tensor(payload: bytes, entry: dict, path) -> np.ndarray:
    shape = tuple(int(s) for s in entry["shape"])
    count = int(np.prod(shape)) if shape else 1
    offset = int(entry["offset"])
    end = offset + 4 * count
    if end > len(payload):
        raise SerializationError(f"{path}: tensor {entry['name']!r} overruns payload")
    arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float64)


def load_checkpoint(path: str | Path) -> Checkpoint:
    header, payload = _read_container(path, CHECKPOINT_MAGIC)
    try:
        config = ModelConfig.from_dict(header["config"])
        alphabet = Alphabet.from_dict(header["alphabet"])
        entries = header["tensors"]
        fingerprint = header["corpus_fingerprint"]
    except (KeyError, TypeError) as exc:
        raise SerializationError(f"{path}: incomplete header: {exc}") from exc
    tensors = {e["name"]: _read_tensor(payload, e, path) for e in entries}
    return Checkpoint(ModelParams(config, alphabet, tensors), fingerprint)


def save_table_vectors(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise SerializationError("ids and matrix rows must align")
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    header = {"ids": list(ids), "dim": int(matrix.shape[1]), "count": len(ids)}
    _write_container(path, VECTORS_MAGIC, header, payload)


def load_table_vectors(path: str | Path) -> tuple[list[str], np.ndarray]:
    header, payload = _read_container(path, VECTORS_MAGIC)
    try:
        ids = [str(i) for i in header["ids"]]
        dim = int(header["dim"])
        count = int(header["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SerializationError(f"{path}: incomplete header: {exc}") from exc
    if len(ids) != count:
        raise SerializationError(f"{path}: id count mismatch")
    expected = 4 * count * dim
    if len(payload) < expected:
        raise SerializationError(f"{path}: truncated payload")
    matrix = np.frombuffer(payload, dtype="<f4", count=count * dim).reshape(count, dim)
    return ids, matrix.astype(np.float64)
