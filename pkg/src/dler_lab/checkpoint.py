"""Binary parameter checkpoints.

Byte layout: magic "DLRP", then format version, state count, and vocab size
as little-endian u32, then state_count * vocab_size row-major float64
values, little-endian. Writes go through a temp file and an atomic rename.
"""

import os
import struct

import numpy as np

from dler_lab.policy import PolicyParams
from dler_lab.vocab import Vocab

MAGIC = b"DLRP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class CheckpointFormatError(ValueError):
    pass


def write_checkpoint(path, vector, state_count: int, vocab_size: int,
                     version: int = FORMAT_VERSION) -> None:
    vec = np.ascontiguousarray(np.asarray(vector, dtype=np.float64).reshape(-1))
    if vec.size != state_count * vocab_size:
        raise CheckpointFormatError(
            f"vector length {vec.size} != state_count * vocab_size "
            f"({state_count} * {vocab_size})"
        )
    blob = _HEADER.pack(MAGIC, version, state_count, vocab_size) + vec.astype("<f8").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_checkpoint(path):
    """Returns (flat vector, state_count, vocab_size, version)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CheckpointFormatError(
            f"{path}: malformed header (file shorter than the {_HEADER.size}-byte header)"
        )
    magic, version, state_count, vocab_size = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(
            f"{path}: malformed header (magic bytes {magic!r}, expected {MAGIC!r})"
        )
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: version mismatch (file version {version}, supported {FORMAT_VERSION})"
        )
    expected = _HEADER.size + state_count * vocab_size * 8
    if len(data) < expected:
        raise CheckpointFormatError(
            f"{path}: truncated payload ({len(data) - _HEADER.size} bytes, "
            f"expected {expected - _HEADER.size})"
        )
    if len(data) > expected:
        raise CheckpointFormatError(
            f"{path}: payload has {len(data) - expected} trailing bytes "
            f"beyond state_count * vocab_size values"
        )
    vec = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return vec, state_count, vocab_size, version


def save_params(path, params: PolicyParams) -> None:
    write_checkpoint(path, params.logits, params.n_states, params.vocab.size)


def load_params(path, vocab: Vocab, diff_min: int = 1) -> PolicyParams:
    vec, state_count, vocab_size, _ = read_checkpoint(path)
    if vocab_size != vocab.size:
        raise CheckpointFormatError(
            f"{path}: checkpoint vocab size {vocab_size} != vocab size {vocab.size}"
        )
    return PolicyParams(vec.reshape(state_count, vocab_size), vocab, diff_min=diff_min)
