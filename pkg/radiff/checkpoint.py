"""
Checkpoint
==========

Defines the binary checkpoint container storing named tensors:

-   magic ``RADIFFCK`` then the format version and the tensor count, both
    little-endian unsigned 32-bit integers,
-   per tensor, sorted by name: the name length and *UTF-8* name, the rank,
    the dimensions and the little-endian 32-bit float payload,
-   a trailing *CRC-32* of all preceding bytes.

Tensors named ``meta.<key>`` carry the hyper-parameters a model is rebuilt
from; ``meta.config`` holds the canonical run configuration as byte codes.
"""

from __future__ import annotations

import os
import struct
import zlib
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from radiff.config import RunConfig
from radiff.errors import CheckpointError

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "META_PREFIX",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"RADIFFCK"

CHECKPOINT_VERSION = 1

META_PREFIX = "meta."

_CONFIG_KEY = "meta.config"


@dataclass
class Checkpoint:
    """
    Represents the content of a checkpoint.

    Parameters
    ----------
    tensors
        32-bit float tensors keyed by name.

    Examples
    --------
    ```
    >>> checkpoint = Checkpoint.from_state({"w": [1.0, 2.0]}, {"task": 1})
    >>> sorted(checkpoint.tensors)
    ['meta.task', 'w']
    >>> checkpoint.metadata()
    {'task': 1.0}

    ```
    """

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_state(
        cls,
        state: Mapping[str, npt.ArrayLike],
        metadata: Mapping[str, float] | None = None,
        config: RunConfig | None = None,
    ) -> Checkpoint:
        """
        Build a checkpoint from parameter values, scalar metadata and the run
        configuration.
        """
        tensors = {
            name: np.asarray(value, dtype=np.float32) for name, value in state.items()
        }
        for key, value in (metadata or {}).items():
            tensors[f"{META_PREFIX}{key}"] = np.asarray(float(value), dtype=np.float32)
        if config is not None:
            tensors[_CONFIG_KEY] = np.frombuffer(
                config.canonical().encode("utf-8"), dtype=np.uint8
            ).astype(np.float32)
        return cls(tensors)

    def state(self, prefix: str = "") -> dict[str, np.ndarray]:
        """
        Return the parameter tensors as 64-bit arrays, optionally those under
        ``prefix`` with the prefix removed.
        """
        return {
            name[len(prefix) :]: value.astype(np.float64)
            for name, value in self.tensors.items()
            if not name.startswith(META_PREFIX) and name.startswith(prefix)
        }

    def metadata(self) -> dict[str, float]:
        """Return the scalar metadata keyed without prefix."""
        return {
            name[len(META_PREFIX) :]: float(value)
            for name, value in self.tensors.items()
            if name.startswith(META_PREFIX) and value.ndim == 0
        }

    def config(self) -> RunConfig | None:
        """Return the stored run configuration, if any."""
        codes = self.tensors.get(_CONFIG_KEY)
        if codes is None:
            return None
        return RunConfig.parse(codes.astype(np.uint8).tobytes().decode("utf-8"))


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Return the binary encoding of a checkpoint."""
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(checkpoint.tensors)),
    ]
    for name in sorted(checkpoint.tensors):
        value = np.asarray(checkpoint.tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        chunks.append(value.tobytes(order="C"))
    payload = b"".join(chunks)
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(
                f"Checkpoint is truncated: needed {size} bytes at offset {self.offset}"
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Decode the binary encoding of a checkpoint.

    Raises
    ------
    :class:`CheckpointError`
        If the magic, the version or the checksum is wrong, or if the data is
        truncated.
    """
    if len(data) < len(CHECKPOINT_MAGIC) + 12 or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("Not a checkpoint: bad magic")
    payload, (checksum,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != checksum:
        raise CheckpointError("Checkpoint checksum mismatch, the file is corrupted")

    reader = _Reader(payload)
    reader.take(len(CHECKPOINT_MAGIC))
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    tensors = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * count), dtype="<f4")
        tensors[name] = values.reshape(shape).astype(np.float32)
    if reader.offset != len(payload):
        raise CheckpointError(
            f"Checkpoint has {len(payload) - reader.offset} trailing bytes"
        )
    return Checkpoint(tensors)


def save_checkpoint(checkpoint: Checkpoint, path: str | os.PathLike) -> None:
    """Write a checkpoint file."""
    with open(path, "wb") as checkpoint_file:
        checkpoint_file.write(encode_checkpoint(checkpoint))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Read a checkpoint file."""
    with open(path, "rb") as checkpoint_file:
        return decode_checkpoint(checkpoint_file.read())
