"""VCK1 checkpoint files.

Layout (little-endian)::

    "VCK1" | version u32 | block count u32 | parameter blocks
    iteration u64 | baseline f64 | block count u32 | momentum blocks
    metadata length u32 | metadata (UTF-8 JSON)

A block is: name length u32, UTF-8 name, rank u32, extents u32 x rank,
float32 values row-major.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple
import io
import json
import logging
import os

import numpy as np

from varcontext.errors import ValidationError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"VCK1"
FORMAT_VERSION = 1


@dataclass
class ModelCheckpoint:
    """Parameters plus trainer state (iteration, baseline, momentum buffers)."""
    params: Dict[str, np.ndarray]
    iteration: int = 0
    baseline: float = 0.0
    momentum: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)


def _u32(value: int) -> bytes:
    return np.array([value], dtype="<u4").tobytes()


def _write_blocks(out: io.BytesIO, blocks: Dict[str, np.ndarray]) -> None:
    out.write(_u32(len(blocks)))
    for name, values in blocks.items():
        encoded = name.encode("utf-8")
        values = np.asarray(values)
        out.write(_u32(len(encoded)))
        out.write(encoded)
        out.write(_u32(values.ndim))
        out.write(np.asarray(values.shape, dtype="<u4").tobytes())
        out.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, payload: bytes, path: Path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.payload):
            raise ValidationError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def array(self, dtype: str, count: int) -> np.ndarray:
        width = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(width * count), dtype=dtype, count=count)

    def u32(self) -> int:
        return int(self.array("<u4", 1)[0])

    def blocks(self) -> Dict[str, np.ndarray]:
        blocks = {}
        for _ in range(self.u32()):
            name = self.take(self.u32()).decode("utf-8")
            rank = self.u32()
            shape: Tuple[int, ...] = tuple(int(v) for v in self.array("<u4", rank))
            size = int(np.prod(shape)) if shape else 1
            blocks[name] = self.array("<f4", size).reshape(shape).astype(np.float64)
        return blocks


def encode_checkpoint(checkpoint: ModelCheckpoint) -> bytes:
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(_u32(FORMAT_VERSION))
    _write_blocks(out, checkpoint.params)
    out.write(np.array([checkpoint.iteration], dtype="<u8").tobytes())
    out.write(np.array([checkpoint.baseline], dtype="<f8").tobytes())
    _write_blocks(out, checkpoint.momentum)
    meta = json.dumps(checkpoint.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.write(_u32(len(meta)))
    out.write(meta)
    return out.getvalue()


def save_checkpoint(path: Path, checkpoint: ModelCheckpoint) -> Path:
    """Write atomically through a temporary sibling file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint))
    os.replace(tmp, path)
    logger.info("Saved checkpoint %s at iteration %d", path, checkpoint.iteration)
    return path


def load_checkpoint(path: Path) -> ModelCheckpoint:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        ValidationError: Bad magic, unsupported version or truncated data.
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a VCK1 checkpoint")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    params = reader.blocks()
    iteration = int(reader.array("<u8", 1)[0])
    baseline = float(reader.array("<f8", 1)[0])
    momentum = reader.blocks()
    metadata: Dict[str, Any] = {}
    if reader.offset < len(reader.payload):
        metadata = json.loads(reader.take(reader.u32()).decode("utf-8"))
    return ModelCheckpoint(params=params, iteration=iteration, baseline=baseline, momentum=momentum,
                           metadata=metadata)
