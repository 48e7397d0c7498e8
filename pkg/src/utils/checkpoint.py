"""
Parameter checkpoint files (WDNP format).

Layout, all integers little-endian:
    b"WDNP" | u32 version=1 | u32 tensor count |
    per tensor: u32 rank, u32 dims[rank], f64 data[prod(dims)]
"""

import struct
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

MAGIC = b"WDNP"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is malformed."""

    def __init__(self, path: Union[str, Path], offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


def encode_tensors(tensors: Sequence[np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for tensor in tensors:
        array = np.asarray(tensor, dtype="<f8")
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    return b"".join(chunks)


def write_tensors(path: Union[str, Path], tensors: Sequence[np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors(tensors))


def read_tensors(path: Union[str, Path]) -> List[np.ndarray]:
    """
    Read every tensor of a WDNP file.

    Raises:
        CheckpointFormatError: On bad magic, unsupported version or truncation
    """
    blob = Path(path).read_bytes()
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise CheckpointFormatError(
                path, offset, f"truncated while reading {what} (need {size} bytes, have {len(blob) - offset})")
        chunk = blob[offset:offset + size]
        offset += size
        return chunk

    magic = take(4, "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointFormatError(path, 4, f"unsupported version {version}, expected {VERSION}")

    tensors = []
    for index in range(count):
        (rank,) = struct.unpack("<I", take(4, f"rank of tensor {index}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of tensor {index}"))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * size, f"data of tensor {index}"), dtype="<f8")
        tensors.append(data.astype(np.float64).reshape(dims))
    if offset != len(blob):
        raise CheckpointFormatError(path, offset, f"{len(blob) - offset} trailing bytes")
    return tensors
