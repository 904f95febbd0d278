"""Binary tensor and checkpoint file formats.

Tensor files ("RMTN"): magic, version byte, u8 rank, little-endian u64
dims, then float32 data row-major.

Checkpoint files ("RMCK"): magic, version byte, 32-byte config digest,
u32 entry count, then entries of (u16 name length, utf-8 name, RMTN
blob).
"""

import hashlib
import io
import struct

import numpy as np

from .errors import InvalidInput

TENSOR_MAGIC = b"RMTN"
CHECKPOINT_MAGIC = b"RMCK"
VERSION = 1


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f4")
    header = TENSOR_MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + dims + arr.tobytes(order="C")


def write_tensor(path, arr: np.ndarray):
    with open(path, "wb") as f:
        f.write(tensor_bytes(arr))


def _read_tensor_stream(f) -> np.ndarray:
    magic = f.read(4)
    if magic != TENSOR_MAGIC:
        raise InvalidInput(f"bad tensor magic {magic!r}")
    version, rank = struct.unpack("<BB", f.read(2))
    if version != VERSION:
        raise InvalidInput(f"unsupported tensor version {version}")
    dims = struct.unpack(f"<{rank}Q", f.read(8 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(f.read(4 * count), dtype="<f4")
    if data.size != count:
        raise InvalidInput("truncated tensor data")
    return data.reshape(dims).copy()


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return _read_tensor_stream(f)


def config_digest(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def write_checkpoint(path, digest: bytes, tensors: dict):
    """Write named float32 tensors; dict order is preserved on disk."""
    if len(digest) != 32:
        raise InvalidInput("digest must be 32 bytes")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC + struct.pack("<B", VERSION) + digest)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(tensor_bytes(arr))
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_checkpoint(path):
    """Returns (digest, {name: float32 array})."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise InvalidInput(f"bad checkpoint magic {magic!r}")
        version, = struct.unpack("<B", f.read(1))
        if version != VERSION:
            raise InvalidInput(f"unsupported checkpoint version {version}")
        digest = f.read(32)
        count, = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            name_len, = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            tensors[name] = _read_tensor_stream(f)
    return digest, tensors
