"""Binary tensor (MSTN) and model container (MSMD) formats.

MSTN: b"MSTN", u32 version=1, u32 rank, rank x u64 dims, then little-endian
float32 values in row-major order.

MSMD: b"MSMD", u32 version=1, u32 entry count, then per entry a u32 name
length, the UTF-8 name and an embedded MSTN record.
"""

import io
import os
import struct

import numpy as np

from .errors import DomainError
from .tensor import Tensor

TENSOR_MAGIC = b"MSTN"
MODEL_MAGIC = b"MSMD"
VERSION = 1


class FormatError(DomainError):
    pass


def _as_array(x):
    if isinstance(x, Tensor):
        x = x.data
    return np.asarray(x)


def encode_tensor(x):
    arr = np.asarray(_as_array(x), dtype="<f4", order="C")
    head = TENSOR_MAGIC + struct.pack("<II", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def _read_exact(stream, n):
    buf = stream.read(n)
    if len(buf) != n:
        raise FormatError("truncated stream")
    return buf


def read_tensor(stream):
    if _read_exact(stream, 4) != TENSOR_MAGIC:
        raise FormatError("bad MSTN magic")
    version, rank = struct.unpack("<II", _read_exact(stream, 8))
    if version != VERSION:
        raise FormatError(f"unsupported MSTN version {version}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(stream, 8 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(stream, 4 * count), dtype="<f4")
    return data.reshape(dims).astype(np.float32)


def _expect_end(stream):
    if stream.read(1):
        raise FormatError("trailing bytes after record")


def decode_tensor(blob):
    stream = io.BytesIO(blob)
    out = read_tensor(stream)
    _expect_end(stream)
    return out


def save_tensor(path, x):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(x))


def load_tensor(path):
    with open(path, "rb") as fh:
        return read_tensor(fh)


def encode_container(entries):
    """``entries`` is a mapping (insertion order is preserved on disk)."""
    out = [MODEL_MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, value in entries.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(encode_tensor(value))
    return b"".join(out)


def decode_container(blob):
    stream = io.BytesIO(blob)
    if _read_exact(stream, 4) != MODEL_MAGIC:
        raise FormatError("bad MSMD magic")
    version, count = struct.unpack("<II", _read_exact(stream, 8))
    if version != VERSION:
        raise FormatError(f"unsupported MSMD version {version}")
    entries = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", _read_exact(stream, 4))
        name = _read_exact(stream, n).decode("utf-8")
        entries[name] = read_tensor(stream)
    _expect_end(stream)
    return entries


def save_container(path, entries):
    with open(path, "wb") as fh:
        fh.write(encode_container(entries))


def load_container(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        return decode_container(fh.read())
