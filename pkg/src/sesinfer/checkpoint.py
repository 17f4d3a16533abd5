"""Single-file binary container for model checkpoints and embedding tables.

Layout (little-endian): magic ``DSEI`` | format version u32 | CRC-32 u32 of
the payload | payload. The payload is a sequence of named sections, each
``[name_len u32][name utf-8][data_len u64][data]``. Tensor sections carry
their own shape header: ``[ndim u32][dim u64 * ndim][float64 raw]``.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"DSEI"
FORMAT_VERSION = 1


class VersionMismatch(ValueError):
    pass


class ChecksumMismatch(ValueError):
    pass


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    header = struct.pack("<I", arr.ndim) + b"".join(struct.pack("<Q", d) for d in arr.shape)
    return header + arr.tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", data, 0)
    offset = 4
    shape = []
    for _ in range(ndim):
        (d,) = struct.unpack_from("<Q", data, offset)
        shape.append(d)
        offset += 8
    arr = np.frombuffer(data, dtype="<f8", offset=offset).reshape(shape)
    return arr.astype(np.float64)


def write_container(path: str, sections: list[tuple[str, bytes]]) -> None:
    payload = bytearray()
    for name, data in sections:
        encoded = name.encode("utf-8")
        payload += struct.pack("<I", len(encoded)) + encoded
        payload += struct.pack("<Q", len(data)) + data
    blob = MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<I", zlib.crc32(payload)) + bytes(payload)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_container(path: str) -> dict[str, bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ChecksumMismatch(f"{path}: not a checkpoint file or header truncated")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", blob, 8)
    payload = blob[12:]
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"{path}: payload checksum mismatch (file corrupt or truncated)")
    sections: dict[str, bytes] = {}
    offset = 0
    while offset < len(payload):
        (name_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        name = payload[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (data_len,) = struct.unpack_from("<Q", payload, offset)
        offset += 8
        sections[name] = payload[offset : offset + data_len]
        offset += data_len
    return sections
