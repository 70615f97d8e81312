"""Binary tensor blobs and key/value manifests shared by all on-disk formats.

Every persisted tensor is a single file: an 8-byte magic, a shape header
(rank, then each dim, all little-endian uint64), then the row-major
little-endian float32 payload. Manifests are UTF-8 ``key = value`` text.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
import torch

MAGIC = b"CORALTNS"


class BlobFormatError(RuntimeError):
    """Raised when a tensor blob has a bad magic, header, or payload size."""


class ManifestError(RuntimeError):
    """Raised when a manifest file is missing keys or cannot be parsed."""


class VersionError(RuntimeError):
    """Raised when an on-disk format version or structure does not match."""


def tensor_to_blob(tensor: torch.Tensor) -> bytes:
    arr = np.asarray(tensor.detach().cpu().numpy(), dtype="<f4")
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    header = MAGIC + struct.pack("<Q", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return header + arr.tobytes()


def blob_to_tensor(raw: bytes) -> torch.Tensor:
    if len(raw) < len(MAGIC) + 8:
        raise BlobFormatError("blob truncated before shape header")
    if raw[: len(MAGIC)] != MAGIC:
        raise BlobFormatError(f"bad magic {raw[:len(MAGIC)]!r}")
    (rank,) = struct.unpack_from("<Q", raw, len(MAGIC))
    offset = len(MAGIC) + 8
    if rank > 8:
        raise BlobFormatError(f"implausible rank {rank}")
    if len(raw) < offset + 8 * rank:
        raise BlobFormatError("blob truncated inside shape header")
    shape = struct.unpack_from(f"<{rank}Q", raw, offset) if rank else ()
    offset += 8 * rank
    count = 1
    for dim in shape:
        count *= dim
    if len(raw) != offset + 4 * count:
        raise BlobFormatError(
            f"payload size {len(raw) - offset} does not match shape {tuple(shape)}"
        )
    arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
    return torch.from_numpy(arr.copy())


def write_tensor(path: str | Path, tensor: torch.Tensor) -> None:
    Path(path).write_bytes(tensor_to_blob(tensor))


def read_tensor(path: str | Path) -> torch.Tensor:
    path = Path(path)
    if not path.exists():
        raise BlobFormatError(f"missing tensor blob {path}")
    return blob_to_tensor(path.read_bytes())


def blob_crc32(raw: bytes) -> str:
    return f"{zlib.crc32(raw) & 0xFFFFFFFF:08x}"


def write_manifest(path: str | Path, entries: dict[str, str]) -> None:
    lines = []
    for key, value in entries.items():
        value = str(value)
        if "\n" in key or "\n" in value or "=" in key:
            raise ManifestError(f"manifest entry {key!r} not representable")
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"missing manifest {path}")
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def manifest_get(entries: dict[str, str], key: str) -> str:
    if key not in entries:
        raise ManifestError(f"manifest missing key {key!r}")
    return entries[key]


def ints_csv(values) -> str:
    return ",".join(str(int(v)) for v in values)


def parse_ints_csv(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))
