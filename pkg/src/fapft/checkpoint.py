"""Bit-exact checkpoint reading, writing, hashing, and structural diffing.

Container layout (single file, zero-copy friendly):

* bytes 0-7: unsigned 64-bit little-endian header length ``N``
* bytes 8..8+N: UTF-8 JSON object mapping tensor name to
  ``{"dtype": "F16"|"F32"|"F64", "shape": [...], "data_offsets": [begin, end)}``
  with offsets relative to byte ``8+N``, plus an optional ``"__metadata__"``
  string map
* remainder: contiguous little-endian row-major tensor payload

Writes are canonical: tensor entries sorted lexicographically by name, JSON
keys sorted, no insignificant whitespace, payload in name order, dtype always
F32. Identical checkpoints therefore produce byte-identical files, and the
content hash is the SHA-256 of those canonical bytes (lowercase hex).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import CorruptFile, FormatError, InvalidValue, IoError, UnsupportedDtype
from .tensors import Tensor

__all__ = [
    "Checkpoint",
    "DiffReport",
    "read_checkpoint",
    "write_checkpoint",
    "diff_checkpoints",
]

_READ_DTYPES = {"F16": np.dtype("<f2"), "F32": np.dtype("<f4"), "F64": np.dtype("<f8")}
_METADATA_KEY = "__metadata__"


def _validate_name(name) -> str:
    if not isinstance(name, str) or not name:
        raise FormatError(f"tensor name must be a non-empty string, got {name!r}")
    if not name.isascii() or any(c.isspace() for c in name):
        raise FormatError(f"tensor name must be ASCII without whitespace: {name!r}")
    if name == _METADATA_KEY:
        raise FormatError(f"tensor name {_METADATA_KEY!r} is reserved")
    return name


class Checkpoint:
    """An immutable named map of tensors plus a string metadata map.

    Toolkit producers namespace their metadata keys as ``pft.*``
    (``pft.arch_id``, ``pft.seed``, ``pft.epoch``, ``pft.producer``, ...).
    """

    __slots__ = ("_tensors", "_metadata", "_hash")

    def __init__(
        self,
        tensors: Mapping[str, Tensor],
        metadata: Mapping[str, str] | None = None,
    ):
        clean: dict[str, Tensor] = {}
        for name, tensor in tensors.items():
            _validate_name(name)
            if not isinstance(tensor, Tensor):
                tensor = Tensor(tensor, name=name)
            clean[name] = tensor
        meta: dict[str, str] = {}
        for k, v in (metadata or {}).items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise FormatError(f"metadata must map str to str, got {k!r}: {v!r}")
            meta[k] = v
        self._tensors = clean
        self._metadata = meta
        self._hash: str | None = None

    @property
    def tensors(self) -> Mapping[str, Tensor]:
        return MappingProxyType(self._tensors)

    @property
    def metadata(self) -> Mapping[str, str]:
        return MappingProxyType(self._metadata)

    @property
    def names(self) -> list[str]:
        return sorted(self._tensors)

    def canonical_bytes(self) -> bytes:
        """Canonical serialization; the basis of both files and hashes."""
        header: dict[str, object] = {}
        payload_parts: list[bytes] = []
        offset = 0
        for name in sorted(self._tensors):
            tensor = self._tensors[name]
            raw = tensor.tobytes()
            header[name] = {
                "dtype": "F32",
                "shape": list(tensor.shape),
                "data_offsets": [offset, offset + len(raw)],
            }
            payload_parts.append(raw)
            offset += len(raw)
        if self._metadata:
            header[_METADATA_KEY] = dict(sorted(self._metadata.items()))
        header_bytes = json.dumps(
            header, sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        return (
            struct.pack("<Q", len(header_bytes))
            + header_bytes
            + b"".join(payload_parts)
        )

    @property
    def content_hash(self) -> str:
        if self._hash is None:
            self._hash = hashlib.sha256(self.canonical_bytes()).hexdigest()
        return self._hash

    def same_content(self, other: "Checkpoint") -> bool:
        return self.content_hash == other.content_hash

    def __repr__(self):
        return f"Checkpoint({len(self._tensors)} tensors, hash={self.content_hash[:12]})"


def write_checkpoint(ckpt: Checkpoint, path) -> str:
    """Write the canonical serialization to ``path``; returns the content hash."""
    data = ckpt.canonical_bytes()
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint to {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def _parse_header(blob: bytes, payload_size: int):
    def reject_duplicates(pairs):
        seen = set()
        out = {}
        for k, v in pairs:
            if k in seen:
                raise FormatError(f"duplicate header key {k!r}")
            seen.add(k)
            out[k] = v
        return out

    try:
        header = json.loads(blob.decode("utf-8"), object_pairs_hook=reject_duplicates)
    except FormatError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object")

    metadata: dict[str, str] = {}
    entries: dict[str, tuple[np.dtype, tuple[int, ...], int, int]] = {}
    for name, value in header.items():
        if name == _METADATA_KEY:
            if not isinstance(value, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in value.items()
            ):
                raise FormatError("__metadata__ must be a string map")
            metadata = dict(value)
            continue
        _validate_name(name)
        if not isinstance(value, dict) or set(value) != {
            "dtype",
            "shape",
            "data_offsets",
        }:
            raise FormatError(
                f"entry {name!r} must have exactly dtype/shape/data_offsets"
            )
        dtype_tag = value["dtype"]
        if not isinstance(dtype_tag, str):
            raise FormatError(f"entry {name!r} has a non-string dtype")
        if dtype_tag not in _READ_DTYPES:
            raise UnsupportedDtype(f"tensor {name!r} has unsupported dtype {dtype_tag!r}")
        dtype = _READ_DTYPES[dtype_tag]
        shape = value["shape"]
        if not isinstance(shape, list) or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape
        ):
            raise FormatError(f"entry {name!r} has an invalid shape {shape!r}")
        offsets = value["data_offsets"]
        if (
            not isinstance(offsets, list)
            or len(offsets) != 2
            or not all(isinstance(o, int) and not isinstance(o, bool) for o in offsets)
        ):
            raise FormatError(f"entry {name!r} has invalid data_offsets {offsets!r}")
        begin, end = offsets
        if begin < 0 or begin > end or end > payload_size:
            raise CorruptFile(
                f"tensor {name!r} offsets [{begin}, {end}) out of bounds "
                f"for payload of {payload_size} bytes"
            )
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if end - begin != expected:
            raise CorruptFile(
                f"tensor {name!r} spans {end - begin} bytes but shape {shape} "
                f"with dtype {dtype_tag} needs {expected}"
            )
        entries[name] = (dtype, tuple(shape), begin, end)

    # payload must be tiled exactly: no gaps, no overlaps, no trailing bytes
    cursor = 0
    for name, (_, _, begin, end) in sorted(
        entries.items(), key=lambda item: (item[1][2], item[1][3])
    ):
        if begin != cursor:
            kind = "overlap" if begin < cursor else "gap"
            raise CorruptFile(f"payload {kind} at byte {begin} (tensor {name!r})")
        cursor = end
    if cursor != payload_size:
        raise CorruptFile(
            f"payload has {payload_size - cursor} trailing bytes not covered by any tensor"
        )
    return metadata, entries


def read_checkpoint(path) -> Checkpoint:
    """Read and validate a checkpoint file.

    F16 and F64 payloads are converted to the float32 working precision
    (exactly, where the value is representable). Non-finite stored values are
    rejected.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint from {path}: {exc}") from exc

    if len(blob) < 8:
        raise CorruptFile(f"file is {len(blob)} bytes; need at least an 8-byte header length")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise CorruptFile(
            f"header length {header_len} exceeds file size {len(blob)}"
        )
    payload = blob[8 + header_len :]
    metadata, entries = _parse_header(blob[8 : 8 + header_len], len(payload))

    tensors: dict[str, Tensor] = {}
    for name, (dtype, shape, begin, end) in entries.items():
        arr = np.frombuffer(payload[begin:end], dtype=dtype).reshape(shape)
        if dtype != np.dtype("<f4"):
            arr = arr.astype(np.float32)
        try:
            tensors[name] = Tensor(arr, name=name)
        except InvalidValue as exc:
            raise InvalidValue(f"{path}: {exc}") from exc
    return Checkpoint(tensors, metadata)


@dataclass
class DiffReport:
    """Structural diff of two checkpoints; the five lists partition the name union."""

    only_in_a: list[str] = field(default_factory=list)
    only_in_b: list[str] = field(default_factory=list)
    shape_mismatch: list[tuple[str, tuple[int, ...], tuple[int, ...]]] = field(
        default_factory=list
    )
    value_equal: list[str] = field(default_factory=list)
    value_diff: list[tuple[str, float]] = field(default_factory=list)

    @property
    def identical(self) -> bool:
        return not (
            self.only_in_a or self.only_in_b or self.shape_mismatch or self.value_diff
        )


def diff_checkpoints(a: Checkpoint, b: Checkpoint) -> DiffReport:
    """Compare tensors by name; value comparison is bitwise at storage precision."""
    report = DiffReport()
    names_a = set(a.tensors)
    names_b = set(b.tensors)
    report.only_in_a = sorted(names_a - names_b)
    report.only_in_b = sorted(names_b - names_a)
    for name in sorted(names_a & names_b):
        ta = a.tensors[name]
        tb = b.tensors[name]
        if ta.shape != tb.shape:
            report.shape_mismatch.append((name, ta.shape, tb.shape))
        elif ta.tobytes() == tb.tobytes():
            report.value_equal.append(name)
        else:
            delta = np.abs(
                ta.array.astype(np.float64) - tb.array.astype(np.float64)
            )
            report.value_diff.append((name, float(delta.max(initial=0.0))))
    return report
