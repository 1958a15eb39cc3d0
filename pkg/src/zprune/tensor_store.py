"""Dense float32 matrices and the ZTF archive container.

A matrix is a nonempty 2-D C-contiguous float32 ndarray.  Weight matrices
follow the (out_features, in_features) convention throughout the package:
row i holds the fan-in weights of output neuron i.

ZTF ("zprune tensor format") is a flat single-file container:

    bytes 0..3    magic b"ZTF1"
    bytes 4..11   unsigned 64-bit little-endian header length H
    bytes 12..12+H  UTF-8 JSON: {name: {"dtype": "f32",
                                        "shape": [rows, cols],
                                        "offset": o, "len": l}}
    payload       raw row-major little-endian float32 data

Offsets are relative to the payload start (byte 12+H).  The writer sorts
entry names lexicographically and packs payload blocks in that order with
no gaps, and serializes the header with sorted keys and no whitespace, so
a given tensor map always produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ArchiveIOError, FormatError, InvalidArchiveError, MatrixError

MAGIC = b"ZTF1"
_HEADER_LEN_FMT = "<Q"
_DTYPE_TAG = "f32"

Matrix = np.ndarray


def as_matrix(values: object) -> Matrix:
    """Coerce array-like input to a valid matrix, copying only if needed."""
    try:
        arr = np.asarray(values)
    except Exception as exc:
        raise MatrixError(f"input is not array-like: {exc}") from exc
    if arr.ndim != 2:
        raise MatrixError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size == 0:
        raise MatrixError(f"matrix must be nonempty, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.number) or np.issubdtype(arr.dtype, np.complexfloating):
        raise MatrixError(f"matrix dtype must be real numeric, got {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.float32)


def validate_matrix(m: Matrix, name: str = "matrix", require_finite: bool = True) -> Matrix:
    """Check the matrix contract, returning the input unchanged on success."""
    if not isinstance(m, np.ndarray):
        raise MatrixError(f"{name}: expected ndarray, got {type(m).__name__}")
    if m.ndim != 2:
        raise MatrixError(f"{name}: expected 2-D, got ndim={m.ndim}")
    if m.size == 0:
        raise MatrixError(f"{name}: must be nonempty, got shape {m.shape}")
    if m.dtype != np.float32:
        raise MatrixError(f"{name}: dtype must be float32, got {m.dtype}")
    if require_finite and not np.isfinite(m).all():
        raise MatrixError(f"{name}: contains non-finite entries")
    return m


def matrix_sparsity(m: Matrix) -> float:
    """Fraction of entries that are exactly zero."""
    validate_matrix(m, require_finite=False)
    return float(np.count_nonzero(m == 0.0)) / m.size


def write_archive(tensors: Mapping[str, Matrix], path: str | Path) -> None:
    """Write a name->matrix map to a canonical ZTF file.

    Entries are laid out in lexicographic name order; equal maps always
    produce byte-identical files.
    """
    if not tensors:
        raise InvalidArchiveError("archive must contain at least one tensor")
    prepared: list[tuple[str, np.ndarray]] = []
    for name in sorted(tensors):
        if not isinstance(name, str) or not name:
            raise InvalidArchiveError(f"tensor name must be a nonempty string, got {name!r}")
        arr = tensors[name]
        validate_matrix(arr, name=name, require_finite=False)
        prepared.append((name, np.ascontiguousarray(arr, dtype="<f4")))

    header: dict[str, dict[str, object]] = {}
    offset = 0
    for name, arr in prepared:
        nbytes = arr.size * 4
        header[name] = {
            "dtype": _DTYPE_TAG,
            "shape": [int(arr.shape[0]), int(arr.shape[1])],
            "offset": offset,
            "len": nbytes,
        }
        offset += nbytes

    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack(_HEADER_LEN_FMT, len(header_bytes)))
            fh.write(header_bytes)
            for _, arr in prepared:
                fh.write(arr.tobytes())
    except OSError as exc:
        raise ArchiveIOError(f"cannot write archive {path}: {exc}") from exc


def read_archive(path: str | Path, require_finite: bool = False) -> dict[str, Matrix]:
    """Read a ZTF file back into a name->matrix map.

    Malformed containers raise FormatError; filesystem failures raise
    ArchiveIOError.  With require_finite=True, any NaN or infinite entry
    raises MatrixError.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ArchiveIOError(f"cannot read archive {path}: {exc}") from exc

    if len(raw) < 12:
        raise FormatError(f"{path}: file shorter than the 12-byte preamble")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack(_HEADER_LEN_FMT, raw[4:12])
    if 12 + header_len > len(raw):
        raise FormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict) or not header:
        raise FormatError(f"{path}: header must be a nonempty JSON object")

    payload = raw[12 + header_len :]
    spans: list[tuple[int, int, str]] = []
    out: dict[str, Matrix] = {}
    for name, entry in header.items():
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: entry {name!r} is not an object")
        if entry.get("dtype") != _DTYPE_TAG:
            raise FormatError(f"{path}: entry {name!r} has dtype {entry.get('dtype')!r}, only {_DTYPE_TAG!r} is supported")
        shape = entry.get("shape")
        if (
            not isinstance(shape, list)
            or len(shape) != 2
            or not all(isinstance(d, int) and d > 0 for d in shape)
        ):
            raise FormatError(f"{path}: entry {name!r} has invalid shape {shape!r}")
        off, ln = entry.get("offset"), entry.get("len")
        if not isinstance(off, int) or not isinstance(ln, int) or off < 0 or ln < 0:
            raise FormatError(f"{path}: entry {name!r} has invalid offset/len")
        if ln != shape[0] * shape[1] * 4:
            raise FormatError(f"{path}: entry {name!r} len {ln} does not match shape {shape}")
        if off + ln > len(payload):
            raise FormatError(f"{path}: truncated payload, entry {name!r} ends at {off + ln} of {len(payload)}")
        spans.append((off, off + ln, name))
        arr = np.frombuffer(payload, dtype="<f4", count=ln // 4, offset=off)
        out[name] = arr.reshape(shape[0], shape[1]).copy()

    spans.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(spans, spans[1:]):
        if start < prev_end:
            raise FormatError(f"{path}: entries {prev_name!r} and {name!r} overlap")
    if spans and spans[-1][1] != len(payload):
        raise FormatError(f"{path}: payload has {len(payload) - spans[-1][1]} unreferenced trailing bytes")

    if require_finite:
        for name, arr in out.items():
            validate_matrix(arr, name=name, require_finite=True)
    return out
