"""Checkpoint readers: safetensors containers and torch pickle state dicts.

Tensors are described up front (name, shape, dtype) and loaded one at a time
through a closure, so peak memory stays bounded by the largest tensor group
being written.  The safetensors container is decoded directly with numpy:
the format is a u64-length-prefixed JSON header followed by a flat byte
buffer, and reading it ourselves is what makes bf16 sources loadable without
a torch dependency (bf16 bit patterns are the top half of f32).

Loading returns the f32 export values together with an exact f64 view of the
source values, so the caller can record the true downcast error: zero for
f32/f16/bf16 sources, at most half an ulp for f64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import SourceError

# float dtype tag -> byte width; anything else is skippable, never exported
FLOAT_WIDTHS = {"F64": 8, "F32": 4, "F16": 2, "BF16": 2}
_OTHER_WIDTHS = {
    "I64": 8, "U64": 8, "I32": 4, "U32": 4, "I16": 2, "U16": 2,
    "I8": 1, "U8": 1, "BOOL": 1, "F8_E4M3": 1, "F8_E5M2": 1,
}


@dataclass
class SourceTensor:
    """One tensor of a checkpoint, loadable on demand."""

    name: str
    shape: tuple[int, ...]
    dtype: str
    load: Callable[[], tuple[np.ndarray, np.ndarray]]  # (f32 values, exact f64 values)

    @property
    def is_float(self) -> bool:
        return self.dtype in FLOAT_WIDTHS


def _decode(raw: np.ndarray, dtype: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Raw little-endian bytes to (f32, exact f64) arrays."""
    if dtype == "F32":
        exact = raw.view("<f4").reshape(shape)
        return np.ascontiguousarray(exact), exact.astype(np.float64)
    if dtype == "F16":
        h = raw.view("<f2").reshape(shape)
        return h.astype(np.float32), h.astype(np.float64)
    if dtype == "BF16":
        bits = raw.view("<u2").astype(np.uint32) << np.uint32(16)
        as32 = bits.view(np.float32).reshape(shape)
        return np.ascontiguousarray(as32), as32.astype(np.float64)
    if dtype == "F64":
        d = raw.view("<f8").reshape(shape)
        return d.astype(np.float32), np.ascontiguousarray(d)
    raise SourceError(f"cannot decode dtype {dtype!r}")


def _read_safetensors(path: Path) -> list[SourceTensor]:
    try:
        raw = np.memmap(path, dtype=np.uint8, mode="r")
    except (OSError, ValueError) as exc:
        raise SourceError(f"{path}: cannot open: {exc}") from None
    if raw.size < 8:
        raise SourceError(f"{path}: too short for a header length")
    header_len = int.from_bytes(bytes(raw[:8]), "little")
    if 8 + header_len > raw.size:
        raise SourceError(
            f"{path}: header claims {header_len} bytes, file has {raw.size - 8}"
        )
    try:
        header = json.loads(bytes(raw[8:8 + header_len]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SourceError(f"{path}: bad header JSON: {exc}") from None
    if not isinstance(header, dict):
        raise SourceError(f"{path}: header is not an object")

    data = raw[8 + header_len:]
    tensors = []
    for name in sorted(header):
        if name == "__metadata__":
            continue
        ent = header[name]
        try:
            dtype = ent["dtype"]
            shape = tuple(int(d) for d in ent["shape"])
            begin, end = (int(v) for v in ent["data_offsets"])
        except (TypeError, KeyError, ValueError):
            raise SourceError(f"{path}: malformed entry {name!r}") from None
        if not 0 <= begin <= end <= data.size:
            raise SourceError(
                f"{path}: entry {name!r} spans [{begin}, {end}) outside payload size {data.size}"
            )
        width = FLOAT_WIDTHS.get(dtype) or _OTHER_WIDTHS.get(dtype)
        if width is not None and end - begin != int(np.prod(shape, dtype=np.int64)) * width:
            raise SourceError(
                f"{path}: entry {name!r} length {end - begin} does not match "
                f"shape {list(shape)} at {width} bytes per element"
            )

        def load(d=dtype, s=shape, b=begin, e=end):
            return _decode(np.asarray(data[b:e]), d, s)

        tensors.append(SourceTensor(name, shape, dtype, load))
    return tensors


_TORCH_DTYPES = {"float32": "F32", "float16": "F16", "bfloat16": "BF16", "float64": "F64"}


def _read_torch_bin(path: Path) -> list[SourceTensor]:
    try:
        import torch
    except ImportError:
        raise SourceError(
            f"{path}: reading torch pickle checkpoints requires the optional "
            "torch dependency (pip install 'ztf-export[torch]'), or convert "
            "the checkpoint to safetensors first"
        ) from None
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise SourceError(f"{path}: torch cannot load: {exc}") from None
    if not isinstance(state, dict):
        raise SourceError(f"{path}: expected a state dict, got {type(state).__name__}")

    tensors = []
    for name in sorted(state):
        value = state[name]
        if not isinstance(value, torch.Tensor):
            tensors.append(SourceTensor(
                str(name), (), f"non-tensor:{type(value).__name__}", lambda: None
            ))
            continue
        dtype = _TORCH_DTYPES.get(str(value.dtype).removeprefix("torch."),
                                  str(value.dtype).removeprefix("torch.").upper())

        def load(t=value):
            return (
                t.detach().to(torch.float32).cpu().numpy(),
                t.detach().to(torch.float64).cpu().numpy(),
            )

        tensors.append(SourceTensor(str(name), tuple(value.shape), dtype, load))
    return tensors


def _read_sharded(index_path: Path) -> list[SourceTensor]:
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
        weight_map = index["weight_map"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise SourceError(f"{index_path}: bad shard index: {exc}") from None
    tensors = []
    for shard_name in sorted(set(weight_map.values())):
        shard = index_path.parent / shard_name
        if not shard.is_file():
            raise SourceError(f"{index_path}: missing shard {shard_name}")
        wanted = {n for n, s in weight_map.items() if s == shard_name}
        for t in _read_safetensors(shard):
            if t.name in wanted:
                tensors.append(t)
    tensors.sort(key=lambda t: t.name)
    return tensors


def open_source(source: str | Path) -> list[SourceTensor]:
    """Resolve a checkpoint reference to its tensors, sorted by name.

    Accepts a safetensors file, a torch .bin/.pt pickle, or a checkpoint
    directory in the usual layout (shard index, single-file safetensors, or
    torch pickle, preferred in that order).  Hub ids are not fetched; they
    must already exist on disk.
    """
    path = Path(source)
    if not path.exists():
        raise SourceError(
            f"{source}: not found locally; remote checkpoint ids must be "
            "downloaded before export"
        )
    if path.is_file():
        if path.suffix == ".safetensors":
            return _read_safetensors(path)
        if path.suffix in (".bin", ".pt"):
            return _read_torch_bin(path)
        raise SourceError(f"{path}: unrecognized checkpoint file type {path.suffix!r}")

    for name, reader in (
        ("model.safetensors.index.json", _read_sharded),
        ("model.safetensors", _read_safetensors),
        ("pytorch_model.bin", _read_torch_bin),
    ):
        candidate = path / name
        if candidate.is_file():
            return reader(candidate)
    single = sorted(path.glob("*.safetensors"))
    if len(single) == 1:
        return _read_safetensors(single[0])
    raise SourceError(
        f"{path}: no checkpoint found (looked for model.safetensors.index.json, "
        f"model.safetensors, pytorch_model.bin, or a single *.safetensors file)"
    )
