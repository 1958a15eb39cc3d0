"""Drive a conversion end to end: classify tensors, map names, write archives.

Outputs land atomically: everything is staged in a sibling temp directory
and moved into place with os.replace only after all archives and the
manifest are complete.  Rerunning an export over the same source produces
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from zprune import write_archive

from .errors import ExportError, MappingError
from .mapping import archive_for, map_name
from .sources import SourceTensor, open_source

MANIFEST_FORMAT = "ztf-export/1"


@dataclass
class ExportManifest:
    """What an export produced: name map, skip reasons, counts, hashes."""

    source: str
    family: str
    archives: list[str]
    tensor_map: dict[str, dict]
    skipped: dict[str, str]
    counts: dict[str, int]
    max_abs_delta: float
    content_hash: str

    def to_json(self) -> str:
        payload = {
            "format": MANIFEST_FORMAT,
            "source": self.source,
            "family": self.family,
            "archives": self.archives,
            "tensor_map": self.tensor_map,
            "skipped": self.skipped,
            "counts": self.counts,
            "max_abs_delta": self.max_abs_delta,
            "content_hash": self.content_hash,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _classify(
    tensors: list[SourceTensor], family: str
) -> tuple[dict[str, tuple[str, SourceTensor]], dict[str, str]]:
    """Split tensors into canonical-name assignments and skip reasons."""
    mapped: dict[str, tuple[str, SourceTensor]] = {}
    skipped: dict[str, str] = {}
    unmapped: list[str] = []
    for t in tensors:
        if not t.is_float:
            skipped[t.name] = f"non-float dtype {t.dtype}"
            continue
        if len(t.shape) != 2:
            skipped[t.name] = "not a 2-D weight matrix"
            continue
        canonical = map_name(family, t.name)
        if canonical is None:
            unmapped.append(t.name)
            continue
        if canonical in mapped:
            raise MappingError(
                f"both {mapped[canonical][0]!r} and {t.name!r} map to {canonical!r}"
            )
        mapped[canonical] = (t.name, t)
    if unmapped:
        raise MappingError(
            f"no {family} name-table entry for 2-D tensors: {', '.join(sorted(unmapped))}"
        )
    return mapped, skipped


def export(source: str | Path, family: str, out: str | Path) -> ExportManifest:
    """Convert a checkpoint into per-block ZTF archives plus a JSON manifest."""
    tensors = open_source(source)
    mapped, skipped = _classify(tensors, family)
    if not mapped:
        raise ExportError(f"{source}: no exportable 2-D weight tensors found")

    by_archive: dict[str, list[str]] = {}
    for canonical in sorted(mapped):
        by_archive.setdefault(archive_for(canonical), []).append(canonical)

    out_dir = Path(out)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tensor_map: dict[str, dict] = {}
    overall_delta = 0.0
    digest = hashlib.sha256()

    with tempfile.TemporaryDirectory(dir=out_dir.parent, prefix=".ztf-export-") as tmp:
        staging = Path(tmp)
        for archive_name in sorted(by_archive):
            entries = {}
            for canonical in by_archive[archive_name]:
                source_name, t = mapped[canonical]
                as32, exact = t.load()
                delta = float(np.max(np.abs(exact - as32.astype(np.float64)))) if as32.size else 0.0
                overall_delta = max(overall_delta, delta)
                entries[canonical] = as32
                tensor_map[source_name] = {
                    "name": canonical,
                    "archive": archive_name,
                    "shape": [int(d) for d in t.shape],
                    "elements": int(as32.size),
                    "source_dtype": t.dtype,
                    "max_abs_delta": delta,
                }
            write_archive(entries, staging / archive_name)
            digest.update((staging / archive_name).read_bytes())

        manifest = ExportManifest(
            source=str(source),
            family=family,
            archives=sorted(by_archive),
            tensor_map=tensor_map,
            skipped=skipped,
            counts={
                "source_tensors": len(tensors),
                "mapped": len(mapped),
                "skipped": len(skipped),
            },
            max_abs_delta=overall_delta,
            content_hash=f"sha256:{digest.hexdigest()}",
        )
        (staging / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")

        out_dir.mkdir(exist_ok=True)
        for item in sorted(staging.iterdir()):
            os.replace(item, out_dir / item.name)

    return manifest
