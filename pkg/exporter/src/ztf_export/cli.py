"""Command line front end: ztf-export --source <id-or-path> --family <f> --out <dir>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from zprune import ZPrunerError

from .errors import ExportError
from .export import export
from .mapping import FAMILIES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ztf-export",
        description="Convert a pretrained transformer checkpoint into ZTF weight archives",
    )
    p.add_argument("--source", required=True,
                   help="checkpoint path: a .safetensors/.bin file or a model directory")
    p.add_argument("--family", required=True, choices=FAMILIES,
                   help="architecture family that fixes the tensor name table")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        manifest = export(ns.source, ns.family, ns.out)
    except (ExportError, ZPrunerError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    counts = manifest.counts
    print(
        f"exported {counts['mapped']} matrices into {len(manifest.archives)} archives "
        f"at {ns.out} ({counts['skipped']} tensors skipped, "
        f"max |f32 delta| {manifest.max_abs_delta:g})"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
