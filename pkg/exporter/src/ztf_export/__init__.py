"""Checkpoint-to-ZTF conversion for pretrained transformer weights.

Reads safetensors or torch pickle checkpoints, maps every 2-D weight matrix
to the canonical block-layer name schema of the pruning engine, and writes
one ZTF archive per transformer block (plus embed/head archives) alongside a
JSON manifest of the name map, skipped tensors, and downcast deltas.
"""

__version__ = "0.1.0"

from .errors import ExportError, MappingError, SourceError
from .export import MANIFEST_FORMAT, ExportManifest, export
from .mapping import FAMILIES, archive_for, map_name
from .sources import FLOAT_WIDTHS, SourceTensor, open_source

__all__ = [
    "ExportError",
    "MappingError",
    "SourceError",
    "MANIFEST_FORMAT",
    "ExportManifest",
    "export",
    "FAMILIES",
    "archive_for",
    "map_name",
    "FLOAT_WIDTHS",
    "SourceTensor",
    "open_source",
    "__version__",
]
