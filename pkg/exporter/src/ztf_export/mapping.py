"""Strict per-family tables from source tensor names to canonical archive names.

Each family is a list of anchored regex patterns.  A name either matches
exactly one pattern or is unknown; there is no similarity matching.  The
`(?:model\\.)?` alternation on decoder-style names is deliberate: both
prefixed and unprefixed conversions of the same architecture circulate.

Canonical names follow the block schema "blocks/<i>/attn/{q,k,v,o}" and
"blocks/<i>/mlp/{up,down}"; families with a gated MLP add "blocks/<i>/mlp/gate".
Input/output-side matrices map to "embed", "pos", "head" and the width
projections "proj_in"/"proj_out".
"""

from __future__ import annotations

import re

FAMILIES = ("opt", "llama")

_LLAMA = [
    (r"model\.embed_tokens\.weight", "embed"),
    (r"lm_head\.weight", "head"),
    (r"model\.layers\.(\d+)\.self_attn\.q_proj\.weight", "blocks/{i}/attn/q"),
    (r"model\.layers\.(\d+)\.self_attn\.k_proj\.weight", "blocks/{i}/attn/k"),
    (r"model\.layers\.(\d+)\.self_attn\.v_proj\.weight", "blocks/{i}/attn/v"),
    (r"model\.layers\.(\d+)\.self_attn\.o_proj\.weight", "blocks/{i}/attn/o"),
    (r"model\.layers\.(\d+)\.mlp\.gate_proj\.weight", "blocks/{i}/mlp/gate"),
    (r"model\.layers\.(\d+)\.mlp\.up_proj\.weight", "blocks/{i}/mlp/up"),
    (r"model\.layers\.(\d+)\.mlp\.down_proj\.weight", "blocks/{i}/mlp/down"),
]

_OPT = [
    (r"(?:model\.)?decoder\.embed_tokens\.weight", "embed"),
    (r"(?:model\.)?decoder\.embed_positions\.weight", "pos"),
    (r"lm_head\.weight", "head"),
    (r"(?:model\.)?decoder\.project_in\.weight", "proj_in"),
    (r"(?:model\.)?decoder\.project_out\.weight", "proj_out"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.self_attn\.q_proj\.weight", "blocks/{i}/attn/q"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.self_attn\.k_proj\.weight", "blocks/{i}/attn/k"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.self_attn\.v_proj\.weight", "blocks/{i}/attn/v"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.self_attn\.out_proj\.weight", "blocks/{i}/attn/o"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.fc1\.weight", "blocks/{i}/mlp/up"),
    (r"(?:model\.)?decoder\.layers\.(\d+)\.fc2\.weight", "blocks/{i}/mlp/down"),
]

_TABLES = {
    "llama": [(re.compile(p + r"\Z"), t) for p, t in _LLAMA],
    "opt": [(re.compile(p + r"\Z"), t) for p, t in _OPT],
}


def map_name(family: str, source_name: str) -> str | None:
    """Canonical name for a source tensor, or None when the table has no entry."""
    if family not in _TABLES:
        raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")
    for pattern, template in _TABLES[family]:
        m = pattern.match(source_name)
        if m:
            if m.groups():
                return template.format(i=int(m.group(1)))
            return template
    return None


def archive_for(canonical: str) -> str:
    """Output archive filename holding a canonical tensor.

    Block tensors group per block; input-side matrices share embed.ztf and
    output-side matrices share head.ztf.
    """
    if canonical.startswith("blocks/"):
        idx = int(canonical.split("/")[1])
        return f"block_{idx:03d}.ztf"
    if canonical in ("embed", "pos", "proj_in"):
        return "embed.ztf"
    if canonical in ("head", "proj_out"):
        return "head.ztf"
    raise ValueError(f"no archive rule for canonical name {canonical!r}")
