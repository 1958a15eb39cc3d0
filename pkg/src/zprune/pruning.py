"""Mask construction and the layer/model pruning pipeline.

A mask keeps exactly total - floor(rho * total) entries of a metric, where
total is the row length (per-neuron mode) or the full matrix size (global
mode).  Ties are broken by ascending flat index, so masks are a pure
function of the metric's ordering and never depend on timing or hashing.

Model pruning is strictly sequential over blocks: block k's calibration
activations are computed with blocks 0..k-1 already pruned, then block k's
output is recomputed with its own pruned weights before moving on.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import ActivationStats, ScalingParams, apply_activation_scaling, collect_feature_norms
from .errors import DomainError, EmptyCalibrationError, InvalidMetricError, ShapeError
from .importance import ImportanceConfig, combined_importance
from .tensor_store import Matrix, matrix_sparsity, validate_matrix
from .toy_model import (
    PRUNABLE_LAYERS,
    ToyModel,
    block_forward,
    block_input_captures,
    embed_sequences,
    validate_tokens,
)

MODES = ("per_neuron", "global")
METHODS = ("zpruner", "magnitude", "wanda")

# Tolerance for decimal rho values whose product with the element count
# lands a few ulps below an exact integer.
_COUNT_NUDGE = 1e-9


@dataclass(frozen=True)
class PruneRequest:
    """Everything needed to prune one layer or one model."""

    method: str = "zpruner"
    rho: float = 0.5
    mode: str = "per_neuron"
    importance_cfg: ImportanceConfig = field(default_factory=ImportanceConfig)
    scaling: ScalingParams = field(default_factory=ScalingParams)
    reconstruction: bool = False

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.rho <= 1.0 or not math.isfinite(self.rho):
            raise DomainError(f"rho must be in [0, 1], got {self.rho}")


@dataclass
class PruneMask:
    """Binary keep mask plus the provenance of how it was built."""

    keep: Matrix
    mode: str
    rho: float
    method: str
    tie_break: str = "index_order"

    def __post_init__(self) -> None:
        validate_matrix(self.keep, "mask")
        vals = np.unique(self.keep)
        if not np.isin(vals, (0.0, 1.0)).all():
            raise DomainError("mask entries must be exactly 0.0 or 1.0")

    @property
    def dropped_count(self) -> int:
        return int(self.keep.size - np.count_nonzero(self.keep))

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.keep))


@dataclass
class LayerReport:
    """One pruned layer's summary row."""

    layer_id: str
    method: str
    rho: float
    mode: str
    kept: int
    dropped: int
    sparsity: float
    millis: int

    def to_json_line(self) -> str:
        import json

        return json.dumps(
            {
                "layer_id": self.layer_id,
                "method": self.method,
                "rho": round(self.rho, 6),
                "mode": self.mode,
                "kept": self.kept,
                "dropped": self.dropped,
                "sparsity": round(self.sparsity, 6),
                "millis": self.millis,
            },
            separators=(", ", ": "),
        )


@dataclass
class PruneRun:
    """Output bundle of prune_model."""

    model: ToyModel
    reports: list[LayerReport]
    masks: dict[str, PruneMask]
    stats: dict[str, ActivationStats]


def drop_count(rho: float, total: int) -> int:
    """floor(rho * total), robust to decimal rho representation error."""
    if not 0.0 <= rho <= 1.0 or not math.isfinite(rho):
        raise DomainError(f"rho must be in [0, 1], got {rho}")
    if total <= 0:
        raise ShapeError(f"total must be > 0, got {total}")
    return min(total, int(math.floor(rho * total + _COUNT_NUDGE)))


def build_mask(metric: np.ndarray, rho: float, mode: str, method: str = "zpruner") -> PruneMask:
    """Keep-mask that drops the floor(rho * total) smallest metric entries.

    per_neuron mode ranks within each row independently; global mode ranks
    the whole matrix.  Ties go to the smaller flat index.
    """
    m = np.asarray(metric, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"metric must be nonempty 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InvalidMetricError("metric contains NaN or infinite entries")
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")

    keep = np.ones(m.shape, dtype=np.float32)
    if mode == "per_neuron":
        k = drop_count(rho, m.shape[1])
        if k:
            order = np.argsort(m, axis=1, kind="stable")
            rows = np.arange(m.shape[0])[:, None]
            keep[rows, order[:, :k]] = 0.0
    else:
        k = drop_count(rho, m.size)
        if k:
            order = np.argsort(m.ravel(), kind="stable")
            keep.ravel()[order[:k]] = 0.0
    return PruneMask(keep=keep, mode=mode, rho=rho, method=method)


def apply_mask(w: Matrix, mask: PruneMask) -> Matrix:
    """Zero the dropped entries; kept entries are copied bit-for-bit."""
    validate_matrix(w, "apply_mask input")
    if w.shape != mask.keep.shape:
        raise ShapeError(f"weight shape {w.shape} does not match mask shape {mask.keep.shape}")
    return np.where(mask.keep != 0.0, w, np.float32(0.0))


def magnitude_metric(w: Matrix) -> np.ndarray:
    """|W|: the classical magnitude saliency."""
    validate_matrix(w, "magnitude input")
    return np.abs(w.astype(np.float64))


def wanda_metric(w: Matrix, stats: ActivationStats) -> np.ndarray:
    """|W| times each input feature's calibration activation norm."""
    validate_matrix(w, "wanda input")
    if stats.feature_norms.size != w.shape[1]:
        raise ShapeError(
            f"feature_norms length {stats.feature_norms.size} does not match "
            f"weight columns {w.shape[1]}"
        )
    return np.abs(w.astype(np.float64)) * stats.feature_norms[np.newaxis, :]


def zpruner_metric(w: Matrix, stats: ActivationStats, req: PruneRequest) -> np.ndarray:
    """Statistical importance blended, then activation-scaled per column."""
    breakdown = combined_importance(w, req.importance_cfg)
    return apply_activation_scaling(breakdown.combined, stats, req.scaling)


def prune_layer(
    w: Matrix,
    stats: ActivationStats | None,
    req: PruneRequest,
    layer_id: str = "layer",
) -> tuple[Matrix, PruneMask]:
    """Score one weight matrix and zero its lowest-ranked entries."""
    if req.reconstruction:
        raise NotImplementedError("weight reconstruction after masking is not implemented")
    validate_matrix(w, layer_id)
    if req.method == "magnitude":
        metric = magnitude_metric(w)
    else:
        if stats is None:
            raise EmptyCalibrationError(
                f"method {req.method!r} requires activation stats for {layer_id}"
            )
        if req.method == "wanda":
            metric = wanda_metric(w, stats)
        else:
            metric = zpruner_metric(w, stats, req)
    mask = build_mask(metric, req.rho, req.mode, req.method)
    return apply_mask(w, mask), mask


def prune_model(
    model: ToyModel,
    calib_tokens: np.ndarray,
    req: PruneRequest,
    method_overrides: dict[int, str] | None = None,
) -> PruneRun:
    """Prune every attention and MLP projection of a toy model in place order.

    calib_tokens is (n_sequences, seq_len) integer token ids.  Blocks are
    processed front to back; each block's activation statistics reflect all
    earlier pruning, and its output is recomputed with its own pruned
    weights before the next block is calibrated.  method_overrides maps a
    block index to a method name, overriding req.method for that block
    (the masking mode and rho are shared).

    Returns a new model; the input model is left untouched.
    """
    if req.reconstruction:
        raise NotImplementedError("weight reconstruction after masking is not implemented")
    calib = np.asarray(calib_tokens)
    if calib.ndim == 1:
        calib = calib[np.newaxis, :]
    if calib.ndim != 2 or calib.size == 0:
        raise EmptyCalibrationError(
            f"calibration tokens must be a nonempty (sequences, length) array, got shape {calib.shape}"
        )
    if calib.shape[1] > model.config.context_len:
        raise ShapeError(
            f"calibration sequence length {calib.shape[1]} exceeds context_len "
            f"{model.config.context_len}"
        )
    validate_tokens(calib, model.config.vocab_size)
    overrides = method_overrides or {}
    for idx, name in overrides.items():
        if not 0 <= idx < len(model.blocks):
            raise DomainError(f"method override for out-of-range block {idx}")
        if name not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {name!r}")

    pruned = model.clone()
    reports: list[LayerReport] = []
    masks: dict[str, PruneMask] = {}
    stats_by_layer: dict[str, ActivationStats] = {}

    x = embed_sequences(pruned, calib)
    for bi, block in enumerate(pruned.blocks):
        captures = block_input_captures(pruned.config, block, x)
        block_req = replace(req, method=overrides.get(bi, req.method))
        for short in PRUNABLE_LAYERS:
            layer_id = f"blocks/{bi}/{short}"
            acts = captures[short]
            stats = collect_feature_norms(acts, layer_id)
            w = block.get(short)
            t0 = time.perf_counter()
            w2, mask = prune_layer(w, stats, block_req, layer_id)
            millis = int(round((time.perf_counter() - t0) * 1000.0))
            block.set(short, w2)
            masks[layer_id] = mask
            stats_by_layer[layer_id] = stats
            reports.append(
                LayerReport(
                    layer_id=layer_id,
                    method=block_req.method,
                    rho=req.rho,
                    mode=req.mode,
                    kept=mask.kept_count,
                    dropped=mask.dropped_count,
                    sparsity=matrix_sparsity(w2),
                    millis=millis,
                )
            )
        x = block_forward(pruned.config, block, x)
    return PruneRun(model=pruned, reports=reports, masks=masks, stats=stats_by_layer)
