"""Statistical importance scoring for weight matrices.

The score treats a weight as important when it is a statistical outlier of
its matrix.  Weights are normalized twice (per output neuron and per input
feature), standardized into z-scores over the whole matrix, amplified with
an odd power to stretch the tails, and the two views are blended with a
locally damped coefficient: near-zero weights lean harder on the input-
feature view.

All arithmetic runs in float64 regardless of the float32 carrier type.
Statistics are population statistics (ddof=0) over every entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .tensor_store import Matrix, validate_matrix


@dataclass(frozen=True)
class ImportanceConfig:
    """Constants of the scoring rule.

    blend_base is the weight of the row (output-neuron) view; the column
    view gets 1 - alpha.  blend_penalty shrinks alpha on entries whose
    magnitude falls below small_weight_factor times the mean magnitude.
    amp_exponent is the odd power applied to |z|.  The epsilons guard
    zero norms and zero spread.
    """

    blend_base: float = 0.7
    blend_penalty: float = 0.3
    small_weight_factor: float = 0.1
    amp_exponent: float = 3.0
    std_epsilon: float = 1e-8
    norm_epsilon: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 <= self.blend_base <= 1.0:
            raise DomainError(f"blend_base must be in [0, 1], got {self.blend_base}")
        if not 0.0 <= self.blend_penalty <= 1.0:
            raise DomainError(f"blend_penalty must be in [0, 1], got {self.blend_penalty}")
        if self.small_weight_factor < 0.0:
            raise DomainError(f"small_weight_factor must be >= 0, got {self.small_weight_factor}")
        if self.amp_exponent <= 0.0:
            raise DomainError(f"amp_exponent must be > 0, got {self.amp_exponent}")
        if self.std_epsilon <= 0.0 or self.norm_epsilon <= 0.0:
            raise DomainError("std_epsilon and norm_epsilon must be > 0")


@dataclass
class ImportanceBreakdown:
    """Intermediate and final arrays of one scoring pass, all float64."""

    row_normalized: np.ndarray
    col_normalized: np.ndarray
    row_z: np.ndarray
    col_z: np.ndarray
    row_amplified: np.ndarray
    col_amplified: np.ndarray
    alpha: np.ndarray
    combined: np.ndarray

    def to_tensors(self) -> dict[str, Matrix]:
        """Debug views for archive dumps, cast down to float32."""
        return {
            "row_z": self.row_z.astype(np.float32),
            "col_z": self.col_z.astype(np.float32),
            "alpha": self.alpha.astype(np.float32),
            "combined": self.combined.astype(np.float32),
        }


def normalize(w: Matrix, axis: str, eps: float = 1e-12) -> np.ndarray:
    """Divide each entry by the L2 norm of its row ("row") or column ("col").

    A norm of exactly zero is replaced by eps, so all-zero rows or columns
    normalize to zeros instead of NaN.
    """
    validate_matrix(w, "normalize input")
    w64 = w.astype(np.float64)
    if axis == "row":
        norms = np.linalg.norm(w64, axis=1, keepdims=True)
    elif axis == "col":
        norms = np.linalg.norm(w64, axis=0, keepdims=True)
    else:
        raise DomainError(f"axis must be 'row' or 'col', got {axis!r}")
    return w64 / np.where(norms == 0.0, eps, norms)


def zscore(x: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Standardize over all entries with population statistics.

    The standard deviation is clamped from below by eps, so a constant
    matrix maps to all zeros.
    """
    x64 = np.asarray(x, dtype=np.float64)
    if x64.ndim != 2 or x64.size == 0:
        raise ShapeError(f"zscore expects a nonempty 2-D array, got shape {x64.shape}")
    mu = x64.mean()
    sigma = x64.std()
    return (x64 - mu) / max(sigma, eps)


def amplify(d: np.ndarray, p: float = 3.0) -> np.ndarray:
    """|d|**p, stretching tail values away from the bulk."""
    if p <= 0.0:
        raise DomainError(f"amplification exponent must be > 0, got {p}")
    return np.abs(np.asarray(d, dtype=np.float64)) ** p


def blend_alpha(w: Matrix, cfg: ImportanceConfig | None = None) -> np.ndarray:
    """Per-entry blend coefficient for the row view.

    alpha = blend_base everywhere, damped by (1 - blend_penalty) on entries
    with |w| strictly below small_weight_factor * mean(|w|).
    """
    cfg = cfg or ImportanceConfig()
    validate_matrix(w, "blend_alpha input")
    w64 = w.astype(np.float64)
    mag = np.abs(w64)
    small = mag < cfg.small_weight_factor * mag.mean()
    return cfg.blend_base * (1.0 - cfg.blend_penalty * small)


def combined_importance(w: Matrix, cfg: ImportanceConfig | None = None) -> ImportanceBreakdown:
    """Full scoring pass over one weight matrix.

    Output combined is finite, nonnegative, and invariant to any positive
    uniform rescaling of w up to float rounding.
    """
    cfg = cfg or ImportanceConfig()
    validate_matrix(w, "importance input")
    row_n = normalize(w, "row", cfg.norm_epsilon)
    col_n = normalize(w, "col", cfg.norm_epsilon)
    row_z = zscore(row_n, cfg.std_epsilon)
    col_z = zscore(col_n, cfg.std_epsilon)
    row_amp = amplify(row_z, cfg.amp_exponent)
    col_amp = amplify(col_z, cfg.amp_exponent)
    alpha = blend_alpha(w, cfg)
    combined = alpha * row_amp + (1.0 - alpha) * col_amp
    return ImportanceBreakdown(
        row_normalized=row_n,
        col_normalized=col_n,
        row_z=row_z,
        col_z=col_z,
        row_amplified=row_amp,
        col_amplified=col_amp,
        alpha=alpha,
        combined=combined,
    )
