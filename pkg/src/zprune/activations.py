"""Calibration activation statistics and importance scaling.

Each prunable linear layer sees a (tokens, in_features) activation batch
during calibration.  The engine keeps one number per input feature: the
L2 norm of that feature's column over all calibration tokens.  Scaling
multiplies every importance column j by a function of feature norm j,
so weights reading from high-energy features are harder to drop.

Two scaling curves are provided.  The saturating curve (model_family
"opt") is phi * tanh(x**gamma) * x**beta with the tanh argument clamped
at 50 to dodge overflow; it flattens for large norms.  The power curve
(model_family "llama") is x**(delta/2), monotone and unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyCalibrationError, ShapeError
from .tensor_store import Matrix, validate_matrix

TANH_ARG_CAP = 50.0

MODEL_FAMILIES = ("opt", "llama")


@dataclass(frozen=True)
class ScalingParams:
    """Curve selection and exponents for activation scaling."""

    model_family: str = "llama"
    phi: float = 1.0
    beta: float = 0.7
    gamma: float = 2.5
    delta: float = 1.5

    def __post_init__(self) -> None:
        if self.model_family not in MODEL_FAMILIES:
            raise DomainError(
                f"model_family must be one of {MODEL_FAMILIES}, got {self.model_family!r}"
            )
        if self.phi <= 0.0:
            raise DomainError(f"phi must be > 0, got {self.phi}")
        for name in ("beta", "gamma", "delta"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class ActivationStats:
    """Per-feature L2 norms of one layer's calibration input.

    feature_norms is 1-D float64 and nonnegative; token_count is the
    number of calibration rows the norms were accumulated over.
    """

    feature_norms: np.ndarray
    token_count: int
    layer_id: str

    def __post_init__(self) -> None:
        self.feature_norms = np.asarray(self.feature_norms, dtype=np.float64)
        if self.feature_norms.ndim != 1 or self.feature_norms.size == 0:
            raise ShapeError(
                f"feature_norms must be nonempty 1-D, got shape {self.feature_norms.shape}"
            )
        if not np.isfinite(self.feature_norms).all() or (self.feature_norms < 0.0).any():
            raise DomainError("feature_norms must be finite and nonnegative")
        if self.token_count <= 0:
            raise EmptyCalibrationError(
                f"token_count must be > 0, got {self.token_count}"
            )

    def to_tensor(self) -> tuple[str, Matrix]:
        """Archive entry: name xnorm/<layer_id>, shape (1, n_features)."""
        return f"xnorm/{self.layer_id}", self.feature_norms.reshape(1, -1).astype(np.float32)


def collect_feature_norms(activations: Matrix, layer_id: str) -> ActivationStats:
    """Column-wise L2 norms of a (tokens, features) activation matrix."""
    validate_matrix(activations, f"activations for {layer_id}")
    if activations.shape[0] == 0:
        raise EmptyCalibrationError(f"no calibration tokens for {layer_id}")
    norms = np.linalg.norm(activations.astype(np.float64), axis=0)
    return ActivationStats(norms, int(activations.shape[0]), layer_id)


class NormAccumulator:
    """Streaming accumulator: sums squared columns over activation chunks.

    Equivalent to collect_feature_norms on the row-concatenation of every
    added chunk, without materializing it.
    """

    def __init__(self, n_features: int, layer_id: str) -> None:
        if n_features <= 0:
            raise ShapeError(f"n_features must be > 0, got {n_features}")
        self._sumsq = np.zeros(n_features, dtype=np.float64)
        self._tokens = 0
        self._layer_id = layer_id

    def add(self, chunk: Matrix) -> None:
        validate_matrix(chunk, f"chunk for {self._layer_id}")
        if chunk.shape[1] != self._sumsq.size:
            raise ShapeError(
                f"chunk has {chunk.shape[1]} features, accumulator expects {self._sumsq.size}"
            )
        self._sumsq += np.sum(np.square(chunk.astype(np.float64)), axis=0)
        self._tokens += int(chunk.shape[0])

    def finalize(self) -> ActivationStats:
        if self._tokens == 0:
            raise EmptyCalibrationError(f"no chunks accumulated for {self._layer_id}")
        return ActivationStats(np.sqrt(self._sumsq), self._tokens, self._layer_id)


def opt_scale(x: np.ndarray, p: ScalingParams | None = None) -> np.ndarray:
    """Saturating scale phi * tanh(min(x**gamma, 50)) * x**beta, elementwise."""
    p = p or ScalingParams(model_family="opt")
    x64 = np.asarray(x, dtype=np.float64)
    if (x64 < 0.0).any():
        raise DomainError("opt_scale requires nonnegative inputs")
    powered = np.minimum(x64**p.gamma, TANH_ARG_CAP)
    return p.phi * np.tanh(powered) * x64**p.beta


def llama_scale(x: np.ndarray, p: ScalingParams | None = None) -> np.ndarray:
    """Power scale x**(delta/2), elementwise; rejects negative inputs."""
    p = p or ScalingParams(model_family="llama")
    x64 = np.asarray(x, dtype=np.float64)
    if (x64 < 0.0).any():
        raise DomainError("llama_scale requires nonnegative inputs")
    return x64 ** (p.delta / 2.0)


def apply_activation_scaling(
    importance: np.ndarray, stats: ActivationStats, p: ScalingParams
) -> np.ndarray:
    """Multiply importance column j by the scaled feature norm j.

    importance is (out_features, in_features); stats.feature_norms must
    have length in_features.
    """
    imp = np.asarray(importance, dtype=np.float64)
    if imp.ndim != 2:
        raise ShapeError(f"importance must be 2-D, got ndim={imp.ndim}")
    if stats.feature_norms.size != imp.shape[1]:
        raise ShapeError(
            f"feature_norms length {stats.feature_norms.size} does not match "
            f"importance columns {imp.shape[1]}"
        )
    if p.model_family == "opt":
        scale = opt_scale(stats.feature_norms, p)
    else:
        scale = llama_scale(stats.feature_norms, p)
    return imp * scale[np.newaxis, :]
