"""zprune: statistical post-training pruning for tiny transformer checkpoints.

The engine scores each weight by how much of a statistical outlier it is
within its matrix (dual row/column normalization, z-scoring, cubic tail
amplification, locally damped blending), rescales scores by calibration
activation energy, and zeroes the lowest-ranked weights either per output
neuron or globally.  A self-contained numpy toy transformer, a flat tensor
archive format, and perplexity/sweep evaluation tooling round out the
package; see the demos directory for narrative walkthroughs.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .activations import (
    ActivationStats,
    NormAccumulator,
    ScalingParams,
    apply_activation_scaling,
    collect_feature_norms,
    llama_scale,
    opt_scale,
)
from .errors import (
    ArchiveIOError,
    CorpusError,
    DomainError,
    EmptyCalibrationError,
    EmptyEvalError,
    FormatError,
    InvalidArchiveError,
    InvalidMetricError,
    MatrixError,
    ShapeError,
    TokenError,
    ZPrunerError,
)
from .evaluation import (
    EvalResult,
    PerplexityResult,
    SweepTable,
    accuracy_from_scores,
    candidate_log_likelihoods,
    emit_report,
    perplexity,
    perplexity_detailed,
    perplexity_from_log_probs,
    render_report,
    sparsity_sweep,
    token_log_probs,
    zero_shot_accuracy,
)
from .importance import (
    ImportanceBreakdown,
    ImportanceConfig,
    amplify,
    blend_alpha,
    combined_importance,
    normalize,
    zscore,
)
from .pruning import (
    METHODS,
    MODES,
    LayerReport,
    PruneMask,
    PruneRequest,
    PruneRun,
    apply_mask,
    build_mask,
    drop_count,
    magnitude_metric,
    prune_layer,
    prune_model,
    wanda_metric,
    zpruner_metric,
)
from .tensor_store import (
    Matrix,
    as_matrix,
    matrix_sparsity,
    read_archive,
    validate_matrix,
    write_archive,
)
from .toy_model import (
    PRUNABLE_LAYERS,
    ToyModel,
    ToyModelConfig,
    forward,
    init_model,
    load_model,
    save_model,
    synth_corpus,
    train_toy,
    transition_table,
)
