"""Walk through the importance score construction on a matrix you can eyeball.

The score has three stages: direction-wise normalization, z-scoring with
cubic amplification, and a per-element blend that leans toward the row view
except where a weight is small relative to the matrix mean.  This script
prints every intermediate so the pipeline can be followed by hand.
"""

import numpy as np

from zprune import (
    ImportanceConfig,
    PruneRequest,
    ScalingParams,
    ActivationStats,
    combined_importance,
    zpruner_metric,
)


def banner(title):
    print(f"\n--- {title} ---")


def main():
    rng = np.random.default_rng(7)
    w = rng.normal(size=(4, 6)).astype(np.float32)
    w[1, 2] = 3.0       # one outlier weight
    w[3, :] *= 0.02     # one nearly-dead row

    banner("weights")
    print(np.array2string(w, precision=3, suppress_small=True))

    cfg = ImportanceConfig()
    bd = combined_importance(w, cfg)

    banner("row-side z-scores, cubically amplified")
    print(np.array2string(bd.row_z, precision=3))
    banner("column-side z-scores, cubically amplified")
    print(np.array2string(bd.col_z, precision=3))

    banner("blend weights alpha (lower where |w| is small)")
    print(np.array2string(bd.alpha, precision=3))
    small = np.abs(w) < cfg.small_weight_factor * np.abs(w).mean()
    print(f"small-weight cells: {int(small.sum())} of {w.size}")

    banner("combined importance")
    print(np.array2string(bd.combined, precision=3))
    print(f"outlier cell (1,2) importance: {bd.combined[1, 2]:.3f}")
    print(f"dead-row mean importance:      {bd.combined[3].mean():.3f}")

    banner("activation scaling shifts importance toward busy input columns")
    norms = np.linspace(0.2, 3.0, 6)
    stats = ActivationStats(norms, token_count=128, layer_id="demo")
    req = PruneRequest(scaling=ScalingParams(model_family="llama"))
    scored = zpruner_metric(w, stats, req)
    print("feature norms:", np.array2string(norms, precision=2))
    print(np.array2string(scored, precision=3))

    banner("rescaling the weights does not move the ranking")
    scored_scaled = zpruner_metric((w * np.float32(1024.0)), stats, req)
    same = np.array_equal(np.argsort(scored, axis=None), np.argsort(scored_scaled, axis=None))
    print(f"argsort(w) == argsort(1024 * w): {same}")


if __name__ == "__main__":
    main()
