"""Build the committed fixture set: checkpoint, token shards, manifest, golden sweep.

Trains the default decoder on a seeded Markov stream, verifies the properties
the test suite relies on (held-out quality, method ordering at high sparsity,
monotone degradation, mask scale invariance), and only then writes:

    fixtures/toy_checkpoint.ztf   trained weights
    fixtures/toy_corpus.ztf       train / calib / eval token shards
    fixtures/manifest.json        recipe, pinned perplexities, checkpoint hash
    fixtures/golden_sweep.json    sweep report rendered through the CLI path

Run from the repository root:  python3 tools/make_fixture.py
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from zprune import (
    PruneRequest,
    ScalingParams,
    SweepTable,
    ToyModelConfig,
    __version__,
    build_mask,
    perplexity_detailed,
    prune_model,
    save_model,
    sparsity_sweep,
    synth_corpus,
    train_toy,
    write_archive,
    zpruner_metric,
)
from zprune.cli import main as cli_main

MODEL_SEED = 42
TRAIN_STEPS = 2000
TRAIN_LEN = 200_000
CALIB_SEQUENCES = 128
EVAL_LEN = 16_384
METHODS = ("zpruner", "magnitude", "wanda")
RHOS = (0.1, 0.2, 0.3, 0.4, 0.5)


def shard_stream(corpus_seed: int, cfg: ToyModelConfig):
    """One stream, three contiguous shards, so all splits share the chain."""
    calib_len = CALIB_SEQUENCES * cfg.context_len
    stream = synth_corpus(corpus_seed, TRAIN_LEN + calib_len + EVAL_LEN, cfg.vocab_size)
    train = stream[:TRAIN_LEN]
    calib = stream[TRAIN_LEN:TRAIN_LEN + calib_len].reshape(CALIB_SEQUENCES, cfg.context_len)
    eval_tokens = stream[TRAIN_LEN + calib_len:]
    return train, calib, eval_tokens


def check_directional(table: SweepTable) -> list[str]:
    """Ordering and monotonicity requirements on the pinned sweep."""
    problems = []
    by_cell = {(r.method, round(r.rho, 6)): r.ppl for r in table.rows if r.method != "dense"}
    z_half = by_cell[("zpruner", 0.5)]
    m_half = by_cell[("magnitude", 0.5)]
    if not z_half <= m_half:
        problems.append(f"zpruner {z_half:.4f} > magnitude {m_half:.4f} at rho=0.5")
    for method in METHODS:
        ppls = [by_cell[(method, round(r, 6))] for r in RHOS]
        for lo, hi in zip(ppls, ppls[1:]):
            if hi < lo - 1e-6:
                problems.append(f"{method} ppl not nondecreasing: {lo:.6f} -> {hi:.6f}")
    return problems


def scale_invariance_problems(model, calib, req) -> list[str]:
    """Rebuild dense-side metrics and compare masks across weight rescalings."""
    run = prune_model(model, calib, req)
    problems = []
    for layer_id, stats in run.stats.items():
        block_idx = int(layer_id.split("/")[1])
        short = "/".join(layer_id.split("/")[2:])
        w = model.blocks[block_idx].get(short)
        for mode in ("per_neuron", "global"):
            ref = None
            for c in (1e-3, 1.0, 1e3):
                metric = zpruner_metric(np.asarray(w * np.float32(c)), stats, req)
                mask = build_mask(metric, 0.5, mode)
                if ref is None:
                    ref = mask.keep
                elif not np.array_equal(ref, mask.keep):
                    problems.append(f"{layer_id} mask changed under c={c:g} ({mode})")
        if problems:
            break
    return problems


def sequential_dependency_holds(model, calib, req) -> bool:
    """Later-block calibration must reflect pruning done to earlier blocks."""
    pruned = prune_model(model, calib, req)
    dense = prune_model(model, calib, PruneRequest(method=req.method, rho=0.0,
                                                  mode=req.mode, scaling=req.scaling))
    probe = "blocks/1/attn/q"
    return not np.allclose(
        pruned.stats[probe].feature_norms, dense.stats[probe].feature_norms
    )


def build(corpus_seed: int, out_dir: Path, dry_run: bool) -> int:
    cfg = ToyModelConfig(seed=MODEL_SEED)
    train, calib, eval_tokens = shard_stream(corpus_seed, cfg)

    print(f"training: seed={MODEL_SEED} steps={TRAIN_STEPS} corpus_seed={corpus_seed}")
    model = train_toy(train, cfg, TRAIN_STEPS, log_every=400)

    detail = perplexity_detailed(model, eval_tokens)
    print(f"dense held-out ppl={detail.ppl:.6f} tokens={detail.tokens_evaluated}")
    failures = []
    if not detail.ppl < cfg.vocab_size:
        failures.append(f"dense ppl {detail.ppl:.3f} not below vocab {cfg.vocab_size}")
    if detail.clamped:
        failures.append(f"{detail.clamped} clamped log-probs on dense eval")

    req = PruneRequest(scaling=ScalingParams(model_family="llama"))
    table = sparsity_sweep(model, calib, eval_tokens, METHODS, RHOS,
                           request=req, model_tag="toy_checkpoint")
    for row in table.rows:
        print(f"  {row.method:>9} rho={row.rho:.1f} ppl={row.ppl:.6f}")

    failures += check_directional(table)
    failures += scale_invariance_problems(model, calib, req)
    if not sequential_dependency_holds(model, calib, req):
        failures.append("block-1 calibration insensitive to block-0 pruning")

    if failures:
        print("fixture checks FAILED:")
        for f in failures:
            print(f"  - {f}")
        return 1
    print("fixture checks passed")
    if dry_run:
        return 0

    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "toy_checkpoint.ztf"
    save_model(model, ckpt)
    write_archive(
        {
            "train": train.astype(np.float32).reshape(1, -1),
            "calib": calib.astype(np.float32),
            "eval": eval_tokens.astype(np.float32).reshape(1, -1),
        },
        out_dir / "toy_corpus.ztf",
    )

    manifest = {
        "engine_version": __version__,
        "fixture_hash": hashlib.sha256(ckpt.read_bytes()).hexdigest(),
        "config": {
            "vocab_size": cfg.vocab_size,
            "d_model": cfg.d_model,
            "n_blocks": cfg.n_blocks,
            "n_heads": cfg.n_heads,
            "d_ff": cfg.d_ff,
            "context_len": cfg.context_len,
            "seed": cfg.seed,
        },
        "train_steps": TRAIN_STEPS,
        "corpus_seed": corpus_seed,
        "shards": {
            "train": TRAIN_LEN,
            "calib_sequences": CALIB_SEQUENCES,
            "calib_len": cfg.context_len,
            "eval": EVAL_LEN,
        },
        "mode": "per_neuron",
        "family": "llama",
        "eval_window": cfg.context_len,
        "dense_ppl": detail.ppl,
        "tokens_evaluated": detail.tokens_evaluated,
        "sweep": {
            method: {
                f"{rho:.1f}": next(
                    r.ppl for r in table.rows
                    if r.method == method and abs(r.rho - rho) < 1e-9
                )
                for rho in RHOS
            }
            for method in METHODS
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    # Render the golden report through the CLI so the bytes match its output path.
    with tempfile.TemporaryDirectory() as tmp:
        rc = cli_main([
            "sweep",
            "--model", str(ckpt),
            "--calib", str(out_dir / "toy_corpus.ztf"),
            "--eval", str(out_dir / "toy_corpus.ztf"),
            "--out", tmp,
        ])
        if rc != 0:
            print(f"golden sweep render failed with exit {rc}")
            return 1
        golden = (Path(tmp) / "sweep.json").read_bytes()
    (out_dir / "golden_sweep.json").write_bytes(golden)

    print(f"wrote {out_dir}/: toy_checkpoint.ztf toy_corpus.ztf manifest.json golden_sweep.json")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus-seed", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    ap.add_argument("--dry-run", action="store_true", help="run checks, write nothing")
    args = ap.parse_args(argv)
    return build(args.corpus_seed, args.out, args.dry_run)


if __name__ == "__main__":
    raise SystemExit(main())
