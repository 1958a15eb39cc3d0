"""Train a small decoder on synthetic text, prune it, and watch perplexity.

Everything is seeded, so two runs of this script print identical numbers.
Training takes a few seconds; the interesting part is the table at the end,
where the statistical metric and plain magnitude part ways as sparsity grows.
"""

import numpy as np

from zprune import (
    PruneRequest,
    ScalingParams,
    ToyModelConfig,
    perplexity,
    prune_model,
    synth_corpus,
    train_toy,
)

CFG = ToyModelConfig(
    vocab_size=64, d_model=32, n_blocks=2, n_heads=4, d_ff=64, context_len=32, seed=7
)


def main():
    # one stream, sharded: the eval tail is held out but speaks the same language
    stream = synth_corpus(11, 60_000, vocab_size=CFG.vocab_size)
    train, calib_flat, eval_tokens = stream[:48_000], stream[48_000:52_096], stream[52_096:]
    calib = calib_flat.reshape(-1, CFG.context_len)

    print("training 300 steps ...")
    model = train_toy(train, CFG, steps=300)
    dense_ppl = perplexity(model, eval_tokens)
    print(f"dense perplexity: {dense_ppl:.4f}  (vocab {CFG.vocab_size})")

    print(f"\n{'rho':>5} {'zpruner':>10} {'magnitude':>10}")
    for rho in (0.2, 0.4, 0.6):
        row = [f"{rho:>5.1f}"]
        for method in ("zpruner", "magnitude"):
            req = PruneRequest(
                method=method, rho=rho, scaling=ScalingParams(model_family="llama")
            )
            run = prune_model(model, calib, req)
            row.append(f"{perplexity(run.model, eval_tokens):>10.4f}")
        print(" ".join(row))

    req = PruneRequest(method="zpruner", rho=0.5)
    run = prune_model(model, calib, req)
    zeros = sum(int(r.dropped) for r in run.reports)
    total = sum(int(r.kept + r.dropped) for r in run.reports)
    print(f"\nat rho=0.5 the pruned model carries {zeros}/{total} zeroed weights")
    print("per-layer report lines:")
    for rep in run.reports[:3]:
        print(" ", rep.to_json_line())
    print(f"  ... ({len(run.reports) - 3} more)")


if __name__ == "__main__":
    main()
