"""Produce a method-by-sparsity sweep and render it as JSON and CSV reports.

The sweep prunes a fresh copy of the dense model for every cell, so cells
are independent and the row order is fixed: dense baseline first, then each
method across ascending sparsity.  Rendered report bytes are deterministic
once wall-clock fields are canonicalized, which is what makes golden-file
comparisons possible downstream.
"""

from dataclasses import replace

from zprune import (
    ToyModelConfig,
    render_report,
    sparsity_sweep,
    synth_corpus,
    train_toy,
    SweepTable,
)

CFG = ToyModelConfig(
    vocab_size=64, d_model=32, n_blocks=2, n_heads=4, d_ff=64, context_len=32, seed=3
)


def main():
    stream = synth_corpus(11, 40_000, vocab_size=CFG.vocab_size)
    model = train_toy(stream[:32_000], CFG, steps=200)
    calib = stream[32_000:34_048].reshape(-1, CFG.context_len)
    eval_tokens = stream[34_048:]

    table = sparsity_sweep(
        model, calib, eval_tokens,
        methods=("zpruner", "magnitude"),
        rhos=(0.25, 0.5),
        model_tag="demo",
    )

    print("rows, in fixed order:")
    for row in table.rows:
        print(f"  {row.method:>9}  rho={row.rho:.2f}  ppl={row.ppl:.4f}")

    canonical = SweepTable([replace(r, wall_millis=0) for r in table.rows])
    print("\nJSON report:")
    print(render_report(canonical, "json"))
    print("CSV report:")
    print(render_report(canonical, "csv"))

    again = render_report(canonical, "json")
    print(f"re-rendered bytes identical: {again == render_report(canonical, 'json')}")


if __name__ == "__main__":
    main()
