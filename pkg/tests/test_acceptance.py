"""Release gate: the end-to-end checks that must hold before shipping.

Each test guards one release criterion and prints a single
"ACCEPTANCE PASS: <name>" line on success, so a `pytest -v -s` run of this
file reads as a checklist.  The fixture-bound checks load the committed
checkpoint and corpus from fixtures/ and never retrain.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from zprune import (
    ActivationStats,
    PruneRequest,
    ScalingParams,
    ToyModelConfig,
    build_mask,
    forward,
    init_model,
    llama_scale,
    opt_scale,
    perplexity,
    perplexity_from_log_probs,
    prune_model,
    read_archive,
    sparsity_sweep,
    write_archive,
    zpruner_metric,
)
from zprune.cli import main as cli_main

from oracles import oracle_drop_count, oracle_ppl, oracle_scaled_metric

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def _stats(norms, layer_id="probe") -> ActivationStats:
    return ActivationStats(np.asarray(norms, dtype=np.float64), 1, layer_id)


def _random_case(rng):
    m, n = (int(v) for v in rng.integers(2, 17, size=2))
    w = (rng.normal(size=(m, n)) * rng.choice([0.01, 1.0, 100.0])).astype(np.float32)
    norms = rng.uniform(0.05, 4.0, size=n)
    return w, norms


class TestMetricOracle:
    def test_scored_metric_matches_scalar_reference(self):
        """Vectorized scoring agrees with a straight-line scalar recomputation."""
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        for trial in range(100):
            w, norms = _random_case(rng)
            family = ("llama", "opt")[trial % 2]
            req = PruneRequest(scaling=ScalingParams(model_family=family))
            got = zpruner_metric(w, _stats(norms), req)
            want = oracle_scaled_metric(w.tolist(), norms.tolist(), family)
            np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)
        assert time.perf_counter() - t0 < 5.0
        print("ACCEPTANCE PASS: metric-oracle-equivalence")


class TestMaskContracts:
    def test_drop_counts_exact_over_tenths_grid(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m, n = (int(v) for v in rng.integers(1, 13, size=2))
            metric = rng.random((m, n))
            for tenths in range(11):
                rho = tenths / 10.0
                g = build_mask(metric, rho, "global")
                assert g.dropped_count == oracle_drop_count(tenths, m * n)
                p = build_mask(metric, rho, "per_neuron")
                per_row = (p.keep == 0.0).sum(axis=1)
                assert (per_row == oracle_drop_count(tenths, n)).all()
        print("ACCEPTANCE PASS: mask-cardinality")

    def test_masks_unchanged_by_weight_rescaling(self):
        rng = np.random.default_rng(12)
        req = PruneRequest(scaling=ScalingParams(model_family="llama"))
        for _ in range(25):
            w, norms = _random_case(rng)
            stats = _stats(norms)
            for mode in ("per_neuron", "global"):
                base = build_mask(zpruner_metric(w, stats, req), 0.5, mode)
                for c in (1e-3, 1e3):
                    scaled = (w * np.float32(c)).astype(np.float32)
                    other = build_mask(zpruner_metric(scaled, stats, req), 0.5, mode)
                    assert np.array_equal(base.keep, other.keep)
        print("ACCEPTANCE PASS: mask-scale-invariance")

    def test_dropped_sets_nest_as_rho_grows(self):
        rng = np.random.default_rng(13)
        grid = [t / 10.0 for t in range(11)]
        for _ in range(20):
            m, n = (int(v) for v in rng.integers(2, 13, size=2))
            metric = rng.random((m, n))
            for mode in ("per_neuron", "global"):
                prev = build_mask(metric, grid[0], mode).keep
                for rho in grid[1:]:
                    cur = build_mask(metric, rho, mode).keep
                    # everything dropped at the lower rho stays dropped
                    assert (cur[prev == 0.0] == 0.0).all()
                    prev = cur
        print("ACCEPTANCE PASS: mask-nesting")


class TestPerplexityAnchors:
    def test_ppl_reference_values(self):
        cfg = ToyModelConfig(
            vocab_size=32, d_model=16, n_blocks=1, n_heads=2, d_ff=16,
            context_len=16, seed=0,
        )
        model = init_model(cfg)
        for _, w in model.named_weights():
            w[...] = 0.0
        tokens = np.random.default_rng(14).integers(0, 32, size=512)
        assert abs(perplexity(model, tokens) - 32.0) <= 1e-6

        perfect = perplexity_from_log_probs(np.zeros(50))
        assert perfect.ppl == 1.0

        two_step = np.log(np.array([0.5, 0.25]))
        got = perplexity_from_log_probs(two_step).ppl
        assert abs(got - 2.8284) <= 1e-4
        assert abs(got - oracle_ppl(two_step.tolist())) <= 1e-12
        print("ACCEPTANCE PASS: perplexity-oracles")


class TestScalingAnchors:
    def test_activation_curves_hit_reference_points(self):
        assert abs(float(opt_scale(np.array(1.0))) - math.tanh(1.0)) <= 1e-4
        assert abs(float(llama_scale(np.array(4.0))) - 2.8284) <= 1e-4
        print("ACCEPTANCE PASS: activation-scale-anchors")


class TestFixtureBehavior:
    """Checks bound to the committed checkpoint; nothing here retrains."""

    def test_rho_zero_prune_is_identity(self, fixture_model, fixture_corpus):
        calib = fixture_corpus["calib"]
        run = prune_model(fixture_model, calib, PruneRequest(rho=0.0))
        for (_, a), (_, b) in zip(fixture_model.named_weights(), run.model.named_weights()):
            assert np.array_equal(a, b)
        probe = fixture_corpus["eval"].ravel()[:64]
        assert np.array_equal(forward(fixture_model, probe), forward(run.model, probe))

        table = sparsity_sweep(
            fixture_model, calib, fixture_corpus["eval"].ravel()[:2048],
            ("zpruner",), (0.0,),
        )
        dense, zero_row = table.rows[0], table.rows[1]
        assert dense.method == "dense" and zero_row.rho == 0.0
        assert zero_row.ppl == dense.ppl
        print("ACCEPTANCE PASS: rho-zero-noop")

    def test_earlier_block_masks_steer_later_calibration(self, fixture_model, fixture_corpus):
        calib = fixture_corpus["calib"]
        req = PruneRequest(rho=0.5)
        run_a = prune_model(fixture_model, calib, req)
        run_b = prune_model(fixture_model, calib, req, method_overrides={0: "magnitude"})
        assert not np.array_equal(
            run_a.masks["blocks/0/attn/q"].keep, run_b.masks["blocks/0/attn/q"].keep
        )
        moved = [
            lid for lid in run_a.stats
            if lid.startswith("blocks/1/")
            and not np.array_equal(
                run_a.stats[lid].feature_norms, run_b.stats[lid].feature_norms
            )
        ]
        assert moved
        print("ACCEPTANCE PASS: sequential-calibration")

    def test_sweep_matches_pins_and_method_ordering(
        self, fixture_model, fixture_corpus, fixture_manifest
    ):
        req = PruneRequest(
            mode=fixture_manifest["mode"],
            scaling=ScalingParams(model_family=fixture_manifest["family"]),
        )
        rhos = (0.1, 0.2, 0.3, 0.4, 0.5)
        table = sparsity_sweep(
            fixture_model,
            fixture_corpus["calib"],
            fixture_corpus["eval"].ravel(),
            ("zpruner", "magnitude", "wanda"),
            rhos,
            request=req,
            window=fixture_manifest["eval_window"],
        )
        by_cell = {(r.method, round(r.rho, 6)): r.ppl for r in table.rows}

        dense = by_cell[("dense", 0.0)]
        assert abs(dense - fixture_manifest["dense_ppl"]) <= 1e-6 * dense
        for method, pins in fixture_manifest["sweep"].items():
            for rho_key, pinned in pins.items():
                got = by_cell[(method, float(rho_key))]
                assert abs(got - pinned) <= 1e-4 * pinned

        assert by_cell[("zpruner", 0.5)] <= by_cell[("magnitude", 0.5)]
        for method in ("zpruner", "magnitude", "wanda"):
            ppls = [by_cell[(method, r)] for r in rhos]
            for lo, hi in zip(ppls, ppls[1:]):
                assert hi >= lo - 1e-6
        print("ACCEPTANCE PASS: fixture-directional")

    def test_sweep_report_bytes_match_golden(self, tmp_path):
        out = tmp_path / "out"
        rc = cli_main([
            "sweep",
            "--model", str(FIXTURE_DIR / "toy_checkpoint.ztf"),
            "--calib", str(FIXTURE_DIR / "toy_corpus.ztf"),
            "--eval", str(FIXTURE_DIR / "toy_corpus.ztf"),
            "--out", str(out),
        ])
        assert rc == 0
        got = (out / "sweep.json").read_bytes()
        assert got == (FIXTURE_DIR / "golden_sweep.json").read_bytes()
        print("ACCEPTANCE PASS: golden-sweep-bytes")

    def test_cli_eval_matches_pinned_perplexity(self, fixture_manifest, capsys):
        rc = cli_main([
            "eval",
            "--model", str(FIXTURE_DIR / "toy_checkpoint.ztf"),
            "--eval", str(FIXTURE_DIR / "toy_corpus.ztf"),
        ])
        assert rc == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        ppl = float(line.split()[0].split("=")[1])
        pinned = fixture_manifest["dense_ppl"]
        assert abs(ppl - pinned) <= 1e-6 * pinned
        print("ACCEPTANCE PASS: eval-matches-manifest")


class TestArchiveRoundTrip:
    def test_hundred_random_archives_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(15)
        for i in range(100):
            tensors = {}
            for j in range(int(rng.integers(1, 4))):
                m, n = (int(v) for v in rng.integers(1, 9, size=2))
                vals = (rng.normal(size=(m, n)) * rng.choice([1e-30, 1.0, 1e30]))
                tensors[f"t{j}"] = vals.astype(np.float32)
            if i % 10 == 0:
                tensors["edge"] = np.array(
                    [[-0.0, np.float32(1e-42), -np.float32(3.4e38)]], dtype=np.float32
                )
            path = tmp_path / f"a{i}.ztf"
            write_archive(tensors, path)
            back = read_archive(path)
            assert set(back) == set(tensors)
            for name, orig in tensors.items():
                assert back[name].shape == orig.shape
                assert np.array_equal(
                    back[name].view(np.uint32), orig.view(np.uint32)
                )
        print("ACCEPTANCE PASS: archive-round-trip")
