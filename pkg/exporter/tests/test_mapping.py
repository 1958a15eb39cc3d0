import pytest

from ztf_export import archive_for, map_name


class TestLlamaTable:
    def test_block_linears_map_to_canonical_names(self):
        cases = {
            "model.layers.0.self_attn.q_proj.weight": "blocks/0/attn/q",
            "model.layers.0.self_attn.k_proj.weight": "blocks/0/attn/k",
            "model.layers.3.self_attn.v_proj.weight": "blocks/3/attn/v",
            "model.layers.3.self_attn.o_proj.weight": "blocks/3/attn/o",
            "model.layers.17.mlp.gate_proj.weight": "blocks/17/mlp/gate",
            "model.layers.17.mlp.up_proj.weight": "blocks/17/mlp/up",
            "model.layers.17.mlp.down_proj.weight": "blocks/17/mlp/down",
        }
        for src, want in cases.items():
            assert map_name("llama", src) == want

    def test_embedding_and_head(self):
        assert map_name("llama", "model.embed_tokens.weight") == "embed"
        assert map_name("llama", "lm_head.weight") == "head"

    def test_unknown_names_return_none(self):
        for name in (
            "model.norm.weight",
            "model.layers.0.input_layernorm.weight",
            "model.layers.0.self_attn.rotary_emb.inv_freq",
            "model.layers.0.self_attn.q_proj.bias",
            "transformer.h.0.attn.c_attn.weight",
            "model.layers.x.self_attn.q_proj.weight",
        ):
            assert map_name("llama", name) is None

    def test_no_prefix_or_suffix_slack(self):
        # anchored patterns: nothing extra on either side may match
        assert map_name("llama", "xmodel.layers.0.self_attn.q_proj.weight") is None
        assert map_name("llama", "model.layers.0.self_attn.q_proj.weight2") is None


class TestOptTable:
    def test_block_linears_with_and_without_model_prefix(self):
        for prefix in ("model.", ""):
            base = f"{prefix}decoder.layers.5"
            assert map_name("opt", f"{base}.self_attn.q_proj.weight") == "blocks/5/attn/q"
            assert map_name("opt", f"{base}.self_attn.out_proj.weight") == "blocks/5/attn/o"
            assert map_name("opt", f"{base}.fc1.weight") == "blocks/5/mlp/up"
            assert map_name("opt", f"{base}.fc2.weight") == "blocks/5/mlp/down"

    def test_embeddings_positions_projections(self):
        assert map_name("opt", "model.decoder.embed_tokens.weight") == "embed"
        assert map_name("opt", "decoder.embed_positions.weight") == "pos"
        assert map_name("opt", "model.decoder.project_in.weight") == "proj_in"
        assert map_name("opt", "model.decoder.project_out.weight") == "proj_out"
        assert map_name("opt", "lm_head.weight") == "head"

    def test_cross_family_names_do_not_leak(self):
        assert map_name("opt", "model.layers.0.self_attn.q_proj.weight") is None
        assert map_name("llama", "model.decoder.layers.0.fc1.weight") is None

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            map_name("gpt2", "lm_head.weight")


class TestArchiveAssignment:
    def test_blocks_group_by_index(self):
        assert archive_for("blocks/0/attn/q") == "block_000.ztf"
        assert archive_for("blocks/0/mlp/down") == "block_000.ztf"
        assert archive_for("blocks/12/attn/o") == "block_012.ztf"

    def test_edge_matrices_share_embed_and_head_archives(self):
        assert archive_for("embed") == "embed.ztf"
        assert archive_for("pos") == "embed.ztf"
        assert archive_for("proj_in") == "embed.ztf"
        assert archive_for("head") == "head.ztf"
        assert archive_for("proj_out") == "head.ztf"

    def test_unknown_canonical_rejected(self):
        with pytest.raises(ValueError):
            archive_for("mystery")
