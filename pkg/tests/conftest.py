from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_manifest() -> dict:
    return json.loads((FIXTURE_DIR / "manifest.json").read_text())


@pytest.fixture(scope="session")
def fixture_model():
    from zprune import load_model

    return load_model(FIXTURE_DIR / "toy_checkpoint.ztf")


@pytest.fixture(scope="session")
def fixture_corpus() -> dict[str, np.ndarray]:
    """train/calib/eval token shards of the committed corpus archive."""
    from zprune import read_archive

    tensors = read_archive(FIXTURE_DIR / "toy_corpus.ztf")
    return {name: arr.astype(np.int64) for name, arr in tensors.items()}


@pytest.fixture(scope="session")
def small_model():
    """A briefly trained 2-block model for tests that need a non-toy-random net."""
    from zprune import ToyModelConfig, synth_corpus, train_toy

    cfg = ToyModelConfig(
        vocab_size=64, d_model=32, n_blocks=2, n_heads=4, d_ff=64, context_len=32, seed=7
    )
    corpus = synth_corpus(5, 30000, vocab_size=64)
    return train_toy(corpus[:24000], cfg, steps=150)


@pytest.fixture(scope="session")
def small_eval_tokens() -> np.ndarray:
    from zprune import synth_corpus

    return synth_corpus(5, 30000, vocab_size=64)[-4096:]
