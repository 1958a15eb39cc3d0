"""A tiny decoder-only transformer in plain numpy, built to be pruned.

Pre-norm residual blocks, parameter-free RMS normalization, causal softmax
attention, a GELU MLP, learned positional embeddings, and no biases in any
prunable projection.  Six weight matrices per block are prunable:

    attn/q  attn/k  attn/v  attn/o   (d_model x d_model)
    mlp/up                           (d_ff x d_model)
    mlp/down                         (d_model x d_ff)

Everything runs in float32 with a fixed reduction order, so a given
(weights, tokens) pair always produces bitwise-identical logits.  Training
is plain SGD with a closed-form warmup+cosine schedule and a seeded batch
stream; the same recipe always yields bitwise-identical checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorpusError, DomainError, InvalidArchiveError, ShapeError, TokenError
from .tensor_store import Matrix, read_archive, write_archive

PRUNABLE_LAYERS = ("attn/q", "attn/k", "attn/v", "attn/o", "mlp/up", "mlp/down")

_RMS_EPS = 1e-6
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715
_CONFIG_VERSION = 1.0


@dataclass(frozen=True)
class ToyModelConfig:
    vocab_size: int = 256
    d_model: int = 64
    n_blocks: int = 4
    n_heads: int = 4
    d_ff: int = 128
    context_len: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_blocks", "n_heads", "d_ff", "context_len"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise DomainError(
                f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}"
            )
        if self.seed < 0:
            raise DomainError(f"seed must be >= 0, got {self.seed}")


@dataclass
class BlockWeights:
    q: Matrix
    k: Matrix
    v: Matrix
    o: Matrix
    up: Matrix
    down: Matrix

    _ATTR = {
        "attn/q": "q",
        "attn/k": "k",
        "attn/v": "v",
        "attn/o": "o",
        "mlp/up": "up",
        "mlp/down": "down",
    }

    def get(self, short: str) -> Matrix:
        return getattr(self, self._ATTR[short])

    def set(self, short: str, w: Matrix) -> None:
        setattr(self, self._ATTR[short], w)

    def clone(self) -> "BlockWeights":
        return BlockWeights(*(self.get(s).copy() for s in PRUNABLE_LAYERS))


@dataclass
class ToyModel:
    config: ToyModelConfig
    embed: Matrix
    pos: Matrix
    blocks: list[BlockWeights]
    head: Matrix

    def clone(self) -> "ToyModel":
        return ToyModel(
            config=self.config,
            embed=self.embed.copy(),
            pos=self.pos.copy(),
            blocks=[b.clone() for b in self.blocks],
            head=self.head.copy(),
        )

    def named_weights(self) -> list[tuple[str, Matrix]]:
        """Checkpoint entries in canonical name order (layout, not lexicographic)."""
        out: list[tuple[str, Matrix]] = [("embed", self.embed), ("pos", self.pos)]
        for i, b in enumerate(self.blocks):
            for short in PRUNABLE_LAYERS:
                out.append((f"blocks/{i}/{short}", b.get(short)))
        out.append(("head", self.head))
        return out


def validate_tokens(tokens: np.ndarray, vocab_size: int) -> np.ndarray:
    """Check integer token ids against the vocabulary, returning int64."""
    arr = np.asarray(tokens)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TokenError(f"token ids must be integers, got dtype {arr.dtype}")
    if arr.size == 0:
        raise TokenError("token array is empty")
    lo, hi = int(arr.min()), int(arr.max())
    if lo < 0 or hi >= vocab_size:
        raise TokenError(f"token ids must lie in [0, {vocab_size}), got range [{lo}, {hi}]")
    return arr.astype(np.int64)


def init_model(cfg: ToyModelConfig) -> ToyModel:
    """Seeded gaussian init, std 0.02 everywhere."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))

    def w(rows: int, cols: int) -> Matrix:
        return (0.02 * rng.standard_normal((rows, cols))).astype(np.float32)

    d, ff = cfg.d_model, cfg.d_ff
    blocks = [
        BlockWeights(q=w(d, d), k=w(d, d), v=w(d, d), o=w(d, d), up=w(ff, d), down=w(d, ff))
        for _ in range(cfg.n_blocks)
    ]
    return ToyModel(
        config=cfg,
        embed=w(cfg.vocab_size, d),
        pos=w(cfg.context_len, d),
        blocks=blocks,
        head=w(cfg.vocab_size, d),
    )


def rmsnorm(x: np.ndarray) -> np.ndarray:
    inv = 1.0 / np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + _RMS_EPS)
    return (x * inv).astype(np.float32)


def gelu(z: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (z + _GELU_A * z * z * z))
    return (0.5 * z * (1.0 + t)).astype(np.float32)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def _attention(cfg: ToyModelConfig, bw: BlockWeights, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(context, attn_out) for normalized input u of shape (B, L, d)."""
    b, l, d = u.shape
    dh = d // cfg.n_heads
    flat = u.reshape(b * l, d)
    q = _split_heads((flat @ bw.q.T).reshape(b, l, d), cfg.n_heads)
    k = _split_heads((flat @ bw.k.T).reshape(b, l, d), cfg.n_heads)
    v = _split_heads((flat @ bw.v.T).reshape(b, l, d), cfg.n_heads)
    scores = (q @ k.transpose(0, 1, 3, 2)) / np.float32(np.sqrt(dh))
    causal = np.tril(np.ones((l, l), dtype=bool))
    scores = np.where(causal, scores, np.float32(-np.inf))
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    a = (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)
    ctx = _merge_heads(a @ v)
    attn_out = (ctx.reshape(b * l, d) @ bw.o.T).reshape(b, l, d)
    return ctx, attn_out


def block_forward(cfg: ToyModelConfig, bw: BlockWeights, x: np.ndarray) -> np.ndarray:
    """One pre-norm residual block on (B, L, d) input."""
    u = rmsnorm(x)
    _, attn_out = _attention(cfg, bw, u)
    x = x + attn_out
    u2 = rmsnorm(x)
    b, l, d = x.shape
    h = gelu((u2.reshape(b * l, d) @ bw.up.T))
    x = x + (h @ bw.down.T).reshape(b, l, d)
    return x.astype(np.float32)


def block_input_captures(
    cfg: ToyModelConfig, bw: BlockWeights, x: np.ndarray
) -> dict[str, Matrix]:
    """Inputs seen by each prunable projection, flattened to (B*L, features).

    Rows are calibration tokens in batch-major order; columns are input
    features of the projection the key names.
    """
    b, l, d = x.shape
    u = rmsnorm(x)
    ctx, attn_out = _attention(cfg, bw, u)
    u2 = rmsnorm(x + attn_out)
    h = gelu(u2.reshape(b * l, d) @ bw.up.T)
    u_flat = u.reshape(b * l, d).astype(np.float32)
    return {
        "attn/q": u_flat,
        "attn/k": u_flat,
        "attn/v": u_flat,
        "attn/o": ctx.reshape(b * l, d).astype(np.float32),
        "mlp/up": u2.reshape(b * l, d).astype(np.float32),
        "mlp/down": h.astype(np.float32),
    }


def embed_sequences(model: ToyModel, seqs: np.ndarray) -> np.ndarray:
    """Token + positional embedding lookup, (B, L) ids to (B, L, d) floats."""
    ids = validate_tokens(seqs, model.config.vocab_size)
    if ids.ndim != 2:
        raise ShapeError(f"expected (sequences, length), got shape {ids.shape}")
    if ids.shape[1] > model.config.context_len:
        raise ShapeError(
            f"sequence length {ids.shape[1]} exceeds context_len {model.config.context_len}"
        )
    return (model.embed[ids] + model.pos[np.newaxis, : ids.shape[1]]).astype(np.float32)


def forward(model: ToyModel, tokens: np.ndarray) -> np.ndarray:
    """Logits (L, vocab) for one token sequence of length <= context_len."""
    ids = np.asarray(tokens)
    if ids.ndim != 1:
        raise ShapeError(f"forward expects a 1-D token sequence, got shape {ids.shape}")
    x = embed_sequences(model, ids[np.newaxis, :])
    for bw in model.blocks:
        x = block_forward(model.config, bw, x)
    f = rmsnorm(x)
    logits = f.reshape(-1, model.config.d_model) @ model.head.T
    return logits.astype(np.float32)


# ---------------------------------------------------------------------------
# training


def _rmsnorm_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    d = x.shape[-1]
    inv = 1.0 / np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + _RMS_EPS)
    dot = np.sum(dy * x, axis=-1, keepdims=True)
    return (dy * inv - x * (dot * inv**3 / d)).astype(np.float32)


def _gelu_backward(z: np.ndarray, dh: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (z + _GELU_A * z * z * z))
    dz = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * z * z)
    return (dh * dz).astype(np.float32)


def _zero_grads(model: ToyModel) -> dict:
    return {
        "embed": np.zeros_like(model.embed),
        "pos": np.zeros_like(model.pos),
        "head": np.zeros_like(model.head),
        "blocks": [
            {s: np.zeros_like(b.get(s)) for s in PRUNABLE_LAYERS} for b in model.blocks
        ],
    }


def loss_and_grads(
    model: ToyModel, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict]:
    """Mean cross-entropy over all positions and its weight gradients."""
    cfg = model.config
    b, l = inputs.shape
    d, dh = cfg.d_model, cfg.d_model // cfg.n_heads
    n = b * l
    x = embed_sequences(model, inputs)

    caches = []
    for bw in model.blocks:
        x_in = x
        u = rmsnorm(x_in)
        flat = u.reshape(n, d)
        q = _split_heads((flat @ bw.q.T).reshape(b, l, d), cfg.n_heads)
        k = _split_heads((flat @ bw.k.T).reshape(b, l, d), cfg.n_heads)
        v = _split_heads((flat @ bw.v.T).reshape(b, l, d), cfg.n_heads)
        scores = (q @ k.transpose(0, 1, 3, 2)) / np.float32(np.sqrt(dh))
        causal = np.tril(np.ones((l, l), dtype=bool))
        scores = np.where(causal, scores, np.float32(-np.inf))
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        a = (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)
        ctx = _merge_heads(a @ v)
        x_mid = x_in + (ctx.reshape(n, d) @ bw.o.T).reshape(b, l, d)
        u2 = rmsnorm(x_mid)
        p = u2.reshape(n, d) @ bw.up.T
        h = gelu(p)
        x = (x_mid + (h @ bw.down.T).reshape(b, l, d)).astype(np.float32)
        caches.append((x_in, u, q, k, v, a, ctx, x_mid, u2, p, h))

    f = rmsnorm(x)
    logits = f.reshape(n, d) @ model.head.T

    zmax = logits.max(axis=1, keepdims=True)
    ez = np.exp(logits - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    probs = (ez / sez).astype(np.float32)
    y = validate_tokens(targets, cfg.vocab_size).reshape(n)
    logp = (logits[np.arange(n), y] - zmax[:, 0]).astype(np.float64) - np.log(
        sez[:, 0].astype(np.float64)
    )
    loss = float(-logp.mean())

    grads = _zero_grads(model)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= np.float32(n)
    grads["head"] = (dlogits.T @ f.reshape(n, d)).astype(np.float32)
    df = (dlogits @ model.head).reshape(b, l, d)
    dx = _rmsnorm_backward(x, df)

    for bw, cache, gb in zip(reversed(model.blocks), reversed(caches), reversed(grads["blocks"])):
        x_in, u, q, k, v, a, ctx, x_mid, u2, p, h = cache
        # mlp
        dxd = dx.reshape(n, d)
        gb["mlp/down"] = (dxd.T @ h).astype(np.float32)
        dh_ = dxd @ bw.down
        dp = _gelu_backward(p, dh_)
        gb["mlp/up"] = (dp.T @ u2.reshape(n, d)).astype(np.float32)
        du2 = (dp @ bw.up).reshape(b, l, d)
        dx_mid = dx + _rmsnorm_backward(x_mid, du2)
        # attention
        dattn = dx_mid.reshape(n, d)
        gb["attn/o"] = (dattn.T @ ctx.reshape(n, d)).astype(np.float32)
        dctx = _split_heads((dattn @ bw.o).reshape(b, l, d), cfg.n_heads)
        da = dctx @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ dctx
        ds = a * (da - np.sum(da * a, axis=-1, keepdims=True))
        ds = (ds / np.float32(np.sqrt(dh))).astype(np.float32)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        du_flat = np.zeros((n, d), dtype=np.float32)
        for g, w_, name in ((dq, bw.q, "attn/q"), (dk, bw.k, "attn/k"), (dv, bw.v, "attn/v")):
            g2 = _merge_heads(g).reshape(n, d)
            gb[name] = (g2.T @ u.reshape(n, d)).astype(np.float32)
            du_flat += g2 @ w_
        dx = dx_mid + _rmsnorm_backward(x_in, du_flat.reshape(b, l, d))

    dx0 = dx.reshape(n, d)
    ids = validate_tokens(inputs, cfg.vocab_size).reshape(n)
    np.add.at(grads["embed"], ids, dx0)
    grads["pos"][:l] = dx.sum(axis=0)
    return loss, grads


def _lr_at(step: int, steps: int, peak: float, warmup: int) -> float:
    scale = min(1.0, (step + 1) / max(1, warmup))
    progress = step / max(1, steps)
    return peak * scale * (0.1 + 0.9 * 0.5 * (1.0 + np.cos(np.pi * progress)))


def train_toy(
    corpus: np.ndarray,
    cfg: ToyModelConfig,
    steps: int,
    batch_size: int = 8,
    lr: float = 0.3,
    warmup: int | None = None,
    log_every: int = 0,
) -> ToyModel:
    """SGD on next-token prediction over random corpus windows.

    Deterministic: the init and the batch stream both derive from cfg.seed,
    so identical (corpus, cfg, steps, batch_size, lr) always produce a
    bitwise-identical model.  steps=0 returns the seeded init untouched.
    """
    tokens = validate_tokens(corpus, cfg.vocab_size)
    if tokens.ndim != 1:
        raise CorpusError(f"corpus must be 1-D, got shape {tokens.shape}")
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    model = init_model(cfg)
    if steps == 0:
        return model
    l = cfg.context_len
    if tokens.size < l + 2:
        raise CorpusError(f"corpus of {tokens.size} tokens is shorter than context_len + 2")
    if warmup is None:
        warmup = max(10, steps // 20)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    for step in range(steps):
        starts = rng.integers(0, tokens.size - l - 1, size=batch_size)
        batch = np.stack([tokens[s : s + l + 1] for s in starts])
        loss, grads = loss_and_grads(model, batch[:, :-1], batch[:, 1:])
        eta = np.float32(_lr_at(step, steps, lr, warmup))
        model.embed -= eta * grads["embed"]
        model.pos -= eta * grads["pos"]
        model.head -= eta * grads["head"]
        for bw, gb in zip(model.blocks, grads["blocks"]):
            for short in PRUNABLE_LAYERS:
                bw.set(short, (bw.get(short) - eta * gb[short]).astype(np.float32))
        if log_every and (step % log_every == 0 or step == steps - 1):
            print(f"step {step:5d}  lr {float(eta):.4f}  loss {loss:.4f}")
    return model


# ---------------------------------------------------------------------------
# synthetic corpus


def transition_table(seed: int, vocab_size: int = 256, branching: int = 4) -> np.ndarray:
    """Row-stochastic next-token table: each token has `branching` successors."""
    if vocab_size < 2 or not 1 <= branching <= vocab_size:
        raise DomainError(f"bad vocab_size/branching: {vocab_size}/{branching}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    table = np.zeros((vocab_size, vocab_size), dtype=np.float64)
    for s in range(vocab_size):
        succ = rng.choice(vocab_size, size=branching, replace=False)
        weights = rng.random(branching) + 0.25
        table[s, succ] = weights / weights.sum()
    return table


def synth_corpus(seed: int, length: int, vocab_size: int = 256, branching: int = 4) -> np.ndarray:
    """Deterministic Markov-chain token stream of the given length."""
    if length <= 0:
        raise DomainError(f"length must be > 0, got {length}")
    table = transition_table(seed, vocab_size, branching)
    cum = np.cumsum(table, axis=1)
    cum[:, -1] = 1.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    draws = rng.random(length)
    out = np.empty(length, dtype=np.int32)
    state = int(rng.integers(vocab_size))
    for t in range(length):
        state = int(np.searchsorted(cum[state], draws[t], side="right"))
        out[t] = state
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: ToyModel, path) -> None:
    """Checkpoint to a tensor archive; hyperparameters ride in a config row."""
    cfg = model.config
    tensors: dict[str, Matrix] = dict(model.named_weights())
    tensors["config"] = np.array(
        [[
            cfg.vocab_size,
            cfg.d_model,
            cfg.n_blocks,
            cfg.n_heads,
            cfg.d_ff,
            cfg.context_len,
            cfg.seed,
            _CONFIG_VERSION,
        ]],
        dtype=np.float32,
    )
    write_archive(tensors, path)


def load_model(path) -> ToyModel:
    """Rebuild a model from save_model output, validating every shape."""
    tensors = read_archive(path, require_finite=True)
    if "config" not in tensors:
        raise InvalidArchiveError(f"{path}: missing config entry")
    row = tensors["config"]
    if row.shape != (1, 8) or row[0, 7] != _CONFIG_VERSION:
        raise InvalidArchiveError(f"{path}: unsupported config layout")
    vals = [int(v) for v in row[0, :7]]
    cfg = ToyModelConfig(*vals)
    expected = {"embed": (cfg.vocab_size, cfg.d_model), "pos": (cfg.context_len, cfg.d_model),
                "head": (cfg.vocab_size, cfg.d_model)}
    for i in range(cfg.n_blocks):
        for short in PRUNABLE_LAYERS:
            rows, cols = cfg.d_model, cfg.d_model
            if short == "mlp/up":
                rows, cols = cfg.d_ff, cfg.d_model
            elif short == "mlp/down":
                rows, cols = cfg.d_model, cfg.d_ff
            expected[f"blocks/{i}/{short}"] = (rows, cols)
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected) - {"config"})
    if missing or extra:
        raise InvalidArchiveError(f"{path}: missing entries {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise InvalidArchiveError(
                f"{path}: entry {name} has shape {tensors[name].shape}, expected {shape}"
            )
    blocks = [
        BlockWeights(*(tensors[f"blocks/{i}/{s}"] for s in PRUNABLE_LAYERS))
        for i in range(cfg.n_blocks)
    ]
    return ToyModel(cfg, tensors["embed"], tensors["pos"], blocks, tensors["head"])
