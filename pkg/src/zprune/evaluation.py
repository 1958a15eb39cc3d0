"""Perplexity, zero-shot accuracy, sparsity sweeps, and report files.

Perplexity is computed in log space: exp(-mean(log p)) over every predicted
token, never as a product of probabilities.  Token probabilities are floored
at 1e-12 before aggregation; the number of floored tokens is reported and
warned about, so silent underflow cannot fake a finite score.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArchiveIOError, DomainError, EmptyEvalError, ShapeError
from .pruning import METHODS, PruneRequest, prune_model
from .toy_model import ToyModel, forward, validate_tokens

PROB_FLOOR = 1e-12
LOGP_FLOOR = math.log(PROB_FLOOR)

REPORT_FIELDS = ("model_tag", "method", "rho", "ppl", "accuracy", "tokens_evaluated", "wall_millis")


@dataclass(frozen=True)
class EvalResult:
    """One evaluation row; accuracy is None when not measured."""

    model_tag: str
    method: str
    rho: float
    ppl: float
    accuracy: float | None
    tokens_evaluated: int
    wall_millis: int


@dataclass
class SweepTable:
    rows: list[EvalResult]

    def __post_init__(self) -> None:
        keys = [(r.method, round(r.rho, 9)) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise DomainError("sweep table has duplicate (method, rho) rows")


@dataclass(frozen=True)
class PerplexityResult:
    ppl: float
    tokens_evaluated: int
    clamped: int


def token_log_probs(model: ToyModel, tokens: np.ndarray, window: int | None = None) -> np.ndarray:
    """Unclamped float64 log-probability of each predicted token.

    The stream is cut into non-overlapping windows of `window` tokens
    (default: the model's context length); within a window, position t
    predicts token t+1.  A trailing window of fewer than 2 tokens is
    dropped since it predicts nothing.
    """
    ids = validate_tokens(tokens, model.config.vocab_size)
    if ids.ndim != 1:
        raise ShapeError(f"token stream must be 1-D, got shape {ids.shape}")
    window = window or model.config.context_len
    if not 2 <= window <= model.config.context_len:
        raise DomainError(
            f"window must be in [2, {model.config.context_len}], got {window}"
        )
    out: list[np.ndarray] = []
    for start in range(0, ids.size, window):
        chunk = ids[start : start + window]
        if chunk.size < 2:
            break
        logits = forward(model, chunk).astype(np.float64)
        zmax = logits.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
        picked = logits[np.arange(chunk.size - 1), chunk[1:]]
        out.append(picked - lse[: chunk.size - 1])
    if not out:
        raise EmptyEvalError("token stream yields no predictions (need at least 2 tokens)")
    return np.concatenate(out)


def perplexity_from_log_probs(logps: np.ndarray) -> PerplexityResult:
    """Floor log-probs at log(1e-12), then exponentiate the mean NLL."""
    arr = np.asarray(logps, dtype=np.float64)
    if arr.size == 0:
        raise EmptyEvalError("no log-probabilities to aggregate")
    if np.isnan(arr).any():
        raise DomainError("log-probabilities contain NaN")
    clamped = int(np.count_nonzero(arr < LOGP_FLOOR))
    if clamped:
        warnings.warn(f"{clamped} token probabilities floored at {PROB_FLOOR:g}", RuntimeWarning)
    floored = np.maximum(arr, LOGP_FLOOR)
    mean_nll = -math.fsum(floored.tolist()) / floored.size
    return PerplexityResult(float(math.exp(mean_nll)), int(floored.size), clamped)


def perplexity_detailed(
    model: ToyModel, tokens: np.ndarray, window: int | None = None
) -> PerplexityResult:
    return perplexity_from_log_probs(token_log_probs(model, tokens, window))


def perplexity(model: ToyModel, tokens: np.ndarray, window: int | None = None) -> float:
    return perplexity_detailed(model, tokens, window).ppl


def candidate_log_likelihoods(
    model: ToyModel,
    prompt: np.ndarray,
    candidates: Sequence[np.ndarray],
    window: int | None = None,
) -> list[float]:
    """Length-normalized log-likelihood of each candidate continuation."""
    p = validate_tokens(prompt, model.config.vocab_size)
    if p.ndim != 1:
        raise ShapeError(f"prompt must be 1-D, got shape {p.shape}")
    window = window or model.config.context_len
    scores: list[float] = []
    for cand in candidates:
        c = validate_tokens(cand, model.config.vocab_size)
        if c.ndim != 1:
            raise ShapeError(f"candidate must be 1-D, got shape {c.shape}")
        seq = np.concatenate([p, c])
        if seq.size > window:
            raise ShapeError(
                f"prompt+candidate length {seq.size} exceeds window {window}"
            )
        logits = forward(model, seq[:-1]).astype(np.float64)
        zmax = logits.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
        pos = np.arange(p.size - 1, seq.size - 1)
        logp = logits[pos, seq[pos + 1]] - lse[pos]
        scores.append(float(math.fsum(logp.tolist()) / c.size))
    return scores


def accuracy_from_scores(scores_per_item: Sequence[Sequence[float]], golds: Sequence[int]) -> float:
    """Fraction of items whose argmax score (ties to lowest index) is gold."""
    if len(scores_per_item) == 0:
        raise EmptyEvalError("no items to score")
    if len(scores_per_item) != len(golds):
        raise ShapeError("scores and golds differ in length")
    hits = 0
    for scores, gold in zip(scores_per_item, golds):
        if len(scores) < 2:
            raise DomainError("each item needs at least 2 candidates")
        if not 0 <= gold < len(scores):
            raise DomainError(f"gold index {gold} out of range for {len(scores)} candidates")
        if int(np.argmax(np.asarray(scores, dtype=np.float64))) == gold:
            hits += 1
    return hits / len(golds)


def zero_shot_accuracy(model: ToyModel, items: Sequence[tuple], window: int | None = None) -> float:
    """items: (prompt_tokens, candidate_token_lists, gold_index) tuples."""
    if len(items) == 0:
        raise EmptyEvalError("no evaluation items")
    scores = [candidate_log_likelihoods(model, p, cands, window) for p, cands, _ in items]
    return accuracy_from_scores(scores, [g for _, _, g in items])


def sparsity_sweep(
    model: ToyModel,
    calib_tokens: np.ndarray,
    eval_tokens: np.ndarray,
    methods: Sequence[str],
    rhos: Sequence[float],
    request: PruneRequest | None = None,
    model_tag: str = "toy",
    window: int | None = None,
    eval_items: Sequence[tuple] | None = None,
    threads: int = 1,
) -> SweepTable:
    """Dense baseline plus one row per (method, rho) cell.

    Cells are independent: each prunes a fresh copy of the dense model.
    Row order is deterministic (dense first, then methods in the given
    order, rhos ascending) regardless of thread count.
    """
    if not methods:
        raise DomainError("methods must be nonempty")
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}, expected one of {METHODS}")
    rho_list = [float(r) for r in rhos]
    if not rho_list:
        raise DomainError("rhos must be nonempty")
    if sorted(set(rho_list)) != rho_list:
        raise DomainError("rhos must be strictly ascending")
    for r in rho_list:
        if not 0.0 <= r < 1.0:
            raise DomainError(f"sweep rho must be in [0, 1), got {r}")
    base = request or PruneRequest()

    def evaluate(m: ToyModel, method: str, rho: float) -> EvalResult:
        t0 = time.perf_counter()
        detail = perplexity_detailed(m, eval_tokens, window)
        acc = zero_shot_accuracy(m, eval_items, window) if eval_items else None
        millis = int(round((time.perf_counter() - t0) * 1000.0))
        return EvalResult(model_tag, method, rho, detail.ppl, acc, detail.tokens_evaluated, millis)

    rows = [evaluate(model, "dense", 0.0)]

    def cell(method: str, rho: float) -> EvalResult:
        run = prune_model(model, calib_tokens, replace(base, method=method, rho=rho))
        return evaluate(run.model, method, rho)

    grid = [(m, r) for m in methods for r in rho_list]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows.extend(pool.map(lambda mr: cell(*mr), grid))
    else:
        rows.extend(cell(m, r) for m, r in grid)
    return SweepTable(rows)


def _json_scalar(value: float | int | str | None, field: str) -> str:
    if value is None:
        return "null"
    if field in ("rho", "ppl", "accuracy"):
        return f"{value:.6f}"
    if isinstance(value, str):
        return json.dumps(value)
    return str(value)


def render_report(table: SweepTable, fmt: str) -> str:
    """Canonical text for a sweep table; identical tables render identically."""
    if not table.rows:
        raise EmptyEvalError("cannot render an empty sweep table")
    if fmt == "json":
        lines = []
        for r in table.rows:
            parts = [f'"{f}": {_json_scalar(getattr(r, f), f)}' for f in REPORT_FIELDS]
            lines.append("  {" + ", ".join(parts) + "}")
        return "[\n" + ",\n".join(lines) + "\n]\n"
    if fmt == "csv":
        lines = [",".join(REPORT_FIELDS)]
        for r in table.rows:
            cells = []
            for f in REPORT_FIELDS:
                v = getattr(r, f)
                if v is None:
                    cells.append("")
                elif f in ("rho", "ppl", "accuracy"):
                    cells.append(f"{v:.6f}")
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    raise DomainError(f"format must be 'json' or 'csv', got {fmt!r}")


def emit_report(table: SweepTable, path: str | Path, fmt: str = "json") -> None:
    """Write the canonical report; bytes depend only on the table contents."""
    text = render_report(table, fmt)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ArchiveIOError(f"cannot write report {path}: {exc}") from exc
