"""Command-line front end: prune, sweep, eval, inspect.

Usage errors exit 2 with an argparse message naming the offending flag.
Runtime failures exit 1 with a single machine-parsable stderr line of the
form "error: <ErrorClass>: <message>".  Output files are staged in a
temporary directory and renamed into place only on success, and every
persisted artifact is byte-deterministic for a given invocation (timing
fields are canonicalized to 0; real timings go to the console instead).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .activations import MODEL_FAMILIES, ScalingParams
from .errors import InvalidArchiveError, TokenError, ZPrunerError
from .evaluation import SweepTable, perplexity_detailed, render_report, sparsity_sweep
from .importance import combined_importance
from .pruning import METHODS, MODES, PruneRequest, prune_model
from .tensor_store import read_archive, write_archive
from .toy_model import PRUNABLE_LAYERS, load_model, save_model, synth_corpus

COMMANDS = ("prune", "sweep", "eval", "inspect")
SEED_ENV = "ZPRUNE_SEED"


@dataclass
class RunSpec:
    """Validated invocation: everything run() needs, nothing it must re-check."""

    command: str
    model: Path
    out: Path | None = None
    seed: int = 0
    calib: Path | None = None
    synth_calib: int | None = None
    calib_sequences: int = 128
    eval_path: Path | None = None
    synth_eval: int | None = None
    eval_tokens: int = 8192
    method: str = "zpruner"
    methods: tuple[str, ...] = METHODS
    rho: float = 0.5
    rhos: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    mode: str = "per_neuron"
    family: str = "llama"
    fmt: str = "json"
    dump_importance: bool = False
    layer: str | None = None
    window: int | None = None
    threads: int = 1


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{SEED_ENV} must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zprune",
        description="Statistical pruning engine for toy transformer checkpoints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, out_required: bool) -> None:
        p.add_argument("--model", required=True, type=Path, help="toy checkpoint archive")
        p.add_argument("--out", required=out_required, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help=f"run seed (default: ${SEED_ENV} or 0)")

    def add_calib(p: argparse.ArgumentParser) -> None:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--calib", type=Path, help="archive with a 'calib' token entry")
        g.add_argument("--synth-calib", type=int, metavar="SEED",
                       help="generate synthetic calibration tokens from SEED")
        p.add_argument("--calib-sequences", type=int, default=128,
                       help="synthetic calibration sequences (default 128)")

    def add_eval(p: argparse.ArgumentParser) -> None:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--eval", dest="eval_path", type=Path,
                       help="archive with an 'eval' token entry")
        g.add_argument("--synth-eval", type=int, metavar="SEED",
                       help="generate a synthetic evaluation stream from SEED")
        p.add_argument("--eval-tokens", type=int, default=8192,
                       help="synthetic evaluation stream length (default 8192)")
        p.add_argument("--window", type=int, default=None,
                       help="evaluation window (default: model context length)")

    p = sub.add_parser("prune", help="prune one checkpoint at a fixed rho")
    add_common(p, out_required=True)
    add_calib(p)
    p.add_argument("--method", choices=METHODS, default="zpruner")
    p.add_argument("--rho", type=float, default=0.5, help="drop fraction in [0, 1]")
    p.add_argument("--mode", choices=MODES, default="per_neuron")
    p.add_argument("--family", choices=MODEL_FAMILIES, default="llama")
    p.add_argument("--dump-importance", action="store_true",
                   help="also write per-layer importance and activation-norm archives")

    p = sub.add_parser("sweep", help="dense baseline plus a method x rho grid")
    add_common(p, out_required=True)
    add_calib(p)
    add_eval(p)
    p.add_argument("--methods", default="zpruner,magnitude,wanda",
                   help="comma-separated methods (default all)")
    p.add_argument("--rhos", default="0.1,0.2,0.3,0.4,0.5",
                   help="comma-separated ascending drop fractions in [0, 1)")
    p.add_argument("--mode", choices=MODES, default="per_neuron")
    p.add_argument("--family", choices=MODEL_FAMILIES, default="llama")
    p.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=1,
                   help="parallel sweep cells (default 1; results are order-stable)")

    p = sub.add_parser("eval", help="print perplexity of a checkpoint")
    add_common(p, out_required=False)
    add_eval(p)

    p = sub.add_parser("inspect", help="dump the importance breakdown of one layer")
    add_common(p, out_required=True)
    p.add_argument("--layer", required=True, help="layer id, e.g. blocks/0/attn/q")
    return parser


def parse_args(argv: list[str] | None = None) -> RunSpec:
    """Parse and validate; exits 2 with a flag-naming message on bad usage."""
    parser = build_parser()
    ns = parser.parse_args(argv)

    if ns.seed is None:
        try:
            ns.seed = _default_seed()
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    if ns.seed < 0:
        parser.error("--seed must be >= 0")

    spec = RunSpec(command=ns.command, model=ns.model, out=ns.out, seed=ns.seed)

    if ns.command in ("prune", "sweep"):
        if ns.calib is None and ns.synth_calib is None:
            parser.error("one of --calib or --synth-calib is required")
        if ns.calib_sequences <= 0:
            parser.error("--calib-sequences must be > 0")
        spec.calib = ns.calib
        spec.synth_calib = ns.synth_calib
        spec.calib_sequences = ns.calib_sequences
        spec.mode = ns.mode
        spec.family = ns.family

    if ns.command == "prune":
        if not 0.0 <= ns.rho <= 1.0:
            parser.error(f"--rho must be in [0, 1], got {ns.rho}")
        spec.method = ns.method
        spec.rho = ns.rho
        spec.dump_importance = ns.dump_importance

    if ns.command == "sweep":
        methods = tuple(m.strip() for m in ns.methods.split(",") if m.strip())
        if not methods:
            parser.error("--methods must name at least one method")
        for m in methods:
            if m not in METHODS:
                parser.error(f"--methods contains unknown method {m!r}")
        try:
            rhos = tuple(float(r) for r in ns.rhos.split(",") if r.strip())
        except ValueError:
            parser.error(f"--rhos must be comma-separated floats, got {ns.rhos!r}")
        if not rhos:
            parser.error("--rhos must name at least one value")
        for r in rhos:
            if not 0.0 <= r < 1.0:
                parser.error(f"--rhos values must be in [0, 1), got {r}")
        if list(rhos) != sorted(set(rhos)):
            parser.error("--rhos must be strictly ascending")
        if ns.threads < 1:
            parser.error("--threads must be >= 1")
        spec.methods = methods
        spec.rhos = rhos
        spec.fmt = ns.fmt
        spec.threads = ns.threads

    if ns.command in ("sweep", "eval"):
        if ns.eval_path is None and ns.synth_eval is None:
            parser.error("one of --eval or --synth-eval is required")
        if ns.eval_tokens < 2:
            parser.error("--eval-tokens must be >= 2")
        if ns.window is not None and ns.window < 2:
            parser.error("--window must be >= 2")
        spec.eval_path = ns.eval_path
        spec.synth_eval = ns.synth_eval
        spec.eval_tokens = ns.eval_tokens
        spec.window = ns.window

    if ns.command == "inspect":
        spec.layer = ns.layer
    return spec


def _tokens_from_entry(path: Path, entry: str) -> np.ndarray:
    tensors = read_archive(path, require_finite=True)
    if entry not in tensors:
        raise InvalidArchiveError(
            f"{path}: no {entry!r} entry, archive holds {sorted(tensors)}"
        )
    m = tensors[entry]
    ids = np.rint(m)
    if not np.array_equal(ids, m):
        raise TokenError(f"{path}: entry {entry!r} holds non-integer token ids")
    return ids.astype(np.int64)


def _load_calib(spec: RunSpec, vocab_size: int, context_len: int) -> np.ndarray:
    if spec.calib is not None:
        return _tokens_from_entry(spec.calib, "calib")
    stream = synth_corpus(spec.synth_calib, spec.calib_sequences * context_len, vocab_size)
    return stream.reshape(spec.calib_sequences, context_len)


def _load_eval(spec: RunSpec, vocab_size: int) -> np.ndarray:
    if spec.eval_path is not None:
        return _tokens_from_entry(spec.eval_path, "eval").ravel()
    return synth_corpus(spec.synth_eval, spec.eval_tokens, vocab_size)


def _meta(spec: RunSpec) -> str:
    digest = hashlib.sha256(spec.model.read_bytes()).hexdigest()
    return json.dumps(
        {"engine_version": __version__, "fixture_hash": digest, "seed": spec.seed},
        sort_keys=True,
        separators=(", ", ": "),
    ) + "\n"


def _sanitize(layer_id: str) -> str:
    return layer_id.replace("/", "_")


def _staging(out: Path) -> tempfile.TemporaryDirectory:
    """Staging area on the same filesystem as out, so os.replace is atomic."""
    out.parent.mkdir(parents=True, exist_ok=True)
    return tempfile.TemporaryDirectory(dir=out.parent, prefix=".zprune-stage-")


def _publish(staging: Path, out: Path) -> None:
    """Move staged files into the output directory, replacing on collision."""
    out.mkdir(parents=True, exist_ok=True)
    for src in sorted(staging.rglob("*")):
        rel = src.relative_to(staging)
        dst = out / rel
        if src.is_dir():
            dst.mkdir(exist_ok=True)
        else:
            os.replace(src, dst)


def _cmd_prune(spec: RunSpec) -> int:
    model = load_model(spec.model)
    calib = _load_calib(spec, model.config.vocab_size, model.config.context_len)
    req = PruneRequest(
        method=spec.method,
        rho=spec.rho,
        mode=spec.mode,
        scaling=ScalingParams(model_family=spec.family),
    )
    t0 = time.perf_counter()
    run_result = prune_model(model, calib, req)
    elapsed = time.perf_counter() - t0

    with _staging(spec.out) as tmp:
        staging = Path(tmp)
        save_model(run_result.model, staging / "pruned.ztf")
        write_archive(
            {lid: mask.keep for lid, mask in run_result.masks.items()},
            staging / "masks.ztf",
        )
        lines = [replace(rep, millis=0).to_json_line() for rep in run_result.reports]
        (staging / "report.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (staging / "meta.json").write_text(_meta(spec), encoding="utf-8")
        if spec.dump_importance:
            imp_dir = staging / "importance"
            imp_dir.mkdir()
            for lid in run_result.masks:
                block_idx = int(lid.split("/")[1])
                short = "/".join(lid.split("/")[2:])
                w = model.blocks[block_idx].get(short)
                write_archive(
                    combined_importance(w, req.importance_cfg).to_tensors(),
                    imp_dir / f"{_sanitize(lid)}.ztf",
                )
            write_archive(
                dict(s.to_tensor() for s in run_result.stats.values()),
                staging / "stats.ztf",
            )
        _publish(staging, spec.out)

    dropped = sum(r.dropped for r in run_result.reports)
    total = sum(r.kept + r.dropped for r in run_result.reports)
    print(
        f"pruned {len(run_result.reports)} layers  method={spec.method} rho={spec.rho:g} "
        f"mode={spec.mode}  dropped {dropped}/{total} weights  {elapsed:.2f}s"
    )
    return 0


def _cmd_sweep(spec: RunSpec) -> int:
    model = load_model(spec.model)
    calib = _load_calib(spec, model.config.vocab_size, model.config.context_len)
    eval_tokens = _load_eval(spec, model.config.vocab_size)
    req = PruneRequest(mode=spec.mode, scaling=ScalingParams(model_family=spec.family))
    t0 = time.perf_counter()
    table = sparsity_sweep(
        model,
        calib,
        eval_tokens,
        spec.methods,
        spec.rhos,
        request=req,
        model_tag=spec.model.stem,
        window=spec.window,
        threads=spec.threads,
    )
    elapsed = time.perf_counter() - t0
    canonical = SweepTable([replace(r, wall_millis=0) for r in table.rows])
    with _staging(spec.out) as tmp:
        staging = Path(tmp)
        (staging / f"sweep.{spec.fmt}").write_text(
            render_report(canonical, spec.fmt), encoding="utf-8", newline="\n"
        )
        (staging / "meta.json").write_text(_meta(spec), encoding="utf-8")
        _publish(staging, spec.out)
    print(f"swept {len(table.rows)} rows ({len(spec.methods)} methods x {len(spec.rhos)} rhos + dense) in {elapsed:.2f}s")
    return 0


def _cmd_eval(spec: RunSpec) -> int:
    model = load_model(spec.model)
    tokens = _load_eval(spec, model.config.vocab_size)
    detail = perplexity_detailed(model, tokens, spec.window)
    print(f"ppl={detail.ppl:.9f} tokens={detail.tokens_evaluated} clamped={detail.clamped}")
    return 0


def _cmd_inspect(spec: RunSpec) -> int:
    model = load_model(spec.model)
    layer_ids = {
        f"blocks/{i}/{s}": (i, s)
        for i in range(len(model.blocks))
        for s in PRUNABLE_LAYERS
    }
    if spec.layer not in layer_ids:
        raise InvalidArchiveError(
            f"unknown layer {spec.layer!r}; expected one of {sorted(layer_ids)}"
        )
    bi, short = layer_ids[spec.layer]
    w = model.blocks[bi].get(short)
    breakdown = combined_importance(w)
    with _staging(spec.out) as tmp:
        staging = Path(tmp)
        write_archive(breakdown.to_tensors(), staging / f"importance_{_sanitize(spec.layer)}.ztf")
        _publish(staging, spec.out)
    print(
        f"{spec.layer}: shape {w.shape[0]}x{w.shape[1]}  "
        f"alpha mean {breakdown.alpha.mean():.4f}  "
        f"combined [{breakdown.combined.min():.6g}, {breakdown.combined.max():.6g}]"
    )
    return 0


def run(spec: RunSpec) -> int:
    """Execute a validated spec; raises ZPrunerError subclasses on failure."""
    if spec.command == "prune":
        return _cmd_prune(spec)
    if spec.command == "sweep":
        return _cmd_sweep(spec)
    if spec.command == "eval":
        return _cmd_eval(spec)
    if spec.command == "inspect":
        return _cmd_inspect(spec)
    raise ZPrunerError(f"unknown command {spec.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(spec)
    except ZPrunerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
