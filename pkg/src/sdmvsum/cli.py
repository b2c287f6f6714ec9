"""Command-line entry point: ``sdmvsum {train,summarize,evaluate,gradcheck,synth}``.

Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.
Settings resolve as defaults < ``--config`` JSON file < explicit flags.
Log verbosity comes from ``SDMVSUM_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import gradcheck, metrics, synth
from .corpus_io import CorpusError, load_corpus, write_scores, write_summary
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .numerics import DimensionError
from .selection import knapsack_summary, top_fraction_select
from .training import DivergenceError, TrainConfig, TrainingError, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
VARIANTS = ("full", "no-transcript", "no-scaling")

log = logging.getLogger("sdmvsum")

TRAIN_DEFAULTS = {
    "loss": "bce", "epochs": 50, "batch_size": None, "lr": 5e-5, "weight_decay": 1e-4,
    "dropout": 0.5, "seed": 0, "variant": "full", "heads": 8, "scorer_layers": 1,
    "ffn_dim": None, "protocol": None, "fraction": 0.15,
}


class UsageError(Exception):
    pass


def _resolve(args, defaults):
    """Merge defaults, the optional --config file and explicitly given flags."""
    values = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        file_values = json.loads(path.read_text())
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _default_protocol(loss):
    return "single-gt" if loss == "mse" else "multi-gt"


def cmd_train(args):
    v = _resolve(args, TRAIN_DEFAULTS)
    if v["variant"] not in VARIANTS:
        raise UsageError(f"unknown variant {v['variant']!r}")
    protocol = v["protocol"] or _default_protocol(v["loss"])
    batch = v["batch_size"] or (64 if v["loss"] == "mse" else 4)
    corpus = load_corpus(args.manifest)
    model_cfg = ModelConfig.variant(
        v["variant"], dim=corpus.dim, heads=v["heads"], dropout_rate=v["dropout"],
        scorer_layers=v["scorer_layers"], scorer_ffn_dim=v["ffn_dim"],
    )
    train_cfg = TrainConfig(
        loss=v["loss"], epochs=v["epochs"], batch_size=batch, lr=v["lr"],
        weight_decay=v["weight_decay"], seed=v["seed"], protocol=protocol, fraction=v["fraction"],
    )
    result = train(corpus, train_cfg, model_cfg)
    out = Path(args.out)
    save_checkpoint(
        out / "checkpoint", result.best, seed=v["seed"], epoch=result.best_epoch,
        metric=result.best_metric,
        extra={"variant": v["variant"], "train": {**v, "batch_size": batch, "protocol": protocol}},
    )
    (out / "history.jsonl").write_text(result.history_jsonl())
    print(f"best epoch {result.best_epoch}: validation F {100 * result.best_metric:.1f}")
    return EXIT_OK


def _transcripts_for(params, corpus, video_id):
    if not params.config.use_transcript_branch:
        return None
    return corpus.expanded_transcripts(video_id)


def cmd_summarize(args):
    corpus = load_corpus(args.manifest)
    params, _ = load_checkpoint(args.checkpoint)
    if args.script_id:
        unknown = [s for s in args.script_id if s not in corpus.scripts]
        if unknown:
            raise CorpusError(f"unknown script ids: {unknown}")
        scripts = [corpus.scripts[s] for s in args.script_id]
    else:
        scripts = [s for s in corpus.scripts.values()
                   if args.split is None or corpus.videos[s.video_id].split == args.split]
    out = Path(args.out)
    for script in scripts:
        video = corpus.videos[script.video_id]
        scores = forward(params, video.frames, script.sentences,
                         _transcripts_for(params, corpus, video.video_id))
        if args.protocol == "single-gt":
            mask = knapsack_summary(scores, video.fragments, args.fraction)
        else:
            mask = top_fraction_select(scores, args.fraction)
        write_scores(video.video_id, scores, out / f"{script.script_id}.scores.sdmv")
        write_summary(video.video_id, mask, out / f"{script.script_id}.summary.json")
        print(f"{script.script_id}: {int(mask.sum())}/{mask.size} frames selected")
    return EXIT_OK


def _check_protocol(corpus, protocol, split):
    if protocol == "single-gt":
        for video in corpus.split(split):
            n = sum(1 for s in corpus.scripts_for(video.video_id) if s.script_id in corpus.ground_truths)
            if n > 1:
                raise CorpusError(
                    f"video {video.video_id} has {n} ground truths; the single-gt protocol needs one"
                )


def cmd_evaluate(args):
    corpus = load_corpus(args.manifest)
    params, _ = load_checkpoint(args.checkpoint)
    _check_protocol(corpus, args.protocol, args.split)
    report = metrics.evaluate(params, corpus, args.protocol, args.split, args.fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    table = report.table()
    (out / "report.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_gradcheck(args):
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    inst = gradcheck.random_instance(args.n, args.m, args.k, args.d, args.seed)
    print(f"gradcheck N={args.n} M={args.m} K={args.k} D={args.d} H={args.heads} "
          f"threshold={gradcheck.THRESHOLD:g}")
    failed = []
    start = time.perf_counter()
    for variant in variants:
        cfg = ModelConfig.variant(variant, dim=args.d, heads=args.heads, dropout_rate=0.0,
                                  scorer_ffn_dim=args.ffn_dim)
        errors = gradcheck.check_model(cfg, inst, seed=args.seed, loss=args.loss, corrupt=args.corrupt)
        for name, err in errors.items():
            flag = "ok" if err < gradcheck.THRESHOLD else "FAIL"
            print(f"{variant:<14} {name:<28} {err:.3e} {flag}")
            if err >= gradcheck.THRESHOLD:
                failed.append(f"{variant}:{name}")
    print(f"elapsed {time.perf_counter() - start:.1f}s")
    if failed:
        print("gradient check failed for: " + ", ".join(failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_synth(args):
    spec = synth.SynthSpec(
        n_videos=args.videos, frames_range=(args.min_frames, args.max_frames), dim=args.dim,
        scripts_per_video=args.scripts, sentences_per_script=args.sentences,
        coverage=args.coverage, strength=args.strength, vocab_size=args.vocab,
        decoy_fraction=args.decoys, seed=args.seed,
    )
    path = synth.generate(spec, args.out)
    print(path)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sdmvsum", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and keep the best validation checkpoint")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", default="run")
    t.add_argument("--config", help="JSON file with training/model settings")
    t.add_argument("--loss", choices=["bce", "mse"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--lr", type=float)
    t.add_argument("--weight-decay", type=float, dest="weight_decay")
    t.add_argument("--dropout", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--heads", type=int)
    t.add_argument("--scorer-layers", type=int, dest="scorer_layers")
    t.add_argument("--ffn-dim", type=int, dest="ffn_dim")
    t.add_argument("--protocol", choices=sorted(metrics.PROTOCOLS))
    t.add_argument("--fraction", type=float)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("summarize", help="score frames and write summaries")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", default="summaries")
    s.add_argument("--script-id", action="append", dest="script_id")
    s.add_argument("--split")
    s.add_argument("--protocol", choices=sorted(metrics.PROTOCOLS), default="multi-gt")
    s.add_argument("--fraction", type=float, default=0.15)
    s.set_defaults(func=cmd_summarize)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    e.add_argument("--manifest", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", default="eval")
    e.add_argument("--protocol", choices=sorted(metrics.PROTOCOLS), default="multi-gt")
    e.add_argument("--split", default="test")
    e.add_argument("--fraction", type=float, default=0.15)
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    g.add_argument("--n", type=int, default=6)
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--d", type=int, default=8)
    g.add_argument("--heads", type=int, default=2)
    g.add_argument("--ffn-dim", type=int, dest="ffn_dim")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--loss", choices=["bce", "mse"], default="bce")
    g.add_argument("--variant", choices=VARIANTS + ("all",), default="all")
    g.add_argument("--corrupt", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    y = sub.add_parser("synth", help="write a synthetic corpus")
    y.add_argument("--out", required=True)
    y.add_argument("--videos", type=int, default=8)
    y.add_argument("--min-frames", type=int, default=40)
    y.add_argument("--max-frames", type=int, default=60)
    y.add_argument("--dim", type=int, default=32)
    y.add_argument("--scripts", type=int, default=1)
    y.add_argument("--sentences", type=int, default=3)
    y.add_argument("--coverage", type=float, default=0.5)
    y.add_argument("--strength", type=float, default=1.0)
    y.add_argument("--vocab", type=int, default=16)
    y.add_argument("--decoys", type=float, default=0.3)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("SDMVSUM_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, DimensionError, TrainingError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
