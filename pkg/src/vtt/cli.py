"""Command-line entry point wiring the pipeline into reproducible commands.

Every command echoes its fully resolved configuration (flags over config file
over defaults) to stderr before running, accepts --seed, and emits a
machine-readable error JSON on stderr with exit code 2 for validation
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import builder, diagnostics, metrics
from .data import (
    ManifestError,
    StoreFormatError,
    open_embedding_store,
    read_manifest,
    write_embedding_store,
    write_manifest,
)
from .model.decoder import SamplingConfig
from .model.ttnet import TTNetConfig
from .synthetic import SyntheticTaskSpec, generate
from .trainer import TrainConfig, TrainingError, load_checkpoint, train

VALIDATION_ERRORS = (
    ManifestError,
    StoreFormatError,
    metrics.CoverageError,
    TrainingError,
    ValueError,
    KeyError,
    FileNotFoundError,
)


def _echo_config(command: str, config: dict) -> None:
    print(f"[vtt {command}] resolved config: {json.dumps(config, sort_keys=True)}", file=sys.stderr)


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated ratios, got {text!r}")
    return parts[0], parts[1], parts[2]


def _apply_overrides(base, overrides: dict):
    known = {f.name for f in dataclasses.fields(base)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    return dataclasses.replace(base, **overrides)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of training config fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-peak", type=float)
    p.add_argument("--warmup-steps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--mask-ratio", type=float)
    p.add_argument("--sample-ratio", type=float)
    p.add_argument("--no-diff", action="store_true")
    p.add_argument("--no-mtm", action="store_true")
    p.add_argument("--no-aux", action="store_true")
    p.add_argument("--diff-fusion", choices=["late", "early"])
    p.add_argument("--rep-source", choices=["diff", "state", "sum"])
    p.add_argument("--diff-first", choices=["wrap", "zero"])
    p.add_argument("--d-model", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--encoder-layers", type=int)
    p.add_argument("--decoder-layers", type=int)
    p.add_argument("--max-len", type=int)


def _resolve_train_cfg(args: argparse.Namespace) -> tuple[TrainConfig, TTNetConfig]:
    file_cfg: dict = {}
    model_file_cfg: dict = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        model_file_cfg = file_cfg.pop("model", {})
    train_cfg = _apply_overrides(TrainConfig(), file_cfg)

    flag_map = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr_peak": args.lr_peak,
        "warmup_steps": args.warmup_steps,
        "alpha": args.alpha,
        "beta": args.beta,
        "weight_decay": args.weight_decay,
        "mask_ratio": args.mask_ratio,
        "sample_ratio": args.sample_ratio,
        "diff_fusion": args.diff_fusion,
        "rep_source": args.rep_source,
        "diff_first": args.diff_first,
        "seed": args.seed,
    }
    overrides = {k: v for k, v in flag_map.items() if v is not None}
    if args.no_diff:
        overrides["use_diff"] = False
    if args.no_mtm:
        overrides["use_mtm"] = False
    if args.no_aux:
        overrides["use_aux"] = False
    train_cfg = dataclasses.replace(train_cfg, **overrides)
    train_cfg.validate()

    model_cfg = _apply_overrides(TTNetConfig(), model_file_cfg)
    model_flags = {
        "d_model": args.d_model,
        "n_heads": args.n_heads,
        "n_encoder_layers": args.encoder_layers,
        "n_decoder_layers": args.decoder_layers,
        "max_len": args.max_len,
    }
    model_cfg = dataclasses.replace(
        model_cfg, **{k: v for k, v in model_flags.items() if v is not None}
    )
    return train_cfg, model_cfg


def _sampling_from_args(args: argparse.Namespace) -> SamplingConfig:
    cfg = SamplingConfig(
        top_k=args.top_k,
        top_p=args.top_p,
        max_len=args.gen_max_len,
        temperature=args.temperature,
        seed=args.seed if args.seed is not None else 0,
    )
    if args.greedy:
        cfg = cfg.greedy()
    cfg.validate()
    return cfg


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--greedy", action="store_true", help="argmax decoding (top-1)")
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--gen-max-len", type=int, default=16)
    p.add_argument("--temperature", type=float, default=1.0)


def cmd_build_dataset(args: argparse.Namespace) -> int:
    ratios = _parse_ratios(args.ratios)
    seed = args.seed if args.seed is not None else 0
    _echo_config(
        "build-dataset",
        {"annotations": str(args.annotations), "out": str(args.out), "ratios": ratios, "seed": seed},
    )
    annotations = builder.read_annotations(args.annotations)
    samples = builder.build_samples(annotations)
    manifest = builder.assign_splits(samples, ratios, seed)
    write_manifest(manifest, args.out)
    print(f"wrote {len(manifest.samples)} samples to {args.out}")
    if args.stats:
        print(builder.format_stats_table(manifest))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticTaskSpec.from_file(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    _echo_config("synth", {"spec": dataclasses.asdict(spec), "n": args.n, "out": str(args.out)})
    manifest, store = generate(spec, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out / "manifest.jsonl")
    write_embedding_store(store, out / "states.vtte")
    print(f"wrote {len(manifest.samples)} samples and {len(store)} state vectors to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    train_cfg, model_cfg = _resolve_train_cfg(args)
    _echo_config(
        "train",
        {"train": train_cfg.to_dict(), "model": model_cfg.to_dict(), "manifest": str(args.manifest)},
    )
    manifest = read_manifest(args.manifest)
    store = open_embedding_store(args.store)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(
        manifest,
        store,
        model_cfg,
        train_cfg,
        checkpoint_path=out / "checkpoint.pt",
        log_path=out / "train_log.jsonl",
    )
    last = result.log[-1]
    print(
        f"trained {last.epoch} epochs; best step {result.checkpoint.step}; "
        f"final train loss {last.train_loss:.4f}; checkpoint digest {result.digest[:16]}"
    )
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    sampling = _sampling_from_args(args)
    _echo_config(
        "generate",
        {"checkpoint": str(args.checkpoint), "split": args.split, "sampling": dataclasses.asdict(sampling)},
    )
    ckpt = load_checkpoint(args.checkpoint)
    model, vocab = ckpt.build_model()
    manifest = read_manifest(args.manifest)
    store = open_embedding_store(args.store)
    results = diagnostics.generate_predictions(
        model, vocab, manifest, store, args.split, sampling
    )
    metrics.write_predictions(diagnostics.predictions_dict(results), args.out)
    print(f"wrote predictions for {len(results)} samples to {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    _echo_config(
        "evaluate",
        {"predictions": str(args.predictions), "manifest": str(args.manifest), "split": args.split},
    )
    preds = metrics.read_predictions(args.predictions)
    manifest = read_manifest(args.manifest)
    report = metrics.evaluate_corpus(preds, manifest, args.split)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(json.dumps(report.corpus, indent=2, sort_keys=True))
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    _echo_config("split", {"manifest": str(args.manifest), "eval_split": args.eval_split})
    manifest = read_manifest(args.manifest)
    combo = builder.split_seen_unseen(manifest, args.eval_split)
    payload = {
        "eval_split": args.eval_split,
        "n_seen": len(combo.seen_sample_ids),
        "n_unseen": len(combo.unseen_sample_ids),
        "seen": sorted(combo.seen_sample_ids),
        "unseen": sorted(combo.unseen_sample_ids),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(f"seen: {payload['n_seen']}  unseen: {payload['n_unseen']}")
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    sampling = _sampling_from_args(args)
    seed = args.seed if args.seed is not None else 0
    _echo_config(
        "diagnose",
        {"mode": args.mode, "split": args.split, "sampling": dataclasses.asdict(sampling), "seed": seed},
    )
    manifest = read_manifest(args.manifest)
    store = open_embedding_store(args.store)

    if args.mode == "grid":
        if not args.grid:
            raise ValueError("--grid is required in grid mode")
        train_cfg, model_cfg = _resolve_train_cfg(args)
        cells = diagnostics.GRIDS[args.grid]()
        results = diagnostics.run_ablation_grid(
            cells, train_cfg, model_cfg, manifest, store, args.split, sampling,
            out_dir=args.out if args.out else None,
        )
        payload = results
    else:
        ckpt = load_checkpoint(args.checkpoint)
        model, vocab = ckpt.build_model()
        if args.mode == "context":
            modes = tuple(args.settings.split(","))
            suite = diagnostics.run_context_suite(
                model, vocab, manifest, store, args.split, sampling, modes, seed=seed
            )
            payload = {
                mode: {
                    "scores": entry["report"].corpus,
                    **(
                        {"relative_drop_vs_full": entry["relative_drop_vs_full"]}
                        if "relative_drop_vs_full" in entry
                        else {}
                    ),
                }
                for mode, entry in suite.items()
            }
        else:
            outcome = diagnostics.run_seen_unseen(
                model, vocab, manifest, store, args.split, sampling
            )
            payload = {
                name: {
                    "n_samples": entry["n_samples"],
                    "scores": entry["report"].corpus if entry["report"] else None,
                }
                for name, entry in outcome.items()
            }

    text = json.dumps(payload, indent=2)
    if args.out and args.mode != "grid":
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="build a manifest from segment annotations")
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ratios", default="0.794,0.100,0.106")
    p.add_argument("--stats", action="store_true")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train TTNet on a manifest + embedding store")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode transformation descriptions")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path, required=True)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("split", help="seen/unseen combination partition")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--eval-split", default="test")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("diagnose", help="context suites, seen/unseen, ablation grids")
    p.add_argument("--mode", choices=["context", "seen-unseen", "grid"], default="context")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--settings", default="full,adjacent_only,mask_one_random,endpoints_only")
    p.add_argument("--grid", choices=sorted(diagnostics.GRIDS))
    p.add_argument("--out", type=Path)
    _add_sampling_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_diagnose)

    for sp in set(sub.choices.values()):
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
