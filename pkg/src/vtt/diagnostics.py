"""Analysis protocols: context restriction, seen/unseen splits, ablation grids.

Context settings restrict which states the model may use at inference:
  full            normal evaluation, untouched inputs
  adjacent_only   each transformation reasoned from its two adjacent states
  mask_one_random one uniformly chosen state zeroed per sample
  endpoints_only  every intermediate state zeroed

Missing states are represented by zero rows (the same mechanism masked
transformation modeling uses in training), never by shortening the sequence.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .builder import split_seen_unseen
from .data import DatasetManifest, EmbeddingStore, StateRef, VTTSample
from .metrics import ALL_METRICS, evaluate_corpus
from .model.decoder import GenerationResult, SamplingConfig, generate_sample
from .model.ttnet import TTNet, TTNetConfig
from .seeding import derive_seed
from .text import Vocabulary
from .trainer import TrainConfig, TrainResult, train

CONTEXT_MODES = ("full", "adjacent_only", "mask_one_random", "endpoints_only")


@dataclass(frozen=True)
class ContextSetting:
    mode: str = "full"
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in CONTEXT_MODES:
            raise ValueError(f"mode must be one of {CONTEXT_MODES}, got {self.mode!r}")


def context_reps(
    model: TTNet, states: torch.Tensor, sample_id: str, setting: ContextSetting
) -> torch.Tensor:
    """Transformation representations for one sample under a context setting.

    adjacent_only builds an independent two-state input per transformation;
    the masking modes zero chosen state rows (difference rows are recomputed
    from the zeroed values). endpoints_only on a two-state sample degenerates
    to full context.
    """
    setting.validate()
    n_states = states.shape[0]
    if setting.mode == "full":
        return model.encode_sample(states).transformation_reps
    if setting.mode == "adjacent_only":
        reps = [
            model.encode_sample(states[i : i + 2]).transformation_reps[0]
            for i in range(n_states - 1)
        ]
        return torch.stack(reps)
    if setting.mode == "mask_one_random":
        rng = np.random.default_rng(derive_seed(setting.seed, "mask-one", sample_id))
        chosen = int(rng.integers(0, n_states))
        return model.encode_sample(states, zero_states=[chosen]).transformation_reps
    interior = list(range(1, n_states - 1))
    return model.encode_sample(states, zero_states=interior or None).transformation_reps


def generate_predictions(
    model: TTNet,
    vocab: Vocabulary,
    manifest: DatasetManifest,
    store: EmbeddingStore,
    split: str,
    sampling: SamplingConfig,
    setting: ContextSetting = ContextSetting("full"),
) -> list[GenerationResult]:
    """Decode every sample of a split under a context setting.

    Each sample gets its own generator stream derived from the sampling seed
    and the sample id, so results do not depend on iteration order.
    """
    model.eval()
    results = []
    with torch.no_grad():
        for sample in manifest.split_samples(split):
            states = torch.from_numpy(store.matrix_for(sample)).float()
            reps = context_reps(model, states, sample.sample_id, setting)
            gen = torch.Generator()
            gen.manual_seed(derive_seed(sampling.seed, "sampling", sample.sample_id))
            results.append(
                generate_sample(sample.sample_id, reps, model.decoder, vocab, sampling, gen)
            )
    return results


def predictions_dict(results: list[GenerationResult]) -> dict[str, list[str]]:
    return {r.sample_id: r.descriptions for r in results}


def run_context_suite(
    model: TTNet,
    vocab: Vocabulary,
    manifest: DatasetManifest,
    store: EmbeddingStore,
    split: str,
    sampling: SamplingConfig,
    modes: tuple[str, ...] = CONTEXT_MODES,
    metrics: tuple[str, ...] = ALL_METRICS,
    seed: int = 0,
) -> dict[str, dict]:
    """One metric report per context setting plus the relative drop vs full."""
    suite: dict[str, dict] = {}
    full_scores: dict[str, float] | None = None
    ordered = ["full"] + [m for m in modes if m != "full"] if "full" in modes else list(modes)
    for mode in ordered:
        preds = predictions_dict(
            generate_predictions(
                model, vocab, manifest, store, split, sampling, ContextSetting(mode, seed)
            )
        )
        report = evaluate_corpus(preds, manifest, split, metrics)
        entry: dict = {"report": report}
        if mode == "full":
            full_scores = report.corpus
        elif full_scores is not None:
            entry["relative_drop_vs_full"] = {
                name: (full_scores[name] - report.corpus[name]) / full_scores[name]
                if full_scores[name] != 0
                else 0.0
                for name in report.corpus
            }
        suite[mode] = entry
    return suite


def run_seen_unseen(
    model: TTNet,
    vocab: Vocabulary,
    manifest: DatasetManifest,
    store: EmbeddingStore,
    eval_split: str,
    sampling: SamplingConfig,
    metrics: tuple[str, ...] = ALL_METRICS,
) -> dict[str, dict]:
    """Evaluate generations separately on seen and unseen combination partitions."""
    combo = split_seen_unseen(manifest, eval_split)
    preds = predictions_dict(
        generate_predictions(model, vocab, manifest, store, eval_split, sampling)
    )
    out: dict[str, dict] = {}
    for name, ids in (("seen", combo.seen_sample_ids), ("unseen", combo.unseen_sample_ids)):
        if not ids:
            out[name] = {"n_samples": 0, "report": None}
            continue
        sub_manifest = DatasetManifest([s for s in manifest.samples if s.sample_id in ids])
        sub_preds = {sid: preds[sid] for sid in ids}
        out[name] = {
            "n_samples": len(ids),
            "report": evaluate_corpus(sub_preds, sub_manifest, eval_split, metrics),
        }
    return out


def explode_adjacent(
    manifest: DatasetManifest, store: EmbeddingStore
) -> tuple[DatasetManifest, EmbeddingStore]:
    """Rebuild the dataset in the adjacent-states-only regime.

    Every transformation becomes its own two-state sample (fresh state ids,
    vectors copied), which is the training data for the retrain variant of
    the context analysis.
    """
    new_samples = []
    new_store = EmbeddingStore(store.dim)
    for s in manifest.samples:
        for i in range(s.n_transformations):
            sub_id = f"{s.sample_id}:a{i}"
            refs = []
            for k, ref in enumerate(s.states[i : i + 2]):
                state_id = f"{sub_id}:s{k}"
                new_store.put(state_id, store.get(ref.state_id).copy())
                refs.append(
                    StateRef(state_id=state_id, source=ref.source, timestamp_sec=ref.timestamp_sec)
                )
            new_samples.append(
                VTTSample(
                    sample_id=sub_id,
                    states=tuple(refs),
                    transformations=(s.transformations[i],),
                    category=s.category,
                    topic=s.topic,
                    split=s.split,
                )
            )
    return DatasetManifest(new_samples), new_store


def run_adjacent_retrain(
    manifest: DatasetManifest,
    store: EmbeddingStore,
    model_cfg: TTNetConfig,
    train_cfg: TrainConfig,
    eval_split: str,
    sampling: SamplingConfig,
    metrics: tuple[str, ...] = ALL_METRICS,
) -> dict:
    """Retrain variant of the context analysis: train on adjacent-only data.

    The training manifest is rebuilt so every transformation is its own
    two-state sample, then the retrained model is evaluated in the
    adjacent_only setting on the original eval split.
    """
    exploded, exploded_store = explode_adjacent(manifest, store)
    result = train(exploded, exploded_store, model_cfg, train_cfg)
    preds = predictions_dict(
        generate_predictions(
            result.model, result.vocab, manifest, store, eval_split, sampling,
            ContextSetting("adjacent_only"),
        )
    )
    report = evaluate_corpus(preds, manifest, eval_split, metrics)
    return {"report": report, "train_log": result.log}


def key_component_grid() -> list[dict]:
    """The 2^3 grid over difference features, MTM, and auxiliary learning."""
    return [
        {"use_diff": d, "use_mtm": m, "use_aux": a}
        for d in (False, True)
        for m in (False, True)
        for a in (False, True)
    ]


def aux_task_grid(alpha: float = 0.025, beta: float = 0.1) -> list[dict]:
    return [
        {"alpha": 0.0, "beta": 0.0},
        {"alpha": alpha, "beta": 0.0},
        {"alpha": 0.0, "beta": beta},
        {"alpha": alpha, "beta": beta},
    ]


def diff_fusion_grid() -> list[dict]:
    return [{"diff_fusion": "late"}, {"diff_fusion": "early"}]


def mask_ratio_grid(ratios: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)) -> list[dict]:
    return [{"mask_ratio": r} for r in ratios]


def sample_ratio_grid(ratios: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)) -> list[dict]:
    return [{"sample_ratio": r} for r in ratios]

GRIDS = {
    "key_components": key_component_grid,
    "aux_tasks": aux_task_grid,
    "diff_fusion": diff_fusion_grid,
    "mask_ratio": mask_ratio_grid,
    "sample_ratio": sample_ratio_grid,
}


def _cell_key(cell: dict) -> str:
    return json.dumps(cell, sort_keys=True)


def run_ablation_grid(
    cells: list[dict],
    base_train_cfg: TrainConfig,
    base_model_cfg: TTNetConfig,
    manifest: DatasetManifest,
    store: EmbeddingStore,
    eval_split: str,
    sampling: SamplingConfig,
    metrics: tuple[str, ...] = ALL_METRICS,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Train and evaluate one model per cell (same seed everywhere).

    Cells are independent; a failed cell records its error without aborting
    the grid. With out_dir set, finished cells are written to disk and
    skipped on re-runs, making the grid resumable.
    """
    results = []
    for cell in cells:
        key = _cell_key(cell)
        cell_path = None
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            cell_path = Path(out_dir) / f"cell_{derive_seed(0, key):016x}.json"
            if cell_path.exists():
                results.append(json.loads(cell_path.read_text(encoding="utf-8")))
                continue
        t0 = time.monotonic()
        try:
            cfg = replace(base_train_cfg, **cell)
            result: TrainResult = train(manifest, store, base_model_cfg, cfg)
            preds = predictions_dict(
                generate_predictions(
                    result.model, result.vocab, manifest, store, eval_split, sampling
                )
            )
            report = evaluate_corpus(preds, manifest, eval_split, metrics)
            row = {
                "config": cell,
                "scores": report.corpus,
                "runtime_sec": time.monotonic() - t0,
            }
        except Exception as e:  # noqa: BLE001 - cell isolation is the contract
            row = {"config": cell, "error": f"{type(e).__name__}: {e}", "runtime_sec": time.monotonic() - t0}
        if cell_path is not None:
            cell_path.write_text(json.dumps(row), encoding="utf-8")
        results.append(row)
    return results
