"""Combined-objective training with warmup/decay, toggles, and checkpoints.

The objective is the text NLL plus weighted category and topic cross-entropy
terms. All randomness derives from one seed: model init, data order, and MTM
mask draws use separate named streams, so toggling one consumer never
perturbs the others (a no-op mask policy trains bit-identically to MTM off).
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .data import DatasetManifest, EmbeddingStore, VTTSample
from .model.context import MTMPolicy, sample_mask_plan
from .model.decoder import nll_loss
from .model.ttnet import TTNet, TTNetConfig
from .seeding import derive_seed
from .text import PAD, Vocabulary, build_vocab

DECAY_SHAPES = ("linear", "cosine")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.025
    beta: float = 0.1
    lr_peak: float = 1e-4
    warmup_steps: int = 2000
    epochs: int = 50
    batch_size: int = 32
    weight_decay: float = 0.01
    use_diff: bool = True
    use_mtm: bool = True
    use_aux: bool = True
    diff_fusion: str = "late"
    rep_source: str = "diff"
    diff_first: str = "wrap"
    mask_ratio: float = 0.15
    sample_ratio: float = 0.5
    decay: str = "linear"
    nll_reduction: str = "mean"
    min_word_freq: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.decay not in DECAY_SHAPES:
            raise ValueError(f"decay must be one of {DECAY_SHAPES}")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_schedule(step: int, cfg: TrainConfig, total_steps: int) -> float:
    """Linear warmup to lr_peak, then decay to exactly 0 at total_steps."""
    if total_steps <= cfg.warmup_steps:
        raise ValueError(
            f"total_steps ({total_steps}) must exceed warmup_steps ({cfg.warmup_steps})"
        )
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step <= cfg.warmup_steps:
        if cfg.warmup_steps == 0:
            return cfg.lr_peak
        return cfg.lr_peak * step / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / (total_steps - cfg.warmup_steps)
    if cfg.decay == "linear":
        return cfg.lr_peak * (1.0 - progress)
    return cfg.lr_peak * 0.5 * (1.0 + math.cos(math.pi * progress))


def total_loss(
    text_loss: Tensor,
    category_logits: Tensor | None,
    topic_logits: Tensor | None,
    labels: tuple[Tensor, Tensor],
    cfg: TrainConfig,
) -> Tensor:
    """text loss + alpha * category CE + beta * topic CE.

    With use_aux off (or both weights zero) the classification terms are
    skipped entirely, so the result is the text loss, exactly.
    """
    if not cfg.use_aux or (cfg.alpha == 0.0 and cfg.beta == 0.0):
        return text_loss
    category_idx, topic_idx = labels
    loss = text_loss
    if cfg.alpha > 0.0:
        if category_logits is None:
            raise ValueError("category loss requested but the model has no category head")
        if category_idx.min() < 0 or category_idx.max() >= category_logits.shape[-1]:
            raise ValueError("category label index out of range")
        loss = loss + cfg.alpha * torch.nn.functional.cross_entropy(category_logits, category_idx)
    if cfg.beta > 0.0:
        if topic_logits is None:
            raise ValueError("topic loss requested but the model has no topic head")
        if topic_idx.min() < 0 or topic_idx.max() >= topic_logits.shape[-1]:
            raise ValueError("topic label index out of range")
        loss = loss + cfg.beta * torch.nn.functional.cross_entropy(topic_logits, topic_idx)
    return loss


@dataclass
class _Record:
    """Pre-featurized sample: state matrix plus encoded sentences."""

    sample: VTTSample
    states: Tensor
    token_ids: list[list[int]]
    category_idx: int
    topic_idx: int


def _featurize(
    samples: list[VTTSample],
    store: EmbeddingStore,
    vocab: Vocabulary,
    cat_index: dict[str, int],
    topic_index: dict[str, int],
) -> list[_Record]:
    records = []
    for s in samples:
        records.append(
            _Record(
                sample=s,
                states=torch.from_numpy(store.matrix_for(s)).float(),
                token_ids=[vocab.encode(t) for t in s.transformations],
                category_idx=cat_index[s.category],
                topic_idx=topic_index[s.topic],
            )
        )
    return records


def _collate_sentences(records: list[_Record]) -> tuple[Tensor, Tensor]:
    """Teacher-forcing inputs/targets for all transformations, sample-major."""
    seqs = [ids for r in records for ids in r.token_ids]
    max_len = max(len(ids) for ids in seqs)
    token_in = torch.full((len(seqs), max_len - 1), PAD, dtype=torch.long)
    token_tgt = torch.full((len(seqs), max_len - 1), PAD, dtype=torch.long)
    for i, ids in enumerate(seqs):
        token_in[i, : len(ids) - 1] = torch.tensor(ids[:-1], dtype=torch.long)
        token_tgt[i, : len(ids) - 1] = torch.tensor(ids[1:], dtype=torch.long)
    return token_in, token_tgt


def _batch_loss(
    model: TTNet,
    records: list[_Record],
    cfg: TrainConfig,
    policy: MTMPolicy | None,
) -> tuple[Tensor, Tensor]:
    """(total loss, text loss) for one batch; policy=None disables masking."""
    plans = None
    if policy is not None:
        plans = []
        for r in records:
            n_rows = 2 * len(r.sample.states) if cfg.use_diff else len(r.sample.states)
            plans.append(sample_mask_plan(policy, n_rows, training=True))
    ctx = model.encode_batch([r.states for r in records], plans)
    token_in, token_tgt = _collate_sentences(records)
    logits = model.decoder(ctx.flat_reps(), token_in)
    text = nll_loss(logits, token_tgt, cfg.nll_reduction)
    labels = (
        torch.tensor([r.category_idx for r in records], dtype=torch.long),
        torch.tensor([r.topic_idx for r in records], dtype=torch.long),
    )
    return total_loss(text, ctx.category_logits, ctx.topic_logits, labels, cfg), text


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float | None
    lr_last: float
    wall_sec: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Checkpoint:
    model_state: dict
    optimizer_state: dict
    step: int
    epoch: int
    model_cfg: dict
    train_cfg: dict
    vocab_tokens: list[str]
    categories: list[str]
    topics: list[str]
    rng_states: dict = field(default_factory=dict)

    def build_model(self) -> tuple[TTNet, Vocabulary]:
        model = TTNet(TTNetConfig(**self.model_cfg))
        model.load_state_dict(self.model_state)
        model.eval()
        return model, Vocabulary(list(self.vocab_tokens))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    torch.save(asdict(ckpt), path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint(**torch.load(path, weights_only=True))


def checkpoint_digest(ckpt: Checkpoint) -> str:
    """Deterministic hash of the model parameters and step counter."""
    h = hashlib.sha256()
    h.update(str(ckpt.step).encode())
    for name in sorted(ckpt.model_state):
        h.update(name.encode())
        h.update(ckpt.model_state[name].cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@dataclass
class TrainResult:
    model: TTNet
    vocab: Vocabulary
    checkpoint: Checkpoint
    log: list[EpochLog]

    @property
    def digest(self) -> str:
        return checkpoint_digest(self.checkpoint)


def _model_cfg_for_run(
    base: TTNetConfig,
    cfg: TrainConfig,
    vocab: Vocabulary,
    manifest: DatasetManifest,
    store: EmbeddingStore,
) -> TTNetConfig:
    """Bind data-dependent sizes and the structural toggles onto the model config.

    use_aux stays structural on the model (heads exist unless the base config
    drops them); TrainConfig.use_aux only switches the loss terms, so an
    aux-off run keeps zero-gradient heads rather than a different parameter
    set.
    """
    return replace(
        base,
        vocab_size=len(vocab),
        n_categories=max(1, len(manifest.categories)),
        n_topics=max(1, len(manifest.topics)),
        d_enc=store.dim,
        use_diff=cfg.use_diff,
        rep_source=cfg.rep_source,
        diff_first=cfg.diff_first,
        diff_fusion=cfg.diff_fusion,
    )


def train(
    manifest: DatasetManifest,
    store: EmbeddingStore,
    model_cfg: TTNetConfig | None = None,
    cfg: TrainConfig | None = None,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Train TTNet on the manifest's train split; returns the best checkpoint.

    Best = lowest validation loss (lowest training loss when the val split is
    empty). Fully deterministic given the config seed; single-process.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    train_samples = manifest.split_samples("train")
    if not train_samples:
        raise TrainingError("train split is empty")
    vocab = build_vocab(
        [t for s in train_samples for t in s.transformations], min_freq=cfg.min_word_freq
    )
    run_cfg = _model_cfg_for_run(model_cfg or TTNetConfig(), cfg, vocab, manifest, store)

    torch.manual_seed(derive_seed(cfg.seed, "model-init"))
    model = TTNet(run_cfg)
    optimizer = torch.optim.AdamW(model.parameters(), lr=0.0, weight_decay=cfg.weight_decay)

    cat_index = manifest.category_index()
    topic_index = manifest.topic_index()
    train_records = _featurize(train_samples, store, vocab, cat_index, topic_index)
    val_records = _featurize(
        manifest.split_samples("val"), store, vocab, cat_index, topic_index
    )

    n_batches = math.ceil(len(train_records) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    lr_schedule(0, cfg, total_steps)  # validates total_steps > warmup_steps up front

    data_rng = np.random.default_rng(derive_seed(cfg.seed, "data-order"))
    policy = (
        MTMPolicy(cfg.mask_ratio, cfg.sample_ratio, derive_seed(cfg.seed, "mtm"))
        if cfg.use_mtm
        else None
    )

    logs: list[EpochLog] = []
    best_loss = float("inf")
    best_state: dict | None = None
    best_step = 0
    best_epoch = 0
    step = 0
    lr = 0.0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        model.train()
        order = data_rng.permutation(len(train_records))
        epoch_losses = []
        for b in range(n_batches):
            batch = [train_records[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            loss, _ = _batch_loss(model, batch, cfg, policy)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step + 1} (epoch {epoch})")
            optimizer.zero_grad()
            loss.backward()
            step += 1
            lr = lr_schedule(step, cfg, total_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.step()
            epoch_losses.append(float(loss.item()))
        train_loss = float(np.mean(epoch_losses))

        val_loss = None
        if val_records:
            model.eval()
            with torch.no_grad():
                losses = []
                for b in range(0, len(val_records), cfg.batch_size):
                    vloss, _ = _batch_loss(model, val_records[b : b + cfg.batch_size], cfg, None)
                    losses.append(float(vloss.item()))
                val_loss = float(np.mean(losses))

        logs.append(
            EpochLog(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                lr_last=lr,
                wall_sec=time.monotonic() - t0,
            )
        )
        selection = val_loss if val_loss is not None else train_loss
        if selection < best_loss:
            best_loss = selection
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_step = step
            best_epoch = epoch

    if best_state is None:
        best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        best_step, best_epoch = step, cfg.epochs
    model.load_state_dict(best_state)
    model.eval()

    ckpt = Checkpoint(
        model_state=best_state,
        optimizer_state=optimizer.state_dict(),
        step=best_step,
        epoch=best_epoch,
        model_cfg=run_cfg.to_dict(),
        train_cfg=cfg.to_dict(),
        vocab_tokens=list(vocab.tokens),
        categories=list(manifest.categories),
        topics=list(manifest.topics),
        rng_states={
            "torch": torch.get_rng_state(),
            "data_order": data_rng.bit_generator.state,
            "mtm": policy.rng.bit_generator.state if policy else None,
        },
    )
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as f:
            for rec in logs:
                f.write(json.dumps(rec.to_dict()) + "\n")
    return TrainResult(model=model, vocab=vocab, checkpoint=ckpt, log=logs)
