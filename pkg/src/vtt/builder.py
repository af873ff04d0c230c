"""Build VTT samples from segment-annotated videos, compute statistics, split.

The extraction rule: a video annotated with K step segments yields K+1 states
(the first segment's start frame, then every segment's end frame) and K
transformation descriptions (the segment labels, in order).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, ManifestError, StateRef, VTTSample
from .seeding import derive_seed
from .text import normalize_description, tokenize

log = logging.getLogger(__name__)

DEFAULT_SPLIT_RATIOS = (0.794, 0.100, 0.106)


@dataclass(frozen=True)
class SegmentAnnotation:
    """Temporal step annotation for one video."""

    video_id: str
    category: str
    topic: str
    segments: tuple[tuple[float, float, str], ...]

    def validate(self) -> None:
        if not self.segments:
            raise ValueError(f"annotation {self.video_id!r}: no segments")
        prev_end = None
        for start, end, label in self.segments:
            if not label.strip():
                raise ValueError(f"annotation {self.video_id!r}: empty segment label")
            if start >= end:
                raise ValueError(
                    f"annotation {self.video_id!r}: segment ({start}, {end}) has start >= end"
                )
            if prev_end is not None and start < prev_end:
                raise ValueError(
                    f"annotation {self.video_id!r}: segments unsorted or overlapping at {start}"
                )
            prev_end = end


@dataclass
class DatasetStats:
    n_samples: int
    n_states: int
    n_transformations: int
    n_unique_transformations: int
    per_category: dict[str, int]
    per_topic: dict[str, int]
    transformation_length_hist: dict[int, int]
    sentence_length_hist: dict[int, int]
    word_freq: dict[str, int]


@dataclass
class CombinationSplit:
    """Eval-split sample ids partitioned by training-set combination overlap."""

    seen_sample_ids: set[str]
    unseen_sample_ids: set[str]


def read_annotations(path: str | Path) -> list[SegmentAnnotation]:
    """Parse annotation JSONL: one {video_id, category, topic, segments} per line."""
    annotations = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                ann = SegmentAnnotation(
                    video_id=str(obj["video_id"]),
                    category=str(obj["category"]),
                    topic=str(obj["topic"]),
                    segments=tuple(
                        (float(s), float(e), str(label)) for s, e, label in obj["segments"]
                    ),
                )
                ann.validate()
            except (KeyError, TypeError, ValueError) as e:
                raise ManifestError(f"line {lineno}: {e}") from e
            annotations.append(ann)
    return annotations


def build_samples(annotations: list[SegmentAnnotation]) -> list[VTTSample]:
    """Apply the state-extraction rule to each annotation.

    States sit at [start(seg 1), end(seg 1), ..., end(seg K)]; between two
    consecutive segments only the earlier end frame is kept, so gaps in the
    timeline collapse. Samples come back tagged split="train"; use
    :func:`assign_splits` for a real partition.
    """
    samples = []
    for ann in annotations:
        ann.validate()
        timestamps = [ann.segments[0][0]] + [end for _, end, _ in ann.segments]
        states = tuple(
            StateRef(state_id=f"{ann.video_id}:s{i}", source=ann.video_id, timestamp_sec=t)
            for i, t in enumerate(timestamps)
        )
        samples.append(
            VTTSample(
                sample_id=ann.video_id,
                states=states,
                transformations=tuple(label for _, _, label in ann.segments),
                category=ann.category,
                topic=ann.topic,
                split="train",
            )
        )
    return samples


def compute_stats(manifest: DatasetManifest, split: str | None = None) -> DatasetStats:
    """Counts over the whole manifest or one named split."""
    samples = manifest.samples if split is None else manifest.split_samples(split)
    per_category: Counter[str] = Counter()
    per_topic: Counter[str] = Counter()
    trans_len_hist: Counter[int] = Counter()
    sent_len_hist: Counter[int] = Counter()
    word_freq: Counter[str] = Counter()
    unique_trans: set[str] = set()
    n_states = 0
    n_trans = 0
    for s in samples:
        per_category[s.category] += 1
        per_topic[s.topic] += 1
        trans_len_hist[s.n_transformations] += 1
        n_states += len(s.states)
        n_trans += s.n_transformations
        for desc in s.transformations:
            unique_trans.add(normalize_description(desc))
            words = tokenize(desc)
            sent_len_hist[len(words)] += 1
            word_freq.update(words)
    return DatasetStats(
        n_samples=len(samples),
        n_states=n_states,
        n_transformations=n_trans,
        n_unique_transformations=len(unique_trans),
        per_category=dict(per_category),
        per_topic=dict(per_topic),
        transformation_length_hist=dict(trans_len_hist),
        sentence_length_hist=dict(sent_len_hist),
        word_freq=dict(word_freq),
    )


def _largest_remainder_counts(n: int, ratios: tuple[float, float, float]) -> list[int]:
    ideal = [n * r for r in ratios]
    counts = [int(x) for x in ideal]
    short = n - sum(counts)
    # Distribute leftovers by largest fractional remainder; ties favor the
    # earlier split (train before val before test).
    order = sorted(range(3), key=lambda i: (-(ideal[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def assign_splits(
    samples: list[VTTSample],
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> DatasetManifest:
    """Stratified train/val/test assignment at the topic level.

    Within each topic, samples are shuffled with a stream derived from
    (seed, topic) and partitioned by largest-remainder rounding of the
    ratios. A topic with fewer samples than splits goes entirely to train
    (warning logged). Deterministic given (samples order, ratios, seed).
    """
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    by_topic: dict[str, list[VTTSample]] = {}
    for s in samples:
        by_topic.setdefault(s.topic, []).append(s)

    assigned: dict[str, str] = {}
    for topic, members in by_topic.items():
        if len(members) < 3:
            log.warning(
                "topic %r has %d sample(s), fewer than the 3 splits; assigning all to train",
                topic,
                len(members),
            )
            for s in members:
                assigned[s.sample_id] = "train"
            continue
        rng = np.random.default_rng(derive_seed(seed, "assign-splits", topic))
        order = rng.permutation(len(members))
        counts = _largest_remainder_counts(len(members), ratios)
        bounds = (counts[0], counts[0] + counts[1])
        for rank, idx in enumerate(order):
            if rank < bounds[0]:
                split = "train"
            elif rank < bounds[1]:
                split = "val"
            else:
                split = "test"
            assigned[members[idx].sample_id] = split

    relabeled = [
        VTTSample(
            sample_id=s.sample_id,
            states=s.states,
            transformations=s.transformations,
            category=s.category,
            topic=s.topic,
            split=assigned[s.sample_id],
        )
        for s in samples
    ]
    return DatasetManifest(relabeled)


def combination_key(sample: VTTSample) -> tuple[str, ...]:
    """Order-sensitive tuple of normalized transformation descriptions."""
    return tuple(normalize_description(t) for t in sample.transformations)


def split_seen_unseen(manifest: DatasetManifest, eval_split: str = "test") -> CombinationSplit:
    """Partition an eval split by whether its combination occurs in train."""
    train = manifest.split_samples("train")
    if not train:
        raise ValueError("manifest has no train samples to define seen combinations")
    train_keys = {combination_key(s) for s in train}
    seen: set[str] = set()
    unseen: set[str] = set()
    for s in manifest.split_samples(eval_split):
        (seen if combination_key(s) in train_keys else unseen).add(s.sample_id)
    return CombinationSplit(seen_sample_ids=seen, unseen_sample_ids=unseen)


def format_stats_table(manifest: DatasetManifest) -> str:
    """Human-readable per-split count table."""
    rows = [("", "Train", "Val", "Test", "Total")]
    stats = {split: compute_stats(manifest, split) for split in ("train", "val", "test")}
    total = compute_stats(manifest)
    field_names = (
        ("Categories", lambda st: len(st.per_category)),
        ("Topics", lambda st: len(st.per_topic)),
        ("Samples", lambda st: st.n_samples),
        ("States", lambda st: st.n_states),
        ("Trans.", lambda st: st.n_transformations),
        ("Unique Trans.", lambda st: st.n_unique_transformations),
    )
    for name, getter in field_names:
        rows.append(
            (
                name,
                str(getter(stats["train"])),
                str(getter(stats["val"])),
                str(getter(stats["test"])),
                str(getter(total)),
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    return "\n".join(
        "  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(r, widths)))
        for r in rows
    )
