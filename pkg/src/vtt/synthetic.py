"""Desk-scale synthetic datasets with a known, describable ground truth.

The world model is additive: every (action, object) step has a fixed delta
vector, a topic is a canonical sequence of steps, and a sample's states walk
from the topic's base prototype through cumulative deltas (plus optional
Gaussian noise). Ambiguity is injected by making step pairs in two different
topics share both their delta vector and their (start, end) state prototypes,
so the pair alone cannot identify the description but the rest of the
sequence can. That construction is what makes context-restriction
experiments meaningful without real videos.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, EmbeddingStore, StateRef, VTTSample
from .seeding import derive_seed

Combo = tuple[str, str]

DEFAULT_ACTIONS = ("pour", "chop", "boil", "stir", "wash", "grill", "peel", "mix")
DEFAULT_OBJECTS = ("water", "noodles", "milk", "onion", "rice", "beans", "tomato", "egg")
# Deterministic filler adverbs stretch descriptions to four tokens so that
# 4-gram metrics have support; the (action, object) pair stays the identity.
ADVERBS = ("gently", "slowly", "quickly", "firmly", "evenly", "carefully", "briefly", "fully")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    n_topics: int = 4
    n_categories: int = 2
    steps_min: int = 2
    steps_max: int = 4
    actions: tuple[str, ...] = DEFAULT_ACTIONS
    objects: tuple[str, ...] = DEFAULT_OBJECTS
    state_dim: int = 16
    noise_sigma: float = 0.0
    ambiguity_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_topics < 1 or self.n_categories < 1:
            raise ValueError("need at least one topic and one category")
        if not (1 <= self.steps_min <= self.steps_max):
            raise ValueError(f"bad steps range ({self.steps_min}, {self.steps_max})")
        if not 0.0 <= self.ambiguity_rate <= 1.0:
            raise ValueError(f"ambiguity_rate must be in [0, 1], got {self.ambiguity_rate}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticTaskSpec":
        kwargs = dict(obj)
        for key in ("actions", "objects"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        spec = cls(**kwargs)
        spec.validate()
        return spec

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticTaskSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TopicSpec:
    name: str
    category: str
    steps: tuple[Combo, ...]
    base: np.ndarray


def describe_combo(combo: Combo) -> str:
    action, obj = combo
    adverb = ADVERBS[zlib.crc32(f"{action} {obj}".encode("utf-8")) % len(ADVERBS)]
    return f"{action} the {obj} {adverb}"


class SyntheticWorld:
    """Deterministic topic/step/delta tables derived from a task spec."""

    def __init__(
        self,
        spec: SyntheticTaskSpec,
        topics: list[TopicSpec],
        deltas: dict[Combo, np.ndarray],
        combo_topic: dict[Combo, str],
        ambiguous_combos: set[Combo],
    ):
        self.spec = spec
        self.topics = topics
        self.deltas = deltas
        self.combo_topic = combo_topic
        self.ambiguous_combos = ambiguous_combos
        # Combos sharing a delta vector form one group; within-group choice is
        # exactly the ambiguity the oracle must break with context.
        self.groups: list[list[Combo]] = []
        self._combo_group: dict[Combo, int] = {}
        for topic in topics:
            for combo in topic.steps:
                if combo in self._combo_group:
                    continue
                gid = None
                for existing, g in self._combo_group.items():
                    if np.array_equal(deltas[existing], deltas[combo]):
                        gid = g
                        break
                if gid is None:
                    gid = len(self.groups)
                    self.groups.append([])
                self.groups[gid].append(combo)
                self._combo_group[combo] = gid
        for group in self.groups:
            group.sort(key=describe_combo)
        self.group_vectors = np.stack([self.deltas[g[0]] for g in self.groups])

    @classmethod
    def build(cls, spec: SyntheticTaskSpec) -> "SyntheticWorld":
        spec.validate()
        rng = np.random.default_rng(derive_seed(spec.seed, "synthetic-world"))
        combos = [(a, o) for a in spec.actions for o in spec.objects]
        lengths = rng.integers(spec.steps_min, spec.steps_max + 1, size=spec.n_topics)
        if int(lengths.sum()) > len(combos):
            raise ValueError(
                f"vocab too small: {spec.n_topics} topics need {int(lengths.sum())} distinct "
                f"steps but only {len(combos)} (action, object) pairs exist"
            )
        order = rng.permutation(len(combos))
        topics: list[TopicSpec] = []
        cursor = 0
        for t in range(spec.n_topics):
            steps = tuple(combos[order[cursor + i]] for i in range(lengths[t]))
            cursor += int(lengths[t])
            topics.append(
                TopicSpec(
                    name=f"topic{t:03d}",
                    category=f"cat{t % spec.n_categories:02d}",
                    steps=steps,
                    base=rng.normal(0.0, 1.0, spec.state_dim),
                )
            )
        deltas = {
            combo: rng.normal(0.0, 1.0, spec.state_dim)
            for topic in topics
            for combo in topic.steps
        }
        combo_topic = {combo: topic.name for topic in topics for combo in topic.steps}

        total_steps = int(lengths.sum())
        n_pairs = round(spec.ambiguity_rate * total_steps / 2)
        ambiguous: set[Combo] = set()
        if n_pairs > spec.n_topics // 2:
            raise ValueError(
                f"ambiguity_rate {spec.ambiguity_rate} needs {n_pairs} twin topic pairs "
                f"but only {spec.n_topics // 2} are available; add topics or lower the rate"
            )
        for k in range(n_pairs):
            a, b = topics[2 * k], topics[2 * k + 1]
            pos_a = int(rng.integers(0, len(a.steps)))
            pos_b = int(rng.integers(0, len(b.steps)))
            deltas[b.steps[pos_b]] = deltas[a.steps[pos_a]].copy()
            # Reposition b's base so its twin step starts exactly where a's
            # does; the two (start, end) state pairs then coincide while every
            # other state in the two topics stays distinct.
            prefix_a = a.base + sum(deltas[c] for c in a.steps[:pos_a])
            prefix_b = sum(deltas[c] for c in b.steps[:pos_b])
            b.base = prefix_a - prefix_b
            ambiguous.add(a.steps[pos_a])
            ambiguous.add(b.steps[pos_b])
        return cls(spec, topics, deltas, combo_topic, ambiguous)

    def topic_by_name(self, name: str) -> TopicSpec:
        for t in self.topics:
            if t.name == name:
                return t
        raise KeyError(name)

    def prototypes(self, topic: TopicSpec) -> np.ndarray:
        """Noise-free state sequence for a topic, shape (len(steps)+1, dim)."""
        states = [topic.base]
        for combo in topic.steps:
            states.append(states[-1] + self.deltas[combo])
        return np.stack(states)

    def ground_truth(self, topic: TopicSpec) -> list[str]:
        return [describe_combo(c) for c in topic.steps]


def generate(spec: SyntheticTaskSpec, n_samples: int) -> tuple[DatasetManifest, EmbeddingStore]:
    """Emit a manifest plus embedding store; deterministic given the spec.

    Topics are visited round-robin so small datasets still cover every topic.
    All samples carry split="train"; re-split afterwards if needed.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    world = SyntheticWorld.build(spec)
    rng = np.random.default_rng(derive_seed(spec.seed, "synthetic-samples"))
    store = EmbeddingStore(spec.state_dim)
    samples = []
    for k in range(n_samples):
        topic = world.topics[k % len(world.topics)]
        proto = world.prototypes(topic)
        states = proto + rng.normal(0.0, 1.0, proto.shape) * spec.noise_sigma
        sample_id = f"syn{k:05d}"
        refs = []
        for i, vec in enumerate(states):
            state_id = f"{sample_id}:s{i}"
            store.put(state_id, vec.astype(np.float32))
            refs.append(StateRef(state_id=state_id, source=sample_id, timestamp_sec=None))
        samples.append(
            VTTSample(
                sample_id=sample_id,
                states=tuple(refs),
                transformations=tuple(world.ground_truth(topic)),
                category=topic.category,
                topic=topic.name,
                split="train",
            )
        )
    return DatasetManifest(samples), store


def _step_candidates(world: SyntheticWorld, observed_delta: np.ndarray) -> list[Combo]:
    dists = np.sum((world.group_vectors - observed_delta) ** 2, axis=1)
    return world.groups[int(np.argmin(dists))]


def oracle_describe(states: np.ndarray, world: SyntheticWorld | SyntheticTaskSpec) -> list[str]:
    """Maximum-likelihood descriptions by nearest-delta matching.

    Each adjacent state difference is matched to its nearest known delta
    vector. When several (action, object) steps share that delta, the tie is
    broken by topic consistency: the candidate whose topic is supported by
    the most other steps wins, falling back to the lexicographically smallest
    description. Restricted to a single state pair there is no supporting
    context, so ambiguous steps stay unresolvable by construction.
    """
    if isinstance(world, SyntheticTaskSpec):
        world = SyntheticWorld.build(world)
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != world.spec.state_dim:
        raise ValueError(
            f"states must have shape (K+1, {world.spec.state_dim}), got {states.shape}"
        )
    if states.shape[0] < 2:
        raise ValueError("need at least two states")
    observed = np.diff(states, axis=0)
    candidates = [_step_candidates(world, obs) for obs in observed]

    votes: dict[str, int] = {}
    for cands in candidates:
        for combo in cands:
            votes[world.combo_topic[combo]] = votes.get(world.combo_topic[combo], 0) + 1

    descriptions = []
    for cands in candidates:
        if len(cands) == 1:
            descriptions.append(describe_combo(cands[0]))
            continue
        best = min(
            cands,
            key=lambda c: (-votes.get(world.combo_topic[c], 0), describe_combo(c)),
        )
        descriptions.append(describe_combo(best))
    return descriptions


def oracle_step_ambiguous(
    states: np.ndarray, world: SyntheticWorld | SyntheticTaskSpec
) -> list[bool]:
    """Per-step flag: does the nearest delta belong to more than one step?"""
    if isinstance(world, SyntheticTaskSpec):
        world = SyntheticWorld.build(world)
    observed = np.diff(np.asarray(states, dtype=np.float64), axis=0)
    return [len(_step_candidates(world, obs)) > 1 for obs in observed]
