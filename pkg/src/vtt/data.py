"""Core domain types plus manifest and embedding-store serialization.

A dataset is a JSONL manifest (one sample per line) and a binary embedding
store mapping state ids to fixed-width float32 vectors. Both formats round
trip exactly; validation failures always name the offending sample or line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")

STORE_MAGIC = b"VTTE"
STORE_VERSION = 1


class ManifestError(ValueError):
    """Manifest parse or invariant failure, with location context."""


class StoreFormatError(ValueError):
    """Embedding store file is malformed."""


class MissingEmbeddingError(KeyError):
    """A state id was looked up that the store does not contain."""


@dataclass(frozen=True)
class StateRef:
    """Reference to one visual state (an image, stored elsewhere as a vector)."""

    state_id: str
    source: str
    timestamp_sec: float | None = None

    def validate(self) -> None:
        if not self.state_id:
            raise ManifestError("state_id must be non-empty")
        if self.timestamp_sec is not None and self.timestamp_sec < 0:
            raise ManifestError(
                f"state {self.state_id!r}: timestamp_sec must be >= 0, got {self.timestamp_sec}"
            )


@dataclass(frozen=True)
class VTTSample:
    """One task instance: N+1 states and the N transformations between them."""

    sample_id: str
    states: tuple[StateRef, ...]
    transformations: tuple[str, ...]
    category: str
    topic: str
    split: str

    def validate(self) -> None:
        if len(self.states) != len(self.transformations) + 1:
            raise ManifestError(
                f"sample {self.sample_id!r}: {len(self.states)} states require "
                f"{len(self.states) - 1} transformations, got {len(self.transformations)}"
            )
        if len(self.states) < 2:
            raise ManifestError(f"sample {self.sample_id!r}: needs at least 2 states")
        for t in self.transformations:
            if not t.strip():
                raise ManifestError(f"sample {self.sample_id!r}: empty transformation description")
        if self.split not in SPLITS:
            raise ManifestError(f"sample {self.sample_id!r}: unknown split {self.split!r}")
        for s in self.states:
            s.validate()

    @property
    def n_transformations(self) -> int:
        return len(self.transformations)


@dataclass
class DatasetManifest:
    """All samples plus the lexicographically sorted label vocabularies."""

    samples: list[VTTSample]
    categories: tuple[str, ...] = field(init=False)
    topics: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        self.categories = tuple(sorted({s.category for s in self.samples}))
        self.topics = tuple(sorted({s.topic for s in self.samples}))

    def validate(self) -> None:
        seen_samples: set[str] = set()
        seen_states: set[str] = set()
        for s in self.samples:
            s.validate()
            if s.sample_id in seen_samples:
                raise ManifestError(f"duplicate sample_id {s.sample_id!r}")
            seen_samples.add(s.sample_id)
            for ref in s.states:
                if ref.state_id in seen_states:
                    raise ManifestError(
                        f"sample {s.sample_id!r}: duplicate state_id {ref.state_id!r}"
                    )
                seen_states.add(ref.state_id)

    def category_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.categories)}

    def topic_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.topics)}

    def split_samples(self, split: str) -> list[VTTSample]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [s for s in self.samples if s.split == split]

    def split_sizes(self) -> dict[str, int]:
        sizes = {split: 0 for split in SPLITS}
        for s in self.samples:
            sizes[s.split] += 1
        return sizes


def _sample_to_json(sample: VTTSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "category": sample.category,
        "topic": sample.topic,
        "split": sample.split,
        "states": [
            {"state_id": r.state_id, "source": r.source, "timestamp_sec": r.timestamp_sec}
            for r in sample.states
        ],
        "transformations": list(sample.transformations),
    }


def _sample_from_json(obj: dict) -> VTTSample:
    states = tuple(
        StateRef(
            state_id=str(r["state_id"]),
            source=str(r["source"]),
            timestamp_sec=None if r.get("timestamp_sec") is None else float(r["timestamp_sec"]),
        )
        for r in obj["states"]
    )
    return VTTSample(
        sample_id=str(obj["sample_id"]),
        states=states,
        transformations=tuple(str(t) for t in obj["transformations"]),
        category=str(obj["category"]),
        topic=str(obj["topic"]),
        split=str(obj["split"]),
    )


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write one sample per JSONL line; validates every sample first."""
    for sample in manifest.samples:
        sample.validate()
    with open(path, "w", encoding="utf-8") as f:
        for sample in manifest.samples:
            f.write(json.dumps(_sample_to_json(sample), ensure_ascii=False) + "\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest; errors carry 1-based line numbers."""
    samples: list[VTTSample] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: invalid JSON: {e}") from e
            try:
                sample = _sample_from_json(obj)
                sample.validate()
            except (KeyError, TypeError, ValueError) as e:
                raise ManifestError(f"line {lineno}: {e}") from e
            samples.append(sample)
    manifest = DatasetManifest(samples)
    manifest.validate()
    return manifest


class EmbeddingStore:
    """Map from state id to a fixed-width float32 vector.

    Lookups of absent ids raise :class:`MissingEmbeddingError`; there is no
    silent zero-vector fallback.
    """

    def __init__(self, dim: int, entries: dict[str, np.ndarray] | None = None):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}
        for key, vec in (entries or {}).items():
            self.put(key, vec)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, state_id: str) -> bool:
        return state_id in self._entries

    def ids(self) -> list[str]:
        return list(self._entries)

    def put(self, state_id: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(
                f"vector for {state_id!r} has shape {vec.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {state_id!r} contains non-finite values")
        if state_id in self._entries:
            raise ValueError(f"duplicate state_id {state_id!r}")
        self._entries[state_id] = vec

    def get(self, state_id: str) -> np.ndarray:
        try:
            return self._entries[state_id]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding stored for state_id {state_id!r}") from None

    def matrix_for(self, sample: VTTSample) -> np.ndarray:
        """Stacked (N+1, dim) float32 matrix of the sample's state vectors."""
        return np.stack([self.get(ref.state_id) for ref in sample.states])


def write_embedding_store(store: EmbeddingStore, path: str | Path) -> None:
    """Binary layout: magic, u32 version, u32 dim, u64 count, then records of
    (u16 id byte length, id bytes, dim x f32), all little-endian."""
    with open(path, "wb") as f:
        f.write(STORE_MAGIC)
        f.write(struct.pack("<IIQ", STORE_VERSION, store.dim, len(store)))
        for state_id in store.ids():
            id_bytes = state_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"state_id too long to serialize: {state_id!r}")
            f.write(struct.pack("<H", len(id_bytes)))
            f.write(id_bytes)
            f.write(store.get(state_id).astype("<f4").tobytes())


def open_embedding_store(path: str | Path) -> EmbeddingStore:
    data = Path(path).read_bytes()
    if data[:4] != STORE_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 20:
        raise StoreFormatError(f"{path}: truncated header")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != STORE_VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    store = EmbeddingStore(dim)
    offset = 20
    vec_bytes = dim * 4
    for i in range(count):
        if offset + 2 > len(data):
            raise StoreFormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise StoreFormatError(f"{path}: truncated at record {i}")
        state_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        try:
            store.put(state_id, vec)
        except ValueError as e:
            raise StoreFormatError(f"{path}: record {i}: {e}") from e
    if offset != len(data):
        raise StoreFormatError(f"{path}: {len(data) - offset} trailing bytes")
    return store
