import numpy as np
import pytest
import torch

from vtt.data import DatasetManifest, StateRef, VTTSample


@pytest.fixture(autouse=True)
def _fixed_torch_threads():
    torch.set_num_threads(2)


def make_sample(
    sample_id: str,
    n_transformations: int = 2,
    category: str = "cooking",
    topic: str = "boil noodles",
    split: str = "train",
    descriptions: list[str] | None = None,
) -> VTTSample:
    states = tuple(
        StateRef(state_id=f"{sample_id}:s{i}", source=sample_id, timestamp_sec=float(i))
        for i in range(n_transformations + 1)
    )
    if descriptions is None:
        descriptions = [f"do step {i}" for i in range(n_transformations)]
    return VTTSample(
        sample_id=sample_id,
        states=states,
        transformations=tuple(descriptions),
        category=category,
        topic=topic,
        split=split,
    )


@pytest.fixture
def tiny_manifest() -> DatasetManifest:
    return DatasetManifest(
        [
            make_sample("a", 2, split="train"),
            make_sample("b", 1, split="train", descriptions=["pour the water"]),
            make_sample("c", 3, split="val"),
            make_sample("d", 2, split="test"),
        ]
    )


def random_tokens(rng: np.random.Generator, vocab: list[str], lo: int = 1, hi: int = 7) -> tuple[str, ...]:
    n = int(rng.integers(lo, hi + 1))
    return tuple(vocab[int(i)] for i in rng.integers(0, len(vocab), n))
