"""Tokenization and the word-level vocabulary shared by training and evaluation.

One tokenization rule is used everywhere descriptions are turned into tokens
(dataset statistics, vocabulary building, metric evaluation): lowercase,
replace ASCII punctuation with spaces, split on whitespace. The rule is
deliberately simple so counts are reproducible.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def normalize_description(text: str) -> str:
    """Whitespace-collapsed lowercase form used for combination keys and counts."""
    return " ".join(text.lower().split())


@dataclass
class Vocabulary:
    """Ordered token list with the four specials pinned to ids 0..3."""

    tokens: list[str]
    _ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with specials {SPECIAL_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def token_id(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def encode(self, text: str) -> list[int]:
        """Token ids for ``text`` wrapped in BOS/EOS."""
        return [BOS] + [self.token_id(t) for t in tokenize(text)] + [EOS]

    def decode(self, ids: list[int]) -> list[str]:
        """Content words for ``ids``; stops at EOS, skips PAD/BOS."""
        words = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            words.append(self.tokens[i])
        return words


def build_vocab(train_descriptions: list[str], min_freq: int = 1) -> Vocabulary:
    """Word-level vocabulary from a training corpus.

    Tokens are sorted by (frequency desc, lexicographic asc); tokens seen
    fewer than ``min_freq`` times are dropped and will encode as UNK.
    """
    if not train_descriptions:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    freq: dict[str, int] = {}
    for text in train_descriptions:
        for tok in tokenize(text):
            freq[tok] = freq.get(tok, 0) + 1
    kept = sorted(
        (tok for tok, n in freq.items() if n >= min_freq),
        key=lambda tok: (-freq[tok], tok),
    )
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


def write_vocab(vocab: Vocabulary, path: str | Path) -> None:
    """One token per line, UTF-8; the line number is the token id."""
    Path(path).write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")


def read_vocab(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return Vocabulary([line for line in lines if line])
