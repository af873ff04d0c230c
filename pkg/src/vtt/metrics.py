"""Caption evaluation metrics on the x100 reporting scale.

Per-description metrics (BLEU@4, ROUGE-L, METEOR-lite) are averaged over all
transformations of the evaluated split; CIDEr-D computes its IDF table over
the split's references first. METEOR-lite is exact-match only: no stemming
or synonym resources, so absolute values are not comparable to toolchains
that use them.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .data import DatasetManifest
from .text import tokenize

BLEU_EPS = 0.1
ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


class CoverageError(ValueError):
    """Predictions do not cover the evaluated split exactly."""


@dataclass(frozen=True)
class EvalPair:
    sample_id: str
    index: int
    candidate: tuple[str, ...]
    reference: tuple[str, ...]


@dataclass
class MetricReport:
    corpus: dict[str, float]
    per_pair: list[dict]
    n_pairs: int

    def to_dict(self) -> dict:
        return {"corpus": self.corpus, "n_pairs": self.n_pairs, "per_pair": self.per_pair}


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: tuple[str, ...], reference: tuple[str, ...]) -> float:
    """Smoothed BLEU@4 (x100).

    Modified n-gram precisions for n = 1..4; zero match counts are smoothed
    by an additive epsilon on the numerator. Orders longer than the candidate
    contribute no n-grams and are excluded from the geometric mean, so an
    exact two-word match still scores 100.
    """
    c = len(candidate)
    if c == 0:
        return 0.0
    r = len(reference)
    log_sum = 0.0
    orders = 0
    for n in range(1, 5):
        if c < n:
            break
        possible = c - n + 1
        ref_counts = _ngram_counts(reference, n)
        matched = sum(
            min(count, ref_counts[gram]) for gram, count in _ngram_counts(candidate, n).items()
        )
        p = matched / possible if matched > 0 else BLEU_EPS / possible
        log_sum += math.log(p)
        orders += 1
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * brevity * math.exp(log_sum / orders)


def _lcs_length(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: tuple[str, ...], reference: tuple[str, ...]) -> float:
    """LCS F-measure with recall weight beta=1.2 (x100)."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    beta_sq = ROUGE_BETA**2
    return 100.0 * (1 + beta_sq) * precision * recall / (recall + beta_sq * precision)


def _alignment(candidate: tuple[str, ...], reference: tuple[str, ...]) -> tuple[int, int]:
    """(matches, chunks) of the best exact-match unigram alignment.

    Matches are maximal by construction (each shared word matched
    min(candidate count, reference count) times); among maximal alignments
    the chunk count is minimized by branch-and-bound over assignments,
    preferring chunk continuations so pruning kicks in early.
    """
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    need = {w: min(cand_counts[w], ref_counts[w]) for w in cand_counts if w in ref_counts}
    matches = sum(need.values())
    if matches == 0:
        return 0, 0

    ref_positions: dict[str, list[int]] = {}
    for j, w in enumerate(reference):
        if w in need:
            ref_positions.setdefault(w, []).append(j)
    cand_remaining = Counter(w for w in candidate if w in need)

    best = [matches]  # chunks never exceed the match count

    def search(i: int, need_left: dict, used: int, last_ci: int, last_rj: int, chunks: int) -> None:
        if chunks >= best[0]:
            return
        if sum(need_left.values()) == 0:
            best[0] = chunks
            return
        if i >= len(candidate):
            return
        w = candidate[i]
        if w in need_left:
            if need_left[w] > 0:
                options = [j for j in ref_positions[w] if not used & (1 << j)]
                # Continuations first: keeps the incumbent tight for pruning.
                options.sort(key=lambda j: (j != last_rj + 1 or i != last_ci + 1, j))
                need_left[w] -= 1
                for j in options:
                    extra = 0 if (i == last_ci + 1 and j == last_rj + 1) else 1
                    search(i + 1, need_left, used | (1 << j), i, j, chunks + extra)
                need_left[w] += 1
            cand_remaining[w] -= 1
            if cand_remaining[w] >= need_left[w]:
                search(i + 1, need_left, used, last_ci, last_rj, chunks)
            cand_remaining[w] += 1
        else:
            search(i + 1, need_left, used, last_ci, last_rj, chunks)

    search(0, dict(need), 0, -2, -2, 0)
    return matches, best[0]


def meteor_lite(candidate: tuple[str, ...], reference: tuple[str, ...]) -> float:
    """Exact-match METEOR (x100): harmonic mean weighted toward recall with a
    fragmentation penalty of 0.5 * (chunks / matches)^3."""
    if not candidate or not reference:
        return 0.0
    matches, chunks = _alignment(candidate, reference)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


def cider(pairs: list[EvalPair]) -> tuple[float, list[float]]:
    """CIDEr-D over a corpus (x100 reporting scale; conventional 0-10 values
    are multiplied by 100, so identity corpora approach 1000).

    TF-IDF n-gram cosine for n = 1..4 with candidate counts clipped at the
    reference count inside the dot product, a Gaussian length penalty with
    sigma 6, and document frequencies taken over the corpus references.
    """
    if not pairs:
        raise ValueError("cider needs at least one pair")
    df: list[Counter] = [Counter() for _ in range(CIDER_MAX_N)]
    for pair in pairs:
        for n in range(1, CIDER_MAX_N + 1):
            for gram in set(_ngram_counts(pair.reference, n)):
                df[n - 1][gram] += 1
    log_n_docs = math.log(len(pairs))

    def tfidf(counts: Counter, n: int) -> tuple[dict, float]:
        vec = {
            gram: count * (log_n_docs - math.log(max(1.0, df[n - 1][gram])))
            for gram, count in counts.items()
        }
        norm = math.sqrt(sum(v * v for v in vec.values()))
        return vec, norm

    per_pair = []
    for pair in pairs:
        acc = 0.0
        for n in range(1, CIDER_MAX_N + 1):
            hyp_vec, hyp_norm = tfidf(_ngram_counts(pair.candidate, n), n)
            ref_vec, ref_norm = tfidf(_ngram_counts(pair.reference, n), n)
            if hyp_norm == 0.0 or ref_norm == 0.0:
                continue
            dot = sum(min(v, ref_vec.get(g, 0.0)) * ref_vec.get(g, 0.0) for g, v in hyp_vec.items())
            acc += dot / (hyp_norm * ref_norm)
        delta = len(pair.candidate) - len(pair.reference)
        penalty = math.exp(-(delta**2) / (2.0 * CIDER_SIGMA**2))
        per_pair.append(100.0 * 10.0 * (acc / CIDER_MAX_N) * penalty)
    corpus = sum(per_pair) / len(per_pair)
    return corpus, per_pair


PAIR_METRICS = {"bleu4": bleu4, "rougeL": rouge_l, "meteor": meteor_lite}
ALL_METRICS = ("bleu4", "rougeL", "cider", "meteor")


def build_pairs(
    predictions: dict[str, list[str]], manifest: DatasetManifest, split: str
) -> list[EvalPair]:
    """Tokenized (candidate, reference) pairs; exact coverage is required."""
    samples = manifest.split_samples(split)
    missing = [s.sample_id for s in samples if s.sample_id not in predictions]
    if missing:
        raise CoverageError(f"missing predictions for {len(missing)} sample(s): {missing[:10]}")
    pairs = []
    for s in samples:
        preds = predictions[s.sample_id]
        if len(preds) != s.n_transformations:
            raise CoverageError(
                f"sample {s.sample_id!r}: {len(preds)} predictions for "
                f"{s.n_transformations} transformations"
            )
        for i, (cand, ref) in enumerate(zip(preds, s.transformations)):
            pairs.append(
                EvalPair(
                    sample_id=s.sample_id,
                    index=i,
                    candidate=tuple(tokenize(cand)),
                    reference=tuple(tokenize(ref)),
                )
            )
    return pairs


def evaluate_pairs(pairs: list[EvalPair], metrics: tuple[str, ...] = ALL_METRICS) -> MetricReport:
    if not pairs:
        raise ValueError("no pairs to evaluate")
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    per_pair = [
        {"sample_id": p.sample_id, "index": p.index, "scores": {}} for p in pairs
    ]
    corpus: dict[str, float] = {}
    for name in metrics:
        if name == "cider":
            corpus_score, scores = cider(pairs)
            corpus[name] = corpus_score
            for rec, score in zip(per_pair, scores):
                rec["scores"][name] = score
        else:
            fn = PAIR_METRICS[name]
            scores = [fn(p.candidate, p.reference) for p in pairs]
            corpus[name] = sum(scores) / len(scores)
            for rec, score in zip(per_pair, scores):
                rec["scores"][name] = score
    return MetricReport(corpus=corpus, per_pair=per_pair, n_pairs=len(pairs))


def evaluate_corpus(
    predictions: dict[str, list[str]],
    manifest: DatasetManifest,
    split: str,
    metrics: tuple[str, ...] = ALL_METRICS,
) -> MetricReport:
    return evaluate_pairs(build_pairs(predictions, manifest, split), metrics)


def write_predictions(predictions: dict[str, list[str]], path: str | Path) -> None:
    """Predictions JSONL: {"sample_id", "transformations"} per line. This is
    also the export surface for external scorers."""
    with open(path, "w", encoding="utf-8") as f:
        for sample_id, transformations in predictions.items():
            f.write(
                json.dumps(
                    {"sample_id": sample_id, "transformations": list(transformations)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_predictions(path: str | Path) -> dict[str, list[str]]:
    predictions: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                predictions[str(obj["sample_id"])] = [str(t) for t in obj["transformations"]]
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise ValueError(f"{path}: line {lineno}: {e}") from e
    return predictions
