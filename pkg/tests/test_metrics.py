import numpy as np
import pytest

from conftest import make_sample, random_tokens
from oracles import bleu4_oracle, cider_oracle, meteor_oracle, rouge_l_oracle
from vtt.data import DatasetManifest
from vtt.metrics import (
    CoverageError,
    EvalPair,
    bleu4,
    cider,
    evaluate_corpus,
    meteor_lite,
    read_predictions,
    rouge_l,
    write_predictions,
)

VOCAB = ["pour", "the", "water", "boil", "noodles", "now", "cut", "mango", "dog", "wash"]


class TestBleu4:
    def test_identity(self):
        assert bleu4(("pour", "the", "water"), ("pour", "the", "water")) == pytest.approx(100.0)

    def test_disjoint_matches_oracle_and_stays_positive(self):
        cand, ref = ("cut", "mango"), ("pour", "water")
        score = bleu4(cand, ref)
        assert score > 0.0
        assert score == pytest.approx(100.0 * bleu4_oracle(cand, ref), abs=1e-9)

    def test_long_disjoint_below_one(self):
        # Smoothing keeps disjoint pairs positive but tiny once all four
        # n-gram orders contribute.
        cand = tuple(f"c{i}" for i in range(12))
        ref = tuple(f"r{i}" for i in range(12))
        score = bleu4(cand, ref)
        assert 0.0 < score < 1.0
        assert score == pytest.approx(100.0 * bleu4_oracle(cand, ref), abs=1e-9)

    def test_longer_candidate_no_brevity_penalty(self):
        cand, ref = ("boil", "the", "noodles", "now"), ("boil", "the", "noodles")
        # candidate longer than reference: brevity penalty is exactly 1
        expected = bleu4_oracle(cand, ref)
        assert bleu4(cand, ref) == pytest.approx(100.0 * expected, abs=1e-9)
        assert bleu4(cand, ref) < 100.0

    def test_empty_candidate_scores_zero(self):
        assert bleu4((), ("pour",)) == 0.0

    def test_order_sensitivity(self):
        tokens = ("pour", "the", "water", "now")
        assert bleu4(tuple(reversed(tokens)), tokens) < 100.0

    def test_order_sensitivity_property(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            tokens = random_tokens(rng, VOCAB, 2, 8)
            reverse = tuple(reversed(tokens))
            # palindromes are their own reversal; nothing to detect there
            if len(set(tokens)) < 2 or reverse == tokens:
                continue
            assert bleu4(reverse, tokens) < 100.0


class TestRougeL:
    def test_identity(self):
        assert rouge_l(("wash", "dog"), ("wash", "dog")) == pytest.approx(100.0)

    def test_disjoint(self):
        assert rouge_l(("cut", "mango"), ("pour", "water")) == 0.0

    def test_hand_case_against_oracle(self):
        cand, ref = ("a", "b", "c", "d"), ("a", "c", "d")
        # LCS = 3, P = 0.75, R = 1.0
        expected = rouge_l_oracle(cand, ref)
        beta_sq = 1.2**2
        by_hand = (1 + beta_sq) * 0.75 * 1.0 / (1.0 + beta_sq * 0.75)
        assert expected == pytest.approx(by_hand)
        assert rouge_l(cand, ref) == pytest.approx(100.0 * expected, abs=1e-9)


class TestMeteorLite:
    def test_identity_analytic(self):
        for m in (1, 2, 3, 5, 8):
            sent = tuple(VOCAB[:m])
            expected = 100.0 * (1.0 - 0.5 * (1.0 / m) ** 3)
            assert meteor_lite(sent, sent) == pytest.approx(expected)

    def test_disjoint(self):
        assert meteor_lite(("cut", "mango"), ("pour", "water")) == 0.0

    def test_swapped_pair_two_chunks(self):
        cand, ref = ("b", "a"), ("a", "b")
        # matches=2, chunks=2: F_mean = 1, penalty = 0.5
        assert meteor_lite(cand, ref) == pytest.approx(100.0 * meteor_oracle(cand, ref), abs=1e-9)
        assert meteor_lite(cand, ref) == pytest.approx(50.0)

    def test_duplicate_words_against_exhaustive_oracle(self):
        cases = [
            (("a", "a", "b"), ("a", "b", "a")),
            (("a", "b", "a", "b"), ("b", "a", "b", "a")),
            (("x", "a", "a", "y"), ("a", "x", "y", "a")),
        ]
        for cand, ref in cases:
            assert meteor_lite(cand, ref) == pytest.approx(
                100.0 * meteor_oracle(cand, ref), abs=1e-9
            )


class TestCider:
    def test_identity_distinct_references(self):
        pairs = [
            EvalPair("a", 0, ("pour", "the", "water", "now"), ("pour", "the", "water", "now")),
            EvalPair("b", 0, ("boil", "the", "noodles", "hard"), ("boil", "the", "noodles", "hard")),
            EvalPair("c", 0, ("wash", "a", "dog", "gently"), ("wash", "a", "dog", "gently")),
        ]
        corpus, per_pair = cider(pairs)
        assert corpus == pytest.approx(1000.0)
        assert all(s == pytest.approx(1000.0) for s in per_pair)

    def test_single_disjoint_pair_zero(self):
        corpus, _ = cider([EvalPair("a", 0, ("cut", "mango"), ("pour", "water"))])
        assert corpus == 0.0

    def test_three_pair_toy_corpus_matches_oracle(self):
        pairs = [
            EvalPair("a", 0, ("pour", "the", "water"), ("pour", "the", "water")),
            EvalPair("b", 0, ("pour", "the", "milk"), ("pour", "the", "water")),
            EvalPair("c", 0, ("cut", "mango", "now"), ("cut", "the", "mango")),
        ]
        corpus, per_pair = cider(pairs)
        exp_corpus, exp_pairs = cider_oracle([(p.candidate, p.reference) for p in pairs])
        assert corpus / 100.0 == pytest.approx(exp_corpus, abs=1e-6)
        for got, exp in zip(per_pair, exp_pairs):
            assert got / 100.0 == pytest.approx(exp, abs=1e-6)


class TestRandomizedOracleSuite:
    def test_pair_metrics_match_oracles(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(220):
            cand = random_tokens(rng, VOCAB, 1, 7)
            ref = random_tokens(rng, VOCAB, 1, 7)
            assert bleu4(cand, ref) / 100.0 == pytest.approx(
                bleu4_oracle(cand, ref), abs=1e-6
            ), (cand, ref)
            assert rouge_l(cand, ref) / 100.0 == pytest.approx(
                rouge_l_oracle(cand, ref), abs=1e-6
            ), (cand, ref)
            assert meteor_lite(cand, ref) / 100.0 == pytest.approx(
                meteor_oracle(cand, ref), abs=1e-6
            ), (cand, ref)
            checked += 1
        assert checked >= 200

    def test_cider_matches_oracle_on_random_corpora(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(1, 8))
            pairs = [
                EvalPair(f"s{i}", 0, random_tokens(rng, VOCAB, 1, 7), random_tokens(rng, VOCAB, 1, 7))
                for i in range(n)
            ]
            corpus, per_pair = cider(pairs)
            exp_corpus, exp_pairs = cider_oracle([(p.candidate, p.reference) for p in pairs])
            assert corpus / 100.0 == pytest.approx(exp_corpus, abs=1e-6)
            for got, exp in zip(per_pair, exp_pairs):
                assert got / 100.0 == pytest.approx(exp, abs=1e-6)

    def test_all_scores_in_range(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            cand = random_tokens(rng, VOCAB, 1, 7)
            ref = random_tokens(rng, VOCAB, 1, 7)
            assert 0.0 <= bleu4(cand, ref) <= 100.0
            assert 0.0 <= rouge_l(cand, ref) <= 100.0
            assert 0.0 <= meteor_lite(cand, ref) <= 100.0


class TestEvaluateCorpus:
    def _manifest(self):
        return DatasetManifest(
            [
                make_sample("a", 2, split="test", descriptions=["pour the water now", "boil the noodles"]),
                make_sample("b", 1, split="test", descriptions=["wash the dog gently"]),
            ]
        )

    def test_identity_corpus(self):
        manifest = self._manifest()
        preds = {s.sample_id: list(s.transformations) for s in manifest.samples}
        report = evaluate_corpus(preds, manifest, "test")
        assert report.corpus["bleu4"] == pytest.approx(100.0)
        assert report.corpus["rougeL"] == pytest.approx(100.0)
        assert report.n_pairs == 3

    def test_shuffled_predictions_score_lower(self):
        manifest = self._manifest()
        preds = {
            "a": ["wash the dog gently", "pour the water now"],
            "b": ["boil the noodles"],
        }
        shuffled = evaluate_corpus(preds, manifest, "test")
        assert shuffled.corpus["bleu4"] < 100.0
        assert shuffled.corpus["cider"] < evaluate_corpus(
            {s.sample_id: list(s.transformations) for s in manifest.samples}, manifest, "test"
        ).corpus["cider"]

    def test_missing_sample_is_coverage_error(self):
        with pytest.raises(CoverageError, match="b"):
            evaluate_corpus({"a": ["x", "y"]}, self._manifest(), "test")

    def test_wrong_count_is_coverage_error(self):
        preds = {"a": ["only one"], "b": ["wash the dog gently"]}
        with pytest.raises(CoverageError, match="a"):
            evaluate_corpus(preds, self._manifest(), "test")

    def test_corpus_mean_equals_pair_mean(self):
        manifest = self._manifest()
        preds = {
            "a": ["pour the milk", "boil rice"],
            "b": ["wash the dog gently"],
        }
        report = evaluate_corpus(preds, manifest, "test")
        for name in ("bleu4", "rougeL", "meteor"):
            mean = sum(p["scores"][name] for p in report.per_pair) / report.n_pairs
            assert report.corpus[name] == pytest.approx(mean, abs=1e-9)

    def test_predictions_round_trip(self, tmp_path):
        preds = {"a": ["pour water", "boil noodles"], "b": ["wash dog"]}
        path = tmp_path / "preds.jsonl"
        write_predictions(preds, path)
        assert read_predictions(path) == preds
