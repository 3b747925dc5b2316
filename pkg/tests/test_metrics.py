import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finemanip.evaluation import bleu_score, corpus_text_metrics, metric_tokenize, rouge_l_score, success_rate


def bleu_oracle(cand, ref, max_n=4, eps=1e-9):
    """Counts every n-gram by scanning all positions, no Counter."""
    c, r = len(cand), len(ref)
    if c == 0:
        return 0.0
    orders = range(1, min(max_n, c) + 1)
    total_log = 0.0
    for n in orders:
        grams = [tuple(cand[i : i + n]) for i in range(c - n + 1)]
        ref_grams = [tuple(ref[i : i + n]) for i in range(r - n + 1)]
        matched = 0
        for g in set(grams):
            matched += min(grams.count(g), ref_grams.count(g))
        total_log += math.log((matched or eps) / len(grams))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100 * bp * math.exp(total_log / len(orders))


def rouge_oracle(cand, ref):
    @lru_cache(maxsize=None)
    def lcs(i, j):
        if i == len(cand) or j == len(ref):
            return 0
        if cand[i] == ref[j]:
            return 1 + lcs(i + 1, j + 1)
        return max(lcs(i + 1, j), lcs(i, j + 1))

    if not cand:
        return 0.0
    ell = lcs(0, 0)
    if ell == 0:
        return 0.0
    p, r = ell / len(cand), ell / len(ref)
    return 100 * 2 * p * r / (p + r)


def random_pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    vocab = list("abcdef")
    out = []
    for _ in range(n):
        a = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(0, 13))]
        b = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 13))]
        out.append((a, b))
    return out


def test_oracles_200_pairs():
    for cand, ref in random_pairs(200):
        assert abs(bleu_score(cand, ref) - bleu_oracle(cand, ref)) <= 1e-9
        assert abs(rouge_l_score(cand, ref) - rouge_oracle(cand, ref)) <= 1e-9


def test_anchors():
    assert bleu_score("a b c d", "a b c d f") == pytest.approx(77.88, abs=0.01)
    assert bleu_score("a b c d", "a b c d f") == pytest.approx(100 * math.exp(1 - 5 / 4), abs=1e-9)
    assert rouge_l_score("a b c", "a c d") == pytest.approx(66.67, abs=0.01)
    assert bleu_score("open the drawer", "open the drawer") == pytest.approx(100.0)
    assert rouge_l_score("x y", "x y") == pytest.approx(100.0)
    assert rouge_l_score("x y", "p q") == 0.0
    assert bleu_score("x y", "p q") < 1e-6


def test_empty_and_bad_inputs():
    assert bleu_score("", "a b") == 0.0 and rouge_l_score("", "a b") == 0.0
    with pytest.raises(ValueError):
        bleu_score("a", "")
    with pytest.raises(ValueError):
        rouge_l_score("a", "...")


def test_tokenize():
    assert metric_tokenize("Grasp the Handle, then PULL!") == ["grasp", "the", "handle", "then", "pull"]
    assert metric_tokenize(" -- ") == []


words = st.lists(st.sampled_from("abcde"), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_bleu_rouge_properties(cand, ref):
    b, r = bleu_score(cand, ref), rouge_l_score(cand, ref)
    assert 0.0 <= b <= 100.0 + 1e-9 and 0.0 <= r <= 100.0 + 1e-9
    assert abs(b - bleu_oracle(cand, ref)) <= 1e-9
    assert abs(r - rouge_oracle(cand, ref)) <= 1e-9
    if b == pytest.approx(100.0) and len(cand) >= 4:
        assert cand == ref


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abcdefgh"), min_size=5, max_size=12, unique=True), st.data())
def test_bleu_truncation_monotone(ref, data):
    # prefixes keep all precisions at 1, so only the brevity penalty moves
    k = data.draw(st.integers(2, len(ref)))
    assert bleu_score(ref[: k - 1], ref) <= bleu_score(ref[:k], ref) + 1e-12


def test_corpus_metrics():
    out = corpus_text_metrics(["a b c d", "a b c"], ["a b c d f", "a c d"])
    assert out["n"] == 2 and out["rouge_variant"] == "ROUGE-L F1"
    assert out["bleu"] == pytest.approx((bleu_score("a b c d", "a b c d f") + bleu_score("a b c", "a c d")) / 2)
    with pytest.raises(ValueError):
        corpus_text_metrics(["a"], [])


def test_success_rate():
    assert success_rate([True] * 25) == 1.0
    assert success_rate([False] * 25) == 0.0
    assert success_rate([True] * 13 + [False] * 12) == pytest.approx(0.52)
    with pytest.raises(ValueError):
        success_rate([])
