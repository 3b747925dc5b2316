"""Rates and text-similarity metrics (BLEU with add-ε smoothing, ROUGE-L F1)."""
from __future__ import annotations

import math
import string
from collections import Counter

from .. import kernels

BLEU_EPS = 1e-9
_STRIP = str.maketrans("", "", string.punctuation)


def metric_tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation, drop empty tokens."""
    return [t for t in (w.translate(_STRIP) for w in text.lower().split()) if t]


def _tokens(x) -> list[str]:
    return metric_tokenize(x) if isinstance(x, str) else list(x)


def success_rate(flags) -> float:
    flags = [bool(f) for f in flags]
    if not flags:
        raise ValueError("no results")
    return sum(flags) / len(flags)


def _ngrams(toks: list[str], n: int) -> Counter:
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def bleu_score(candidate, reference, max_n: int = 4) -> float:
    """Sentence BLEU in [0, 100].

    Clipped n-gram precisions for n = 1..max_n (orders longer than the candidate
    are left out), zero match counts replaced by ε, geometric mean, times the
    brevity penalty exp(1 − r/c) when c ≤ r.
    """
    cand, ref = _tokens(candidate), _tokens(reference)
    if not ref:
        raise ValueError("reference must be nonempty")
    c, r = len(cand), len(ref)
    if c == 0:
        return 0.0
    logs = []
    for n in range(1, min(max_n, c) + 1):
        cn, rn = _ngrams(cand, n), _ngrams(ref, n)
        match = sum(min(k, rn[g]) for g, k in cn.items())
        logs.append(math.log((match if match > 0 else BLEU_EPS) / (c - n + 1)))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(sum(logs) / len(logs))


def rouge_l_score(candidate, reference) -> float:
    """ROUGE-L F1 in [0, 100] from the longest common subsequence."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not ref:
        raise ValueError("reference must be nonempty")
    if not cand:
        return 0.0
    ids: dict[str, int] = {}
    a = [ids.setdefault(t, len(ids)) for t in cand]
    b = [ids.setdefault(t, len(ids)) for t in ref]
    lcs = kernels.lcs_length(a, b)
    if lcs == 0:
        return 0.0
    p, rc = lcs / len(cand), lcs / len(ref)
    return 100.0 * 2 * p * rc / (p + rc)


def corpus_text_metrics(candidates: list[str], references: list[str]) -> dict:
    """Mean sentence BLEU and ROUGE-L over aligned candidate/reference lines."""
    if len(candidates) != len(references):
        raise ValueError("candidate and reference counts differ")
    if not candidates:
        raise ValueError("no sentences")
    bleu = [bleu_score(c, r) for c, r in zip(candidates, references)]
    rouge = [rouge_l_score(c, r) for c, r in zip(candidates, references)]
    return {
        "n": len(candidates),
        "bleu": sum(bleu) / len(bleu),
        "rouge_l": sum(rouge) / len(rouge),
        "rouge_variant": "ROUGE-L F1",
        "bleu_smoothing": f"add-epsilon {BLEU_EPS:g}",
    }
