"""Corpus-level BLEU and consensus-based CIDEr over tokenized captions.

Inputs are token lists: `candidates[i]` is one tokenized sentence and
`references[i]` the list of tokenized references for the same video/segment.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter, defaultdict
from typing import Sequence

from .errors import ConfigError

Tokens = Sequence[str]


def _ngram_counts(tokens: Tokens, max_n: int) -> Counter:
    counts: Counter = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i: i + n])] += 1
    return counts


def _closest_ref_len(ref_lens: Sequence[int], cand_len: int) -> int:
    # ties resolve to the shorter reference
    return min((abs(l - cand_len), l) for l in ref_lens)[1]


def bleu_all(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    max_n: int = 4,
) -> list[float]:
    """Corpus Bleu@1..max_n: clipped n-gram precision with brevity penalty.

    Reference length per sentence is the closest one to the candidate length;
    the brevity penalty applies at corpus level.
    """
    if len(candidates) != len(references):
        raise ConfigError("candidates and references disagree on corpus size")
    correct = [0] * max_n
    guess = [0] * max_n
    cand_total = 0
    ref_total = 0
    for cand, refs in zip(candidates, references):
        cand_counts = _ngram_counts(cand, max_n)
        max_ref: dict = {}
        for ref in refs:
            for ngram, count in _ngram_counts(ref, max_n).items():
                max_ref[ngram] = max(max_ref.get(ngram, 0), count)
        for ngram, count in cand_counts.items():
            correct[len(ngram) - 1] += min(count, max_ref.get(ngram, 0))
        for k in range(max_n):
            guess[k] += max(0, len(cand) - k)
        cand_total += len(cand)
        ref_total += _closest_ref_len([len(r) for r in refs], len(cand))

    bp = 1.0
    if cand_total < ref_total:
        bp = math.exp(1.0 - ref_total / cand_total) if cand_total > 0 else 0.0
    scores = []
    log_sum = 0.0
    for k in range(max_n):
        if correct[k] == 0 or guess[k] == 0:
            scores.append(0.0)
            log_sum = -math.inf
            continue
        log_sum += math.log(correct[k] / guess[k])
        scores.append(bp * math.exp(log_sum / (k + 1)))
    return scores


def bleu(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    n: int = 4,
) -> float:
    """Bleu@n in [0, 1] for n in {1, 2, 3, 4}."""
    if n not in (1, 2, 3, 4):
        raise ConfigError("bleu order must be in {1, 2, 3, 4}")
    return bleu_all(candidates, references, max_n=n)[n - 1]


def cider(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    max_n: int = 4,
    sigma: float = 6.0,
) -> float:
    """Consensus tf-idf cosine over 1..4-grams, averaged over n, x10, corpus
    mean. Includes the reference scorer's count clipping and length-based
    gaussian penalty; idf counts documents (videos) whose references contain
    the n-gram.
    """
    if len(candidates) != len(references):
        raise ConfigError("candidates and references disagree on corpus size")
    num_docs = len(references)
    if num_docs < 2:
        warnings.warn("cider: fewer than 2 videos, idf is degenerate")
    if num_docs == 0:
        return 0.0

    doc_freq: Counter = Counter()
    ref_counts = [[_ngram_counts(r, max_n) for r in refs] for refs in references]
    for refs in ref_counts:
        seen = set()
        for counts in refs:
            seen.update(counts)
        doc_freq.update(seen)
    log_docs = math.log(float(num_docs))

    def tfidf(counts: Counter):
        vec = [defaultdict(float) for _ in range(max_n)]
        norm = [0.0] * max_n
        length = 0
        for ngram, tf in counts.items():
            idf = log_docs - math.log(max(1.0, doc_freq[ngram]))
            k = len(ngram) - 1
            vec[k][ngram] = tf * idf
            norm[k] += vec[k][ngram] ** 2
            if k == 1:
                length += tf   # reference scorer measures length in bigrams
        return vec, [math.sqrt(x) for x in norm], length

    scores = []
    for cand, refs in zip(candidates, ref_counts):
        vec_c, norm_c, len_c = tfidf(_ngram_counts(cand, max_n))
        total = [0.0] * max_n
        for counts in refs:
            vec_r, norm_r, len_r = tfidf(counts)
            delta = float(len_c - len_r)
            penalty = math.exp(-(delta ** 2) / (2.0 * sigma ** 2))
            for k in range(max_n):
                val = 0.0
                for ngram, w in vec_c[k].items():
                    val += min(w, vec_r[k][ngram]) * vec_r[k][ngram]
                if norm_c[k] != 0 and norm_r[k] != 0:
                    val /= norm_c[k] * norm_r[k]
                total[k] += val * penalty
        scores.append(10.0 * sum(total) / max_n / len(refs))
    return sum(scores) / len(scores)
