"""Deliberately naive reference implementations used as test oracles.

Nothing here imports the package's metric code; tokenization and hashing are
rewritten from their definitions so the two routes can disagree.
"""

from __future__ import annotations

import hashlib
import math
import sys
import unicodedata
from functools import lru_cache
from itertools import combinations


def tokens(text: str) -> list[str]:
    kept = []
    for ch in text.lower():
        if unicodedata.category(ch)[0] != "P":
            kept.append(ch)
    return "".join(kept).split()


def distinct_ngrams(text: str, n: int) -> set:
    toks = tokens(text)
    out = set()
    i = 0
    while i + n <= len(toks):
        out.add(" ".join(toks[i : i + n]))
        i += 1
    return out


def rouge_n(a: str, b: str, n: int) -> float:
    """Mean of |A & B| / |A| and |A & B| / |B| over distinct n-grams."""
    ga, gb = distinct_ngrams(a, n), distinct_ngrams(b, n)
    if not ga and not gb:
        return 1.0
    shared = len([g for g in ga if g in gb])
    left = shared / len(ga) if ga else 0.0
    right = shared / len(gb) if gb else 0.0
    return (left + right) / 2


def rouge_overlap(a: str, b: str) -> float:
    return (rouge_n(a, b, 1) + rouge_n(a, b, 2)) / 2


def edit_distance(a: str, b: str) -> int:
    """Plain memoized recursion over suffixes."""
    sys.setrecursionlimit(max(10_000, sys.getrecursionlimit()))

    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return d(i + 1, j + 1)
        return 1 + min(d(i + 1, j), d(i, j + 1), d(i + 1, j + 1))

    return d(0, 0)


def edit_similarity(a: str, b: str) -> float:
    a, b = a.casefold(), b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1 - edit_distance(a, b) / longest


def levenshtein_alignment(human: list[str], llm: list[str]) -> float:
    total = 0.0
    for h in human:
        total += max(edit_similarity(h, g) for g in llm)
    return total / len(human)


def bleu(candidate: str, reference: str) -> float:
    c, r = tokens(candidate), tokens(reference)
    if not c or not r:
        return 1.0 if c == r else 0.0
    orders = min(4, len(c))
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand = [tuple(c[i : i + n]) for i in range(len(c) - n + 1)]
        ref = [tuple(r[i : i + n]) for i in range(len(r) - n + 1)]
        clipped = 0
        for g in set(cand):
            clipped += min(cand.count(g), ref.count(g))
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / len(cand))
    bp = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    return bp * math.exp(log_sum / orders)


def bleu_alignment(human: list[str], llm: list[str]) -> float:
    return sum(max(bleu(g, h) for g in llm) for h in human) / len(human)


def hashed_vector(text: str, dim: int = 512) -> list[float]:
    vec = [0.0] * dim
    for tok in tokens(text):
        h = hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(h, "big") % dim] += 1
    return vec


def cosine(u: list[float], v: list[float]) -> float:
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(y * y for y in v))
    return dot / (nu * nv)


def cosine_alignment(human: list[str], llm: list[str]) -> float:
    hv = [hashed_vector(t) for t in human]
    gv = [hashed_vector(t) for t in llm]
    forward = sum(max(cosine(h, g) for g in gv) for h in hv) / len(hv)
    backward = sum(max(cosine(h, g) for h in hv) for g in gv) / len(gv)
    return (forward + backward) / 2


def credibility(cited, corpus) -> float:
    corpus = list(set(corpus))
    hits = 0
    for q in corpus:
        if q in cited:
            hits += 1
    return 100.0 * hits / len(corpus)


def pair_count(n: int) -> int:
    return len(list(combinations(range(n), 2)))


def split_count(n: int, holdout: int) -> int:
    return len(list(combinations(range(n), holdout)))


def mse(w, b, X, r) -> float:
    total = 0.0
    for xi, ri in zip(X, r):
        pred = sum(wj * xj for wj, xj in zip(w, xi)) + b
        total += (pred - ri) ** 2
    return total / len(r)


def numeric_gradients(w, b, X, r, h: float = 1e-5):
    """Central finite differences of ``mse``."""
    gw = []
    for j in range(len(w)):
        up = list(w)
        down = list(w)
        up[j] += h
        down[j] -= h
        gw.append((mse(up, b, X, r) - mse(down, b, X, r)) / (2 * h))
    gb = (mse(w, b + h, X, r) - mse(w, b - h, X, r)) / (2 * h)
    return gw, gb
