"""Trustworthiness and alignment metrics.

Credibility, dependability and transferability score a generated theme set
on its own terms; cosine, Levenshtein and BLEU alignment compare it to a
human-coded reference list.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .corpus import DEFAULT_CHUNK_LIMIT, QuoteId, Transcript, chunk_transcript
from .errors import (
    EmptyCorpus,
    EmptyThemeList,
    InsufficientRuns,
    InsufficientTranscripts,
    PipelineFailure,
    ZeroVector,
)
from .model import ThemeSet
from .text import normalize_tokens

logger = logging.getLogger(__name__)


# -- credibility ------------------------------------------------------------


def credibility(ts: ThemeSet | frozenset[QuoteId], corpus_quote_ids) -> float:
    """Percentage of corpus quotes cited by at least one theme."""
    corpus = frozenset(corpus_quote_ids)
    if not corpus:
        raise EmptyCorpus("credibility needs at least one corpus quote")
    cited = ts.quote_ids if isinstance(ts, ThemeSet) else frozenset(ts)
    return len(cited & corpus) / len(corpus) * 100.0


# -- ROUGE, dependability, transferability ----------------------------------


def _as_text(x: ThemeSet | str) -> str:
    return x.text() if isinstance(x, ThemeSet) else x


def ngram_set(text: str, n: int) -> frozenset[tuple[str, ...]]:
    """Distinct lowercase n-grams of ``text`` (punctuation stripped)."""
    tokens = normalize_tokens(text)
    return frozenset(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_directional(a: ThemeSet | str, b: ThemeSet | str, n: int) -> float:
    """|G(a) & G(b)| / |G(a)| over distinct n-grams; 0 when ``a`` has none."""
    ga, gb = ngram_set(_as_text(a), n), ngram_set(_as_text(b), n)
    return len(ga & gb) / len(ga) if ga else 0.0


def rouge_bidirectional(a: ThemeSet | str, b: ThemeSet | str, n: int) -> float:
    ga, gb = ngram_set(_as_text(a), n), ngram_set(_as_text(b), n)
    if not ga and not gb:
        return 1.0
    common = len(ga & gb)
    forward = common / len(ga) if ga else 0.0
    backward = common / len(gb) if gb else 0.0
    return 0.5 * (forward + backward)


def rouge_overlap(a: ThemeSet | str, b: ThemeSet | str) -> float:
    """Mean of bidirectional ROUGE-1 and ROUGE-2 between two theme sets."""
    return 0.5 * (rouge_bidirectional(a, b, 1) + rouge_bidirectional(a, b, 2))


def pairwise_dependability(runs: Sequence[ThemeSet | str]) -> list[float]:
    """Overlap for every unordered pair of runs, in combinations() order."""
    if len(runs) < 2:
        raise InsufficientRuns(f"dependability needs at least 2 runs, got {len(runs)}")
    texts = [_as_text(r) for r in runs]
    return [rouge_overlap(a, b) for a, b in itertools.combinations(texts, 2)]


def dependability(runs: Sequence[ThemeSet | str]) -> float:
    scores = pairwise_dependability(runs)
    return sum(scores) / len(scores)


def default_holdout(n_transcripts: int) -> int:
    # 7/2 for the nine-transcript design; single hold-out for tiny corpora
    return 2 if n_transcripts >= 4 else 1


def holdout_splits(ids: Sequence[str], holdout: int) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """All (train, validation) partitions with a validation set of size ``holdout``."""
    splits = []
    for val in itertools.combinations(ids, holdout):
        train = tuple(i for i in ids if i not in val)
        splits.append((train, val))
    return splits


def transfer_units(corpus: Sequence[Transcript], chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> list[Transcript]:
    """Units to split for transferability.

    Whole transcripts when there are at least three; otherwise each chunk
    becomes a pseudo-transcript so a single long interview can still be
    split.
    """
    if len(corpus) >= 3:
        return list(corpus)
    return [
        Transcript(chunk.ref, chunk.utterances)
        for t in corpus
        for chunk in chunk_transcript(t, chunk_limit)
    ]


@dataclass
class TransferabilityResult:
    mean: float
    std: float
    scores: list[float]
    splits: list[tuple[tuple[str, ...], tuple[str, ...]]] = field(default_factory=list)

    @property
    def n_splits(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_splits": self.n_splits,
            "scores": self.scores,
            "splits": [{"train": list(t), "validation": list(v)} for t, v in self.splits],
        }


def transferability(
    corpus: Sequence[Transcript],
    generate: Callable[[list[Transcript]], ThemeSet],
    holdout: int | None = None,
    workers: int = 1,
) -> TransferabilityResult:
    """Overlap between themes generated on train and validation subsets.

    Every size-``holdout`` validation subset is evaluated (36 splits for nine
    transcripts with the default hold-out of two).  ``generate`` is called
    independently on both sides of each split.
    """
    if len(corpus) < 2:
        raise InsufficientTranscripts(f"transferability needs at least 2 transcripts, got {len(corpus)}")
    holdout = default_holdout(len(corpus)) if holdout is None else holdout
    if not 1 <= holdout < len(corpus):
        raise ValueError(f"hold-out size {holdout} invalid for {len(corpus)} transcripts")
    by_id = {t.id: t for t in corpus}
    if len(by_id) != len(corpus):
        raise ValueError("transcript ids must be unique")
    splits = holdout_splits([t.id for t in corpus], holdout)

    def evaluate(indexed):
        i, (train, val) = indexed
        try:
            theta_train = generate([by_id[t] for t in train])
            theta_val = generate([by_id[t] for t in val])
        except Exception as exc:
            raise PipelineFailure(i, val, exc) from exc
        return rouge_overlap(theta_train, theta_val)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(evaluate, enumerate(splits)))
    else:
        scores = [evaluate(s) for s in enumerate(splits)]
    for i, ((_, val), score) in enumerate(zip(splits, scores)):
        logger.debug("split %d validation=%s T=%.4f", i, ",".join(val), score)
    arr = np.asarray(scores)
    return TransferabilityResult(float(arr.mean()), float(arr.std()), scores, splits)


# -- embeddings and cosine alignment ----------------------------------------


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedEmbedding:
    """Bag-of-words counts hashed into a fixed number of buckets, L2-normalized.

    Deterministic across platforms and processes (blake2b, not ``hash()``).
    """

    def __init__(self, dim: int = 512):
        self.dim = dim
        self.provider_id = f"hashed-bow-{dim}"

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for tok in normalize_tokens(text):
                out[row, self.bucket(tok)] += 1.0
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class SentenceTransformerEmbedding:
    """Sentence-transformer embeddings (needs the ``embeddings`` extra and model weights)."""

    def __init__(self, model_name: str = "all-mpnet-base-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.provider_id = f"sentence-transformers/{model_name}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(self._model.encode(list(texts)), dtype=float)


def _embed_checked(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    vectors = np.asarray(provider.embed(texts), dtype=float)
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVector(f"{provider.provider_id} returned an all-zero vector for {texts[zero[0]]!r}")
    return vectors / norms[:, None]


def cosine_matrix(human: Sequence[str], llm: Sequence[str], provider: EmbeddingProvider) -> np.ndarray:
    """Cosine similarity, rows = human themes, columns = LLM themes."""
    if not human or not llm:
        raise EmptyThemeList("both theme lists must be non-empty")
    h = _embed_checked(provider, human)
    g = _embed_checked(provider, llm)
    return h @ g.T


def cosine_alignment(human: Sequence[str], llm: Sequence[str], provider: EmbeddingProvider | None = None) -> float:
    """Mean of the human->LLM and LLM->human best-match cosine averages."""
    sims = cosine_matrix(human, llm, provider or HashedEmbedding())
    return float(0.5 * (sims.max(axis=1).mean() + sims.max(axis=0).mean()))


# -- Levenshtein ------------------------------------------------------------


def levenshtein_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions, substitutions."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    """1 - distance / longer length, on case-folded strings."""
    a, b = a.casefold(), b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / longest


def levenshtein_alignment(human: Sequence[str], llm: Sequence[str]) -> float:
    if not human or not llm:
        raise EmptyThemeList("both theme lists must be non-empty")
    return sum(max(levenshtein_similarity(h, l) for l in llm) for h in human) / len(human)


# -- BLEU -------------------------------------------------------------------


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """Single-reference sentence BLEU without smoothing.

    Orders run from 1 to min(max_order, candidate length) so short themes can
    still score; any evaluated order with zero clipped matches gives 0.
    """
    cand, ref = normalize_tokens(candidate), normalize_tokens(reference)
    c, r = len(cand), len(ref)
    if c == 0 or r == 0:
        return 1.0 if c == r else 0.0
    orders = min(max_order, c)
    log_precision = 0.0
    for n in range(1, orders + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        clipped = sum(min(k, ref_counts[g]) for g, k in cand_counts.items())
        if clipped == 0:
            return 0.0
        log_precision += math.log(clipped / sum(cand_counts.values()))
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_precision / orders)


def bleu_alignment(human: Sequence[str], llm: Sequence[str]) -> float:
    """Best BLEU per human theme (LLM themes as candidates), averaged."""
    if not human or not llm:
        raise EmptyThemeList("both theme lists must be non-empty")
    return sum(max(bleu(l, h) for l in llm) for h in human) / len(human)


# -- combined report ---------------------------------------------------------


@dataclass
class BestMatch:
    human_index: int
    human: str
    matches: list[tuple[int, str, float]]  # (llm index, llm text, cosine)

    def to_dict(self) -> dict:
        return {
            "human_index": self.human_index,
            "human": self.human,
            "matches": [{"llm_index": j, "llm": text, "cosine": s} for j, text, s in self.matches],
        }


@dataclass
class AlignmentReport:
    cosine_bi: float
    levenshtein_DL: float
    bleu_B: float
    best_matches: list[BestMatch] = field(default_factory=list)
    provider: str = ""

    def to_dict(self) -> dict:
        return {
            "cosine_bi": self.cosine_bi,
            "levenshtein_DL": self.levenshtein_DL,
            "bleu_B": self.bleu_B,
            "provider": self.provider,
            "best_matches": [m.to_dict() for m in self.best_matches],
        }


def compare_themes(
    human: Sequence[str],
    llm: Sequence[str],
    provider: EmbeddingProvider | None = None,
    top_k: int = 2,
) -> AlignmentReport:
    """All three alignment scores plus each human theme's top-k cosine matches."""
    provider = provider or HashedEmbedding()
    sims = cosine_matrix(human, llm, provider)
    best = []
    for i, h in enumerate(human):
        # stable sort: ties keep LLM order
        order = sorted(range(len(llm)), key=lambda j: -sims[i, j])[:top_k]
        best.append(BestMatch(i, h, [(j, llm[j], float(sims[i, j])) for j in order]))
    return AlignmentReport(
        cosine_bi=float(0.5 * (sims.max(axis=1).mean() + sims.max(axis=0).mean())),
        levenshtein_DL=levenshtein_alignment(human, llm),
        bleu_B=bleu_alignment(human, llm),
        best_matches=best,
        provider=provider.provider_id,
    )
