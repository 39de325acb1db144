"""Iterative refinement: critique, edit, re-score until the scores settle."""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Sequence

from .agents.core import ExchangeRecorder, Identity, critique, derive_seed, polish_themes
from .corpus import DEFAULT_CHUNK_LIMIT, Transcript, corpus_quote_ids, utterance_index
from .metrics import default_holdout, holdout_splits, levenshtein_similarity, rouge_overlap, transfer_units
from .metrics import credibility as credibility_score
from .model import (
    THEME_WORD_LIMIT,
    AppliedEdit,
    AuditTrail,
    EditKind,
    EditProposal,
    IterationRecord,
    ScoreVector,
    ThemeDraft,
    ThemeSet,
    apply_edit,
)
from .text import content_tokens

logger = logging.getLogger(__name__)

MODES = ("heuristic", "reward_guided")

# Edits are applied in this order regardless of proposal order.
APPLY_ORDER = (EditKind.DELETE, EditKind.COMBINE, EditKind.SPLIT, EditKind.ADD)


@dataclass(frozen=True)
class RefineConfig:
    credibility_add_threshold: float = 0.7  # on C / 100
    levenshtein_combine_threshold: float = 0.20  # combine when title similarity > 1 - this
    convergence_epsilon: float = 0.05  # L1 on (C / 100, D, T)
    max_iterations: int = 5
    mode: str = "heuristic"
    # scoring inside the loop
    dependability_runs: int = 3
    transfer_splits: int = 6
    chunk_limit: int = DEFAULT_CHUNK_LIMIT
    # reward-guided mode
    candidates: int = 4

    def __post_init__(self):
        for name in ("credibility_add_threshold", "levenshtein_combine_threshold", "convergence_epsilon"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dependability_runs < 0 or self.transfer_splits < 0 or self.candidates < 1:
            raise ValueError("dependability_runs/transfer_splits must be >= 0 and candidates >= 1")

    @property
    def combine_similarity(self) -> float:
        return 1.0 - self.levenshtein_combine_threshold

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RefineConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown refine settings: {sorted(unknown)}")
        return cls(**d)


# -- heuristic feedback rules --------------------------------------------------------


def _add_proposal(ts: ThemeSet, corpus: Sequence[Transcript]) -> EditProposal | None:
    """Draft a theme from the most frequent content word among uncited quotes.

    A score inconsistent with the set (nothing left uncited) still gets an
    Add, drafted from the whole corpus.
    """
    everything = corpus_quote_ids(corpus)
    uncited = sorted(everything - ts.quote_ids) or sorted(everything)
    if not uncited:
        return None
    utterances = utterance_index(corpus)
    freq: Counter = Counter()
    for q in uncited:
        freq.update(content_tokens(utterances[q].text))
    if freq:
        word = min(freq, key=lambda tok: (-freq[tok], tok))
        cited = [q for q in uncited if word in content_tokens(utterances[q].text)]
        title = word
    else:
        cited, title = uncited, "uncited material"
    excerpt = " ".join(utterances[cited[0]].text.split()[:30])
    draft = ThemeDraft(
        title=title,
        description=f'Drafted from uncited quotes, e.g. "{excerpt}"',
        quote_ids=frozenset(cited),
    )
    return EditProposal(
        EditKind.ADD,
        (),
        (draft,),
        f"credibility below threshold; {len(everything - ts.quote_ids)} corpus quotes uncited",
    )


def _combine_proposals(ts: ThemeSet, threshold: float) -> list[EditProposal]:
    """Greedy, highest similarity first; each theme joins at most one pair."""
    live = [t for t in ts if t.supporting_quote_ids]
    pairs = []
    for i, a in enumerate(live):
        for b in live[i + 1 :]:
            sim = levenshtein_similarity(a.title, b.title)
            if sim > threshold:
                pairs.append((-sim, ts.theme_ids.index(a.id), ts.theme_ids.index(b.id), a, b))
    pairs.sort(key=lambda p: p[:3])
    used: set[str] = set()
    out = []
    for neg_sim, _, _, a, b in pairs:
        if a.id in used or b.id in used:
            continue
        used.update((a.id, b.id))
        out.append(EditProposal(EditKind.COMBINE, (a.id, b.id), (), f"title similarity {-neg_sim:.3f}"))
    return out


def _split_proposal(theme, n_transcripts: int) -> EditProposal | None:
    quotes = sorted(theme.supporting_quote_ids)
    spanned = {q.transcript_id for q in quotes}
    if theme.word_count <= THEME_WORD_LIMIT or len(spanned) <= n_transcripts / 2 or len(quotes) < 2:
        return None
    half = len(quotes) // 2
    labels = sorted(theme.source_code_labels)
    if len(labels) >= 2:
        cut = len(labels) // 2
        label_halves = (labels[:cut], labels[cut:])
        drafts = [
            ThemeDraft(part[0], f"Grouped codes: {', '.join(part)}.", frozenset(qs), frozenset(part))
            for part, qs in zip(label_halves, (quotes[:half], quotes[half:]))
        ]
    else:
        words = theme.description.split()
        cut = len(words) // 2
        drafts = [
            ThemeDraft(f"{theme.title} ({n})", " ".join(ws), frozenset(qs))
            for n, ws, qs in ((1, words[:cut], quotes[:half]), (2, words[cut:], quotes[half:]))
        ]
    return EditProposal(
        EditKind.SPLIT,
        (theme.id,),
        tuple(drafts),
        f"{theme.word_count} words spanning {len(spanned)} of {n_transcripts} transcripts",
    )


def heuristic_proposals(
    ts: ThemeSet,
    s: ScoreVector,
    corpus: Sequence[Transcript],
    cfg: RefineConfig | None = None,
) -> list[EditProposal]:
    """Rule-based edits, listed in application order.

    Delete   a theme citing no quotes
    Combine  a pair of themes whose titles are near-identical
    Split    a long theme citing quotes from more than half the transcripts
    Add      credibility / 100 below the threshold, or an empty theme set
    """
    cfg = cfg or RefineConfig()
    proposals = [
        EditProposal(EditKind.DELETE, (t.id,), (), "theme cites no quotes")
        for t in ts
        if not t.supporting_quote_ids
    ]
    proposals += _combine_proposals(ts, cfg.combine_similarity)
    for t in ts:
        split = _split_proposal(t, len(corpus))
        if split is not None:
            proposals.append(split)
    if not len(ts) or s.credibility / 100.0 < cfg.credibility_add_threshold:
        add = _add_proposal(ts, corpus)
        if add is not None:
            proposals.append(add)
    return proposals


def apply_proposals(ts: ThemeSet, proposals: Sequence[EditProposal]) -> tuple[ThemeSet, list[AppliedEdit]]:
    """Apply Delete, Combine, Split, Add in that order; stale proposals are skipped."""
    applied = []
    for kind in APPLY_ORDER:
        for p in proposals:
            if p.kind is not kind:
                continue
            missing = [tid for tid in p.target_theme_ids if tid not in ts.theme_ids]
            if missing:
                applied.append(AppliedEdit(p, "skipped", note=f"targets no longer present: {missing}"))
                continue
            before = set(ts.theme_ids)
            ts = apply_edit(ts, p)
            created = tuple(tid for tid in ts.theme_ids if tid not in before)
            applied.append(AppliedEdit(p, "applied", created))
    return ts, applied


# -- scoring inside the loop ---------------------------------------------------------

Generator = Callable[[list[Transcript], int, str], ThemeSet]


class ReferenceScorer:
    """Scores a theme set against cached reference regenerations.

    credibility      share of corpus quotes cited
    dependability    mean overlap with ``dependability_runs`` seed-varied
                     regenerations of the whole corpus
    transferability  mean overlap with themes regenerated from the
                     validation side of ``transfer_splits`` sampled splits

    References are generated once, on first use, and reused every round.
    """

    def __init__(self, corpus: Sequence[Transcript], generate: Generator, cfg: RefineConfig, seed: int = 0):
        self.corpus = list(corpus)
        self.generate = generate
        self.cfg = cfg
        self.seed = seed
        self.quotes = corpus_quote_ids(corpus)
        self.dependability_refs: list[ThemeSet] | None = None
        self.transfer_refs: list[ThemeSet] = []
        self.sampled_splits: list[tuple[str, ...]] = []

    def prepare(self) -> None:
        if self.dependability_refs is not None:
            return
        self.dependability_refs = [
            self.generate(self.corpus, derive_seed(self.seed, "dependability", i), f"dep{i}/")
            for i in range(self.cfg.dependability_runs)
        ]
        units = transfer_units(self.corpus, self.cfg.chunk_limit)
        if len(units) < 3 or not self.cfg.transfer_splits:
            logger.warning("transferability needs 3+ transcripts or chunks; scoring it as 0")
            return
        splits = holdout_splits([u.id for u in units], default_holdout(len(units)))
        rng = random.Random(derive_seed(self.seed, "transfer-splits"))
        picked = sorted(rng.sample(range(len(splits)), min(self.cfg.transfer_splits, len(splits))))
        by_id = {u.id: u for u in units}
        for j in picked:
            _, val = splits[j]
            self.sampled_splits.append(val)
            self.transfer_refs.append(
                self.generate([by_id[v] for v in val], derive_seed(self.seed, "transfer", j), f"xfer{j}/")
            )

    def __call__(self, ts: ThemeSet) -> ScoreVector:
        self.prepare()
        c = credibility_score(ts, self.quotes)
        d = _mean([rouge_overlap(ts, r) for r in self.dependability_refs])
        t = _mean([rouge_overlap(ts, r) for r in self.transfer_refs])
        return ScoreVector(c, d, t)


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


# -- the loop -------------------------------------------------------------------------


def _with_iteration(ts: ThemeSet, t: int, run_id: str, suffix: str = "") -> ThemeSet:
    prefix = f"{run_id}:" if run_id else ""
    return replace(ts, iteration=t, id=f"{prefix}iter{t}{suffix}")


def _candidate_subsets(proposals, n: int, seed: int, t: int):
    """Candidate 0 applies every proposal; the others a seeded random subset."""
    yield list(proposals)
    for i in range(1, n):
        rng = random.Random(derive_seed(seed, "candidate", t, i))
        yield [p for p in proposals if rng.random() < 0.5]


def refine_loop(
    initial: ThemeSet,
    corpus: Sequence[Transcript],
    cfg: RefineConfig,
    backend,
    scorer: Callable[[ThemeSet], ScoreVector] | None = None,
    *,
    identity: Identity | None = None,
    recorder: ExchangeRecorder | None = None,
    reward_model=None,
    seed: int = 0,
    run_id: str = "",
    audit: AuditTrail | None = None,
    prompt_dir=None,
) -> tuple[ThemeSet, AuditTrail]:
    """Critique -> edit -> re-score until consecutive normalized scores differ
    by less than ``convergence_epsilon`` (L1) or ``max_iterations`` is reached.

    Exchanges already in ``recorder`` (coding and theme generation) are
    attributed to iteration 0.  On error the partial trail stays in
    ``audit`` with ``audit.error`` set, and the exception propagates.
    """
    if cfg.mode == "reward_guided" and reward_model is None:
        raise ValueError("reward_guided mode needs a trained reward model")
    from .agents.core import credibility_only_scorer

    scorer = scorer or credibility_only_scorer(corpus)
    recorder = recorder or ExchangeRecorder()
    audit = audit if audit is not None else AuditTrail(run_id=run_id, seed=seed)
    audit.config.setdefault("refine", cfg.to_dict())

    stage = "critique"
    t = 0
    try:
        ts = _with_iteration(initial, 0, run_id)
        score, proposals = critique(ts, corpus, backend, scorer, cfg, recorder, ref="iter0", prompt_dir=prompt_dir)
        audit.records.append(IterationRecord(0, ts, score, proposals, [], recorder.drain()))
        audit.final_theme_set_id = ts.id

        for t in range(1, cfg.max_iterations + 1):
            stage = "edit"
            candidates_info = []
            if cfg.mode == "heuristic":
                draft, applied = apply_proposals(ts, proposals)
                ts = polish_themes(
                    _with_iteration(draft, t, run_id), applied, backend, identity, seed, recorder,
                    ref=f"iter{t}", prompt_dir=prompt_dir,
                )
            else:
                ts, applied, candidates_info = _reward_guided_step(
                    ts, proposals, t, cfg, backend, scorer, identity, recorder, reward_model, seed, run_id, prompt_dir
                )
            stage = "critique"
            previous = score
            score, proposals = critique(
                ts, corpus, backend, scorer, cfg, recorder, ref=f"iter{t}", prompt_dir=prompt_dir
            )
            delta = score.l1_distance(previous)
            converged = delta < cfg.convergence_epsilon
            record = IterationRecord(t, ts, score, proposals, applied, recorder.drain(), delta, converged)
            if candidates_info:
                audit.config.setdefault("candidates", {})[str(t)] = candidates_info
            audit.records.append(record)
            audit.final_theme_set_id = ts.id
            logger.info("iteration %d: score=%s L1=%.4f converged=%s", t, score.normalized(), delta, converged)
            if converged:
                break
    except Exception as exc:
        audit.error = f"{stage} (iteration {t}): {exc}"
        audit.reference_exchanges.extend(recorder.drain())
        raise
    audit.check()
    return audit.final_theme_set, audit


def _reward_guided_step(ts, proposals, t, cfg, backend, scorer, identity, recorder, model, seed, run_id, prompt_dir):
    from .reward import best_of_n_select, score_theme_set

    candidates = []
    for i, subset in enumerate(_candidate_subsets(proposals, cfg.candidates, seed, t)):
        draft, applied = apply_proposals(ts, subset)
        draft = _with_iteration(draft, t, run_id, f":cand{i:02d}")
        cand = polish_themes(draft, applied, backend, identity, seed, recorder, ref=f"iter{t}/cand{i:02d}", prompt_dir=prompt_dir)
        candidates.append((cand, scorer(cand), applied))
    chosen = best_of_n_select([(c, s) for c, s, _ in candidates], model)
    info = [
        {"id": c.id, "reward": score_theme_set(c, s, model), "chosen": c.id == chosen.id}
        for c, s, _ in candidates
    ]
    applied = next(a for c, _, a in candidates if c.id == chosen.id)
    return _with_iteration(chosen, t, run_id), applied, info
