"""Domain objects shared by the pipeline stages, plus the theme-set edit algebra."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

from .corpus import QuoteId
from .errors import ArityMismatch, MissingPayload, UnknownThemeId
from .text import word_count

THEME_WORD_LIMIT = 60


class LongThemeWarning(UserWarning):
    """A theme is longer than the advisory word limit."""


def _qids(ids) -> frozenset[QuoteId]:
    return frozenset(ids)


def _qid_keys(ids) -> list[str]:
    return [q.key for q in sorted(ids)]


def _parse_qids(keys) -> frozenset[QuoteId]:
    return frozenset(QuoteId.parse(k) for k in keys)


@dataclass(frozen=True)
class Code:
    label: str
    description: str
    quote_ids: frozenset[QuoteId]
    role: str

    def __post_init__(self):
        if not self.label.strip():
            raise ValueError("code label must be non-empty")
        if not self.quote_ids:
            raise ValueError(f"code {self.label!r} cites no Quote IDs")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "description": self.description,
            "quote_ids": _qid_keys(self.quote_ids),
            "role": self.role,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Code:
        return cls(d["label"], d.get("description", ""), _parse_qids(d["quote_ids"]), d["role"])


@dataclass(frozen=True)
class Theme:
    id: str
    title: str
    description: str = ""
    supporting_quote_ids: frozenset[QuoteId] = frozenset()
    source_code_labels: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.word_count > THEME_WORD_LIMIT:
            warnings.warn(
                f"theme {self.id} has {self.word_count} words (advisory limit {THEME_WORD_LIMIT})",
                LongThemeWarning,
                stacklevel=3,
            )

    @property
    def word_count(self) -> int:
        return word_count(self.title) + word_count(self.description)

    @property
    def text(self) -> str:
        return f"{self.title} {self.description}".strip()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "supporting_quote_ids": _qid_keys(self.supporting_quote_ids),
            "source_code_labels": sorted(self.source_code_labels),
            "word_count": self.word_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Theme:
        return cls(
            id=d["id"],
            title=d["title"],
            description=d.get("description") or "",
            supporting_quote_ids=_parse_qids(d.get("supporting_quote_ids", [])),
            source_code_labels=frozenset(d.get("source_code_labels", [])),
        )


def theme_number(theme_id: str) -> int | None:
    if theme_id.startswith("T") and theme_id[1:].isdigit():
        return int(theme_id[1:])
    return None


@dataclass(frozen=True)
class ThemeSet:
    themes: tuple[Theme, ...] = ()
    iteration: int = 0
    transcript_ids: tuple[str, ...] = ()
    id: str = ""
    # Next free counter for "T<n>" theme ids; ids are never reused in a run.
    next_theme_id: int = 0

    def __post_init__(self):
        ids = [t.id for t in self.themes]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate theme ids in theme set {self.id!r}")
        numbers = [n for n in map(theme_number, ids) if n is not None]
        floor = max(numbers, default=0) + 1
        if self.next_theme_id < floor:
            object.__setattr__(self, "next_theme_id", floor)

    def __len__(self) -> int:
        return len(self.themes)

    def __iter__(self):
        return iter(self.themes)

    def get(self, theme_id: str) -> Theme:
        for t in self.themes:
            if t.id == theme_id:
                return t
        raise UnknownThemeId(f"no theme {theme_id!r} in theme set {self.id!r}")

    @property
    def theme_ids(self) -> list[str]:
        return [t.id for t in self.themes]

    @property
    def quote_ids(self) -> frozenset[QuoteId]:
        return frozenset().union(*(t.supporting_quote_ids for t in self.themes))

    def text(self) -> str:
        """All titles and descriptions concatenated, used for ROUGE overlap."""
        return " ".join(t.text for t in self.themes)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "iteration": self.iteration,
            "transcript_ids": list(self.transcript_ids),
            "next_theme_id": self.next_theme_id,
            "themes": [t.to_dict() for t in self.themes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ThemeSet:
        return cls(
            themes=tuple(Theme.from_dict(t) for t in d["themes"]),
            iteration=d.get("iteration", 0),
            transcript_ids=tuple(d.get("transcript_ids", ())),
            id=d.get("id", ""),
            next_theme_id=d.get("next_theme_id", 0),
        )


@dataclass(frozen=True)
class ScoreVector:
    credibility: float
    dependability: float
    transferability: float

    def __post_init__(self):
        eps = 1e-9
        if not -eps <= self.credibility <= 100 + eps:
            raise ValueError(f"credibility out of [0, 100]: {self.credibility}")
        for name in ("dependability", "transferability"):
            v = getattr(self, name)
            if not -eps <= v <= 1 + eps:
                raise ValueError(f"{name} out of [0, 1]: {v}")

    def normalized(self) -> tuple[float, float, float]:
        return (self.credibility / 100.0, self.dependability, self.transferability)

    def l1_distance(self, other: ScoreVector) -> float:
        return sum(abs(a - b) for a, b in zip(self.normalized(), other.normalized()))

    def to_dict(self) -> dict:
        return {
            "credibility": self.credibility,
            "dependability": self.dependability,
            "transferability": self.transferability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScoreVector:
        return cls(d["credibility"], d["dependability"], d["transferability"])


class EditKind(str, enum.Enum):
    ADD = "Add"
    SPLIT = "Split"
    COMBINE = "Combine"
    DELETE = "Delete"

    @classmethod
    def parse(cls, value: str) -> EditKind:
        for kind in cls:
            if kind.value.lower() == value.strip().lower():
                return kind
        raise ValueError(f"unknown edit kind {value!r}")


@dataclass(frozen=True)
class ThemeDraft:
    """Theme text carried by an Add/Split (or optionally Combine) proposal."""

    title: str
    description: str = ""
    quote_ids: frozenset[QuoteId] = frozenset()
    source_code_labels: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "description": self.description,
            "quote_ids": _qid_keys(self.quote_ids),
            "source_code_labels": sorted(self.source_code_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ThemeDraft:
        return cls(
            d["title"],
            d.get("description") or "",
            _parse_qids(d.get("quote_ids", [])),
            frozenset(d.get("source_code_labels", [])),
        )


def _check_arity(kind: EditKind, targets: tuple[str, ...]) -> None:
    n = len(targets)
    ok = {
        EditKind.ADD: n == 0,
        EditKind.SPLIT: n == 1,
        EditKind.DELETE: n == 1,
        EditKind.COMBINE: n >= 2 and len(set(targets)) == n,
    }[kind]
    if not ok:
        raise ArityMismatch(f"{kind.value} cannot target {n} theme(s): {list(targets)}")


@dataclass(frozen=True)
class EditProposal:
    kind: EditKind
    target_theme_ids: tuple[str, ...] = ()
    payload: tuple[ThemeDraft, ...] = ()
    rationale: str = ""

    def __post_init__(self):
        _check_arity(self.kind, self.target_theme_ids)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target_theme_ids": list(self.target_theme_ids),
            "payload": [p.to_dict() for p in self.payload],
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EditProposal:
        return cls(
            EditKind.parse(d["kind"]),
            tuple(d.get("target_theme_ids") or ()),
            tuple(ThemeDraft.from_dict(p) for p in d.get("payload") or ()),
            d.get("rationale", ""),
        )


def _new_theme(ts_next: int, draft: ThemeDraft, quotes=None, labels=None) -> Theme:
    return Theme(
        id=f"T{ts_next}",
        title=draft.title,
        description=draft.description,
        supporting_quote_ids=_qids(draft.quote_ids if quotes is None else quotes),
        source_code_labels=frozenset(draft.source_code_labels if labels is None else labels),
    )


def apply_edit(ts: ThemeSet, e: EditProposal) -> ThemeSet:
    """Return a new theme set with one edit applied; ``ts`` is left untouched.

    Combine keeps the union of the targets' quotes.  Split hands each half the
    quotes its draft names (restricted to the target's quotes); quotes named
    by neither draft go to both halves.
    """
    _check_arity(e.kind, e.target_theme_ids)
    targets = [ts.get(tid) for tid in e.target_theme_ids]
    themes = list(ts.themes)
    next_id = ts.next_theme_id

    if e.kind is EditKind.ADD:
        if not e.payload:
            raise MissingPayload("Add requires a theme draft")
        themes.append(_new_theme(next_id, e.payload[0]))
        next_id += 1

    elif e.kind is EditKind.DELETE:
        themes.remove(targets[0])

    elif e.kind is EditKind.COMBINE:
        quotes = frozenset().union(*(t.supporting_quote_ids for t in targets))
        labels = frozenset().union(*(t.source_code_labels for t in targets))
        if e.payload:
            draft = e.payload[0]
        else:
            lead = max(targets, key=lambda t: len(t.supporting_quote_ids))
            draft = ThemeDraft(lead.title, lead.description)
        merged = _new_theme(next_id, draft, quotes=quotes, labels=labels)
        next_id += 1
        position = min(themes.index(t) for t in targets)
        themes = [t for t in themes if t not in targets]
        themes.insert(position, merged)

    elif e.kind is EditKind.SPLIT:
        if len(e.payload) < 2:
            raise MissingPayload("Split requires two theme drafts")
        (target,) = targets
        first, second = e.payload[:2]
        pool = target.supporting_quote_ids
        a, b = first.quote_ids & pool, second.quote_ids & pool
        unassigned = pool - a - b
        halves = []
        for draft, quotes in ((first, a), (second, b)):
            labels = (draft.source_code_labels & target.source_code_labels) or target.source_code_labels
            halves.append(_new_theme(next_id, draft, quotes=quotes | unassigned, labels=labels))
            next_id += 1
        position = themes.index(target)
        themes[position : position + 1] = halves

    return replace(ts, themes=tuple(themes), next_theme_id=next_id)


# -- audit trail ------------------------------------------------------------


@dataclass(frozen=True)
class AgentExchange:
    """One backend call: who asked what, and what came back."""

    seq: int
    task: str
    identity: str
    ref: str
    prompt: str
    response: str
    # Wall-clock time for live backends; None under the mock so audit files
    # stay byte-identical across runs (``seq`` orders the calls).
    timestamp: str | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "task": self.task,
            "identity": self.identity,
            "ref": self.ref,
            "prompt": self.prompt,
            "response": self.response,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AgentExchange:
        return cls(d["seq"], d["task"], d["identity"], d["ref"], d["prompt"], d["response"], d.get("timestamp"))


@dataclass(frozen=True)
class AppliedEdit:
    proposal: EditProposal
    status: str  # "applied" | "skipped"
    created_theme_ids: tuple[str, ...] = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.proposal.kind.value,
            "target_theme_ids": list(self.proposal.target_theme_ids),
            "status": self.status,
            "created_theme_ids": list(self.created_theme_ids),
            "note": self.note,
        }


@dataclass
class IterationRecord:
    iteration: int
    theme_set: ThemeSet
    score: ScoreVector
    proposals: list[EditProposal] = field(default_factory=list)
    applied_edits: list[AppliedEdit] = field(default_factory=list)
    exchanges: list[AgentExchange] = field(default_factory=list)
    l1_delta: float | None = None
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "theme_set": self.theme_set.to_dict(),
            "score_vector": self.score.to_dict(),
            "l1_delta": self.l1_delta,
            "converged": self.converged,
            "proposals": [p.to_dict() for p in self.proposals],
            "applied_edits": [a.to_dict() for a in self.applied_edits],
            "agent_exchanges": [x.to_dict() for x in self.exchanges],
        }


@dataclass
class AuditTrail:
    run_id: str = ""
    seed: int | None = None
    config: dict = field(default_factory=dict)
    records: list[IterationRecord] = field(default_factory=list)
    # Calls made outside the refinement rounds (reference regenerations used
    # for dependability/transferability scoring).
    reference_exchanges: list[AgentExchange] = field(default_factory=list)
    final_theme_set_id: str | None = None
    error: str | None = None

    @property
    def final_theme_set(self) -> ThemeSet | None:
        return self.records[-1].theme_set if self.records else None

    def check(self) -> None:
        iterations = [r.iteration for r in self.records]
        if iterations != list(range(len(iterations))):
            raise ValueError(f"audit iterations not contiguous from 0: {iterations}")
        if self.records and self.final_theme_set_id not in (None, self.records[-1].theme_set.id):
            raise ValueError("final theme set id does not match the last record")

    def all_exchanges(self) -> list[AgentExchange]:
        out = list(self.reference_exchanges)
        for r in self.records:
            out.extend(r.exchanges)
        return sorted(out, key=lambda x: x.seq)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config,
            "final_theme_set_id": self.final_theme_set_id,
            "error": self.error,
            "iterations": [r.to_dict() for r in self.records],
            "reference_exchanges": [x.to_dict() for x in self.reference_exchanges],
        }
