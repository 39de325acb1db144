"""Agent identities and the four agent operations: code, theme, critique, polish."""

from __future__ import annotations

import functools
import hashlib
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from ..corpus import Chunk, Transcript, corpus_quote_ids
from ..model import AgentExchange, AppliedEdit, Code, ScoreVector, Theme, ThemeSet
from ..metrics import credibility
from .backends import AgentRequest, Backend
from .parsing import format_edits, format_theme_line, parse_codes, parse_edits, parse_theme_lines

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Identity:
    name: str
    prompt_preamble: str = ""


DEFAULT_IDENTITIES = (
    Identity(
        "Cardiac Surgeon",
        "You are a pediatric cardiac surgeon. You read family narratives with an eye "
        "for surgical decisions, operative risk, recovery and follow-up.",
    ),
    Identity(
        "Qualitative Researcher",
        "You are a qualitative health researcher experienced in reflexive thematic "
        "analysis. You attend to meaning, emotion and how participants frame events.",
    ),
    Identity(
        "Medical Doctor",
        "You are a physician who follows children with heart conditions over many "
        "years. You notice diagnosis, monitoring, communication and access to care.",
    ),
    Identity(
        "Psychologist",
        "You are a clinical psychologist working with families of chronically ill "
        "children. You notice stress, coping, guilt, support and daily functioning.",
    ),
)

NO_IDENTITY = Identity("No Identity", "You are an analyst coding interview transcripts.")


def identities_by_name(names: Sequence[str]) -> list[Identity]:
    """Resolve names against the defaults; unknown names get a generic preamble."""
    known = {i.name.lower(): i for i in (*DEFAULT_IDENTITIES, NO_IDENTITY)}
    out = []
    for name in names:
        name = name.strip()
        out.append(known.get(name.lower()) or Identity(name, f"You are a {name}. Code the transcript from that perspective."))
    if len({i.name for i in out}) != len(out):
        raise ValueError(f"identity names must be unique: {[i.name for i in out]}")
    return out


# -- prompt templates --------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{(identity|transcript_chunk|codes|themes|scores|edits)\}")


@functools.lru_cache(maxsize=64)
def load_template(name: str, prompt_dir: str | Path | None = None) -> str:
    if prompt_dir is not None:
        path = Path(prompt_dir) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("themeloop").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render_template(template: str, **values: str) -> str:
    """Fill the named placeholders; any other braces (e.g. JSON examples) are left alone."""
    return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), template)


# -- seeds and exchange recording --------------------------------------------


def derive_seed(seed: int, *parts: object) -> int:
    """Stable 63-bit sub-seed from a run seed and any labels (identity, chunk, ...)."""
    text = "|".join([str(seed), *map(str, parts)])
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big") >> 1


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ExchangeRecorder:
    """Single-writer log of backend calls.

    ``child()`` gives a recorder with its own bucket that shares the sequence
    counter, so calls stay globally ordered across buckets.
    """

    def __init__(self, wall_clock: bool = False, _shared=None):
        self.wall_clock = wall_clock
        self._shared = _shared or {"lock": threading.Lock(), "seq": 0}
        self._bucket: list[AgentExchange] = []

    def child(self) -> ExchangeRecorder:
        return ExchangeRecorder(self.wall_clock, self._shared)

    def record(self, request: AgentRequest, response: str) -> AgentExchange:
        with self._shared["lock"]:
            seq = self._shared["seq"]
            self._shared["seq"] += 1
            x = AgentExchange(
                seq,
                request.task,
                request.identity,
                request.ref,
                request.prompt,
                response,
                _utc_now() if self.wall_clock else None,
            )
            self._bucket.append(x)
        return x

    def drain(self) -> list[AgentExchange]:
        with self._shared["lock"]:
            out, self._bucket = self._bucket, []
        return out


def _call(backend: Backend, request: AgentRequest, recorder: ExchangeRecorder | None) -> str:
    response = backend.complete(request)
    if recorder is not None:
        recorder.record(request, response)
    return response


# -- coding -------------------------------------------------------------------


def _code_request(identity: Identity, chunk: Chunk, seed: int, ref_prefix: str, prompt_dir) -> AgentRequest:
    prompt = render_template(
        load_template("coder", prompt_dir),
        identity=identity.prompt_preamble,
        transcript_chunk=chunk.render(),
    )
    return AgentRequest(
        task="code",
        identity=identity.name,
        system="",
        prompt=prompt,
        ref=f"{ref_prefix}{chunk.ref}",
        seed=derive_seed(seed, identity.name, chunk.transcript_id, chunk.index),
        context={"chunk": chunk},
    )


def _sorted_codes(codes: list[Code]) -> list[Code]:
    return sorted(codes, key=lambda c: (c.role, c.label))


def code_chunk(
    identity: Identity,
    chunk: Chunk,
    backend: Backend,
    seed: int = 0,
    recorder: ExchangeRecorder | None = None,
    ref_prefix: str = "",
    prompt_dir=None,
) -> list[Code]:
    """Codes from one role-conditioned agent for one chunk.

    Every code cites only Quote IDs present in the chunk; codes citing
    anything else are dropped.
    """
    if not chunk.utterances:
        raise ValueError("cannot code an empty chunk")
    request = _code_request(identity, chunk, seed, ref_prefix, prompt_dir)
    response = _call(backend, request, recorder)
    return _sorted_codes(parse_codes(response, chunk.quote_ids, identity.name))


def code_chunks(
    identities: Sequence[Identity],
    chunks: Sequence[Chunk],
    backend: Backend,
    seed: int = 0,
    recorder: ExchangeRecorder | None = None,
    ref_prefix: str = "",
    workers: int = 1,
    prompt_dir=None,
) -> list[Code]:
    """Run every identity over every chunk.

    Backend calls may run concurrently; recording and merging happen
    afterwards in (chunk, identity name, code label) order, so the result
    never depends on completion order.
    """
    ordered = sorted(identities, key=lambda i: i.name)
    requests = [
        _code_request(identity, chunk, seed, ref_prefix, prompt_dir)
        for chunk in chunks
        for identity in ordered
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            responses = list(pool.map(backend.complete, requests))
    else:
        responses = [backend.complete(r) for r in requests]
    codes: list[Code] = []
    for request, response in zip(requests, responses):
        if recorder is not None:
            recorder.record(request, response)
        chunk = request.context["chunk"]
        codes.extend(_sorted_codes(parse_codes(response, chunk.quote_ids, request.identity)))
    return codes


# -- theme generation -------------------------------------------------------------


def _codes_block(codes: Sequence[Code]) -> str:
    return "\n".join(
        f"- {c.label} ({c.role}) | QUOTES: {', '.join(q.key for q in sorted(c.quote_ids))} | DESC: {c.description}"
        for c in codes
    )


def themes_block(ts: ThemeSet, with_quotes: bool = True) -> str:
    if not len(ts):
        return "(no themes)"
    return "\n".join(
        format_theme_line(t.title, t.description, t.supporting_quote_ids if with_quotes else (), theme_id=t.id)
        for t in ts
    )


def generate_themes(
    codes: Sequence[Code],
    backend: Backend,
    identity: Identity | None = None,
    seed: int = 0,
    recorder: ExchangeRecorder | None = None,
    ref: str = "iter0",
    transcript_ids: Sequence[str] = (),
    set_id: str = "",
    prompt_dir=None,
) -> ThemeSet:
    """Cluster codes into a preliminary theme set (iteration 0).

    Themes may only cite Quote IDs cited by the input codes; anything else
    in the response is discarded.
    """
    if not codes:
        raise ValueError("theme generation needs at least one code")
    scope = frozenset().union(*(c.quote_ids for c in codes))
    known_labels = {c.label for c in codes}
    prompt = render_template(
        load_template("theme", prompt_dir),
        identity=identity.prompt_preamble if identity else "",
        codes=_codes_block(codes),
    )
    request = AgentRequest(
        task="theme",
        identity=identity.name if identity else "",
        system="",
        prompt=prompt,
        ref=ref,
        seed=derive_seed(seed, "theme", ref),
        context={"codes": list(codes)},
    )
    records = parse_theme_lines(_call(backend, request, recorder), scope)
    themes = tuple(
        Theme(
            id=f"T{i}",
            title=r["title"],
            description=r["description"],
            supporting_quote_ids=r["quote_ids"],
            source_code_labels=frozenset(r["labels"] & known_labels),
        )
        for i, r in enumerate(records, 1)
    )
    return ThemeSet(themes, 0, tuple(transcript_ids), set_id)


# -- feedback agent ---------------------------------------------------------------


def credibility_only_scorer(corpus: Sequence[Transcript]) -> Callable[[ThemeSet], ScoreVector]:
    """Scores credibility alone; dependability/transferability need reference runs."""
    quotes = corpus_quote_ids(corpus)
    return lambda ts: ScoreVector(credibility(ts, quotes), 0.0, 0.0)


def _scores_block(s: ScoreVector) -> str:
    return (
        f"credibility: {s.credibility:.2f}\n"
        f"dependability: {s.dependability:.4f}\n"
        f"transferability: {s.transferability:.4f}"
    )


def critique(
    ts: ThemeSet,
    corpus: Sequence[Transcript],
    backend: Backend,
    scorer: Callable[[ThemeSet], ScoreVector] | None = None,
    refine_config=None,
    recorder: ExchangeRecorder | None = None,
    ref: str | None = None,
    prompt_dir=None,
):
    """Score a theme set and ask the feedback agent for edit proposals.

    Returns ``(ScoreVector, proposals)``.  Scores come from the metrics
    module; the agent only proposes edits.
    """
    from ..refine import RefineConfig

    refine_config = refine_config or RefineConfig()
    score = (scorer or credibility_only_scorer(corpus))(ts)
    prompt = render_template(
        load_template("critique", prompt_dir),
        scores=_scores_block(score),
        themes=themes_block(ts),
    )
    request = AgentRequest(
        task="critique",
        identity="Feedback Agent",
        system="",
        prompt=prompt,
        ref=ref or f"iter{ts.iteration}",
        context={"theme_set": ts, "score": score, "corpus": list(corpus), "refine_config": refine_config},
    )
    response = _call(backend, request, recorder)
    proposals = parse_edits(response, ts.theme_ids, corpus_quote_ids(corpus))
    return score, proposals


def polish_themes(
    draft: ThemeSet,
    applied: Sequence[AppliedEdit],
    backend: Backend,
    identity: Identity | None = None,
    seed: int = 0,
    recorder: ExchangeRecorder | None = None,
    ref: str | None = None,
    prompt_dir=None,
) -> ThemeSet:
    """Let the theme agent reword an edited theme set.

    Only titles and descriptions of existing IDs change; theme membership
    and citations are fixed by the edits themselves.
    """
    edits = format_edits(a.proposal for a in applied if a.status == "applied")
    prompt = render_template(
        load_template("polish", prompt_dir),
        identity=identity.prompt_preamble if identity else "",
        edits=edits,
        themes=themes_block(draft, with_quotes=False),
    )
    ref = ref or f"iter{draft.iteration}"
    request = AgentRequest(
        task="polish",
        identity=identity.name if identity else "",
        system="",
        prompt=prompt,
        ref=ref,
        seed=derive_seed(seed, "polish", ref),
        context={"theme_set": draft},
    )
    records = parse_theme_lines(_call(backend, request, recorder), frozenset())
    rewrites = {r["id"]: r for r in records if r["id"]}
    themes = []
    for t in draft:
        r = rewrites.get(t.id)
        if r and r["title"].strip():
            t = Theme(
                t.id,
                r["title"].strip(),
                r["description"].strip() or t.description,
                t.supporting_quote_ids,
                t.source_code_labels,
            )
        themes.append(t)
    return ThemeSet(tuple(themes), draft.iteration, draft.transcript_ids, draft.id, draft.next_theme_id)
