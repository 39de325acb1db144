"""Transcript parsing and chunking.

Transcripts are plain UTF-8 text where every utterance is introduced by a
Quote ID marker such as ``[P1_S002]`` (participant 1, utterance 2).  Text up
to the next marker belongs to the preceding ID.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateQuoteId, EmptyTranscript, EmptyUtterance, MalformedQuoteId
from .text import word_count

DEFAULT_CHUNK_LIMIT = 1500

MARKER_RE = re.compile(r"\[P(\d+)_S(\d+)\]")
_MARKER_PREFIX = "[P"
_KEY_RE = re.compile(r"^(?:(?P<tid>.+):)?(?P<raw>\[P\d+_S\d+\])$")


@functools.total_ordering
@dataclass(frozen=True)
class QuoteId:
    participant: int
    sequence: int
    # Scope of the ID.  Markers only identify an utterance within one
    # transcript, so multi-transcript theme sets qualify them.
    transcript_id: str = ""

    def __post_init__(self):
        if self.participant < 1 or self.sequence < 1:
            raise MalformedQuoteId(f"participant and sequence must be positive: {self!r}")

    @property
    def raw(self) -> str:
        return f"[P{self.participant}_S{self.sequence:03d}]"

    @property
    def key(self) -> str:
        """Serialized form; ``raw`` prefixed by ``transcript_id:`` when scoped."""
        return f"{self.transcript_id}:{self.raw}" if self.transcript_id else self.raw

    @property
    def sort_key(self) -> tuple[str, int, int]:
        return (self.transcript_id, self.participant, self.sequence)

    def __lt__(self, other: QuoteId) -> bool:
        if not isinstance(other, QuoteId):
            return NotImplemented
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return self.key

    @classmethod
    def parse(cls, token: str, transcript_id: str = "") -> QuoteId:
        """Parse a raw marker or a scoped key (``t1:[P1_S001]``)."""
        m = _KEY_RE.match(token.strip())
        if not m:
            raise MalformedQuoteId(f"not a Quote ID: {token!r}")
        qid = _quote_id_from_marker(m.group("raw"))
        tid = m.group("tid") if m.group("tid") is not None else transcript_id
        return cls(qid.participant, qid.sequence, tid)


def _quote_id_from_marker(marker: str, transcript_id: str = "", line: int | None = None) -> QuoteId:
    m = MARKER_RE.fullmatch(marker)
    if not m:
        raise MalformedQuoteId(f"malformed Quote ID marker {marker!r}", line)
    participant, sequence = int(m.group(1)), int(m.group(2))
    if participant < 1 or sequence < 1:
        raise MalformedQuoteId(f"Quote ID numbers must be positive in {marker!r}", line)
    qid = QuoteId(participant, sequence, transcript_id)
    if qid.raw != marker:
        # e.g. [P1_S1] or [P01_S001]: not in canonical zero-padded form
        raise MalformedQuoteId(f"non-canonical Quote ID {marker!r} (expected {qid.raw})", line)
    return qid


@dataclass(frozen=True)
class Utterance:
    quote_id: QuoteId
    speaker: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyUtterance(f"utterance {self.quote_id} has no text")

    @property
    def word_count(self) -> int:
        return word_count(self.text)


@dataclass(frozen=True)
class Transcript:
    id: str
    utterances: tuple[Utterance, ...]

    @property
    def total_words(self) -> int:
        return sum(u.word_count for u in self.utterances)

    @property
    def quote_ids(self) -> frozenset[QuoteId]:
        return frozenset(u.quote_id for u in self.utterances)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "utterances": [
                {"quote_id": u.quote_id.raw, "speaker": u.speaker, "text": u.text}
                for u in self.utterances
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)


@dataclass(frozen=True)
class Chunk:
    transcript_id: str
    index: int
    utterances: tuple[Utterance, ...] = field(default_factory=tuple)

    @property
    def word_count(self) -> int:
        return sum(u.word_count for u in self.utterances)

    @property
    def quote_ids(self) -> frozenset[QuoteId]:
        return frozenset(u.quote_id for u in self.utterances)

    @property
    def ref(self) -> str:
        return f"{self.transcript_id}#c{self.index}"

    def render(self) -> str:
        return render_utterances(self.utterances)


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def parse_transcript(raw_text: str, transcript_id: str) -> Transcript:
    """Split marker-annotated text into utterances.

    Raises MalformedQuoteId for anything starting with ``[P`` that is not a
    canonical marker and for text preceding the first marker,
    DuplicateQuoteId when an ID repeats, and EmptyTranscript when there is
    no marker at all.
    """
    markers = list(MARKER_RE.finditer(raw_text))
    marker_starts = {m.start() for m in markers}

    pos = raw_text.find(_MARKER_PREFIX)
    while pos != -1:
        if pos not in marker_starts:
            end = raw_text.find("]", pos)
            snippet = raw_text[pos : end + 1 if 0 <= end - pos < 20 else pos + 12]
            raise MalformedQuoteId(f"malformed Quote ID marker {snippet!r}", _line_of(raw_text, pos))
        pos = raw_text.find(_MARKER_PREFIX, pos + 1)

    if not markers:
        raise EmptyTranscript(f"transcript {transcript_id!r} contains no Quote ID markers")

    if raw_text[: markers[0].start()].strip():
        raise MalformedQuoteId("text before the first Quote ID", 1)

    seen: dict[QuoteId, int] = {}
    utterances = []
    for i, m in enumerate(markers):
        line = _line_of(raw_text, m.start())
        qid = _quote_id_from_marker(m.group(0), transcript_id, line)
        if qid in seen:
            raise DuplicateQuoteId(f"{qid.raw} already used on line {seen[qid]}", line)
        seen[qid] = line
        stop = markers[i + 1].start() if i + 1 < len(markers) else len(raw_text)
        text = " ".join(raw_text[m.end() : stop].split())
        if not text:
            raise EmptyUtterance(f"{qid.raw} has no text", line)
        utterances.append(Utterance(qid, f"P{qid.participant}", text))
    return Transcript(transcript_id, tuple(utterances))


def load_transcript(path: str | Path, transcript_id: str | None = None) -> Transcript:
    path = Path(path)
    return parse_transcript(path.read_text(encoding="utf-8"), transcript_id or path.stem)


def render_utterances(utterances) -> str:
    return "\n".join(f"{u.quote_id.raw} {u.text}" for u in utterances)


def render_transcript(t: Transcript) -> str:
    """Inverse of parse_transcript: one marker-prefixed line per utterance."""
    return render_utterances(t.utterances) + "\n"


def chunk_transcript(t: Transcript, chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> list[Chunk]:
    """Greedily pack whole utterances into chunks of at most chunk_limit words.

    An utterance longer than the limit gets a chunk of its own.
    """
    if chunk_limit < 1:
        raise ValueError("chunk_limit must be >= 1")
    groups: list[list[Utterance]] = []
    current: list[Utterance] = []
    current_words = 0
    for u in t.utterances:
        n = u.word_count
        if current and current_words + n > chunk_limit:
            groups.append(current)
            current, current_words = [], 0
        current.append(u)
        current_words += n
    if current:
        groups.append(current)
    return [Chunk(t.id, i, tuple(g)) for i, g in enumerate(groups)]


def corpus_quote_ids(transcripts) -> frozenset[QuoteId]:
    return frozenset().union(*(t.quote_ids for t in transcripts))


def utterance_index(transcripts) -> dict[QuoteId, Utterance]:
    return {u.quote_id: u for t in transcripts for u in t.utterances}
