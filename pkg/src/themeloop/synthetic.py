"""Seeded synthetic interview transcripts for tests, demos and the bundled sample."""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import QuoteId, Transcript, Utterance, parse_transcript, render_transcript

TOPICS: dict[str, tuple[str, ...]] = {
    "diagnosis": ("diagnosis", "scan", "cardiologist", "heart", "defect", "shock", "ultrasound", "news"),
    "surgery": ("surgery", "operation", "surgeon", "theatre", "bypass", "recovery", "stitches", "anaesthetic"),
    "waiting": ("waiting", "corridor", "hours", "update", "phone", "clock", "nurse", "silence"),
    "family": ("siblings", "grandparents", "partner", "childcare", "school", "home", "routine", "support"),
    "money": ("parking", "travel", "leave", "wages", "costs", "bills", "employer", "benefits"),
    "information": ("leaflet", "explanation", "jargon", "questions", "website", "consent", "risks", "doctor"),
    "feeding": ("feeding", "weight", "bottle", "tube", "milk", "dietitian", "growth", "appetite"),
    "aftercare": ("discharge", "medication", "appointments", "checkup", "monitoring", "clinic", "scar", "followup"),
    "emotions": ("fear", "guilt", "relief", "anxiety", "tears", "hope", "exhaustion", "worry"),
}

# Frames made of stopwords only, so keyword coding sees just the topic words.
_FRAMES = (
    "it was all about the {a} and then the {b}",
    "we had the {a} before the {b}",
    "there was the {a} with the {b} again",
    "so much of it was the {a} and the {b}",
    "we just had to get through the {a} and the {b}",
    "for us the {a} was more than the {b}",
    "it is the {a} that i still think about with the {b}",
    "they did not say much about the {a} or the {b}",
    "you know the {a} was there and so was the {b}",
    "what we had was the {a} and then the {b}",
)


def _utterance_text(rng: random.Random, topic: str, words: int) -> str:
    vocab = TOPICS[topic]
    parts: list[str] = []
    while sum(len(p.split()) for p in parts) < words:
        a, b = rng.sample(vocab, 2)
        parts.append(rng.choice(_FRAMES).format(a=a, b=b).capitalize() + ".")
    return " ".join(parts)


def synthetic_transcript(
    transcript_id: str,
    seed: int = 0,
    n_utterances: int = 40,
    words_per_utterance: int = 30,
    topics: tuple[str, ...] | None = None,
    participants: int = 2,
) -> Transcript:
    """A transcript whose utterances each dwell on one topic.

    Participants take turns; sequence numbers run per participant.
    """
    if n_utterances < 1 or participants < 1:
        raise ValueError("need at least one utterance and one participant")
    rng = random.Random(f"{transcript_id}:{seed}")
    pool = topics or tuple(TOPICS)
    counters = [0] * participants
    utterances = []
    for i in range(n_utterances):
        p = i % participants
        counters[p] += 1
        topic = pool[(i // 3 + rng.randrange(2)) % len(pool)]
        text = _utterance_text(rng, topic, words_per_utterance)
        utterances.append(Utterance(QuoteId(p + 1, counters[p], transcript_id), f"P{p + 1}", text))
    return Transcript(transcript_id, tuple(utterances))


def synthetic_corpus(n: int, seed: int = 0, **kwargs) -> list[Transcript]:
    """``n`` transcripts named t01, t02, ... each covering a rotating subset of topics."""
    names = list(TOPICS)
    corpus = []
    for i in range(n):
        topics = tuple(names[(i + k) % len(names)] for k in range(4))
        corpus.append(synthetic_transcript(f"t{i + 1:02d}", seed, topics=topics, **kwargs))
    return corpus


def sample_transcript_text(seed: int = 7) -> str:
    """Roughly 10,000 words; the text of the bundled sample transcript."""
    t = synthetic_transcript("sample", seed, n_utterances=250, words_per_utterance=35, participants=3)
    return render_transcript(t)


def write_corpus(directory: str | Path, corpus: list[Transcript]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in corpus:
        path = directory / f"{t.id}.txt"
        path.write_text(render_transcript(t), encoding="utf-8")
        paths.append(path)
    return paths


def roundtrip(t: Transcript) -> Transcript:
    return parse_transcript(render_transcript(t), t.id)
