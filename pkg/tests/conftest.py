import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from themeloop.corpus import QuoteId, Transcript, Utterance  # noqa: E402
from themeloop.model import Theme, ThemeSet  # noqa: E402


def make_transcript(texts, tid="t1", participant=1):
    return Transcript(
        tid,
        tuple(Utterance(QuoteId(participant, i, tid), f"P{participant}", text) for i, text in enumerate(texts, 1)),
    )


def make_theme_set(specs, iteration=0):
    """``specs``: list of (title, description, quote ids)."""
    themes = tuple(
        Theme(f"T{i}", title, desc, frozenset(quotes), frozenset({title}))
        for i, (title, desc, quotes) in enumerate(specs, 1)
    )
    return ThemeSet(themes, iteration)


@pytest.fixture
def small_corpus():
    return [
        make_transcript(
            [
                "We were scared about the surgery and the surgery date.",
                "The nurse explained the surgery risks clearly.",
                "Parking costs added up every single week.",
                "Feeding through the tube was exhausting at night.",
            ],
            "a",
        ),
        make_transcript(
            [
                "Feeding got easier once the dietitian helped with feeding plans.",
                "Parking and travel costs hurt our budget.",
                "Waiting in the corridor felt endless.",
            ],
            "b",
            participant=2,
        ),
    ]


# -- acceptance summary --------------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Record PASS/FAIL for one acceptance criterion: ``with criterion(3, "name"): ...``."""
    from contextlib import contextmanager

    @contextmanager
    def record(number: int, name: str):
        try:
            yield
        except BaseException:
            ACCEPTANCE_RESULTS[number] = ("FAIL", name)
            raise
        ACCEPTANCE_RESULTS[number] = ("PASS", name)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        status, name = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {name}")
