"""Tokenization helpers shared by the agents and the metrics."""

from __future__ import annotations

import re
import unicodedata

_WORD = re.compile(r"\w+")

# Compact English stopword list; covers function words plus the filler that
# dominates spoken transcripts ("yeah", "um", "like", ...).
STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are aren as at be
    because been before being below between both but by can cannot could did
    didn do does doesn doing don down during each even ever every few for from
    further get gets getting go going gonna got had hadn has hasn have haven
    having he her here hers herself him himself his how i if in into is isn it
    its itself just know let like ll me might more most much must my myself no
    nor not now of off oh ok okay on once one only or other our ours ourselves
    out over own really re s said same say says she should so some still such
    t than that thats the their theirs them themselves then there these they
    thing things think this those though through to too um uh under until up
    us ve very was wasn way we well went were weren what when where which while
    who whom why will with won would yeah yes you your yours yourself
    yourselves
    """.split()
)


def word_count(text: str) -> int:
    """Number of whitespace-delimited tokens."""
    return len(text.split())


class _PunctuationTable(dict):
    """``str.translate`` table deleting Unicode punctuation, filled on demand."""

    def __missing__(self, codepoint: int):
        value = None if unicodedata.category(chr(codepoint)).startswith("P") else codepoint
        self[codepoint] = value
        return value


_PUNCTUATION = _PunctuationTable()


def strip_punctuation(text: str) -> str:
    return text.translate(_PUNCTUATION)


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace.

    Apostrophes vanish rather than split, so "child's" becomes "childs".
    """
    return strip_punctuation(text.lower()).split()


def content_tokens(text: str) -> list[str]:
    """Word tokens minus stopwords and single characters, for keyword coding."""
    return [
        tok
        for tok in _WORD.findall(strip_punctuation(text.lower()))
        if len(tok) > 1 and tok not in STOPWORDS and not tok.isdigit()
    ]
