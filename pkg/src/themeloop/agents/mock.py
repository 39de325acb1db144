"""Deterministic stand-ins for the four agent tasks.

coding    top-N content tokens of the chunk by frequency; each becomes a code
          citing the utterances that contain it.  Frequency ties are broken
          by a hash of the agent's sub-seed, which is what makes seed-varied
          runs differ.
themes    connected components of codes that share a Quote ID, titled by the
          component's most frequent label.
critique  the heuristic rules of ``themeloop.refine``.
polish    echoes the edited theme set unchanged.
"""

from __future__ import annotations

import hashlib
from collections import Counter

from ..text import content_tokens
from .parsing import format_code_line, format_edits, format_theme_line


def _tiebreak(seed: int, token: str) -> str:
    return hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).hexdigest()


def keyword_codes(chunk, top_n: int, seed: int) -> list[tuple[str, list, int]]:
    """(label, cited quote ids, frequency) for the chunk's top tokens."""
    freq: Counter = Counter()
    holders: dict[str, list] = {}
    for u in chunk.utterances:
        tokens = content_tokens(u.text)
        freq.update(tokens)
        for tok in dict.fromkeys(tokens):
            holders.setdefault(tok, []).append(u.quote_id)
    if not freq:
        return [("uncategorized", [u.quote_id for u in chunk.utterances], 0)]
    ranked = sorted(freq, key=lambda tok: (-freq[tok], _tiebreak(seed, tok)))
    return [(tok, holders[tok], freq[tok]) for tok in ranked[:top_n]]


def handle_code(request, config) -> str:
    chunk = request.context["chunk"]
    lines = [
        format_code_line(label, quotes, f"{request.identity} reading: '{label}' comes up {n} times")
        for label, quotes, n in keyword_codes(chunk, config.top_n, request.seed)
    ]
    return "\n".join(lines)


def cluster_codes(codes) -> list[list]:
    """Connected components of codes linked by a shared Quote ID."""
    parent = list(range(len(codes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, code in enumerate(codes):
        for q in code.quote_ids:
            if q in owner:
                parent[find(i)] = find(owner[q])
            else:
                owner[q] = i
    groups: dict[int, list] = {}
    for i, code in enumerate(codes):
        groups.setdefault(find(i), []).append(code)
    components = list(groups.values())
    components.sort(key=lambda comp: min(q for c in comp for q in c.quote_ids))
    return components


def handle_theme(request, config) -> str:
    lines = []
    for component in cluster_codes(request.context["codes"]):
        counts = Counter(c.label for c in component)
        title = min(counts, key=lambda label: (-counts[label], label))
        labels = sorted(counts)
        quotes = frozenset().union(*(c.quote_ids for c in component))
        lines.append(format_theme_line(title, f"Grouped codes: {', '.join(labels)}.", quotes, labels))
    return "\n".join(lines)


def handle_critique(request, config) -> str:
    from ..refine import heuristic_proposals

    ctx = request.context
    proposals = heuristic_proposals(ctx["theme_set"], ctx["score"], ctx["corpus"], ctx["refine_config"])
    return format_edits(proposals)


def handle_polish(request, config) -> str:
    ts = request.context["theme_set"]
    if not len(ts):
        return "THEME: (none) | DESC: the theme set is empty"
    return "\n".join(format_theme_line(t.title, t.description, theme_id=t.id) for t in ts)


HANDLERS = {
    "code": handle_code,
    "theme": handle_theme,
    "critique": handle_critique,
    "polish": handle_polish,
}
