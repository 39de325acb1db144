"""Line-oriented response formats and their whitespace-tolerant parsers.

Coder agents answer with ``CODE: <label> | QUOTES: ... | DESC: ...`` lines,
theme agents with ``THEME: <title> | QUOTES: ... | CODES: a; b | DESC: ...``
lines, and the feedback agent with a JSON array of edit proposals.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable

from ..corpus import QuoteId
from ..errors import CitationOutOfChunk, UnparseableResponse
from ..model import Code, EditKind, EditProposal, ThemeDraft

logger = logging.getLogger(__name__)

_QUOTE_TOKEN = re.compile(r"(?:([^\s,;|\[\]'\"]+):)?\[P(\d+)_S(\d+)\]")
_FIELD_SPLIT = re.compile(r"\s*\|\s*(?=[A-Za-z_]+\s*:)")
_LEAD = re.compile(r"^\s*(?:[-*+•]|\d+[.)])?\s*(?:\*\*)?")


def _fields(line: str) -> dict[str, str] | None:
    """Split ``KEY: value | KEY: value`` into a dict with upper-cased keys."""
    line = _LEAD.sub("", line).replace("**", "").strip()
    out: dict[str, str] = {}
    for i, part in enumerate(_FIELD_SPLIT.split(line)):
        key, sep, value = part.partition(":")
        if not sep:
            if i == 0:
                return None
            continue
        out.setdefault(key.strip().upper(), value.strip())
    return out


def quote_tokens(text: str) -> list[tuple[str | None, int, int]]:
    """(transcript id or None, participant, sequence) for each ID in ``text``."""
    out = []
    for m in _QUOTE_TOKEN.finditer(text):
        participant, sequence = int(m.group(2)), int(m.group(3))
        if participant >= 1 and sequence >= 1:
            out.append((m.group(1), participant, sequence))
    return out


def resolve_quotes(text: str, scope: frozenset[QuoteId]) -> tuple[set[QuoteId], list[str]]:
    """Map cited IDs onto ``scope``; returns (resolved, unresolvable tokens).

    A bare marker matches every in-scope ID with that participant/sequence.
    """
    by_pair: dict[tuple[int, int], list[QuoteId]] = {}
    for q in scope:
        by_pair.setdefault((q.participant, q.sequence), []).append(q)
    resolved: set[QuoteId] = set()
    missing: list[str] = []
    for tid, p, s in quote_tokens(text):
        if tid is not None:
            q = QuoteId(p, s, tid)
            if q in scope:
                resolved.add(q)
            else:
                missing.append(q.key)
        elif (p, s) in by_pair:
            resolved.update(by_pair[(p, s)])
        else:
            missing.append(QuoteId(p, s).raw)
    return resolved, missing


# -- codes ------------------------------------------------------------------


def format_code_line(label: str, quote_ids: Iterable[QuoteId], description: str) -> str:
    quotes = ", ".join(q.raw for q in sorted(quote_ids))
    return f"CODE: {label} | QUOTES: {quotes} | DESC: {description}"


def parse_codes(response: str, scope: frozenset[QuoteId], role: str) -> list[Code]:
    """Codes from a coder response.

    Codes citing an ID outside ``scope`` are dropped (logged as
    CitationOutOfChunk).  A response with no CODE line at all is
    unparseable.
    """
    codes: list[Code] = []
    saw_code_line = False
    for line in response.splitlines():
        fields = _fields(line)
        if not fields or "CODE" not in fields:
            continue
        saw_code_line = True
        label = fields["CODE"].strip()
        quotes, missing = resolve_quotes(fields.get("QUOTES", ""), scope)
        if missing:
            exc = CitationOutOfChunk(f"code {label!r} cites {', '.join(missing)} outside the chunk")
            logger.warning("%s; code dropped", exc)
            continue
        if not label or not quotes:
            logger.warning("dropping code line without label or quotes: %r", line)
            continue
        codes.append(Code(label, fields.get("DESC", ""), frozenset(quotes), role))
    if not saw_code_line:
        raise UnparseableResponse(f"no CODE lines in response from {role!r}: {response[:120]!r}")
    return codes


# -- themes -----------------------------------------------------------------


def format_theme_line(
    title: str,
    description: str,
    quote_ids: Iterable[QuoteId] = (),
    labels: Iterable[str] = (),
    theme_id: str | None = None,
) -> str:
    parts = [f"THEME: {title}"]
    if theme_id is not None:
        parts.append(f"ID: {theme_id}")
    quotes = ", ".join(q.key for q in sorted(quote_ids))
    if quotes:
        parts.append(f"QUOTES: {quotes}")
    labels = sorted(labels)
    if labels:
        parts.append(f"CODES: {'; '.join(labels)}")
    parts.append(f"DESC: {description}")
    return " | ".join(parts)


def parse_theme_lines(response: str, scope: frozenset[QuoteId]) -> list[dict]:
    """Raw theme records: title, description, id, quote_ids (in scope), labels."""
    out = []
    for line in response.splitlines():
        fields = _fields(line)
        if not fields or "THEME" not in fields or not fields["THEME"]:
            continue
        quotes, missing = resolve_quotes(fields.get("QUOTES", ""), scope)
        if missing:
            logger.warning("theme %r cites out-of-scope ids %s; ignored", fields["THEME"], missing)
        labels = [x.strip() for x in re.split(r"[;,]", fields.get("CODES", "")) if x.strip()]
        out.append(
            {
                "title": fields["THEME"],
                "id": fields.get("ID") or None,
                "description": fields.get("DESC", ""),
                "quote_ids": frozenset(quotes),
                "labels": frozenset(labels),
            }
        )
    if not out:
        raise UnparseableResponse(f"no THEME lines in response: {response[:120]!r}")
    return out


# -- edit proposals ---------------------------------------------------------


def format_edits(proposals: Iterable[EditProposal]) -> str:
    return json.dumps([p.to_dict() for p in proposals], indent=1, ensure_ascii=False)


def _json_array(response: str):
    text = response.strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.S)
    if fence:
        text = fence.group(1).strip()
    start, end = text.find("["), text.rfind("]")
    if start == -1 or end < start:
        raise UnparseableResponse(f"no JSON array in critique response: {response[:120]!r}")
    try:
        data = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise UnparseableResponse(f"invalid JSON in critique response: {exc}") from exc
    if not isinstance(data, list):
        raise UnparseableResponse("critique response is not a JSON array")
    return data


def parse_edits(response: str, theme_ids: Iterable[str], corpus_scope: frozenset[QuoteId]) -> list[EditProposal]:
    """Well-formed proposals from a critique response; bad entries are logged and dropped."""
    known = set(theme_ids)
    proposals = []
    for entry in _json_array(response):
        try:
            kind = EditKind.parse(str(entry["kind"]))
            targets = tuple(str(t) for t in entry.get("target_theme_ids") or ())
            unknown = [t for t in targets if t not in known]
            if unknown:
                raise ValueError(f"unknown theme ids {unknown}")
            drafts = []
            for d in entry.get("payload") or ():
                quotes, missing = resolve_quotes(" ".join(d.get("quote_ids") or ()), corpus_scope)
                if missing:
                    logger.warning("edit draft cites unknown quotes %s; ignored", missing)
                drafts.append(
                    ThemeDraft(
                        str(d["title"]),
                        str(d.get("description") or ""),
                        frozenset(quotes),
                        frozenset(d.get("source_code_labels") or ()),
                    )
                )
            proposals.append(EditProposal(kind, targets, tuple(drafts), str(entry.get("rationale", ""))))
        except (KeyError, TypeError, ValueError) as exc:
            logger.warning("dropping malformed edit proposal %r: %s", entry, exc)
    return proposals
