import json

import httpx
import pytest

from conftest import make_theme_set, make_transcript
from themeloop.agents import (
    DEFAULT_IDENTITIES,
    AgentRequest,
    BackendConfig,
    ExchangeRecorder,
    Identity,
    MockBackend,
    RemoteBackend,
    ReplayBackend,
    code_chunk,
    code_chunks,
    critique,
    generate_themes,
    identities_by_name,
    load_template,
    render_template,
)
from themeloop.agents.parsing import parse_codes, parse_edits, parse_theme_lines
from themeloop.corpus import QuoteId, chunk_transcript
from themeloop.errors import BackendUnavailable, UnparseableResponse
from themeloop.model import Code, EditKind

ROLE = Identity("Tester", "You test.")


class Canned:
    deterministic = True
    config = BackendConfig()

    def __init__(self, response):
        self.response = response

    def complete(self, request):
        return self.response


def _chunk(texts, tid="t1"):
    return chunk_transcript(make_transcript(texts, tid))[0]


def test_default_identities():
    assert [i.name for i in DEFAULT_IDENTITIES] == [
        "Cardiac Surgeon",
        "Qualitative Researcher",
        "Medical Doctor",
        "Psychologist",
    ]
    with pytest.raises(ValueError):
        identities_by_name(["Psychologist", "psychologist"])


def test_temperature_defaults_to_zero():
    assert BackendConfig().temperature == 0.0


def test_mock_keyword_code_cites_exactly_containing_utterances():
    chunk = _chunk(["anxiety was constant", "the anxiety again and anxiety", "parking was fine"])
    codes = code_chunk(ROLE, chunk, MockBackend())
    by_label = {c.label: c for c in codes}
    assert "anxiety" in by_label
    assert by_label["anxiety"].quote_ids == {QuoteId(1, 1, "t1"), QuoteId(1, 2, "t1")}
    assert all(c.role == "Tester" for c in codes)
    assert len(codes) <= 5


def test_single_utterance_chunk():
    chunk = _chunk(["fear and hope and fear"])
    for c in code_chunk(ROLE, chunk, MockBackend()):
        assert c.quote_ids == {QuoteId(1, 1, "t1")}


def test_prose_response_is_unparseable():
    chunk = _chunk(["some words here"])
    with pytest.raises(UnparseableResponse):
        code_chunk(ROLE, chunk, Canned("I think the parents were scared."))


def test_out_of_chunk_citation_dropped():
    chunk = _chunk(["alpha", "beta"])
    response = "CODE: good | QUOTES: [P1_S001] | DESC: ok\nCODE: bad | QUOTES: [P1_S001], [P9_S009] | DESC: no"
    codes = code_chunk(ROLE, chunk, Canned(response))
    assert [c.label for c in codes] == ["good"]


def test_parser_whitespace_and_markdown_tolerance():
    scope = frozenset({QuoteId(1, 1, "t"), QuoteId(1, 2, "t")})
    text = "  - **CODE:**  fear  |QUOTES:[P1_S001],[P1_S002]|  DESC :  worried\n\nnoise line\n1. CODE: hope | QUOTES: t:[P1_S002] | DESC: x"
    codes = parse_codes(text, scope, "r")
    assert [(c.label, len(c.quote_ids)) for c in codes] == [("fear", 2), ("hope", 1)]
    assert codes[0].description == "worried"


def test_parallel_coding_matches_sequential():
    chunks = chunk_transcript(make_transcript([f"word{i % 3} topic{i % 5} shared" for i in range(30)]), 20)
    a = code_chunks(DEFAULT_IDENTITIES, chunks, MockBackend(), seed=3, workers=1)
    b = code_chunks(DEFAULT_IDENTITIES, chunks, MockBackend(), seed=3, workers=8)
    assert a == b


def test_seed_changes_tie_breaks_only():
    chunk = _chunk(["alpha beta gamma delta epsilon zeta eta theta iota kappa"])
    labels = {frozenset(c.label for c in code_chunk(ROLE, chunk, MockBackend(), seed=s)) for s in range(20)}
    assert len(labels) > 1
    assert code_chunk(ROLE, chunk, MockBackend(), seed=1) == code_chunk(ROLE, chunk, MockBackend(), seed=1)


def _code(label, *seqs):
    return Code(label, "", frozenset(QuoteId(1, s, "t") for s in seqs), "r")


def test_mock_themes_two_groups():
    codes = [_code("a", 1, 2), _code("b", 2, 3), _code("a", 3), _code("x", 10), _code("y", 10, 11), _code("y", 11)]
    ts = generate_themes(codes, MockBackend())
    assert len(ts) == 2
    assert ts.iteration == 0
    first, second = ts.themes
    assert first.supporting_quote_ids == {QuoteId(1, s, "t") for s in (1, 2, 3)}
    assert second.supporting_quote_ids == {QuoteId(1, s, "t") for s in (10, 11)}
    assert first.title == "a" and second.title == "y"
    assert first.source_code_labels == {"a", "b"}


def test_single_code_single_theme():
    code = _code("fear", 1, 4)
    ts = generate_themes([code], MockBackend())
    assert len(ts) == 1 and ts.themes[0].supporting_quote_ids == code.quote_ids


def test_theme_citations_stay_in_code_scope():
    codes = [_code("a", 1)]
    ts = generate_themes(codes, Canned("THEME: t | QUOTES: t:[P1_S001], t:[P1_S002] | DESC: d"))
    assert ts.themes[0].supporting_quote_ids == {QuoteId(1, 1, "t")}


def test_theme_response_without_themes():
    with pytest.raises(UnparseableResponse):
        parse_theme_lines("nothing here", frozenset())


def test_critique_full_coverage_and_empty(small_corpus):
    all_quotes = frozenset(q for t in small_corpus for q in t.quote_ids)
    full = make_theme_set([("everything", "", all_quotes)])
    score, _ = critique(full, small_corpus, MockBackend())
    assert score.credibility == 100.0
    empty = make_theme_set([])
    score, proposals = critique(empty, small_corpus, MockBackend())
    assert score.credibility == 0.0
    assert [p.kind for p in proposals] == [EditKind.ADD]


def test_critique_near_duplicates_combined(small_corpus):
    quotes = [frozenset({q}) for q in sorted(small_corpus[0].quote_ids)]
    ts = make_theme_set(
        [("Anxiety about child's health", "", quotes[0]), ("Anxiety about child health", "", quotes[1])]
    )
    _, proposals = critique(ts, small_corpus, MockBackend())
    combines = [p for p in proposals if p.kind is EditKind.COMBINE]
    assert len(combines) == 1 and set(combines[0].target_theme_ids) == {"T1", "T2"}


def test_parse_edits_drops_malformed():
    text = json.dumps(
        [
            {"kind": "Delete", "target_theme_ids": ["T1"]},
            {"kind": "Delete", "target_theme_ids": ["T9"]},
            {"kind": "Combine", "target_theme_ids": ["T1"]},
            {"kind": "Explode"},
        ]
    )
    proposals = parse_edits(f"```json\n{text}\n```", ["T1", "T2"], frozenset())
    assert [p.kind for p in proposals] == [EditKind.DELETE]
    with pytest.raises(UnparseableResponse):
        parse_edits("no json", ["T1"], frozenset())


def test_recorder_counts_and_sequence():
    rec = ExchangeRecorder()
    chunks = chunk_transcript(make_transcript([f"w{i} topic" for i in range(12)]), 6)
    codes = code_chunks(DEFAULT_IDENTITIES, chunks, MockBackend(), recorder=rec)
    generate_themes(codes, MockBackend(), recorder=rec)
    xs = rec.drain()
    assert len(xs) == len(DEFAULT_IDENTITIES) * len(chunks) + 1
    assert [x.seq for x in xs] == list(range(len(xs)))
    assert all(x.timestamp is None for x in xs)
    assert rec.drain() == []
    child = rec.child()
    generate_themes(codes, MockBackend(), recorder=child, ref="other")
    assert child.drain()[0].seq == len(xs)


def test_replay_backend_reproduces_and_reports_misses():
    rec = ExchangeRecorder()
    codes = [_code("a", 1)]
    original = generate_themes(codes, MockBackend(), recorder=rec)
    replay = ReplayBackend(rec.drain())
    assert generate_themes(codes, replay) == original
    with pytest.raises(BackendUnavailable):
        generate_themes(codes, replay, ref="iter9")
    assert replay.misses == [("theme", "", "iter9")]


def test_templates_render_placeholders():
    for name in ("coder", "theme", "critique", "polish"):
        assert load_template(name)
    out = render_template("{identity} / {codes} / {unknown}", identity="I", codes="C")
    assert out == "I / C / {unknown}"


# -- remote backend -----------------------------------------------------------------


def _remote(monkeypatch, handler):
    monkeypatch.setenv("THEMELOOP_API_KEY", "secret")
    config = BackendConfig(kind="remote", model="m", endpoint="https://example.invalid/v1/chat")
    return RemoteBackend(config, client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_remote_request_shape(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "CODE: x | QUOTES: [P1_S001] | DESC: d"}}]})

    backend = _remote(monkeypatch, handler)
    out = backend.complete(AgentRequest("code", "Tester", "sys", "prompt", "ref"))
    assert out.startswith("CODE")
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {
        "model": "m",
        "temperature": 0.0,
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "prompt"}],
    }
    assert "secret" not in json.dumps(backend.config.to_dict())


def test_remote_errors(monkeypatch):
    backend = _remote(monkeypatch, lambda r: httpx.Response(503))
    with pytest.raises(BackendUnavailable):
        backend.complete(AgentRequest("code", "T", "", "p", "r"))
    monkeypatch.delenv("THEMELOOP_API_KEY")
    with pytest.raises(BackendUnavailable):
        RemoteBackend(BackendConfig(kind="remote", endpoint="https://example.invalid"))
