"""Exit criteria for the build; each test prints a PASS/FAIL line in the summary."""

import itertools
import random
import time

import numpy as np
import pytest

import oracles
from conftest import make_theme_set
from themeloop.agents import DEFAULT_IDENTITIES, MockBackend, code_chunk, derive_seed, generate_themes
from themeloop.cli import main, sample_path
from themeloop.corpus import QuoteId, chunk_transcript, corpus_quote_ids
from themeloop.metrics import (
    bleu_alignment,
    cosine_alignment,
    credibility,
    dependability,
    levenshtein_alignment,
    levenshtein_similarity,
    pairwise_dependability,
    rouge_bidirectional,
    transferability,
)
from themeloop.model import EditKind, EditProposal, ScoreVector, ThemeDraft, ThemeSet, apply_edit
from themeloop.pipeline import make_generator
from themeloop.refine import ReferenceScorer, RefineConfig, heuristic_proposals, refine_loop
from themeloop.reward import RewardModel, argmax_lowest_id, best_of_n_select, mse_gradients, train_reward_model
from themeloop.synthetic import synthetic_corpus, synthetic_transcript

pytestmark = pytest.mark.acceptance

VOCAB = "fear hope surgery parking costs feeding tube waiting nurse doctor guilt relief heart scan news".split()


def _random_titles(rng, n):
    return [" ".join(rng.choices(VOCAB, k=rng.randint(1, 5))) + rng.choice(["", "!", ",", "'s"]) for _ in range(n)]


# 1 ----------------------------------------------------------------------------------


def test_c1_metric_oracle_equivalence(criterion):
    with criterion(1, "metric oracle equivalence (>=100 random pairs, 1e-9, <10 s)"):
        rng = random.Random(2024)
        start = time.perf_counter()
        cases = 150
        for _ in range(cases):
            h = _random_titles(rng, rng.randint(1, 5))
            l = _random_titles(rng, rng.randint(1, 5))
            a, b = " ".join(h), " ".join(l)
            for n in (1, 2):
                assert abs(rouge_bidirectional(a, b, n) - oracles.rouge_n(a, b, n)) <= 1e-9
            assert abs(levenshtein_alignment(h, l) - oracles.levenshtein_alignment(h, l)) <= 1e-9
            assert abs(bleu_alignment(h, l) - oracles.bleu_alignment(h, l)) <= 1e-9
            assert abs(cosine_alignment(h, l) - oracles.cosine_alignment(h, l)) <= 1e-9
            corpus = {QuoteId(1, i, "t") for i in range(1, rng.randint(2, 40))}
            cited = {q for q in corpus if rng.random() < 0.5} | {QuoteId(9, 1, "elsewhere")}
            assert abs(credibility(frozenset(cited), corpus) - oracles.credibility(cited, corpus)) <= 1e-9
        assert time.perf_counter() - start < 10.0


# 2 ----------------------------------------------------------------------------------


def test_c2_formula_spot_checks(criterion):
    with criterion(2, "formula spot checks (kitten/sitting, R1 2/3, C 80.0)"):
        assert abs(levenshtein_similarity("kitten", "sitting") - (1 - 3 / 7)) <= 1e-12
        assert abs(levenshtein_alignment(["kitten"], ["sitting"]) - (1 - 3 / 7)) <= 1e-12
        assert abs(rouge_bidirectional("a b c", "b c d", 1) - 2 / 3) <= 1e-12
        corpus = {QuoteId(1, i, "t") for i in range(1, 11)}
        assert credibility(frozenset(sorted(corpus)[:8]), corpus) == 80.0


# 3 ----------------------------------------------------------------------------------


def test_c3_split_enumeration(criterion):
    with criterion(3, "transferability: 36 splits on 9 transcripts; constant generator T=1, std=0"):
        corpus = synthetic_corpus(9, n_utterances=8)
        generate = make_generator(MockBackend(), DEFAULT_IDENTITIES, 200)
        calls = []

        def pipeline(ts):
            calls.append(tuple(t.id for t in ts))
            return generate(ts, 0, "")

        result = transferability(corpus, pipeline)
        assert result.n_splits == 36 == oracles.split_count(9, 2)
        assert len({val for _, val in result.splits}) == 36
        assert len(calls) == 72
        assert 0.0 <= result.mean <= 1.0 and result.std >= 0.0
        assert result.mean == pytest.approx(np.mean(result.scores)) and result.std == pytest.approx(np.std(result.scores))
        constant = transferability(corpus, lambda ts: make_theme_set([("same theme", "always", set())]))
        assert constant.mean == 1.0 and constant.std == 0.0


# 4 ----------------------------------------------------------------------------------


def test_c4_dependability_aggregation(criterion):
    with criterion(4, "dependability: 10 seed-varied mock runs -> 45 pairs; identical runs D=1"):
        t = synthetic_transcript("d", n_utterances=40)
        generate = make_generator(MockBackend(), DEFAULT_IDENTITIES, 300)
        runs = [generate([t], derive_seed(7, "run", i), "") for i in range(10)]
        assert len({r.text() for r in runs}) > 1  # the seeds actually vary the output
        scores = pairwise_dependability(runs)
        assert len(scores) == 45 == oracles.pair_count(10)
        expected = np.mean([oracles.rouge_overlap(a.text(), b.text()) for a, b in itertools.combinations(runs, 2)])
        assert dependability(runs) == pytest.approx(expected, abs=1e-12)
        same = [generate([t], 3, "") for _ in range(10)]
        assert dependability(same) == 1.0


# 5 ----------------------------------------------------------------------------------


def _random_corpus(rng, i):
    return [
        synthetic_transcript(
            f"t{j}",
            i,
            n_utterances=rng.randint(1, 8),
            words_per_utterance=rng.randint(3, 15),
            participants=rng.randint(1, 3),
        )
        for j in range(rng.randint(1, 3))
    ]


def _with_duplicates(ts, rng):
    """Adversarial: clone some themes under near-identical titles."""
    themes = list(ts.themes)
    extra = []
    for k, t in enumerate(rng.sample(themes, min(len(themes), rng.randint(1, 3)))):
        extra.append(t.__class__(f"T{ts.next_theme_id + k}", t.title + rng.choice(["", "s", "!"]), t.description, t.supporting_quote_ids, t.source_code_labels))
    return ThemeSet(tuple(themes + extra), 0, ts.transcript_ids)


def test_c5_refinement_loop_contract(criterion):
    with criterion(5, "refinement loop: cap over 1000 fuzz corpora, L1 halting, Add/Combine triggers"):
        # (a) never exceeds max_iterations
        for i in range(1000):
            rng = random.Random(i)
            corpus = _random_corpus(rng, i)
            limit = rng.randint(10, 60)
            generate = make_generator(MockBackend(), DEFAULT_IDENTITIES[: rng.randint(1, 4)], limit)
            cfg = RefineConfig(max_iterations=rng.randint(1, 5), chunk_limit=limit, dependability_runs=1, transfer_splits=2)
            initial = generate(corpus, i, "")
            if rng.random() < 0.5:
                initial = _with_duplicates(initial, rng)
            final, audit = refine_loop(initial, corpus, cfg, MockBackend(), ReferenceScorer(corpus, generate, cfg, i))
            rounds = len(audit.records) - 1
            assert 1 <= rounds <= cfg.max_iterations
            assert [r.iteration for r in audit.records] == list(range(rounds + 1))
            assert final.iteration == rounds

        # (b) halts at the first round whose normalized L1 step is below 0.05
        corpus = _random_corpus(random.Random(5), 5)
        base = make_generator(MockBackend(), DEFAULT_IDENTITIES, 40)(corpus, 0, "")
        for i in range(200):
            rng = random.Random(10_000 + i)
            seq = [ScoreVector(rng.uniform(0, 100), rng.random(), rng.random())]
            for _ in range(6):
                prev = seq[-1]
                step = rng.choice([0.001, 0.01, 0.2, 0.5])
                seq.append(
                    ScoreVector(
                        min(100, max(0, prev.credibility + 100 * rng.uniform(-step, step))),
                        min(1, max(0, prev.dependability + rng.uniform(-step, step))),
                        min(1, max(0, prev.transferability + rng.uniform(-step, step))),
                    )
                )
            expected_stop = next(
                (t for t in range(1, 6) if seq[t].l1_distance(seq[t - 1]) < 0.05), 5
            )
            scores = iter(seq)
            _, audit = refine_loop(base, corpus, RefineConfig(max_iterations=5), MockBackend(), lambda ts: next(scores))
            assert len(audit.records) - 1 == expected_stop
            assert audit.records[-1].converged == (seq[expected_stop].l1_distance(seq[expected_stop - 1]) < 0.05)

        # (c) trigger fixtures
        qs = sorted(corpus_quote_ids(corpus))
        cover = make_theme_set([(f"Distinct title {chr(65 + k)}{k * 'x'}", "", set(qs[k::3])) for k in range(3)])
        for c in (0.0, 35.5, 69.0, 69.99, 70.0, 70.01, 85.0, 100.0):
            kinds = [p.kind for p in heuristic_proposals(cover, ScoreVector(c, 0, 0), corpus)]
            assert kinds.count(EditKind.ADD) == (1 if c / 100 < 0.7 else 0), c
        pairs = [
            ("Anxiety about child's health", "Anxiety about child health"),
            ("Parking costs", "Parking cost"),
            ("Feeding", "Feelings"),
            ("Waiting room", "Waiting rooms!"),
            ("abcde", "abcdx"),
            ("abcdefghij", "abcdefghxy"),
            ("abcdefghij", "abcdefgxyz"),
            ("Fear", "Hope"),
        ]
        for a, b in pairs:
            ts = make_theme_set([(a, "", {qs[0]}), (b, "", {qs[-1]})])
            combines = [p for p in heuristic_proposals(ts, ScoreVector(100, 0, 0), corpus) if p.kind is EditKind.COMBINE]
            assert len(combines) == (1 if oracles.edit_similarity(a, b) > 0.8 else 0), (a, b)


# 6 ----------------------------------------------------------------------------------

def _random_theme_set(rng):
    specs = [
        (f"theme {i}", "", {QuoteId(rng.randint(1, 3), rng.randint(1, 12), "t") for _ in range(rng.randint(0, 5))})
        for i in range(rng.randint(0, 6))
    ]
    return make_theme_set(specs)


def _random_edit(ts, kind, rnd):
    ids = ts.theme_ids
    if kind is EditKind.ADD:
        return EditProposal(kind, (), (ThemeDraft("added", quote_ids=frozenset({QuoteId(1, rnd.randint(1, 12), "t")})),))
    if kind is EditKind.DELETE and ids:
        return EditProposal(kind, (rnd.choice(ids),))
    if kind is EditKind.COMBINE and len(ids) >= 2:
        return EditProposal(kind, tuple(rnd.sample(ids, rnd.randint(2, len(ids)))))
    if kind is EditKind.SPLIT and ids:
        target = ts.get(rnd.choice(ids))
        quotes = sorted(target.supporting_quote_ids)
        cut = rnd.randint(0, len(quotes))
        return EditProposal(
            kind, (target.id,), (ThemeDraft("left", quote_ids=frozenset(quotes[:cut])), ThemeDraft("right", quote_ids=frozenset(quotes[cut:])))
        )
    return None


def _check_edit(ts, e):
    out = apply_edit(ts, e)
    expected = {
        EditKind.ADD: 1,
        EditKind.DELETE: -1,
        EditKind.SPLIT: 1,
        EditKind.COMBINE: -(len(e.target_theme_ids) - 1),
    }[e.kind]
    assert len(out) - len(ts) == expected
    if e.kind is EditKind.COMBINE:
        union = frozenset().union(*(ts.get(t).supporting_quote_ids for t in e.target_theme_ids))
        (merged,) = [t for t in out if t.id not in ts.theme_ids]
        assert merged.supporting_quote_ids == union
    if e.kind is EditKind.SPLIT:
        assert out.quote_ids == ts.quote_ids  # split loses no quote
    untouched = [t for t in ts if t.id not in e.target_theme_ids]
    assert all(t in out.themes for t in untouched)
    assert len(set(out.theme_ids)) == len(out)
    return out


def test_c6_edit_algebra(criterion):
    with criterion(6, "edit algebra: count arithmetic and Combine union over 10,000 random edit sequences"):
        applied = 0
        for i in range(10_000):
            rng = random.Random(60_000 + i)
            ts = _random_theme_set(rng)
            for _ in range(rng.randint(1, 8)):
                e = _random_edit(ts, rng.choice(list(EditKind)), rng)
                if e is not None:
                    ts = _check_edit(ts, e)
                    applied += 1
        assert applied > 10_000


# 7 ----------------------------------------------------------------------------------


def test_c7_end_to_end_determinism(criterion, tmp_path):
    with criterion(7, "cmd_run twice on the bundled 10k-word sample: byte-identical, each < 5 s"):
        sample = sample_path()
        words = sum(len(line.split()) - 1 for line in sample.read_text().splitlines())
        assert 9_000 <= words <= 11_000
        outs, times = [], []
        for k in range(2):
            out = tmp_path / f"run{k}"
            start = time.perf_counter()
            assert main(["run", str(sample), "--seed", "11", "--out", str(out)]) == 0
            times.append(time.perf_counter() - start)
            outs.append(out)
        for name in ("themes.json", "audit.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        assert max(times) < 5.0, times


# 8 ----------------------------------------------------------------------------------


def _separable(rng, n=200, margin=0.15):
    w_true = np.array([1.0, 1.0, 1.0, -1.0, -1.0, 0.5])
    X, y = [], []
    while len(X) < n:
        x = rng.random(6)
        s = (x @ w_true - 0.75) / np.linalg.norm(w_true)
        if abs(s) >= margin:
            X.append(x)
            y.append(int(s > 0))
    return np.array(X), np.array(y)


def test_c8_reward_model(criterion):
    with criterion(8, "reward model: gradients vs finite differences, MSE<0.05 training, argmax selection"):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(1, 20))
            X = rng.normal(size=(n, 6))
            r = rng.integers(0, 2, n).astype(float)
            w, b = rng.normal(size=6), float(rng.normal())
            gw, gb = mse_gradients(w, b, X, r)
            nw, nb = oracles.numeric_gradients(list(w), b, X.tolist(), r.tolist(), h=1e-5)
            analytic = np.append(gw, gb)
            numeric = np.append(nw, nb)
            rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
            assert rel.max() < 1e-5, rel.max()

        X, y = _separable(rng)
        model = train_reward_model(list(zip(X, y)), lr=0.05, epochs=1000)
        assert model.metadata["final_loss"] < 0.05
        assert oracles.mse(model.weights, model.bias, X.tolist(), y.tolist()) == pytest.approx(model.metadata["final_loss"])

        assert argmax_lowest_id([("a", 0.2), ("b", 0.9), ("c", 0.4)]) == 1
        for trial in range(100):
            scores = rng.normal(size=int(rng.integers(1, 8))).tolist()
            ids = [f"cand{i:02d}" for i in range(len(scores))]
            choice = argmax_lowest_id(list(zip(ids, scores)))
            assert scores[choice] == max(scores)
            a, c = float(rng.uniform(0.01, 10)), float(rng.normal())
            assert argmax_lowest_id(list(zip(ids, [a * s + c for s in scores]))) == choice
        cands = [(ThemeSet((), id=f"cand{i:02d}"), ScoreVector(c, 0, 0)) for i, c in enumerate([20, 90, 40])]
        base = RewardModel([1.0, 0, 0, 0, 0, 0], 0.0)
        scaled = RewardModel([3.5, 0, 0, 0, 0, 0], -2.0)
        assert best_of_n_select(cands, base).id == best_of_n_select(cands, scaled).id == "cand01"


# 9 ----------------------------------------------------------------------------------


def test_c9_citation_soundness(criterion):
    with criterion(9, "citation soundness: 0 out-of-scope Quote IDs over 10,000 mock fuzz cases"):
        violations = 0
        backend = MockBackend()
        for i in range(10_000):
            rng = random.Random(i)
            t = synthetic_transcript(
                f"f{i % 7}", i, n_utterances=rng.randint(1, 6), words_per_utterance=rng.randint(1, 12), participants=rng.randint(1, 3)
            )
            chunks = chunk_transcript(t, rng.randint(1, 40))
            codes = []
            for chunk in chunks:
                identity = rng.choice(DEFAULT_IDENTITIES)
                got = code_chunk(identity, chunk, backend, seed=i)
                violations += sum(not c.quote_ids <= chunk.quote_ids for c in got)
                codes.extend(got)
            scope = frozenset().union(*(c.quote_ids for c in codes))
            ts = generate_themes(codes, backend, seed=i)
            violations += sum(not th.supporting_quote_ids <= scope for th in ts)
            if i % 20 == 0:
                final, _ = refine_loop(ts, [t], RefineConfig(max_iterations=2), backend)
                violations += sum(not th.supporting_quote_ids <= t.quote_ids for th in final)
        assert violations == 0
