"""Command-line entry point: ``themeloop <command> ...``."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .agents import derive_seed, identities_by_name, make_backend
from .corpus import load_transcript
from .errors import InsufficientRuns, InsufficientTranscripts, ThemeloopError
from .metrics import compare_themes, default_holdout, holdout_splits, pairwise_dependability, transferability
from .model import ThemeSet
from .pipeline import (
    RunConfig,
    StageFailure,
    load_config_file,
    load_human_themes,
    make_generator,
    run_pipeline,
    theme_texts,
)
from .reward import RewardRecord, append_record, load_records, train_reward_model

logger = logging.getLogger("themeloop")


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def sample_path(name: str = "sample_transcript.txt") -> Path:
    return Path(str(resources.files("themeloop") / "data" / name))


# -- argument parsing --------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--backend", choices=("mock", "remote"))
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--chunk-limit", type=int, dest="chunk_limit")
    p.add_argument("--identities", help="comma-separated coder identities")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="themeloop", description="Automated thematic analysis with a critique loop.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="code, theme and refine transcripts")
    p.add_argument("transcripts", nargs="*", help="transcript files (default: the bundled sample)")
    _add_run_flags(p)
    p.add_argument("--human-themes", dest="human_themes", help="JSON list of {title, description} for alignment")
    p.add_argument("--mode", choices=("heuristic", "reward_guided"))
    p.add_argument("--reward-model", dest="reward_model", help="trained reward model (reward_guided mode)")

    p = sub.add_parser("compare", help="alignment between generated and human themes")
    p.add_argument("llm_themes")
    p.add_argument("human_themes")
    p.add_argument("--with-descriptions", action="store_true", help="compare title plus description")
    p.add_argument("--out", help="write the report as JSON")

    p = sub.add_parser("dependability", help="agreement across seed-varied generations")
    p.add_argument("transcript")
    p.add_argument("--runs", type=int, default=10)
    _add_run_flags(p)

    p = sub.add_parser("transferability", help="train/validation overlap over every split")
    p.add_argument("corpus_dir")
    p.add_argument("--holdout", type=int)
    _add_run_flags(p)

    p = sub.add_parser("rate", help="append a binary rating for a finished run")
    p.add_argument("run_dir")
    p.add_argument("--rating", type=int, choices=(0, 1), required=True)
    p.add_argument("--ratings", required=True, help="JSON-lines ratings file")
    p.add_argument("--rater", default="")
    p.add_argument("--note", action="append", default=[], metavar="CRITERION=TEXT")

    p = sub.add_parser("train", help="fit the reward model on rated runs")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="where to write the model JSON")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=1000)

    p = sub.add_parser("sample", help="copy the bundled sample transcript and human themes")
    p.add_argument("--out", default=".")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then command-line flags on top."""
    data = load_config_file(args.config) if getattr(args, "config", None) else {}
    data.setdefault("backend", {})
    data.setdefault("refine", {})
    if getattr(args, "backend", None):
        data["backend"]["kind"] = args.backend
    if getattr(args, "max_iters", None) is not None:
        data["refine"]["max_iterations"] = args.max_iters
    if getattr(args, "mode", None):
        data["refine"]["mode"] = args.mode
    for name in ("seed", "chunk_limit", "out", "human_themes", "reward_model", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if getattr(args, "identities", None):
        data["identities"] = [s.strip() for s in args.identities.split(",") if s.strip()]
    transcripts = getattr(args, "transcripts", None)
    if transcripts:
        data["transcripts"] = list(transcripts)
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


# -- commands ----------------------------------------------------------------------


def cmd_run(args) -> int:
    config = resolve_config(args)
    if not config.transcripts:
        config.transcripts = [str(sample_path())]
    try:
        result = run_pipeline(config)
    except StageFailure as exc:
        print(f"themeloop: run failed in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        print(f"themeloop: partial audit written to {Path(config.out) / 'audit.json'}", file=sys.stderr)
        return 1
    r = result.report
    print(f"run {r['run_id']}  themes={r['n_themes']}  iterations={r['iterations']}  converged={r['converged']}")
    print(f"{'credibility':<18}{_fmt(r['credibility'])}")
    print(f"{'dependability':<18}{_fmt(r['dependability'])}")
    t = r["transferability"]
    std = "" if t["std"] is None else f" +/- {_fmt(t['std'])}"
    print(f"{'transferability':<18}{_fmt(t['mean'])}{std}  ({t['scope']}, {t['n_splits']} splits)")
    for key in ("cosine_bi", "levenshtein_DL", "bleu_B"):
        if r[key] is not None:
            print(f"{key:<18}{_fmt(r[key])}")
    print(f"outputs in {config.out}")
    return 0


def _load_llm_themes(path: str) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "themes" in data:
        return [{"title": t.title, "description": t.description} for t in ThemeSet.from_dict(data)]
    return load_human_themes(path)


def cmd_compare(args) -> int:
    llm = theme_texts(_load_llm_themes(args.llm_themes), args.with_descriptions)
    human = theme_texts(load_human_themes(args.human_themes), args.with_descriptions)
    report = compare_themes(human, llm)
    print(f"{'cosine_bi':<16}{_fmt(report.cosine_bi)}")
    print(f"{'levenshtein_DL':<16}{_fmt(report.levenshtein_DL)}")
    print(f"{'bleu_B':<16}{_fmt(report.bleu_B)}")
    print()
    print(f"{'human theme':<40} {'best match':<40} {'cos':>6}  {'second match':<40} {'cos':>6}")
    for m in report.best_matches:
        cells = [f"{m.human[:40]:<40}"]
        for _, text, s in m.matches:
            cells.append(f"{text[:40]:<40} {s:6.4f}")
        print(" ".join(cells))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def _generator_for(config: RunConfig):
    backend = make_backend(config.backend)
    return make_generator(backend, identities_by_name(config.identities), config.chunk_limit, workers=config.workers)


def cmd_dependability(args) -> int:
    if args.runs < 2:
        raise UsageError("--runs must be at least 2")
    config = resolve_config(args)
    transcript = load_transcript(args.transcript)
    generate = _generator_for(config)
    runs = [generate([transcript], derive_seed(config.seed, "run", i), f"run{i}/") for i in range(args.runs)]
    scores = pairwise_dependability(runs)
    if not scores:
        raise InsufficientRuns("dependability needs at least two runs")
    arr = np.asarray(scores)
    print(f"runs={args.runs}  pairs={len(scores)}")
    print(f"dependability {_fmt(float(arr.mean()))} +/- {_fmt(float(arr.std()))}")
    return 0


def cmd_transferability(args) -> int:
    config = resolve_config(args)
    paths = sorted(Path(args.corpus_dir).glob("*.txt"))
    if len(paths) < 3:
        raise InsufficientTranscripts(f"{args.corpus_dir} holds {len(paths)} transcripts; at least 3 are needed")
    corpus = [load_transcript(p) for p in paths]
    generate = _generator_for(config)
    holdout = args.holdout or default_holdout(len(corpus))
    splits = holdout_splits([t.id for t in corpus], holdout)
    result = transferability(corpus, lambda ts: generate(ts, config.seed, ""), holdout=holdout, workers=config.workers)
    for i, ((train, val), score) in enumerate(zip(splits, result.scores), 1):
        print(f"split {i:>3}/{len(splits)}  validation={','.join(val):<20} T={_fmt(score)}")
    print(f"splits evaluated: {result.n_splits}")
    print(f"transferability {_fmt(result.mean)} +/- {_fmt(result.std)}")
    return 0


def cmd_rate(args) -> int:
    report_path = Path(args.run_dir) / "report.json"
    report = json.loads(report_path.read_text(encoding="utf-8"))
    notes = {}
    for note in args.note:
        key, sep, text = note.partition("=")
        if not sep:
            raise UsageError(f"--note expects CRITERION=TEXT, got {note!r}")
        notes[key.strip()] = text.strip()
    record = RewardRecord(
        theme_set_id=report["theme_set_id"],
        rating=args.rating,
        criteria_notes=notes,
        rater=args.rater,
        timestamp=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        features=list(report["features"].values()),
    )
    append_record(args.ratings, record)
    print(f"rated {record.theme_set_id} = {record.rating}")
    return 0


def cmd_train(args) -> int:
    records = [r for r in load_records(args.ratings) if r.features is not None]
    model = train_reward_model([(r.features, r.rating) for r in records], lr=args.lr, epochs=args.epochs)
    model.save(args.out)
    print(f"trained on {len(records)} records  final MSE {_fmt(model.metadata['final_loss'])}")
    return 0


def cmd_sample(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("sample_transcript.txt", "sample_human_themes.json"):
        (out / name).write_text(sample_path(name).read_text(encoding="utf-8"), encoding="utf-8")
        print(out / name)
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "dependability": cmd_dependability,
    "transferability": cmd_transferability,
    "rate": cmd_rate,
    "train": cmd_train,
    "sample": cmd_sample,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"themeloop {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ThemeloopError, ValueError, OSError, KeyError) as exc:
        print(f"themeloop {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
