"""End-to-end run: parse, chunk, code, theme, refine, report, persist."""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .agents import (
    DEFAULT_IDENTITIES,
    BackendConfig,
    ExchangeRecorder,
    Identity,
    code_chunks,
    generate_themes,
    identities_by_name,
    make_backend,
)
from .corpus import DEFAULT_CHUNK_LIMIT, Transcript, chunk_transcript, load_transcript
from .errors import ThemeloopError
from .metrics import compare_themes, transfer_units, transferability
from .model import AuditTrail, Code, ThemeSet
from .refine import ReferenceScorer, RefineConfig, refine_loop
from .reward import FEATURE_NAMES, RewardModel, features

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)


class StageFailure(ThemeloopError):
    """A pipeline stage failed; ``stage`` names it for the operator."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


@dataclass
class RunConfig:
    transcripts: list[str] = field(default_factory=list)
    identities: list[str] = field(default_factory=lambda: [i.name for i in DEFAULT_IDENTITIES])
    backend: BackendConfig = field(default_factory=BackendConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    out: str = "out"
    seed: int = 0
    chunk_limit: int = DEFAULT_CHUNK_LIMIT
    human_themes: str | None = None
    reward_model: str | None = None
    workers: int = 1
    # full transferability over every split for the final report
    report_transferability: bool = True

    def __post_init__(self):
        if self.chunk_limit < 1:
            raise ValueError("chunk_limit must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.identities:
            raise ValueError("at least one coder identity is required")

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        backend = BackendConfig(**d.pop("backend", {}))
        refine = d.pop("refine", {})
        if "chunk_limit" in d:
            refine.setdefault("chunk_limit", d["chunk_limit"])
        refine = RefineConfig.from_dict(refine)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(backend=backend, refine=refine, **d)

    def to_dict(self) -> dict:
        return {
            "transcripts": list(self.transcripts),
            "identities": list(self.identities),
            "backend": self.backend.to_dict(),
            "refine": self.refine.to_dict(),
            "seed": self.seed,
            "chunk_limit": self.chunk_limit,
            "human_themes": self.human_themes,
            "reward_model": self.reward_model,
            "workers": self.workers,
        }


def load_config_file(path: str | Path) -> dict:
    """TOML or JSON, chosen by extension (JSON when unsure)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def run_id_for(seed: int, transcript_ids: Sequence[str]) -> str:
    digest = hashlib.sha256(f"{seed}:{','.join(transcript_ids)}".encode("utf-8")).hexdigest()
    return digest[:12]


# -- generation --------------------------------------------------------------------

Generator = Callable[[list[Transcript], int, str], ThemeSet]


def make_generator(
    backend,
    identities: Sequence[Identity],
    chunk_limit: int = DEFAULT_CHUNK_LIMIT,
    recorder: ExchangeRecorder | None = None,
    workers: int = 1,
    prompt_dir=None,
) -> Generator:
    """``generate(transcripts, seed, ref_prefix)``: one full code-and-theme pass."""

    def generate(transcripts: list[Transcript], seed: int, ref_prefix: str = "") -> ThemeSet:
        chunks = [c for t in transcripts for c in chunk_transcript(t, chunk_limit)]
        codes = code_chunks(identities, chunks, backend, seed, recorder, ref_prefix, workers, prompt_dir)
        return generate_themes(
            codes,
            backend,
            seed=seed,
            recorder=recorder,
            ref=f"{ref_prefix}themes",
            transcript_ids=[t.id for t in transcripts],
            prompt_dir=prompt_dir,
        )

    return generate


@dataclass
class RunResult:
    final: ThemeSet
    audit: AuditTrail
    codes: list[Code]
    report: dict


def load_human_themes(path: str | Path) -> list[dict]:
    """JSON list of ``{title, description?}``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a JSON list of themes")
    out = []
    for i, item in enumerate(data):
        if isinstance(item, str):
            item = {"title": item}
        if not isinstance(item, dict) or not str(item.get("title", "")).strip():
            raise ValueError(f"{path}: theme #{i} needs a non-empty title")
        out.append({"title": str(item["title"]), "description": str(item.get("description") or "")})
    return out


def theme_texts(themes, with_description: bool = False) -> list[str]:
    """Comparison text per theme; titles only unless asked otherwise."""
    out = []
    for t in themes:
        title = t["title"] if isinstance(t, dict) else t.title
        desc = (t.get("description", "") if isinstance(t, dict) else t.description) or ""
        out.append(f"{title} {desc}".strip() if with_description else title)
    return out


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=False) + "\n", encoding="utf-8")


def write_audit(out: Path, audit: AuditTrail) -> None:
    _write_json(out / "audit.json", audit.to_dict())


def run_pipeline(config: RunConfig, backend=None, prompt_dir=None) -> RunResult:
    """Execute a full run and write its outputs under ``config.out``.

    Output layout: ``codes/<transcript>.json``, ``themes/iter<t>.json``,
    ``themes.json`` (final set), ``audit.json``, ``report.json``.  On failure
    the partial audit is still written and a StageFailure is raised.
    """
    out = Path(config.out)
    stage = "parse"
    audit = AuditTrail(seed=config.seed)
    try:
        corpus = []
        for p in config.transcripts:
            if not Path(p).is_file():
                raise FileNotFoundError(f"transcript not found: {p}")
            corpus.append(load_transcript(p))
        if not corpus:
            raise ValueError("no transcripts given")
        if len({t.id for t in corpus}) != len(corpus):
            raise ValueError("transcript file names must be unique")
        tids = [t.id for t in corpus]
        run_id = run_id_for(config.seed, tids)
        audit.run_id = run_id
        audit.config = {"run": config.to_dict()}

        stage = "backend"
        backend = backend or make_backend(config.backend)
        identities = identities_by_name(config.identities)
        recorder = ExchangeRecorder(wall_clock=not getattr(backend, "deterministic", False))
        reference_recorder = recorder.child()

        stage = "code"
        chunks = [c for t in corpus for c in chunk_transcript(t, config.chunk_limit)]
        codes = code_chunks(identities, chunks, backend, config.seed, recorder, "", config.workers, prompt_dir)

        stage = "themes"
        initial = generate_themes(
            codes, backend, seed=config.seed, recorder=recorder, ref="iter0", transcript_ids=tids, prompt_dir=prompt_dir
        )

        stage = "refine"
        generate = make_generator(
            backend, identities, config.chunk_limit, reference_recorder, config.workers, prompt_dir
        )
        refine_cfg = replace(config.refine, chunk_limit=config.chunk_limit)
        scorer = ReferenceScorer(corpus, generate, refine_cfg, config.seed)
        reward_model = RewardModel.load(config.reward_model) if config.reward_model else None
        try:
            final, audit = refine_loop(
                initial,
                corpus,
                refine_cfg,
                backend,
                scorer,
                recorder=recorder,
                reward_model=reward_model,
                seed=config.seed,
                run_id=run_id,
                audit=audit,
                prompt_dir=prompt_dir,
            )
        finally:
            audit.reference_exchanges.extend(reference_recorder.drain())
            audit.reference_exchanges.sort(key=lambda x: x.seq)

        stage = "report"
        report = build_report(config, corpus, final, audit, backend, run_id, prompt_dir)
    except Exception as exc:
        if audit.error is None:
            audit.error = f"{stage}: {exc}"
        write_audit(out, audit)
        raise StageFailure(stage, exc) from exc

    for t in corpus:
        own = [c.to_dict() for c in codes if any(q.transcript_id == t.id for q in c.quote_ids)]
        _write_json(out / "codes" / f"{t.id}.json", own)
    for record in audit.records:
        _write_json(out / "themes" / f"iter{record.iteration}.json", record.theme_set.to_dict())
    _write_json(out / "themes.json", final.to_dict())
    write_audit(out, audit)
    _write_json(out / "report.json", report)
    return RunResult(final, audit, codes, report)


def build_report(config: RunConfig, corpus, final: ThemeSet, audit: AuditTrail, backend, run_id: str, prompt_dir=None) -> dict:
    score = audit.records[-1].score
    xfer = {"mean": score.transferability, "std": None, "n_splits": 0, "scope": "loop-sample"}
    units = transfer_units(corpus, config.chunk_limit)
    if config.report_transferability and len(units) >= 3:
        # unrecorded: the full split sweep is summarized, not audited call by call
        generate = make_generator(
            backend, identities_by_name(config.identities), config.chunk_limit, None, config.workers, prompt_dir
        )
        result = transferability(units, lambda ts: generate(ts, config.seed, "report/"))
        xfer = {"mean": result.mean, "std": result.std, "n_splits": result.n_splits, "scope": "all-splits"}

    report = {
        "run_id": run_id,
        "seed": config.seed,
        "theme_set_id": final.id,
        "iterations": len(audit.records) - 1,
        "converged": audit.records[-1].converged,
        "n_themes": len(final),
        "credibility": score.credibility,
        "dependability": score.dependability,
        "transferability": xfer,
        "cosine_bi": None,
        "levenshtein_DL": None,
        "bleu_B": None,
        "features": dict(zip(FEATURE_NAMES, (float(v) for v in features(final, score)))),
    }
    if config.human_themes:
        human = theme_texts(load_human_themes(config.human_themes))
        alignment = compare_themes(human, theme_texts(final))
        report.update(
            cosine_bi=alignment.cosine_bi,
            levenshtein_DL=alignment.levenshtein_DL,
            bleu_B=alignment.bleu_B,
        )
    return report
