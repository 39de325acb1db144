"""Automated thematic analysis of Quote-ID-annotated interview transcripts."""

from .corpus import QuoteId, Transcript, Utterance, chunk_transcript, load_transcript, parse_transcript
from .model import Code, EditKind, EditProposal, ScoreVector, Theme, ThemeSet, apply_edit
from .refine import RefineConfig, heuristic_proposals, refine_loop

__version__ = "0.1.0"

__all__ = [
    "Code",
    "EditKind",
    "EditProposal",
    "QuoteId",
    "RefineConfig",
    "ScoreVector",
    "Theme",
    "ThemeSet",
    "Transcript",
    "Utterance",
    "apply_edit",
    "chunk_transcript",
    "heuristic_proposals",
    "load_transcript",
    "parse_transcript",
    "refine_loop",
]
