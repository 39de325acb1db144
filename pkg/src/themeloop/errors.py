"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ThemeloopError(Exception):
    """Base class for every error raised by this package."""


# -- transcript parsing -----------------------------------------------------


class TranscriptParseError(ThemeloopError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedQuoteId(TranscriptParseError):
    pass


class DuplicateQuoteId(TranscriptParseError):
    pass


class EmptyTranscript(TranscriptParseError):
    pass


class EmptyUtterance(TranscriptParseError):
    pass


# -- theme-set edits --------------------------------------------------------


class EditError(ThemeloopError, ValueError):
    pass


class UnknownThemeId(EditError):
    pass


class ArityMismatch(EditError):
    pass


class MissingPayload(EditError):
    pass


# -- agents -----------------------------------------------------------------


class BackendUnavailable(ThemeloopError):
    pass


class UnparseableResponse(ThemeloopError):
    pass


class CitationOutOfChunk(ThemeloopError):
    """A generated code cites a Quote ID the agent was never shown."""


# -- metrics ----------------------------------------------------------------


class MetricError(ThemeloopError, ValueError):
    pass


class EmptyCorpus(MetricError):
    pass


class EmptyThemeList(MetricError):
    pass


class ZeroVector(MetricError):
    pass


class InsufficientRuns(MetricError):
    pass


class InsufficientTranscripts(MetricError):
    pass


class PipelineFailure(ThemeloopError):
    """Theme generation failed while evaluating one train/validation split."""

    def __init__(self, split_index: int, holdout: tuple[str, ...], cause: BaseException):
        self.split_index = split_index
        self.holdout = holdout
        self.cause = cause
        super().__init__(
            f"theme generation failed on split {split_index} "
            f"(validation={', '.join(holdout)}): {cause}"
        )


# -- reward model -----------------------------------------------------------


class RewardError(ThemeloopError, ValueError):
    pass


class NoRecords(RewardError):
    pass


class DivergedLoss(RewardError):
    pass


class NoCandidates(RewardError):
    pass
