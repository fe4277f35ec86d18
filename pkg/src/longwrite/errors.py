"""Exception hierarchy shared across the package."""

from __future__ import annotations


class LongwriteError(Exception):
    """Base class for all package errors."""


class EmptyOutline(LongwriteError):
    pass


class NoOperations(LongwriteError):
    pass


class TemplateError(LongwriteError):
    pass


class ProviderError(LongwriteError):
    """Transport or status failure from a chat, search or embedding provider."""


class EmptyCorpus(LongwriteError):
    pass


class IndexFormatError(LongwriteError):
    pass


class NoAttributes(LongwriteError):
    pass


class NoQueries(LongwriteError):
    pass


class ParseFailure(LongwriteError):
    pass


class CycleError(LongwriteError):
    pass


class EmptyStore(LongwriteError):
    pass


class UndefinedScore(LongwriteError):
    pass


class FewerThanTwo(LongwriteError):
    pass


class EmptyList(LongwriteError):
    pass


class ConfigError(LongwriteError):
    pass


class StageFailed(LongwriteError):
    """A pipeline stage failed fatally; ``report`` holds the partial run record."""

    def __init__(self, stage: str, cause: BaseException, report: dict | None = None):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.report = report or {}
