"""Exception types shared across the pipeline."""

from __future__ import annotations


class KpnetError(Exception):
    """Base class for all pipeline errors."""


# -- corpus loading --

class MissingFile(KpnetError):
    pass


class ParseError(KpnetError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class IntegrityError(KpnetError):
    """A reference does not resolve (dangling arg/kp/topic id)."""


class DuplicateAnnotation(KpnetError):
    pass


class UnknownTopic(KpnetError):
    pass


# -- generation / embedding backends --

class BackendError(KpnetError):
    def __init__(self, message: str, arg_id: str | None = None, batch_index: int | None = None):
        super().__init__(message)
        self.arg_id = arg_id
        self.batch_index = batch_index


class EmptyGeneration(KpnetError):
    """Backend output contained no parseable question."""

    def __init__(self, message: str, arg_id: str | None = None):
        super().__init__(message)
        self.arg_id = arg_id


class InvalidTemplate(KpnetError):
    pass


class DimensionMismatch(KpnetError):
    pass


class ZeroNorm(KpnetError):
    pass


class MissingEmbedding(KpnetError):
    def __init__(self, message: str, text_id: str | None = None):
        super().__init__(message)
        self.text_id = text_id


# -- network / centrality --

class UnknownNode(KpnetError):
    pass


class FormatError(KpnetError):
    """A serialized artifact could not be decoded."""


# -- evaluation --

class EmptyQuestionSet(KpnetError):
    pass


class DegenerateLabels(KpnetError):
    """Threshold fitting needs at least one positive and one negative label."""


class EmptyTruth(KpnetError):
    pass


class MixedCorpora(KpnetError):
    pass


# -- pipeline staging --

class MissingUpstream(KpnetError):
    def __init__(self, stage: str, needs: str):
        super().__init__(f"stage '{stage}' requires output of stage '{needs}'; run it first")
        self.stage = stage
        self.needs = needs


class ConfigError(KpnetError):
    """Invalid or unresolvable pipeline configuration (usage error, exit 2)."""
