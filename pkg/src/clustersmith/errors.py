"""Exception hierarchy shared by all clustersmith modules.

Every domain error derives from ClusterError so the CLI can map any
of them to exit code 2; I/O errors stay OSError (exit code 1).
"""


class ClusterError(Exception):
    """Base class for all domain/validation errors."""


class ParseError(ClusterError):
    """Malformed input text; carries line/column of the offending token."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, col {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ClusterError):
    """Structurally well-formed input violating a graph invariant."""


class UnknownNode(ClusterError):
    pass


class Unreachable(ClusterError):
    pass


class InvalidLaneFraction(ClusterError):
    pass


class InvalidTransformTarget(ClusterError):
    pass


class TransformConflict(ClusterError):
    pass


class MissingServerNode(ClusterError):
    pass


class TooFewParticipants(ClusterError):
    pass


class NonSymmetricInput(ClusterError):
    pass


class DimensionMismatch(ClusterError):
    pass


class EmptyDataset(ClusterError):
    pass


class NeverBreaksEven(ClusterError):
    pass
