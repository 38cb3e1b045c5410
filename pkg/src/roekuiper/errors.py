"""Exception hierarchy.

Every failure carries the offending witness so reports can inline it.
"""

from __future__ import annotations


class RoeError(Exception):
    """Base class; ``witness`` holds whatever identifies the failure."""

    def __init__(self, message: str = "", witness=None):
        super().__init__(message)
        self.witness = witness


# metric_space
class EmptyWindow(RoeError):
    pass


class BadParams(RoeError):
    pass


class BadLabel(RoeError):
    pass


class OracleUnavailable(RoeError):
    pass


class BoundaryClipped(RoeError):
    pass


class BoundaryClippedWarning(UserWarning):
    pass


# roe_operator
class WindowMismatch(RoeError):
    pass


class Singular(RoeError):
    pass


class LemmaViolated(RoeError):
    pass


class PerturbationTooLarge(RoeError):
    pass


class PropagationBoundViolated(RoeError):
    pass


# partition
class NotCiubb(RoeError):
    pass


class InductionStalled(RoeError):
    pass


class UnsupportedSpace(RoeError):
    pass


# homotopy
class WindowTooSmall(RoeError):
    pass


class LedgerStale(RoeError):
    pass


class ZeroColumn(RoeError):
    pass


class NotTriangular(RoeError):
    pass


class InsufficientVisits(RoeError):
    pass


class LayerMismatch(RoeError):
    pass


class StageFailed(RoeError):
    """Wraps an upstream error with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}",
                         getattr(cause, "witness", None))
        self.stage = stage
        self.cause = cause


# obstruction
class DisplacementExceeded(RoeError):
    pass


class Unstable(RoeError):
    pass


class NotFredholmEvidence(RoeError):
    pass


class StepTooLarge(RoeError):
    pass


class LoopNotClosed(RoeError):
    pass


class MisalignedWindow(RoeError):
    pass


class NotBijective(RoeError):
    pass
