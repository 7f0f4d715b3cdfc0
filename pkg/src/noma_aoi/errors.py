"""Exception hierarchy.

Every failure the library signals on purpose derives from
:class:`NomaAoIError`, so the CLI can turn it into a one-line
``error: <ClassName>: <message>`` report. Errors that are really bad
arguments also derive from ``ValueError``.
"""

from __future__ import annotations


class NomaAoIError(Exception):
    """Base class for all package errors."""


class ConfigError(NomaAoIError, ValueError):
    """Inconsistent or unusable configuration (empty action set, bad grid...)."""


class InfeasibleActionError(NomaAoIError, ValueError):
    """Power split that violates the NOMA decodability constraint."""


class InstanceTooLargeError(NomaAoIError):
    """Problem size above a guard (kernel memory cap, exhaustive oracles)."""


class ConvergenceError(NomaAoIError):
    """Iterative method stopped before reaching its tolerance."""


class SteadyStateError(NomaAoIError):
    """Policy-induced chain has no unique stationary distribution."""


class StructureError(NomaAoIError):
    """Policy does not have the switching structure an operation requires."""
